#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "amtl/env.hpp"
#include "amtl/ingest.hpp"
#include "amtl/npy.hpp"
#include "amtl/rng.hpp"

namespace testing {

inline std::vector<amtl::SampleBatch> draw_sources(const amtl::GroundTruth &truth, amtl::Index n, std::uint64_t seed,
                                                   std::uint64_t epoch = 0) {
  std::vector<amtl::SampleBatch> out;
  for (int m = 1; m <= truth.dims().M; ++m) {
    amtl::RngStream rng(seed, {static_cast<std::uint64_t>(m), epoch});
    out.push_back(amtl::sample_task(truth, m, n, rng));
  }
  return out;
}

inline amtl::Matrix gaussian(amtl::Index rows, amtl::Index cols, amtl::RngStream &rng) {
  amtl::Matrix a(rows, cols);
  for (amtl::Index i = 0; i < rows; ++i)
    for (amtl::Index j = 0; j < cols; ++j)
      a(i, j) = rng.normal();
  return a;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("amtl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// MNIST-C-style tree: <root>/<corruption>/{images,labels}.npy with n images
/// per corruption. Each digit lights a distinct horizontal band, corruptions
/// differ in brightness and noise, so the tasks share a low-rank structure.
inline void write_fake_mnistc(const std::filesystem::path &root, const std::vector<std::string> &corruptions,
                              std::size_t n, std::uint64_t seed = 11) {
  for (std::size_t c = 0; c < corruptions.size(); ++c) {
    amtl::RngStream rng(seed, {c, 0});
    amtl::NpyArray images, labels;
    images.shape = {n, 28, 28};
    labels.shape = {n};
    std::vector<std::uint8_t> px(n * 784);
    std::vector<std::uint8_t> lab(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int digit = static_cast<int>(i % 10);
      lab[i] = static_cast<std::uint8_t>(digit);
      for (std::size_t p = 0; p < 784; ++p) {
        const std::size_t row = p / 28;
        double v = 20.0 * static_cast<double>(c) + 30.0 * rng.uniform();
        if (row >= static_cast<std::size_t>(2 + 2 * digit) && row < static_cast<std::size_t>(4 + 2 * digit))
          v += 180.0;
        px[i * 784 + p] = static_cast<std::uint8_t>(std::min(255.0, v));
      }
    }
    images.data = std::move(px);
    labels.data = std::move(lab);
    std::filesystem::create_directories(root / corruptions[c]);
    amtl::write_npy_file(root / corruptions[c] / "images.npy", images);
    amtl::write_npy_file(root / corruptions[c] / "labels.npy", labels);
  }
}

} // namespace testing
