#include "amtl/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "amtl/error.hpp"

namespace amtl {

Matrix ImageArray::gather(std::span<const Index> row_ids) const {
  Matrix out(static_cast<Index>(row_ids.size()), cols);
  for (Index r = 0; r < out.rows(); ++r) {
    const Index src = row_ids[static_cast<std::size_t>(r)];
    if (src < 0 || src >= rows)
      throw DimensionError("ImageArray::gather: row out of range");
    for (Index j = 0; j < cols; ++j)
      out(r, j) = pixel(src, j);
  }
  return out;
}

ImageArray image_array_from_npy(std::string corruption, const NpyArray &images, const NpyArray &labels) {
  if (images.shape.empty())
    throw FormatError(corruption + ": images must have a leading row dimension");
  const std::size_t n = images.shape[0];
  const std::size_t per_row = n == 0 ? kImagePixels : images.element_count() / n;
  if (per_row != static_cast<std::size_t>(kImagePixels))
    throw FormatError(corruption + ": expected 784 pixels per image");
  if (labels.shape.size() != 1 || labels.shape[0] != n)
    throw FormatError(corruption + ": labels must be a vector with one entry per image");

  ImageArray out;
  out.corruption = std::move(corruption);
  out.rows = static_cast<Index>(n);
  out.cols = kImagePixels;
  if (images.type() == NpyType::UInt8) {
    out.pixels = images.u8();
  } else {
    const auto &v = images.f64();
    const double hi = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    const double lo = v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
    if (lo < 0.0 || hi > 255.0)
      throw FormatError(out.corruption + ": float pixels must lie in [0, 1] or [0, 255]");
    const double scale = hi <= 1.0 ? 255.0 : 1.0;
    out.pixels.resize(v.size());
    std::transform(v.begin(), v.end(), out.pixels.begin(),
                   [scale](double x) { return static_cast<std::uint8_t>(std::lround(x * scale)); });
  }

  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = labels.type() == NpyType::UInt8 ? labels.u8()[i] : labels.f64()[i];
    if (raw != std::floor(raw) || raw < 0 || raw > 9)
      throw FormatError(out.corruption + ": labels must be digits 0..9");
    out.labels[i] = static_cast<int>(raw);
  }
  return out;
}

ImageArray load_image_array(const std::filesystem::path &root, const std::string &corruption) {
  const auto dir = root / corruption;
  const auto images = dir / "images.npy";
  const auto labels = dir / "labels.npy";
  if (!std::filesystem::exists(images) || !std::filesystem::exists(labels))
    throw IoError("missing images.npy or labels.npy under " + dir.string());
  return image_array_from_npy(corruption, read_npy_file(images), read_npy_file(labels));
}

std::vector<std::string> discover_corruptions(const std::filesystem::path &root) {
  if (!std::filesystem::is_directory(root))
    throw IoError("data root is not a directory: " + root.string());
  std::vector<std::string> out;
  for (const auto &entry : std::filesystem::directory_iterator(root)) {
    if (!entry.is_directory())
      continue;
    if (std::filesystem::exists(entry.path() / "images.npy") && std::filesystem::exists(entry.path() / "labels.npy"))
      out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Matrix BinaryTask::X() const {
  std::vector<Index> all(static_cast<std::size_t>(images->rows));
  std::iota(all.begin(), all.end(), Index{0});
  return images->gather(all);
}

BinaryTask build_binary_tasks(std::shared_ptr<const ImageArray> images, int digit) {
  if (!images)
    throw ConfigError("build_binary_tasks: no images");
  if (digit < 0 || digit > 9)
    throw ConfigError("build_binary_tasks: digit must be in 0..9");
  BinaryTask task;
  task.corruption = images->corruption;
  task.digit = digit;
  task.Y.resize(images->rows);
  for (Index i = 0; i < images->rows; ++i)
    task.Y(i) = images->labels[static_cast<std::size_t>(i)] == digit ? 1.0 : 0.0;
  task.images = std::move(images);
  return task;
}

TaskSpec TaskSpec::parse(const std::string &text) {
  const auto pos = text.find_last_of(":_");
  if (pos == std::string::npos || pos == 0 || pos + 2 != text.size() ||
      !std::isdigit(static_cast<unsigned char>(text.back())))
    throw ConfigError("target task '" + text + "' must look like corruption:digit");
  return {text.substr(0, pos), text.back() - '0'};
}

SourcePool::SourcePool(BinaryTask task, std::span<const Index> excluded_rows, std::uint64_t seed,
                       std::uint64_t stream_task)
    : task_(std::move(task)), rng_(seed, {stream_task, kPermutationEpoch}) {
  std::vector<bool> excluded(static_cast<std::size_t>(task_.size()), false);
  for (Index r : excluded_rows)
    if (r >= 0 && r < task_.size())
      excluded[static_cast<std::size_t>(r)] = true;
  for (Index r = 0; r < task_.size(); ++r)
    if (!excluded[static_cast<std::size_t>(r)])
      order_.push_back(r);
  std::shuffle(order_.begin(), order_.end(), rng_);
}

SampleBatch SourcePool::draw(Index n, int task_id) {
  if (n < 0)
    throw ConfigError("SourcePool::draw: negative count");
  if (n > 0 && order_.empty())
    throw ConfigError("source pool " + task_.corruption + "_" + std::to_string(task_.digit) + " is empty");
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    if (cursor_ < order_.size()) {
      rows.push_back(order_[cursor_++]);
    } else {
      if (!warned_) {
        std::clog << "warning: source pool " << task_.corruption << "_" << task_.digit
                  << " exhausted; sampling with replacement\n";
        warned_ = true;
      }
      rows.push_back(order_[static_cast<std::size_t>(rng_() % order_.size())]);
    }
  }
  history_.insert(history_.end(), rows.begin(), rows.end());
  Vector Y(n);
  for (Index i = 0; i < n; ++i)
    Y(i) = task_.Y(rows[static_cast<std::size_t>(i)]);
  return SampleBatch(task_id, task_.images->gather(rows), std::move(Y));
}

RealSuite make_real_suite(const std::vector<std::shared_ptr<const ImageArray>> &images, const TaskSpec &target,
                          Index n_target, std::uint64_t seed, const RealSuiteOptions &options) {
  if (target.digit < 0 || target.digit > 9)
    throw ConfigError("target digit must be in 0..9");
  if (n_target < 1)
    throw ConfigError("n_target must be positive");

  RealSuite suite;
  suite.target = target;
  std::size_t target_index = images.size();
  for (std::size_t c = 0; c < images.size(); ++c) {
    suite.corruptions.push_back(images[c]->corruption);
    if (images[c]->corruption == target.corruption)
      target_index = c;
  }
  if (target_index == images.size())
    throw ConfigError("target corruption '" + target.corruption + "' not found");

  const auto &target_images = images[target_index];
  if (target_images->rows < n_target)
    throw ConfigError("target corruption has fewer than n_target rows");

  // Frozen target sample and a disjoint held-out test set.
  std::vector<Index> order(static_cast<std::size_t>(target_images->rows));
  std::iota(order.begin(), order.end(), Index{0});
  RngStream target_rng(seed, {1000 + target_index * 10 + static_cast<std::size_t>(target.digit), kTargetEpoch});
  std::shuffle(order.begin(), order.end(), target_rng);
  suite.target_rows.assign(order.begin(), order.begin() + n_target);
  std::vector<Index> test_rows(order.begin() + n_target, order.end());
  if (options.max_test_rows > 0 && static_cast<Index>(test_rows.size()) > options.max_test_rows)
    test_rows.resize(static_cast<std::size_t>(options.max_test_rows));

  const BinaryTask target_task = build_binary_tasks(target_images, target.digit);
  auto labels_of = [&](const std::vector<Index> &rows) {
    Vector y(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      y(static_cast<Index>(i)) = target_task.Y(rows[i]);
    return y;
  };

  int task_id = 0;
  for (std::size_t c = 0; c < images.size(); ++c) {
    for (int digit = 0; digit <= 9; ++digit) {
      if (c == target_index && digit == target.digit)
        continue;
      ++task_id;
      std::span<const Index> excluded;
      if (c == target_index)
        excluded = suite.target_rows;
      suite.source_specs.push_back({images[c]->corruption, digit});
      suite.sources.emplace_back(build_binary_tasks(images[c], digit), excluded, seed,
                                 static_cast<std::uint64_t>(task_id));
    }
  }

  const int target_id = suite.M() + 1;
  suite.target_batch = SampleBatch(target_id, target_images->gather(suite.target_rows), labels_of(suite.target_rows));
  if (test_rows.empty())
    suite.test_batch = SampleBatch(target_id, Matrix(0, kImagePixels), Vector(0));
  else
    suite.test_batch = SampleBatch(target_id, target_images->gather(test_rows), labels_of(test_rows));
  return suite;
}

std::vector<std::shared_ptr<const ImageArray>> load_all_corruptions(const std::filesystem::path &root,
                                                                    Index max_rows_per_corruption) {
  std::vector<std::shared_ptr<const ImageArray>> out;
  for (const auto &name : discover_corruptions(root)) {
    ImageArray arr = load_image_array(root, name);
    if (max_rows_per_corruption > 0 && arr.rows > max_rows_per_corruption) {
      arr.rows = max_rows_per_corruption;
      arr.pixels.resize(static_cast<std::size_t>(arr.rows * arr.cols));
      arr.labels.resize(static_cast<std::size_t>(arr.rows));
    }
    out.push_back(std::make_shared<const ImageArray>(std::move(arr)));
  }
  if (out.empty())
    throw IoError("no corruption directories with images.npy/labels.npy under " + root.string());
  return out;
}

RealSuite make_real_suite(const std::filesystem::path &root, const TaskSpec &target, Index n_target,
                          std::uint64_t seed, const RealSuiteOptions &options) {
  return make_real_suite(load_all_corruptions(root, options.max_rows_per_corruption), target, n_target, seed,
                         options);
}

} // namespace amtl
