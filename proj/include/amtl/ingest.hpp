#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "amtl/env.hpp"
#include "amtl/npy.hpp"
#include "amtl/rng.hpp"

namespace amtl {

inline constexpr Index kImagePixels = 28 * 28;

/// Flattened 28x28 images of one corruption type with their digit labels.
/// Pixels are stored as bytes; pixel() rescales to [0, 1].
struct ImageArray {
  std::string corruption;
  Index rows = 0;
  Index cols = 0;
  std::vector<std::uint8_t> pixels; // row-major
  std::vector<int> labels;

  double pixel(Index i, Index j) const { return pixels[static_cast<std::size_t>(i * cols + j)] / 255.0; }
  /// Selected rows as an n x cols matrix in [0, 1].
  Matrix gather(std::span<const Index> row_ids) const;
};

/// Builds an ImageArray from an image array of shape (n, 28, 28[, 1]) or
/// (n, 784) and a label array of shape (n,). uint8 pixels are divided by 255;
/// float64 pixels are accepted in [0, 1] (or [0, 255]) and quantized to 1/255.
ImageArray image_array_from_npy(std::string corruption, const NpyArray &images, const NpyArray &labels);

/// Reads <root>/<corruption>/images.npy and labels.npy.
ImageArray load_image_array(const std::filesystem::path &root, const std::string &corruption);

/// Sorted names of subdirectories of root holding images.npy and labels.npy.
std::vector<std::string> discover_corruptions(const std::filesystem::path &root);

/// One-vs-rest regression task: Y_i = 1 iff labels_i == digit.
struct BinaryTask {
  std::string corruption;
  int digit = 0;
  std::shared_ptr<const ImageArray> images;
  Vector Y;

  Index size() const { return Y.size(); }
  Matrix X() const;
};

BinaryTask build_binary_tasks(std::shared_ptr<const ImageArray> images, int digit);

/// A task named "<corruption>_<digit>".
struct TaskSpec {
  std::string corruption;
  int digit = 0;

  std::string name() const { return corruption + "_" + std::to_string(digit); }
  /// Accepts "corruption:digit" or "corruption_digit".
  static TaskSpec parse(const std::string &text);

  friend bool operator==(const TaskSpec &, const TaskSpec &) = default;
};

/// Draw oracle over a finite pool: rows come without replacement in a seeded
/// random order, then with replacement once the pool is exhausted.
/// Single-owner; the cursor is mutable state.
class SourcePool {
public:
  SourcePool(BinaryTask task, std::span<const Index> excluded_rows, std::uint64_t seed, std::uint64_t stream_task);

  /// n rows labelled as task `task_id`.
  SampleBatch draw(Index n, int task_id);

  const BinaryTask &task() const { return task_; }
  Index pool_size() const { return static_cast<Index>(order_.size()); }
  Index drawn() const { return static_cast<Index>(history_.size()); }
  bool exhausted() const { return cursor_ >= order_.size(); }
  /// Every row index returned so far, in order.
  const std::vector<Index> &history() const { return history_; }

private:
  BinaryTask task_;
  std::vector<Index> order_;
  std::size_t cursor_ = 0;
  RngStream rng_;
  std::vector<Index> history_;
  bool warned_ = false;
};

struct RealSuiteOptions {
  Index max_rows_per_corruption = 0; // 0 keeps every row
  Index max_test_rows = 2000;
};

/// Binary-regression task suite over every (corruption, digit) pair. The
/// target task gets a frozen sample; the remaining pairs become source pools.
/// Frozen target rows are withheld from the source pools of the same
/// corruption and from the held-out test batch.
struct RealSuite {
  std::vector<std::string> corruptions;
  TaskSpec target;
  std::vector<Index> target_rows;
  SampleBatch target_batch; // task M+1
  SampleBatch test_batch;   // task M+1, disjoint from target_rows
  std::vector<TaskSpec> source_specs;
  std::vector<SourcePool> sources;

  int M() const { return static_cast<int>(sources.size()); }
};

RealSuite make_real_suite(const std::vector<std::shared_ptr<const ImageArray>> &images, const TaskSpec &target,
                          Index n_target, std::uint64_t seed, const RealSuiteOptions &options = {});

RealSuite make_real_suite(const std::filesystem::path &root, const TaskSpec &target, Index n_target,
                          std::uint64_t seed, const RealSuiteOptions &options = {});

/// Loads every corruption under root (optionally truncated to max_rows each).
std::vector<std::shared_ptr<const ImageArray>> load_all_corruptions(const std::filesystem::path &root,
                                                                    Index max_rows_per_corruption = 0);

} // namespace amtl
