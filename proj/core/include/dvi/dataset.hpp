#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dvi/matrix.hpp"

namespace dvi {

enum class Split : std::uint8_t { train, test };

std::string to_string(Split split);

/// Labelled input samples with ids that stay stable across epochs.
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<std::int64_t> ids;
  int class_count = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return inputs.rows(); }
  std::size_t dim() const noexcept { return inputs.cols(); }

  /// Throws ContractError when any dataset invariant fails.
  void validate() const;
};

/// Isotropic Gaussian blobs. Class centers sit on scaled coordinate axes so
/// every pair of centers is exactly `separation * sigma` apart.
struct BlobsSpec {
  std::size_t dim = 10;
  int classes = 3;
  std::size_t train_count = 600;
  std::size_t test_count = 200;
  double separation = 5.0;
  double sigma = 1.0;
  std::uint64_t seed = 42;
};

/// Train ids are 0..train_count-1, test ids continue from train_count.
std::pair<Dataset, Dataset> make_blobs(const BlobsSpec& spec);

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

/// IDX3 ubyte images (magic 0x00000803).
IdxImages read_idx_images(const std::filesystem::path& path);
/// IDX1 ubyte labels (magic 0x00000801).
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// First `limit` samples (0 = all) scaled to [0,1]; ids start at `id_offset`.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t limit, int class_count, Split split,
                         std::int64_t id_offset);

}  // namespace dvi
