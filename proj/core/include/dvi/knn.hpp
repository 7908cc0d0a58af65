#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dvi/matrix.hpp"

namespace dvi {

struct Neighbor {
  std::uint32_t index = 0;
  float distance = 0.0f;
  bool operator==(const Neighbor&) const = default;
};

/// Exact k-nearest-neighbor lists under Euclidean distance. Lists are sorted
/// by (distance, index), so ties resolve to the lower index.
class NeighborIndex {
 public:
  NeighborIndex() = default;
  NeighborIndex(std::size_t count, std::size_t k, std::vector<Neighbor> lists);

  std::size_t size() const noexcept { return count_; }
  std::size_t k() const noexcept { return k_; }
  std::span<const Neighbor> neighbors(std::size_t i) const {
    return {lists_.data() + i * k_, k_};
  }
  /// Neighbor indices of `i` in ascending distance order.
  std::vector<std::uint32_t> indices(std::size_t i) const;

  bool operator==(const NeighborIndex&) const = default;

 private:
  std::size_t count_ = 0;
  std::size_t k_ = 0;
  std::vector<Neighbor> lists_;
};

/// k nearest other points for every row of `points` (self excluded).
/// Requires rows > k >= 1.
NeighborIndex build_knn(const Matrix& points, std::size_t k);

/// k nearest rows of `reference` for every row of `queries` (no exclusion).
/// Requires reference rows >= k >= 1.
NeighborIndex build_knn_cross(const Matrix& queries, const Matrix& reference, std::size_t k);

}  // namespace dvi
