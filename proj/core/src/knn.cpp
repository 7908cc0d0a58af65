#include "dvi/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dvi {

NeighborIndex::NeighborIndex(std::size_t count, std::size_t k, std::vector<Neighbor> lists)
    : count_(count), k_(k), lists_(std::move(lists)) {
  if (lists_.size() != count_ * k_) throw DimensionError("neighbor index: list size mismatch");
}

std::vector<std::uint32_t> NeighborIndex::indices(std::size_t i) const {
  std::vector<std::uint32_t> out;
  out.reserve(k_);
  for (const Neighbor& n : neighbors(i)) out.push_back(n.index);
  return out;
}

namespace {

constexpr std::size_t kBlock = 64;

struct Candidate {
  double squared;
  std::uint32_t index;
  bool operator<(const Candidate& o) const {
    return squared < o.squared || (squared == o.squared && index < o.index);
  }
};

/// Bounded selection of the k best candidates per query. Reference rows are
/// walked in cache-sized blocks; each distance is computed independently, so
/// results do not depend on the block size.
NeighborIndex knn_impl(const Matrix& queries, const Matrix& reference, std::size_t k,
                       bool exclude_self) {
  const std::size_t nq = queries.rows();
  const std::size_t nr = reference.rows();
  std::vector<Neighbor> lists(nq * k);
  std::vector<Candidate> heap;
  heap.reserve(k + 1);
  for (std::size_t q0 = 0; q0 < nq; q0 += kBlock) {
    const std::size_t q1 = std::min(nq, q0 + kBlock);
    for (std::size_t q = q0; q < q1; ++q) {
      heap.clear();
      const auto qrow = queries.row(q);
      for (std::size_t r0 = 0; r0 < nr; r0 += kBlock) {
        const std::size_t r1 = std::min(nr, r0 + kBlock);
        for (std::size_t r = r0; r < r1; ++r) {
          if (exclude_self && r == q) continue;
          const Candidate c{squared_distance(qrow, reference.row(r)),
                            static_cast<std::uint32_t>(r)};
          if (heap.size() < k) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end());
          } else if (c < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end());
          }
        }
      }
      std::sort_heap(heap.begin(), heap.end());
      for (std::size_t n = 0; n < k; ++n) {
        lists[q * k + n] = {heap[n].index, static_cast<float>(std::sqrt(heap[n].squared))};
      }
    }
  }
  return NeighborIndex(nq, k, std::move(lists));
}

}  // namespace

NeighborIndex build_knn(const Matrix& points, std::size_t k) {
  if (k == 0) throw ContractError("build_knn: k must be >= 1");
  if (points.rows() <= k) {
    throw ContractError("build_knn: need more than k=" + std::to_string(k) + " points, got " +
                        std::to_string(points.rows()));
  }
  return knn_impl(points, points, k, true);
}

NeighborIndex build_knn_cross(const Matrix& queries, const Matrix& reference, std::size_t k) {
  if (k == 0) throw ContractError("build_knn_cross: k must be >= 1");
  if (reference.rows() < k) throw ContractError("build_knn_cross: fewer reference points than k");
  if (queries.cols() != reference.cols()) throw DimensionError("build_knn_cross: width mismatch");
  return knn_impl(queries, reference, k, false);
}

}  // namespace dvi
