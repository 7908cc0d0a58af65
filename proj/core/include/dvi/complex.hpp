#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dvi/knn.hpp"
#include "dvi/matrix.hpp"

namespace dvi {

enum class EdgeKind : std::uint8_t { xx, xb, bb };

std::string to_string(EdgeKind kind);

/// Undirected 1-simplex; i < j. Vertices 0..N-1 are data points, N..N+|B|-1
/// boundary points.
struct Edge {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  EdgeKind kind = EdgeKind::xx;
  float weight = 0.0f;
  bool operator==(const Edge&) const = default;
};

struct BavrComplex {
  std::size_t data_count = 0;
  std::size_t boundary_count = 0;
  std::size_t k = 0;
  /// Sorted by (i, j), one entry per unordered pair.
  std::vector<Edge> edges;

  std::size_t vertex_count() const noexcept { return data_count + boundary_count; }
  bool is_boundary(std::size_t vertex) const noexcept { return vertex >= data_count; }
  bool contains(std::uint32_t a, std::uint32_t b) const;
};

/// The directed neighbor relations the complex was assembled from.
struct ComplexNeighborhoods {
  NeighborIndex data;               ///< N_k(x_i) within X
  NeighborIndex data_to_boundary;   ///< N_k^(b)(x_i), boundary neighbors of data points
  NeighborIndex boundary;           ///< N_k(b_i) within B
};

struct ComplexBuild {
  BavrComplex complex;
  ComplexNeighborhoods neighborhoods;
};

/// Edge set = (a) data kNN within X, (b) k nearest boundary points of each
/// data point, (c) boundary kNN within B. Weights are left at zero; see
/// fuzzy_weights. Requires |X| > k and |B| > k.
ComplexBuild build_bavr_complex(const Matrix& data, const Matrix& boundary, std::size_t k);

/// Condition (a) only: the plain kNN complex over X.
ComplexBuild build_data_complex(const Matrix& data, std::size_t k);

/// Bandwidth sigma such that sum_j exp(-max(0, d_j - rho) / sigma) = log2(k),
/// with rho the nearest distance. When neighbors tied at rho already reach
/// log2(k), returns a floor bandwidth (1e-3 of the mean distance). Throws
/// ToleranceError after 64 bisection rounds without reaching
/// |sum - log2(k)| < tolerance.
double calibrate_sigma(std::span<const Neighbor> neighbors, double tolerance = 1e-3);

/// p = a + b - a*b
double fuzzy_union(double a, double b) noexcept;

/// Assigns symmetrized membership strengths to every edge in place.
/// Requires k >= 2 (log2(1) = 0 is unreachable).
void fuzzy_weights(BavrComplex& complex, const ComplexNeighborhoods& neighborhoods);

/// build_bavr_complex (or build_data_complex when `boundary` is empty) plus fuzzy_weights.
BavrComplex build_weighted_complex(const Matrix& data, const Matrix& boundary, std::size_t k);

struct PairSample {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  float target = 0.0f;
  EdgeKind kind = EdgeKind::xx;
};

struct PairBatch {
  std::vector<PairSample> pairs;
  std::size_t positive_count = 0;
};

/// Per epoch: every edge once as a positive (target p_ij), each followed by
/// `negative_rate` non-edges drawn uniformly from the same vertex-kind product
/// (target 0). Positives are shuffled and cut into batches.
class PairSampler {
 public:
  PairSampler(const BavrComplex& complex, std::size_t negative_rate,
              std::size_t positives_per_batch);

  std::vector<PairBatch> epoch(std::mt19937_64& rng) const;

 private:
  PairSample draw_negative(EdgeKind kind, std::mt19937_64& rng) const;

  const BavrComplex* complex_;
  std::size_t negative_rate_;
  std::size_t positives_per_batch_;
  bool kind_has_negatives_[3] = {false, false, false};
};

/// Header record {k, counts, metric} followed by one {i, j, kind, weight} record per line.
void export_complex_jsonl(const std::filesystem::path& path, const BavrComplex& complex);
BavrComplex import_complex_jsonl(const std::filesystem::path& path);

}  // namespace dvi
