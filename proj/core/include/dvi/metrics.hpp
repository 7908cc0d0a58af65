#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dvi/json_io.hpp"
#include "dvi/matrix.hpp"
#include "dvi/subject.hpp"

namespace dvi {

/// (1/N) sum_i |N_k(x_i) ∩ N_k(y_i)| / k. Requires N > k.
double nn_preserving(const Matrix& high, const Matrix& low, std::size_t k);

/// Same rate with neighbor search restricted to the boundary sets:
/// N_k(x_i) within `boundary`, N_k(y_i) within `boundary_low`. Requires |B| > k.
double boundary_preserving(const Matrix& high, const Matrix& low, const Matrix& boundary,
                           const Matrix& boundary_low, std::size_t k);

/// Fraction of rows whose head argmax survives the round trip.
double prediction_preserving_rate(const SubjectCheckpoint& ckpt, const Matrix& reps,
                                  const Matrix& reconstructed);

/// Mean squared reconstruction error over all entries.
double reconstruction_error(const Matrix& reps, const Matrix& reconstructed);

/// Per-row |N_k(prev_i) ∩ N_k(curr_i)| / k; rows aligned by sample id.
std::vector<double> eval_sem(const Matrix& previous, const Matrix& current, std::size_t k);

/// Row-wise Euclidean distance between two aligned embeddings.
std::vector<double> displacement(const Matrix& previous, const Matrix& current);

/// Pearson product-moment coefficient with double accumulation. Throws
/// ContractError for fewer than 3 or unequal lengths, DegenerateInputError
/// when either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// pearson(sem, displacement); preservation shows as a negative value.
double temporal_pv(std::span<const double> sem, std::span<const double> displacement);

struct PcaBaseline {
  std::vector<double> mean;
  MatrixD axes;  ///< h x 2, orthonormal columns
  std::vector<double> explained;  ///< variance fraction per axis
};

/// Top-2 covariance eigenvectors by power iteration with deflation. Throws
/// ToleranceError when an axis does not settle within 1000 iterations.
PcaBaseline pca_fit(const Matrix& data);
Matrix pca_project(const PcaBaseline& pca, const Matrix& data);
Matrix pca_reconstruct(const PcaBaseline& pca, const Matrix& points);

inline const std::vector<std::size_t> kDefaultMetricKs = {10, 15, 20};

struct SplitMetrics {
  std::map<std::size_t, double> nn_pv;
  std::map<std::size_t, double> boundary_pv;
  double rec_pv = 0.0;
  double ppr = 0.0;
};

/// One split's spatial metrics. `boundary_low` is the embedding of `boundary`.
SplitMetrics measure_split(const SubjectCheckpoint& ckpt, const Matrix& reps,
                           const Matrix& embedded, const Matrix& reconstructed,
                           const Matrix& boundary, const Matrix& boundary_low,
                           std::span<const std::size_t> ks);

struct EpochMetrics {
  int epoch = 0;
  SplitMetrics train;
  SplitMetrics test;
};

struct TemporalPair {
  int from = 0;
  int to = 0;
  std::map<std::size_t, double> train;
  std::map<std::size_t, double> test;
};

struct MethodMetrics {
  std::string method;
  std::vector<EpochMetrics> epochs;
  std::vector<TemporalPair> temporal;

  /// Mean of the per-pair values at `k` for the split; NaN without pairs.
  double mean_temporal(std::size_t k, bool test) const;
  const EpochMetrics& at_epoch(int epoch) const;
};

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::vector<MethodMetrics> methods;

  const MethodMetrics& method(const std::string& name) const;
};

Json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const Json& json);
/// Subset of the report for a single epoch, keyed by method.
Json epoch_slice(const MetricsReport& report, int epoch);
/// Aligned plain-text table: one block per method, rows per epoch.
std::string render_table(const MetricsReport& report);

}  // namespace dvi
