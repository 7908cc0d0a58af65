#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "dvi/dataset.hpp"
#include "dvi/matrix.hpp"
#include "dvi/subject.hpp"

namespace dvi {

struct BoundaryParams {
  double delta = 0.1;
  double lambda_max = 0.4;
  int max_rounds = 16;
  double alpha = 0.8;
  /// Fraction of the training set size to synthesize.
  double target_fraction = 0.1;
  /// Non-canonical: also search lambda in [1 - lambda_max, 1) when the
  /// capped interval has no crossing.
  bool symmetric_lambda_cap = false;
};

/// True iff the rescaled top-1 and top-2 logits differ by at most `delta`.
/// Throws DegenerateInputError for constant logits.
bool on_delta_boundary(std::span<const float> logits, double delta);

/// on_delta_boundary applied to g(rep).
bool delta_boundary_test(const SubjectCheckpoint& ckpt, std::span<const float> rep, double delta);

struct BisectionResult {
  bool found = false;
  double lambda = 0.0;
  std::vector<float> input;           ///< the mixture s_b (found only)
  std::vector<float> representation;  ///< f(s_b) (found only)
  double bracket_lo = 0.0;            ///< final bracket around the class crossing
  double bracket_hi = 0.0;
  int rounds = 0;       ///< bisection rounds performed
  int evaluations = 0;  ///< classifier calls after the two endpoint checks
};

/// Convex mixture lambda * s_i + (1 - lambda) * s_j.
std::vector<float> mixup(std::span<const float> s_i, std::span<const float> s_j, double lambda);

/// Bisects lambda in (0, lambda_max] for a point on the delta-boundary between
/// the classes of s_j (lambda = 0) and another class. Reports not-found when
/// the capped interval holds no class change or no round passes the test.
BisectionResult mixup_bisect(const SubjectCheckpoint& ckpt, std::span<const float> s_i,
                             std::span<const float> s_j, double delta, double lambda_max,
                             int max_rounds, bool symmetric_cap = false);

struct ClassPair {
  int first = 0;
  int second = 0;
  bool operator==(const ClassPair&) const = default;
};

/// Per unordered class pair: successful (num_b) and attempted (num_syn) syntheses.
class PairStats {
 public:
  PairStats() = default;
  /// All pairs over the given (distinct) class ids.
  explicit PairStats(std::vector<int> classes);

  const std::vector<int>& classes() const noexcept { return classes_; }
  const std::vector<ClassPair>& pairs() const noexcept { return pairs_; }
  std::size_t index_of(int a, int b) const;

  std::size_t successes(std::size_t pair) const { return num_b_.at(pair); }
  std::size_t attempts(std::size_t pair) const { return num_syn_.at(pair); }
  void set_counts(std::size_t pair, std::size_t successes, std::size_t attempts);
  void record(std::size_t pair, bool success);

  /// Mean successes over all pairs (the abundance target).
  double abundance_mean() const;
  /// max(0, mean - num_b) normalized; uniform when every term is zero.
  std::vector<double> abundance_distribution() const;
  /// num_b / num_syn (1 when unexplored) normalized; uniform when all zero.
  std::vector<double> success_distribution() const;
  /// alpha * abundance + (1 - alpha) * success.
  std::vector<double> pair_probabilities(double alpha) const;

 private:
  std::vector<int> classes_;
  std::vector<ClassPair> pairs_;
  std::vector<std::size_t> num_b_;
  std::vector<std::size_t> num_syn_;
};

ClassPair sample_class_pair(const PairStats& stats, double alpha, std::mt19937_64& rng);

struct BoundaryProvenance {
  std::int64_t source_i = 0;  ///< sample id weighted by lambda
  std::int64_t source_j = 0;
  double lambda = 0.0;
  int class_i = 0;
  int class_j = 0;
};

struct BoundarySet {
  Matrix points;  ///< |B| x h representation vectors
  std::vector<BoundaryProvenance> provenance;
  PairStats stats;
  std::size_t attempts = 0;

  std::size_t size() const noexcept { return points.rows(); }
};

/// Synthesizes at least `target_count` boundary representations by class-pair
/// sampling and mixup bisection. Throws SynthesisError when
/// 100 * target_count attempts do not suffice.
BoundarySet synthesize_boundary_set(const SubjectCheckpoint& ckpt, const Dataset& data,
                                    std::size_t target_count, const BoundaryParams& params,
                                    std::uint64_t seed);

/// `stem`.f32 (row-major points) plus `stem`.json (shape, provenance, stats).
void save_boundary_set(const std::filesystem::path& stem, const BoundarySet& set);
BoundarySet load_boundary_set(const std::filesystem::path& stem);

}  // namespace dvi
