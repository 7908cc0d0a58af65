#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "dvi/boundary.hpp"
#include "dvi/dataset.hpp"
#include "dvi/error.hpp"
#include "dvi/subject.hpp"
#include "test_support.hpp"

using namespace dvi;

namespace {

/// 1-D input, identity features, logits (-s, s, -10): the class flips at s = 0.
SubjectCheckpoint linear_checkpoint() {
  SubjectCheckpoint c;
  std::vector<std::size_t> f = {1, 1};
  std::vector<std::size_t> g = {1, 3};
  c.feature_net = zero_mlp<float>(f, Activation::identity, Activation::identity);
  c.feature_net.weights[0](0, 0) = 1.0f;
  c.head = zero_mlp<float>(g, Activation::identity, Activation::identity);
  c.head.weights[0] = Matrix::from_rows({{-1.0f, 1.0f, 0.0f}});
  c.head.biases[0] = Matrix::from_rows({{0.0f, 0.0f, -10.0f}});
  return c;
}

/// Rescaled top-1 minus top-2, in double, written independently of the library.
double rescaled_gap(const std::vector<float>& logits) {
  const double lo = *std::min_element(logits.begin(), logits.end());
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> r;
  for (float v : logits) r.push_back((v - lo) / (hi - lo));
  std::sort(r.rbegin(), r.rend());
  return r[0] - r[1];
}

}  // namespace

TEST_SUITE("boundary") {

TEST_CASE("delta test on rescaled logits") {
  CHECK(on_delta_boundary(std::vector<float>{0.0f, 0.95f, 1.0f}, 0.1));
  CHECK_FALSE(on_delta_boundary(std::vector<float>{0.0f, 0.5f, 1.0f}, 0.1));
  CHECK(on_delta_boundary(std::vector<float>{-3.0f, 7.0f, 6.5f}, 0.1));
  CHECK_THROWS_AS(on_delta_boundary(std::vector<float>{2.0f, 2.0f, 2.0f}, 0.1), DegenerateInputError);
  CHECK(BoundaryParams{}.delta == 0.1);
  CHECK(BoundaryParams{}.lambda_max == 0.4);
  CHECK(BoundaryParams{}.alpha == 0.8);
  CHECK(BoundaryParams{}.max_rounds == 16);
}

TEST_CASE("mixup endpoints") {
  const std::vector<float> si = {1, 2, 3};
  const std::vector<float> sj = {-4, 0, 8};
  CHECK(mixup(si, sj, 0.0) == sj);
  CHECK(mixup(si, sj, 1.0) == si);
}

TEST_CASE("bisection against the closed-form linear crossing") {
  const SubjectCheckpoint c = linear_checkpoint();
  const std::vector<float> si = {2.7f};  // class 1
  const std::vector<float> sj = {-1.0f};  // class 0
  const double lambda_star = 1.0 / 3.7;   // 2.7 l - (1 - l) = 0

  // delta = 0 only accepts exact ties, so the search runs all M rounds and the
  // final bracket has length lambda_max / 2^M around the crossing.
  const BisectionResult exact = mixup_bisect(c, si, sj, 0.0, 0.4, 16);
  CHECK_FALSE(exact.found);
  CHECK(exact.rounds == 16);
  CHECK(exact.evaluations <= 16);
  CHECK(exact.bracket_hi - exact.bracket_lo == doctest::Approx(0.4 / 65536.0).epsilon(1e-9));
  CHECK(exact.bracket_lo <= lambda_star + 1e-6);
  CHECK(exact.bracket_hi >= lambda_star - 1e-6);

  for (int m : {1, 3, 7}) {
    const BisectionResult r = mixup_bisect(c, si, sj, 0.0, 0.4, m);
    CHECK(r.bracket_hi - r.bracket_lo == doctest::Approx(0.4 / std::pow(2.0, m)));
  }

  const BisectionResult hit = mixup_bisect(c, si, sj, 1e-4, 0.4, 16);
  REQUIRE(hit.found);
  CHECK(hit.lambda > 0.0);
  CHECK(hit.lambda <= 0.4);
  CHECK(std::abs(hit.lambda - lambda_star) <= hit.bracket_hi - hit.bracket_lo);
  CHECK(rescaled_gap({-hit.representation[0], hit.representation[0], -10.0f}) <= 1e-4);
  CHECK(hit.input.size() == 1);
}

TEST_CASE("no crossing inside the cap is not-found without bisection") {
  const SubjectCheckpoint c = linear_checkpoint();
  const BisectionResult r = mixup_bisect(c, std::vector<float>{1.0f}, std::vector<float>{-1.0f}, 0.1, 0.4, 16);
  CHECK_FALSE(r.found);
  CHECK(r.rounds == 0);
  CHECK_THROWS_AS(mixup_bisect(c, std::vector<float>{1.0f}, std::vector<float>{2.0f}, 0.1, 0.4, 16), ContractError);

  // The non-canonical symmetric cap also searches [1 - lambda_max, 1).
  const BisectionResult sym =
      mixup_bisect(c, std::vector<float>{0.2f}, std::vector<float>{-1.0f}, 0.1, 0.4, 16, true);
  CHECK(sym.found);
  CHECK(sym.lambda >= 0.6);
}

TEST_CASE("pair distributions by hand") {
  PairStats s({0, 1, 2});
  REQUIRE(s.pairs().size() == 3);
  const std::size_t ab = s.index_of(0, 1), ac = s.index_of(0, 2), bc = s.index_of(1, 2);
  CHECK(s.index_of(2, 1) == bc);

  // All pairs equal -> uniform abundance.
  for (std::size_t p = 0; p < 3; ++p) s.set_counts(p, 4, 8);
  for (double v : s.abundance_distribution()) CHECK(v == doctest::Approx(1.0 / 3));

  s.set_counts(ab, 0, 5);
  s.set_counts(ac, 0, 0);
  s.set_counts(bc, 6, 10);
  CHECK(s.abundance_mean() == doctest::Approx(2.0));
  const auto abundance = s.abundance_distribution();
  CHECK(abundance[ab] == doctest::Approx(0.5));
  CHECK(abundance[ac] == doctest::Approx(0.5));
  CHECK(abundance[bc] == doctest::Approx(0.0));
  // succ: AB 0/5, AC unexplored -> 1, BC 6/10.
  const auto succ = s.success_distribution();
  CHECK(succ[ab] == doctest::Approx(0.0));
  CHECK(succ[ac] == doctest::Approx(1.0 / 1.6));
  CHECK(succ[bc] == doctest::Approx(0.6 / 1.6));
  const auto p = s.pair_probabilities(0.8);
  CHECK(p[ab] == doctest::Approx(0.4));
  CHECK(p[ac] == doctest::Approx(0.4 + 0.2 / 1.6));
  CHECK(p[bc] == doctest::Approx(0.2 * 0.6 / 1.6));
  double total = 0;
  for (double v : p) total += v;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("sampled pair frequencies follow the closed form") {
  PairStats s({0, 1, 2, 3});
  for (std::size_t p = 0; p < s.pairs().size(); ++p) s.set_counts(p, p * 2, p * 3 + 4);
  const auto expected = s.pair_probabilities(0.8);
  std::mt19937_64 rng(11);
  std::vector<double> freq(expected.size(), 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const ClassPair c = sample_class_pair(s, 0.8, rng);
    freq[s.index_of(c.first, c.second)] += 1.0 / draws;
  }
  for (std::size_t p = 0; p < freq.size(); ++p) CHECK(std::abs(freq[p] - expected[p]) <= 0.01);
}

TEST_CASE("blobs synthesis: soundness, cap, diversity, persistence") {
  const auto [train, test] = make_blobs(BlobsSpec{});
  const auto ckpts = train_subject(train, SubjectTrainingParams{});
  const BoundaryParams params;
  const BoundarySet set = synthesize_boundary_set(ckpts.back(), train, 60, params, 5);
  REQUIRE(set.size() >= 60);
  REQUIRE(set.provenance.size() == set.size());
  std::map<std::pair<int, int>, int> per_pair;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Matrix logits = forward(ckpts.back().head, Matrix(1, set.points.cols(), {set.points.row(i).begin(), set.points.row(i).end()}));
    CHECK(rescaled_gap({logits.row(0).begin(), logits.row(0).end()}) <= 0.1);
    const auto& pv = set.provenance[i];
    CHECK(pv.lambda > 0.0);
    CHECK(pv.lambda <= 0.4);
    per_pair[{std::min(pv.class_i, pv.class_j), std::max(pv.class_i, pv.class_j)}]++;
  }
  REQUIRE(per_pair.size() == 3);
  for (const auto& [pair, n] : per_pair) CHECK(n >= 6);
  std::size_t successes = 0, attempts = 0;
  for (std::size_t p = 0; p < set.stats.pairs().size(); ++p) {
    CHECK(set.stats.successes(p) <= set.stats.attempts(p));
    successes += set.stats.successes(p);
    attempts += set.stats.attempts(p);
  }
  CHECK(successes == set.size());
  CHECK(attempts == set.attempts);

  const BoundarySet again = synthesize_boundary_set(ckpts.back(), train, 60, params, 5);
  CHECK(again.points == set.points);

  testing::TempDir dir;
  save_boundary_set(dir / "b", set);
  const BoundarySet back = load_boundary_set(dir / "b");
  CHECK(back.points == set.points);
  CHECK(back.attempts == set.attempts);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(back.provenance[i].source_i == set.provenance[i].source_i);
    CHECK(back.provenance[i].lambda == set.provenance[i].lambda);
  }
}

TEST_CASE("synthesis gives up after 100 x target attempts") {
  // Classes only flip at lambda = 0.5, beyond the cap, so nothing is ever found.
  const SubjectCheckpoint c = linear_checkpoint();
  Dataset d;
  d.inputs = Matrix::from_rows({{-1}, {-1}, {1}, {1}});
  d.labels = {0, 0, 1, 1};
  d.ids = {0, 1, 2, 3};
  d.class_count = 3;
  CHECK_THROWS_AS(synthesize_boundary_set(c, d, 2, BoundaryParams{}, 1), SynthesisError);
  CHECK_THROWS_AS(synthesize_boundary_set(c, d, 0, BoundaryParams{}, 1), ContractError);
}

}  // TEST_SUITE
