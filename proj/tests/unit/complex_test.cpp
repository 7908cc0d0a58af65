#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "dvi/binary_io.hpp"
#include "dvi/complex.hpp"
#include "dvi/error.hpp"
#include "dvi/knn.hpp"
#include "test_support.hpp"

using namespace dvi;

namespace {

using Key = std::pair<std::uint32_t, std::uint32_t>;

Key key(std::size_t a, std::size_t b) {
  return {static_cast<std::uint32_t>(std::min(a, b)), static_cast<std::uint32_t>(std::max(a, b))};
}

/// Bandwidth by plain bisection in long double on [0, 1e6].
long double oracle_sigma(const std::vector<long double>& d) {
  const long double target = std::log2(static_cast<long double>(d.size()));
  long double lo = 0, hi = 1e6L;
  for (int i = 0; i < 200; ++i) {
    const long double mid = (lo + hi) / 2;
    long double s = 0;
    for (long double v : d) s += std::exp(-std::max(0.0L, v - d.front()) / mid);
    (s > target ? hi : lo) = mid;
  }
  return (lo + hi) / 2;
}

/// Directed memberships row -> neighbor from a brute-force kNN list.
std::map<Key, long double> oracle_memberships(const Matrix& q, const Matrix& ref, std::size_t k, bool self,
                                              std::size_t row_offset, std::size_t col_offset) {
  std::map<Key, long double> out;
  const auto lists = testing::brute_knn_distances(q, ref, k, self);
  for (std::size_t r = 0; r < lists.size(); ++r) {
    std::vector<long double> d;
    for (const auto& nb : lists[r]) d.push_back(nb.second);
    const long double sigma = oracle_sigma(d);
    for (const auto& nb : lists[r]) {
      out[{static_cast<std::uint32_t>(r + row_offset), static_cast<std::uint32_t>(nb.first + col_offset)}] =
          std::exp(-std::max(0.0L, nb.second - d.front()) / sigma);
    }
  }
  return out;
}

long double lookup(const std::map<Key, long double>& m, std::size_t a, std::size_t b) {
  const auto it = m.find({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)});
  return it == m.end() ? 0.0L : it->second;
}

}  // namespace

TEST_SUITE("complex") {

TEST_CASE("kNN agrees with brute force") {
  std::mt19937_64 rng(5);
  const Matrix pts = testing::random_matrix(60, 4, rng);
  const Matrix queries = testing::random_matrix(9, 4, rng);
  const NeighborIndex self = build_knn(pts, 6);
  const auto oracle = testing::brute_knn_distances(pts, pts, 6, true);
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    for (std::size_t r = 0; r < 6; ++r) {
      CHECK(self.neighbors(i)[r].index == oracle[i][r].first);
      CHECK(self.neighbors(i)[r].distance == doctest::Approx(static_cast<double>(oracle[i][r].second)).epsilon(1e-5));
    }
  }
  const NeighborIndex cross = build_knn_cross(queries, pts, 3);
  const auto cross_oracle = testing::brute_knn(queries, pts, 3, false);
  for (std::size_t i = 0; i < queries.rows(); ++i)
    for (std::size_t r = 0; r < 3; ++r) CHECK(cross.neighbors(i)[r].index == cross_oracle[i][r]);

  // Ties resolve to the lower index.
  const NeighborIndex tie = build_knn(Matrix::from_rows({{0}, {1}, {-1}, {5}}), 2);
  CHECK(tie.indices(0) == std::vector<std::uint32_t>{1, 2});
  CHECK_THROWS_AS(build_knn(pts, 60), ContractError);
  CHECK_THROWS_AS(build_knn(pts, 0), ContractError);
}

TEST_CASE("edge set is exactly the union of the three neighbor relations") {
  std::mt19937_64 rng(9);
  const Matrix x = testing::random_matrix(40, 3, rng);
  const Matrix b = testing::random_matrix(12, 3, rng, 0.5f);
  const std::size_t k = 4, n = 40;
  const BavrComplex c = build_bavr_complex(x, b, k).complex;
  CHECK(c.vertex_count() == 52);
  CHECK(c.is_boundary(40));
  CHECK_FALSE(c.is_boundary(39));

  std::map<Key, EdgeKind> expected;
  const auto xx = testing::brute_knn(x, x, k, true);
  const auto xb = testing::brute_knn(x, b, k, false);
  const auto bb = testing::brute_knn(b, b, k, true);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t j : xx[i]) expected[key(i, j)] = EdgeKind::xx;
    for (std::uint32_t j : xb[i]) expected[key(i, n + j)] = EdgeKind::xb;
  }
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::uint32_t j : bb[i]) expected[key(n + i, n + j)] = EdgeKind::bb;

  REQUIRE(c.edges.size() == expected.size());
  for (std::size_t e = 0; e < c.edges.size(); ++e) {
    const Edge& edge = c.edges[e];
    CHECK(edge.i < edge.j);
    if (e > 0) CHECK(std::make_pair(c.edges[e - 1].i, c.edges[e - 1].j) < std::make_pair(edge.i, edge.j));
    const auto it = expected.find({edge.i, edge.j});
    REQUIRE(it != expected.end());
    CHECK(it->second == edge.kind);
    CHECK(c.contains(edge.j, edge.i));
  }
  CHECK_FALSE(c.contains(0, 0));
  CHECK_THROWS_AS(build_bavr_complex(x, testing::random_matrix(4, 3, rng), k), ContractError);
  CHECK_THROWS_AS(build_bavr_complex(x, testing::random_matrix(12, 2, rng), k), DimensionError);

  const BavrComplex plain = build_data_complex(x, k).complex;
  CHECK(plain.boundary_count == 0);
  for (const Edge& e : plain.edges) CHECK(e.kind == EdgeKind::xx);
}

TEST_CASE("sigma calibration hits log2(k)") {
  const std::vector<Neighbor> nb = {{1, 1.0f}, {2, 2.0f}, {3, 3.0f}, {4, 4.0f}};
  const double sigma = calibrate_sigma(nb);
  double s = 0;
  for (const auto& v : nb) s += std::exp(-(v.distance - 1.0) / sigma);
  CHECK(std::abs(s - 2.0) < 1e-3);
  CHECK(sigma == doctest::Approx(static_cast<double>(oracle_sigma({1, 2, 3, 4}))).epsilon(1e-3));
  // Ties at rho alone exceed log2(k): floor bandwidth, the far neighbor drops out.
  const std::vector<Neighbor> flat = {{1, 2.0f}, {2, 2.0f}, {3, 2.0f}, {4, 5.0f}};
  const double floor = calibrate_sigma(flat);
  CHECK(floor == doctest::Approx(1e-3 * 11.0 / 4));
  CHECK(std::exp(-3.0 / floor) == 0.0);
  const std::vector<Neighbor> zeros = {{1, 0.0f}, {2, 0.0f}};
  CHECK(calibrate_sigma(zeros) > 0.0);
  const std::vector<Neighbor> broken = {{1, 1.0f}, {2, std::numeric_limits<float>::quiet_NaN()}};
  CHECK_THROWS_AS(calibrate_sigma(broken), ContractError);
  // The bandwidth would have to shrink ~100 halvings below its start.
  const std::vector<Neighbor> spread = {{1, 0.0f}, {2, 1e-30f}, {3, 1e30f}};
  CHECK_THROWS_AS(calibrate_sigma(spread), ToleranceError);
  CHECK(fuzzy_union(0.5, 0.5) == 0.75);
  CHECK(fuzzy_union(1.0, 0.3) == 1.0);
  CHECK(fuzzy_union(0.0, 0.0) == 0.0);
}

TEST_CASE("fuzzy weights match an independent calibration") {
  std::mt19937_64 rng(21);
  const Matrix x = testing::random_matrix(30, 3, rng);
  const Matrix b = testing::random_matrix(10, 3, rng, 0.5f);
  const std::size_t k = 5, n = 30;
  ComplexBuild built = build_bavr_complex(x, b, k);
  fuzzy_weights(built.complex, built.neighborhoods);

  const auto xx = oracle_memberships(x, x, k, true, 0, 0);
  const auto xb = oracle_memberships(x, b, k, false, 0, n);
  const auto bb = oracle_memberships(b, b, k, true, n, n);
  for (const Edge& e : built.complex.edges) {
    long double expected = 0;
    switch (e.kind) {
      case EdgeKind::xx: {
        const long double p = lookup(xx, e.i, e.j), q = lookup(xx, e.j, e.i);
        expected = p + q - p * q;
        break;
      }
      case EdgeKind::xb: expected = lookup(xb, e.i, e.j); break;
      case EdgeKind::bb: {
        const long double p = lookup(bb, e.i, e.j), q = lookup(bb, e.j, e.i);
        expected = p + q - p * q;
        break;
      }
    }
    CHECK(e.weight > 0.0f);
    CHECK(e.weight <= 1.0f);
    // Calibration tolerance is 1e-3 on the membership sum.
    CHECK(std::abs(e.weight - static_cast<double>(expected)) < 2e-3);
  }

  ComplexBuild k1 = build_bavr_complex(x, b, 1);
  CHECK_THROWS_AS(fuzzy_weights(k1.complex, k1.neighborhoods), ContractError);
}

TEST_CASE("pair sampler: every edge once, negatives are same-kind non-edges") {
  std::mt19937_64 rng(2);
  const BavrComplex c =
      build_weighted_complex(testing::random_matrix(50, 3, rng), testing::random_matrix(16, 3, rng), 4);
  const PairSampler sampler(c, 5, 64);
  std::mt19937_64 draw(8);
  const auto batches = sampler.epoch(draw);
  std::multiset<Key> positives;
  for (const PairBatch& batch : batches) {
    CHECK(batch.positive_count <= 64);
    CHECK(batch.pairs.size() == batch.positive_count * 6);
    for (std::size_t p = 0; p < batch.pairs.size(); ++p) {
      const PairSample& s = batch.pairs[p];
      if (p < batch.positive_count) {
        positives.insert(key(s.i, s.j));
        CHECK(c.contains(s.i, s.j));
        CHECK(s.target > 0.0f);
      } else {
        CHECK_FALSE(c.contains(s.i, s.j));
        CHECK(s.i != s.j);
        CHECK(s.target == 0.0f);
        const bool bi = c.is_boundary(s.i), bj = c.is_boundary(s.j);
        const EdgeKind kind = bi && bj ? EdgeKind::bb : (bi || bj ? EdgeKind::xb : EdgeKind::xx);
        CHECK(kind == s.kind);
      }
    }
  }
  CHECK(positives.size() == c.edges.size());
  for (const Edge& e : c.edges) CHECK(positives.count({e.i, e.j}) == 1);
  CHECK_THROWS_AS(PairSampler(c, 0, 64), ContractError);
}

TEST_CASE("jsonl export round trip") {
  std::mt19937_64 rng(4);
  const BavrComplex c =
      build_weighted_complex(testing::random_matrix(25, 3, rng), testing::random_matrix(8, 3, rng), 3);
  testing::TempDir dir;
  export_complex_jsonl(dir / "c.jsonl", c);
  const BavrComplex back = import_complex_jsonl(dir / "c.jsonl");
  CHECK(back.k == c.k);
  CHECK(back.data_count == c.data_count);
  CHECK(back.boundary_count == c.boundary_count);
  CHECK(back.edges == c.edges);
  write_text_file(dir / "bad.jsonl", "{\"version\":1}\n");
  CHECK_THROWS_AS(import_complex_jsonl(dir / "bad.jsonl"), FormatError);
}

}  // TEST_SUITE
