#include "dvi/complex.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dvi/binary_io.hpp"
#include "dvi/json_io.hpp"

namespace dvi {

std::string to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::xx: return "xx";
    case EdgeKind::xb: return "xb";
    case EdgeKind::bb: return "bb";
  }
  return "xx";
}

namespace {

EdgeKind edge_kind_from_string(const std::string& s) {
  if (s == "xx") return EdgeKind::xx;
  if (s == "xb") return EdgeKind::xb;
  if (s == "bb") return EdgeKind::bb;
  throw FormatError("unknown edge kind '" + s + "'");
}

constexpr double kSigmaFloorScale = 1e-3;
constexpr double kSigmaMin = 1e-12;

bool edge_less(const Edge& a, const Edge& b) { return a.i < b.i || (a.i == b.i && a.j < b.j); }

void add_edge(std::vector<Edge>& edges, std::size_t a, std::size_t b, EdgeKind kind) {
  const auto lo = static_cast<std::uint32_t>(std::min(a, b));
  const auto hi = static_cast<std::uint32_t>(std::max(a, b));
  edges.push_back({lo, hi, kind, 0.0f});
}

void finalize(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end(), edge_less);
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const Edge& a, const Edge& b) { return a.i == b.i && a.j == b.j; }),
              edges.end());
}

}  // namespace

bool BavrComplex::contains(std::uint32_t a, std::uint32_t b) const {
  const Edge key{std::min(a, b), std::max(a, b), EdgeKind::xx, 0.0f};
  return std::binary_search(edges.begin(), edges.end(), key, edge_less);
}

ComplexBuild build_bavr_complex(const Matrix& data, const Matrix& boundary, std::size_t k) {
  if (data.rows() <= k) throw ContractError("complex: need |X| > k");
  if (boundary.rows() <= k) throw ContractError("complex: need |B| > k");
  if (data.cols() != boundary.cols()) throw DimensionError("complex: X and B widths differ");

  ComplexBuild out;
  out.neighborhoods.data = build_knn(data, k);
  out.neighborhoods.data_to_boundary = build_knn_cross(data, boundary, k);
  out.neighborhoods.boundary = build_knn(boundary, k);

  BavrComplex& c = out.complex;
  c.data_count = data.rows();
  c.boundary_count = boundary.rows();
  c.k = k;
  const std::size_t n = data.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (const Neighbor& nb : out.neighborhoods.data.neighbors(i)) add_edge(c.edges, i, nb.index, EdgeKind::xx);
    for (const Neighbor& nb : out.neighborhoods.data_to_boundary.neighbors(i))
      add_edge(c.edges, i, n + nb.index, EdgeKind::xb);
  }
  for (std::size_t i = 0; i < boundary.rows(); ++i) {
    for (const Neighbor& nb : out.neighborhoods.boundary.neighbors(i))
      add_edge(c.edges, n + i, n + nb.index, EdgeKind::bb);
  }
  finalize(c.edges);
  return out;
}

ComplexBuild build_data_complex(const Matrix& data, std::size_t k) {
  if (data.rows() <= k) throw ContractError("complex: need |X| > k");
  ComplexBuild out;
  out.neighborhoods.data = build_knn(data, k);
  BavrComplex& c = out.complex;
  c.data_count = data.rows();
  c.k = k;
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (const Neighbor& nb : out.neighborhoods.data.neighbors(i)) add_edge(c.edges, i, nb.index, EdgeKind::xx);
  finalize(c.edges);
  return out;
}

double calibrate_sigma(std::span<const Neighbor> neighbors, double tolerance) {
  if (neighbors.empty()) throw ContractError("calibrate_sigma: no neighbors");
  const double target = std::log2(static_cast<double>(neighbors.size()));
  const double rho = neighbors.front().distance;
  // Neighbors tied at rho keep membership 1 for every sigma. When they alone
  // reach log2(k) the target is unreachable; fall back to a floor bandwidth
  // so the remaining neighbors get (near) zero membership.
  std::size_t ties = 0;
  double mean = 0.0;
  for (const Neighbor& nb : neighbors) {
    if (!std::isfinite(nb.distance)) throw ContractError("calibrate_sigma: non-finite distance");
    ties += static_cast<double>(nb.distance) - rho > 0.0 ? 0 : 1;
    mean += nb.distance;
  }
  mean /= static_cast<double>(neighbors.size());
  if (static_cast<double>(ties) >= target - tolerance) return std::max(kSigmaFloorScale * mean, kSigmaMin);
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double mid = 1.0;
  for (int round = 0; round < 64; ++round) {
    double total = 0.0;
    for (const Neighbor& nb : neighbors) {
      const double gap = static_cast<double>(nb.distance) - rho;
      total += gap > 0.0 ? std::exp(-gap / mid) : 1.0;
    }
    if (std::abs(total - target) < tolerance) return mid;
    if (total > target) {
      hi = mid;
      mid = 0.5 * (lo + hi);
    } else {
      lo = mid;
      mid = std::isinf(hi) ? mid * 2.0 : 0.5 * (lo + hi);
    }
  }
  throw ToleranceError("calibrate_sigma: no bandwidth reaches log2(k) within tolerance");
}

double fuzzy_union(double a, double b) noexcept { return a + b - a * b; }

namespace {

struct Relation {
  const NeighborIndex* index = nullptr;
  std::vector<double> sigma;

  explicit Relation(const NeighborIndex& idx) : index(&idx), sigma(idx.size()) {
    for (std::size_t i = 0; i < idx.size(); ++i) sigma[i] = calibrate_sigma(idx.neighbors(i));
  }

  /// Membership of `target` in row `row`'s neighborhood; 0 when absent.
  double membership(std::size_t row, std::size_t target) const {
    const auto list = index->neighbors(row);
    const double rho = list.front().distance;
    for (const Neighbor& nb : list) {
      if (nb.index == target) {
        const double gap = static_cast<double>(nb.distance) - rho;
        return gap > 0.0 ? std::exp(-gap / sigma[row]) : 1.0;
      }
    }
    return 0.0;
  }
};

}  // namespace

void fuzzy_weights(BavrComplex& complex, const ComplexNeighborhoods& nh) {
  if (complex.k < 2) throw ContractError("fuzzy_weights: k must be >= 2");
  const std::size_t n = complex.data_count;
  const Relation data(nh.data);
  // Data-only complexes leave the boundary relations empty.
  const Relation to_boundary(nh.data_to_boundary);
  const Relation boundary(nh.boundary);

  for (Edge& e : complex.edges) {
    double forward = 0.0;
    double backward = 0.0;
    switch (e.kind) {
      case EdgeKind::xx:
        forward = data.membership(e.i, e.j);
        backward = data.membership(e.j, e.i);
        break;
      case EdgeKind::xb:
        // Boundary points carry no data-neighbor relation, so only x -> b contributes.
        forward = to_boundary.membership(e.i, e.j - n);
        break;
      case EdgeKind::bb:
        forward = boundary.membership(e.i - n, e.j - n);
        backward = boundary.membership(e.j - n, e.i - n);
        break;
    }
    e.weight = static_cast<float>(fuzzy_union(forward, backward));
  }
}

BavrComplex build_weighted_complex(const Matrix& data, const Matrix& boundary, std::size_t k) {
  ComplexBuild built =
      boundary.rows() == 0 ? build_data_complex(data, k) : build_bavr_complex(data, boundary, k);
  fuzzy_weights(built.complex, built.neighborhoods);
  return std::move(built.complex);
}

PairSampler::PairSampler(const BavrComplex& complex, std::size_t negative_rate,
                         std::size_t positives_per_batch)
    : complex_(&complex), negative_rate_(negative_rate), positives_per_batch_(positives_per_batch) {
  if (negative_rate_ < 1) throw ContractError("pair sampler: negative_rate must be >= 1");
  if (positives_per_batch_ < 1) throw ContractError("pair sampler: empty batches");
  std::size_t counts[3] = {0, 0, 0};
  for (const Edge& e : complex.edges) ++counts[static_cast<int>(e.kind)];
  const std::size_t n = complex.data_count;
  const std::size_t b = complex.boundary_count;
  const std::size_t pool[3] = {n * (n - (n > 0 ? 1 : 0)) / 2, n * b, b * (b - (b > 0 ? 1 : 0)) / 2};
  for (int kind = 0; kind < 3; ++kind) kind_has_negatives_[kind] = pool[kind] > counts[kind];
}

PairSample PairSampler::draw_negative(EdgeKind kind, std::mt19937_64& rng) const {
  const std::size_t n = complex_->data_count;
  const std::size_t b = complex_->boundary_count;
  std::uniform_int_distribution<std::size_t> data_pick(0, n == 0 ? 0 : n - 1);
  std::uniform_int_distribution<std::size_t> boundary_pick(0, b == 0 ? 0 : b - 1);
  while (true) {
    std::size_t u = 0;
    std::size_t v = 0;
    switch (kind) {
      case EdgeKind::xx:
        u = data_pick(rng);
        v = data_pick(rng);
        break;
      case EdgeKind::xb:
        u = data_pick(rng);
        v = n + boundary_pick(rng);
        break;
      case EdgeKind::bb:
        u = n + boundary_pick(rng);
        v = n + boundary_pick(rng);
        break;
    }
    if (u == v) continue;
    const auto a = static_cast<std::uint32_t>(u);
    const auto c = static_cast<std::uint32_t>(v);
    if (complex_->contains(a, c)) continue;
    return {a, c, 0.0f, kind};
  }
}

std::vector<PairBatch> PairSampler::epoch(std::mt19937_64& rng) const {
  std::vector<std::size_t> order(complex_->edges.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<PairBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += positives_per_batch_) {
    const std::size_t stop = std::min(order.size(), start + positives_per_batch_);
    PairBatch batch;
    batch.pairs.reserve((stop - start) * (1 + negative_rate_));
    for (std::size_t p = start; p < stop; ++p) {
      const Edge& e = complex_->edges[order[p]];
      batch.pairs.push_back({e.i, e.j, e.weight, e.kind});
    }
    batch.positive_count = batch.pairs.size();
    for (std::size_t p = start; p < stop; ++p) {
      const EdgeKind kind = complex_->edges[order[p]].kind;
      if (!kind_has_negatives_[static_cast<int>(kind)]) continue;
      for (std::size_t r = 0; r < negative_rate_; ++r) batch.pairs.push_back(draw_negative(kind, rng));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

void export_complex_jsonl(const std::filesystem::path& path, const BavrComplex& complex) {
  std::ostringstream out;
  out << Json{{"format", "dvi-bavr-complex"},
              {"version", 1},
              {"k", complex.k},
              {"data_count", complex.data_count},
              {"boundary_count", complex.boundary_count},
              {"edge_count", complex.edges.size()},
              {"metric", "euclidean"}}
             .dump()
      << '\n';
  for (const Edge& e : complex.edges) {
    out << Json{{"i", e.i}, {"j", e.j}, {"kind", to_string(e.kind)}, {"weight", e.weight}}.dump()
        << '\n';
  }
  write_text_file(path, out.str());
}

BavrComplex import_complex_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError("complex '" + path.string() + "': empty file");
  BavrComplex c;
  try {
    const Json header = Json::parse(line);
    if (header.value("version", 0) != 1) throw FormatError("complex: unsupported version");
    c.k = header.at("k").get<std::size_t>();
    c.data_count = header.at("data_count").get<std::size_t>();
    c.boundary_count = header.at("boundary_count").get<std::size_t>();
    const auto expected = header.at("edge_count").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const Json rec = Json::parse(line);
      c.edges.push_back({rec.at("i").get<std::uint32_t>(), rec.at("j").get<std::uint32_t>(),
                         edge_kind_from_string(rec.at("kind").get<std::string>()),
                         rec.at("weight").get<float>()});
    }
    if (c.edges.size() != expected) throw FormatError("complex: edge count mismatch");
  } catch (const Json::exception& e) {
    throw FormatError("complex '" + path.string() + "': " + e.what());
  }
  return c;
}

}  // namespace dvi
