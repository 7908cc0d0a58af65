#include "dvi/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dvi/binary_io.hpp"
#include "dvi/json_io.hpp"
#include "dvi/transforms.hpp"

namespace dvi {

bool on_delta_boundary(std::span<const float> logits, double delta) {
  const std::vector<float> scaled = minmax_rescale(logits);
  const TopTwo t = top_two(std::span<const float>(scaled));
  return std::abs(static_cast<double>(scaled[t.first]) - static_cast<double>(scaled[t.second])) <=
         delta;
}

bool delta_boundary_test(const SubjectCheckpoint& ckpt, std::span<const float> rep,
                         double delta) {
  if (!(delta >= 0.0 && delta < 1.0)) throw ContractError("delta must lie in [0,1)");
  const Matrix x(1, rep.size(), std::vector<float>(rep.begin(), rep.end()));
  const Matrix logits = forward(ckpt.head, x);
  return on_delta_boundary(logits.row(0), delta);
}

std::vector<float> mixup(std::span<const float> s_i, std::span<const float> s_j, double lambda) {
  if (s_i.size() != s_j.size()) throw DimensionError("mixup: endpoint widths differ");
  std::vector<float> out(s_i.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = static_cast<float>(lambda * static_cast<double>(s_i[k]) +
                                (1.0 - lambda) * static_cast<double>(s_j[k]));
  }
  return out;
}

namespace {

struct Probe {
  int predicted = 0;
  std::vector<float> input;
  std::vector<float> rep;
  std::vector<float> logits;
};

Probe probe(const SubjectCheckpoint& ckpt, std::span<const float> s_i, std::span<const float> s_j,
            double lambda) {
  Probe p;
  p.input = mixup(s_i, s_j, lambda);
  const Matrix rep = features(ckpt, Matrix(1, p.input.size(), p.input));
  const Matrix logits = forward(ckpt.head, rep);
  p.rep.assign(rep.row(0).begin(), rep.row(0).end());
  p.logits.assign(logits.row(0).begin(), logits.row(0).end());
  p.predicted = static_cast<int>(argmax(std::span<const float>(p.logits)));
  return p;
}

bool passes(const Probe& p, double delta) {
  try {
    return on_delta_boundary(p.logits, delta);
  } catch (const DegenerateInputError&) {
    return false;
  }
}

/// Bisects [lo, hi] where the class at lo is `lo_class` and differs at hi.
BisectionResult bisect(const SubjectCheckpoint& ckpt, std::span<const float> s_i,
                       std::span<const float> s_j, double delta, double lo, double hi,
                       int lo_class, int max_rounds) {
  BisectionResult result;
  for (int round = 1; round <= max_rounds; ++round) {
    const double mid = 0.5 * (lo + hi);
    Probe p = probe(ckpt, s_i, s_j, mid);
    ++result.evaluations;
    result.rounds = round;
    const bool hit = passes(p, delta);
    if (p.predicted == lo_class) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hit) {
      result.found = true;
      result.lambda = mid;
      result.input = std::move(p.input);
      result.representation = std::move(p.rep);
      break;
    }
  }
  result.bracket_lo = lo;
  result.bracket_hi = hi;
  return result;
}

}  // namespace

BisectionResult mixup_bisect(const SubjectCheckpoint& ckpt, std::span<const float> s_i,
                             std::span<const float> s_j, double delta, double lambda_max,
                             int max_rounds, bool symmetric_cap) {
  if (!(lambda_max > 0.0 && lambda_max <= 1.0)) throw ContractError("lambda_max outside (0,1]");
  if (max_rounds < 1) throw ContractError("mixup_bisect: need at least one round");
  if (!(delta >= 0.0 && delta < 1.0)) throw ContractError("delta must lie in [0,1)");

  const Probe at_zero = probe(ckpt, s_i, s_j, 0.0);
  const Probe at_one = probe(ckpt, s_i, s_j, 1.0);
  if (at_zero.predicted == at_one.predicted) {
    throw ContractError("mixup_bisect: endpoints share a predicted class");
  }

  Probe at_cap = probe(ckpt, s_i, s_j, lambda_max);
  if (at_cap.predicted != at_zero.predicted) {
    if (passes(at_cap, delta)) {
      BisectionResult r;
      r.found = true;
      r.lambda = lambda_max;
      r.input = std::move(at_cap.input);
      r.representation = std::move(at_cap.rep);
      r.bracket_lo = 0.0;
      r.bracket_hi = lambda_max;
      return r;
    }
    return bisect(ckpt, s_i, s_j, delta, 0.0, lambda_max, at_zero.predicted, max_rounds);
  }

  if (symmetric_cap && lambda_max < 1.0) {
    const double lo = 1.0 - lambda_max;
    const Probe at_lo = probe(ckpt, s_i, s_j, lo);
    if (at_lo.predicted != at_one.predicted) {
      if (passes(at_lo, delta)) {
        BisectionResult r;
        r.found = true;
        r.lambda = lo;
        r.input = at_lo.input;
        r.representation = at_lo.rep;
        r.bracket_lo = lo;
        r.bracket_hi = 1.0;
        return r;
      }
      return bisect(ckpt, s_i, s_j, delta, lo, 1.0, at_lo.predicted, max_rounds);
    }
  }

  BisectionResult none;
  none.bracket_lo = 0.0;
  none.bracket_hi = lambda_max;
  return none;
}

PairStats::PairStats(std::vector<int> classes) : classes_(std::move(classes)) {
  std::sort(classes_.begin(), classes_.end());
  if (std::adjacent_find(classes_.begin(), classes_.end()) != classes_.end()) {
    throw ContractError("pair stats: duplicate class ids");
  }
  for (std::size_t a = 0; a < classes_.size(); ++a)
    for (std::size_t b = a + 1; b < classes_.size(); ++b)
      pairs_.push_back({classes_[a], classes_[b]});
  num_b_.assign(pairs_.size(), 0);
  num_syn_.assign(pairs_.size(), 0);
}

std::size_t PairStats::index_of(int a, int b) const {
  const ClassPair key{std::min(a, b), std::max(a, b)};
  const auto it = std::find(pairs_.begin(), pairs_.end(), key);
  if (it == pairs_.end()) throw ContractError("pair stats: unknown class pair");
  return static_cast<std::size_t>(it - pairs_.begin());
}

void PairStats::set_counts(std::size_t pair, std::size_t successes, std::size_t attempts) {
  if (successes > attempts) throw ContractError("pair stats: num_b exceeds num_syn");
  num_b_.at(pair) = successes;
  num_syn_.at(pair) = attempts;
}

void PairStats::record(std::size_t pair, bool success) {
  ++num_syn_.at(pair);
  if (success) ++num_b_[pair];
}

double PairStats::abundance_mean() const {
  if (pairs_.empty()) return 0.0;
  const double total = std::accumulate(num_b_.begin(), num_b_.end(), 0.0);
  return total / static_cast<double>(pairs_.size());
}

namespace {

std::vector<double> normalized_or_uniform(std::vector<double> w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
  } else {
    for (auto& v : w) v /= total;
  }
  return w;
}

}  // namespace

std::vector<double> PairStats::abundance_distribution() const {
  const double mean = abundance_mean();
  std::vector<double> w(pairs_.size());
  for (std::size_t p = 0; p < w.size(); ++p) {
    w[p] = std::max(0.0, mean - static_cast<double>(num_b_[p]));
  }
  return normalized_or_uniform(std::move(w));
}

std::vector<double> PairStats::success_distribution() const {
  std::vector<double> w(pairs_.size());
  for (std::size_t p = 0; p < w.size(); ++p) {
    w[p] = num_syn_[p] == 0 ? 1.0
                            : static_cast<double>(num_b_[p]) / static_cast<double>(num_syn_[p]);
  }
  return normalized_or_uniform(std::move(w));
}

std::vector<double> PairStats::pair_probabilities(double alpha) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("alpha outside [0,1]");
  const auto abundance = abundance_distribution();
  const auto success = success_distribution();
  std::vector<double> p(pairs_.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = alpha * abundance[i] + (1.0 - alpha) * success[i];
  }
  return p;
}

ClassPair sample_class_pair(const PairStats& stats, double alpha, std::mt19937_64& rng) {
  if (stats.pairs().empty()) throw ContractError("sample_class_pair: no class pairs");
  const auto probs = stats.pair_probabilities(alpha);
  std::discrete_distribution<std::size_t> dist(probs.begin(), probs.end());
  return stats.pairs()[dist(rng)];
}

BoundarySet synthesize_boundary_set(const SubjectCheckpoint& ckpt, const Dataset& data,
                                    std::size_t target_count, const BoundaryParams& params,
                                    std::uint64_t seed) {
  if (target_count == 0) throw ContractError("synthesize: target_count must be >= 1");
  if (ckpt.class_count() < 3) {
    throw ContractError("synthesize: delta-boundary needs at least 3 classes");
  }
  const Prediction pred = predict(ckpt, features(ckpt, data.inputs));
  std::vector<std::vector<std::size_t>> by_class(ckpt.class_count());
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[static_cast<std::size_t>(pred.top1[i])].push_back(i);
  }
  std::vector<int> active;
  for (std::size_t c = 0; c < by_class.size(); ++c)
    if (!by_class[c].empty()) active.push_back(static_cast<int>(c));
  if (active.size() < 2) {
    throw ContractError("synthesize: classifier predicts fewer than 2 distinct classes");
  }

  BoundarySet set;
  set.stats = PairStats(active);
  std::vector<float> points;
  std::mt19937_64 rng(seed);
  const std::size_t budget = 100 * target_count;

  while (set.provenance.size() < target_count) {
    if (set.attempts >= budget) {
      throw SynthesisError("synthesize: " + std::to_string(set.attempts) +
                           " attempts yielded only " + std::to_string(set.provenance.size()) +
                           " of " + std::to_string(target_count) + " boundary points");
    }
    ++set.attempts;
    ClassPair pair = sample_class_pair(set.stats, params.alpha, rng);
    if (std::bernoulli_distribution(0.5)(rng)) std::swap(pair.first, pair.second);
    const auto& pool_i = by_class[static_cast<std::size_t>(pair.first)];
    const auto& pool_j = by_class[static_cast<std::size_t>(pair.second)];
    const std::size_t i = pool_i[std::uniform_int_distribution<std::size_t>(0, pool_i.size() - 1)(rng)];
    const std::size_t j = pool_j[std::uniform_int_distribution<std::size_t>(0, pool_j.size() - 1)(rng)];

    const BisectionResult r =
        mixup_bisect(ckpt, data.inputs.row(i), data.inputs.row(j), params.delta,
                     params.lambda_max, params.max_rounds, params.symmetric_lambda_cap);
    set.stats.record(set.stats.index_of(pair.first, pair.second), r.found);
    if (!r.found) continue;
    points.insert(points.end(), r.representation.begin(), r.representation.end());
    set.provenance.push_back({data.ids[i], data.ids[j], r.lambda, pair.first, pair.second});
  }
  set.points = Matrix(set.provenance.size(), ckpt.rep_dim(), std::move(points));
  return set;
}

void save_boundary_set(const std::filesystem::path& stem, const BoundarySet& set) {
  std::filesystem::path bin = stem;
  bin += ".f32";
  std::filesystem::path meta = stem;
  meta += ".json";
  write_matrix_f32(bin, set.points);

  Json provenance = Json::array();
  for (const auto& p : set.provenance) {
    provenance.push_back({{"source_i", p.source_i},
                          {"source_j", p.source_j},
                          {"lambda", p.lambda},
                          {"class_i", p.class_i},
                          {"class_j", p.class_j}});
  }
  Json pairs = Json::array();
  for (std::size_t p = 0; p < set.stats.pairs().size(); ++p) {
    pairs.push_back({{"a", set.stats.pairs()[p].first},
                     {"b", set.stats.pairs()[p].second},
                     {"num_b", set.stats.successes(p)},
                     {"num_syn", set.stats.attempts(p)}});
  }
  write_json_file(meta, Json{{"format", "dvi-boundary-set"},
                             {"version", 1},
                             {"rows", set.points.rows()},
                             {"cols", set.points.cols()},
                             {"attempts", set.attempts},
                             {"classes", set.stats.classes()},
                             {"pairs", pairs},
                             {"provenance", provenance}});
}

BoundarySet load_boundary_set(const std::filesystem::path& stem) {
  std::filesystem::path bin = stem;
  bin += ".f32";
  std::filesystem::path meta_path = stem;
  meta_path += ".json";
  const Json meta = read_json_file(meta_path);
  const std::string where = "boundary set '" + meta_path.string() + "'";
  try {
    if (require_member(meta, "version", where).get<int>() != 1) {
      throw FormatError(where + ": unsupported version");
    }
    BoundarySet set;
    const auto rows = require_member(meta, "rows", where).get<std::size_t>();
    const auto cols = require_member(meta, "cols", where).get<std::size_t>();
    set.points = read_matrix_f32(bin, rows, cols);
    set.attempts = require_member(meta, "attempts", where).get<std::size_t>();
    set.stats = PairStats(require_member(meta, "classes", where).get<std::vector<int>>());
    for (const auto& p : require_member(meta, "pairs", where)) {
      set.stats.set_counts(set.stats.index_of(p.at("a").get<int>(), p.at("b").get<int>()),
                           p.at("num_b").get<std::size_t>(), p.at("num_syn").get<std::size_t>());
    }
    for (const auto& p : require_member(meta, "provenance", where)) {
      set.provenance.push_back({p.at("source_i").get<std::int64_t>(),
                                p.at("source_j").get<std::int64_t>(), p.at("lambda").get<double>(),
                                p.at("class_i").get<int>(), p.at("class_j").get<int>()});
    }
    if (set.provenance.size() != rows) throw FormatError(where + ": provenance count mismatch");
    return set;
  } catch (const Json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
}

}  // namespace dvi
