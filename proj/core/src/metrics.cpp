#include "dvi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "dvi/knn.hpp"

namespace dvi {

namespace {

std::size_t overlap(std::span<const Neighbor> a, std::span<const Neighbor> b) {
  std::vector<std::uint32_t> x;
  std::vector<std::uint32_t> y;
  for (const Neighbor& n : a) x.push_back(n.index);
  for (const Neighbor& n : b) y.push_back(n.index);
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::vector<std::uint32_t> common;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(common));
  return common.size();
}

double mean_overlap(const NeighborIndex& a, const NeighborIndex& b, std::size_t k) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += static_cast<double>(overlap(a.neighbors(i), b.neighbors(i)));
  return total / (static_cast<double>(a.size()) * static_cast<double>(k));
}

void require_rows(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows()) throw DimensionError(std::string(what) + ": row counts differ");
}

}  // namespace

double nn_preserving(const Matrix& high, const Matrix& low, std::size_t k) {
  require_rows(high, low, "nn_preserving");
  if (high.rows() <= k) throw ContractError("nn_preserving: need N > k");
  return mean_overlap(build_knn(high, k), build_knn(low, k), k);
}

double boundary_preserving(const Matrix& high, const Matrix& low, const Matrix& boundary,
                           const Matrix& boundary_low, std::size_t k) {
  require_rows(high, low, "boundary_preserving");
  require_rows(boundary, boundary_low, "boundary_preserving");
  if (boundary.rows() <= k) throw ContractError("boundary_preserving: need |B| > k");
  return mean_overlap(build_knn_cross(high, boundary, k), build_knn_cross(low, boundary_low, k), k);
}

double prediction_preserving_rate(const SubjectCheckpoint& ckpt, const Matrix& reps,
                                  const Matrix& reconstructed) {
  require_rows(reps, reconstructed, "ppr");
  if (reps.rows() == 0) throw ContractError("ppr: empty input");
  const Prediction original = predict(ckpt, reps);
  const Prediction round_trip = predict(ckpt, reconstructed);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < reps.rows(); ++i) kept += original.top1[i] == round_trip.top1[i];
  return static_cast<double>(kept) / static_cast<double>(reps.rows());
}

double reconstruction_error(const Matrix& reps, const Matrix& reconstructed) {
  if (reps.rows() != reconstructed.rows() || reps.cols() != reconstructed.cols()) {
    throw DimensionError("reconstruction_error: shape mismatch");
  }
  double total = 0.0;
  const auto a = reps.values();
  const auto b = reconstructed.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    total += d * d;
  }
  return a.empty() ? 0.0 : total / static_cast<double>(a.size());
}

std::vector<double> eval_sem(const Matrix& previous, const Matrix& current, std::size_t k) {
  require_rows(previous, current, "eval_sem");
  if (previous.rows() <= k) throw ContractError("eval_sem: need N > k");
  const NeighborIndex a = build_knn(previous, k);
  const NeighborIndex b = build_knn(current, k);
  std::vector<double> out(previous.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(overlap(a.neighbors(i), b.neighbors(i))) / static_cast<double>(k);
  }
  return out;
}

std::vector<double> displacement(const Matrix& previous, const Matrix& current) {
  require_rows(previous, current, "displacement");
  std::vector<double> out(previous.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = euclidean_distance(previous.row(i), current.row(i));
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("pearson: length mismatch");
  if (x.size() < 3) throw ContractError("pearson: need at least 3 samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double temporal_pv(std::span<const double> sem, std::span<const double> displacement) {
  return pearson(sem, displacement);
}

PcaBaseline pca_fit(const Matrix& data) {
  const std::size_t n = data.rows();
  const std::size_t h = data.cols();
  if (n < 3) throw ContractError("pca_fit: need at least 3 rows");
  if (h < 2) throw ContractError("pca_fit: need at least 2 columns");

  PcaBaseline pca;
  pca.mean.assign(h, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < h; ++c) pca.mean[c] += data(i, c);
  for (double& m : pca.mean) m /= static_cast<double>(n);

  MatrixD cov(h, h, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < h; ++a) {
      const double da = data(i, a) - pca.mean[a];
      for (std::size_t b = a; b < h; ++b) cov(a, b) += da * (data(i, b) - pca.mean[b]);
    }
  }
  double trace = 0.0;
  for (std::size_t a = 0; a < h; ++a) {
    for (std::size_t b = a; b < h; ++b) {
      cov(a, b) /= static_cast<double>(n - 1);
      cov(b, a) = cov(a, b);
    }
    trace += cov(a, a);
  }
  if (trace <= 0.0) throw DegenerateInputError("pca_fit: zero total variance");

  pca.axes = MatrixD(h, 2, 0.0);
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  for (std::size_t axis = 0; axis < 2; ++axis) {
    std::vector<double> v(h);
    for (double& x : v) x = normal(rng);
    std::vector<double> next(h);
    double eigenvalue = 0.0;
    bool converged = false;
    for (int iter = 0; iter < 1000 && !converged; ++iter) {
      double norm = 0.0;
      for (std::size_t a = 0; a < h; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < h; ++b) s += cov(a, b) * v[b];
        next[a] = s;
        norm += s * s;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) {
        // Remaining variance is exactly zero: any unit vector orthogonal to the first axis works.
        eigenvalue = 0.0;
        converged = true;
        break;
      }
      double change = 0.0;
      for (std::size_t a = 0; a < h; ++a) {
        next[a] /= norm;
        change = std::max(change, std::abs(next[a] - v[a]));
      }
      eigenvalue = norm;
      v.swap(next);
      converged = change < 1e-12;
    }
    if (!converged) throw ToleranceError("pca_fit: power iteration did not converge");
    if (axis == 1) {
      // Re-orthogonalize against the first axis so the pair is orthonormal to rounding.
      double dot = 0.0;
      for (std::size_t a = 0; a < h; ++a) dot += v[a] * pca.axes(a, 0);
      double norm = 0.0;
      for (std::size_t a = 0; a < h; ++a) {
        v[a] -= dot * pca.axes(a, 0);
        norm += v[a] * v[a];
      }
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    // Deterministic sign: largest-magnitude component positive.
    std::size_t lead = 0;
    for (std::size_t a = 1; a < h; ++a)
      if (std::abs(v[a]) > std::abs(v[lead])) lead = a;
    const double sign = v[lead] < 0.0 ? -1.0 : 1.0;
    for (std::size_t a = 0; a < h; ++a) pca.axes(a, axis) = sign * v[a];
    pca.explained.push_back(eigenvalue / trace);
    for (std::size_t a = 0; a < h; ++a)
      for (std::size_t b = 0; b < h; ++b) cov(a, b) -= eigenvalue * v[a] * v[b];
  }
  return pca;
}

Matrix pca_project(const PcaBaseline& pca, const Matrix& data) {
  if (data.cols() != pca.mean.size()) throw DimensionError("pca_project: width mismatch");
  Matrix out(data.rows(), 2, 0.0f);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t axis = 0; axis < 2; ++axis) {
      double s = 0.0;
      for (std::size_t c = 0; c < data.cols(); ++c) s += (data(i, c) - pca.mean[c]) * pca.axes(c, axis);
      out(i, axis) = static_cast<float>(s);
    }
  }
  return out;
}

Matrix pca_reconstruct(const PcaBaseline& pca, const Matrix& points) {
  if (points.cols() != 2) throw DimensionError("pca_reconstruct: expected 2 columns");
  const std::size_t h = pca.mean.size();
  Matrix out(points.rows(), h, 0.0f);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t c = 0; c < h; ++c) {
      out(i, c) = static_cast<float>(pca.mean[c] + points(i, 0) * pca.axes(c, 0) +
                                     points(i, 1) * pca.axes(c, 1));
    }
  }
  return out;
}

SplitMetrics measure_split(const SubjectCheckpoint& ckpt, const Matrix& reps,
                           const Matrix& embedded, const Matrix& reconstructed,
                           const Matrix& boundary, const Matrix& boundary_low,
                           std::span<const std::size_t> ks) {
  SplitMetrics m;
  for (std::size_t k : ks) {
    m.nn_pv[k] = nn_preserving(reps, embedded, k);
    m.boundary_pv[k] = boundary_preserving(reps, embedded, boundary, boundary_low, k);
  }
  m.rec_pv = reconstruction_error(reps, reconstructed);
  m.ppr = prediction_preserving_rate(ckpt, reps, reconstructed);
  return m;
}

double MethodMetrics::mean_temporal(std::size_t k, bool test) const {
  double total = 0.0;
  std::size_t count = 0;
  for (const TemporalPair& p : temporal) {
    const auto& side = test ? p.test : p.train;
    const auto it = side.find(k);
    if (it == side.end() || std::isnan(it->second)) continue;
    total += it->second;
    ++count;
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(count);
}

const EpochMetrics& MethodMetrics::at_epoch(int epoch) const {
  for (const EpochMetrics& e : epochs)
    if (e.epoch == epoch) return e;
  throw NotFoundError("metrics: no epoch " + std::to_string(epoch) + " for " + method);
}

const MethodMetrics& MetricsReport::method(const std::string& name) const {
  for (const MethodMetrics& m : methods)
    if (m.method == name) return m;
  throw NotFoundError("metrics: no method '" + name + "'");
}

namespace {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double number_from(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

Json k_map(const std::map<std::size_t, double>& m) {
  Json out = Json::object();
  for (const auto& [k, v] : m) out[std::to_string(k)] = number(v);
  return out;
}

std::map<std::size_t, double> k_map_from(const Json& j) {
  std::map<std::size_t, double> out;
  for (const auto& [key, v] : j.items()) out[std::stoul(key)] = number_from(v);
  return out;
}

Json split_json(const SplitMetrics& s) {
  return Json{{"nn_pv", k_map(s.nn_pv)},
              {"boundary_pv", k_map(s.boundary_pv)},
              {"rec_pv", number(s.rec_pv)},
              {"ppr", number(s.ppr)}};
}

SplitMetrics split_from(const Json& j) {
  SplitMetrics s;
  s.nn_pv = k_map_from(j.at("nn_pv"));
  s.boundary_pv = k_map_from(j.at("boundary_pv"));
  s.rec_pv = number_from(j.at("rec_pv"));
  s.ppr = number_from(j.at("ppr"));
  return s;
}

Json method_json(const MethodMetrics& m, std::span<const std::size_t> ks) {
  Json epochs = Json::array();
  for (const EpochMetrics& e : m.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"train", split_json(e.train)}, {"test", split_json(e.test)}});
  Json temporal = Json::array();
  for (const TemporalPair& p : m.temporal)
    temporal.push_back({{"from", p.from}, {"to", p.to}, {"train", k_map(p.train)}, {"test", k_map(p.test)}});
  Json mean_train = Json::object();
  Json mean_test = Json::object();
  for (std::size_t k : ks) {
    mean_train[std::to_string(k)] = number(m.mean_temporal(k, false));
    mean_test[std::to_string(k)] = number(m.mean_temporal(k, true));
  }
  return Json{{"method", m.method},
              {"epochs", epochs},
              {"temporal_pv", {{"pairs", temporal}, {"mean", {{"train", mean_train}, {"test", mean_test}}}}}};
}

}  // namespace

Json to_json(const MetricsReport& report) {
  Json methods = Json::array();
  for (const MethodMetrics& m : report.methods) methods.push_back(method_json(m, report.ks));
  return Json{{"format", "dvi-metrics"}, {"version", 1}, {"ks", report.ks}, {"methods", methods}};
}

MetricsReport metrics_from_json(const Json& json) {
  MetricsReport report;
  try {
    if (json.at("version").get<int>() != 1) throw FormatError("metrics: unsupported version");
    report.ks = json.at("ks").get<std::vector<std::size_t>>();
    for (const Json& mj : json.at("methods")) {
      MethodMetrics m;
      m.method = mj.at("method").get<std::string>();
      for (const Json& ej : mj.at("epochs"))
        m.epochs.push_back({ej.at("epoch").get<int>(), split_from(ej.at("train")), split_from(ej.at("test"))});
      for (const Json& pj : mj.at("temporal_pv").at("pairs")) {
        m.temporal.push_back({pj.at("from").get<int>(), pj.at("to").get<int>(),
                              k_map_from(pj.at("train")), k_map_from(pj.at("test"))});
      }
      report.methods.push_back(std::move(m));
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("metrics: ") + e.what());
  }
  return report;
}

Json epoch_slice(const MetricsReport& report, int epoch) {
  Json out = Json::object();
  out["epoch"] = epoch;
  Json methods = Json::object();
  for (const MethodMetrics& m : report.methods) {
    Json entry = Json::object();
    for (const EpochMetrics& e : m.epochs) {
      if (e.epoch != epoch) continue;
      entry["train"] = split_json(e.train);
      entry["test"] = split_json(e.test);
    }
    for (const TemporalPair& p : m.temporal) {
      if (p.to != epoch) continue;
      entry["temporal_pv"] = {{"from", p.from}, {"train", k_map(p.train)}, {"test", k_map(p.test)}};
    }
    if (!entry.empty()) methods[m.method] = entry;
  }
  out["methods"] = methods;
  return out;
}

namespace {

std::string cell(double v) {
  if (!std::isfinite(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::string render_table(const MetricsReport& report) {
  std::ostringstream out;
  std::vector<std::string> header{"method", "epoch"};
  for (const char* split : {"train", "test"}) {
    for (std::size_t k : report.ks) header.push_back(std::string("nn") + std::to_string(k) + "/" + split);
    for (std::size_t k : report.ks) header.push_back(std::string("b") + std::to_string(k) + "/" + split);
    header.push_back(std::string("ppr/") + split);
    header.push_back(std::string("rec/") + split);
  }
  std::vector<std::vector<std::string>> rows;
  for (const MethodMetrics& m : report.methods) {
    for (const EpochMetrics& e : m.epochs) {
      std::vector<std::string> row{m.method, std::to_string(e.epoch)};
      for (const SplitMetrics* s : {&e.train, &e.test}) {
        for (std::size_t k : report.ks) row.push_back(cell(s->nn_pv.count(k) ? s->nn_pv.at(k) : NAN));
        for (std::size_t k : report.ks)
          row.push_back(cell(s->boundary_pv.count(k) ? s->boundary_pv.at(k) : NAN));
        row.push_back(cell(s->ppr));
        row.push_back(cell(s->rec_pv));
      }
      rows.push_back(std::move(row));
    }
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c == 0 ? "" : "  ");
      out << std::string(width[c] - row[c].size(), ' ') << row[c];
    }
    out << '\n';
  };
  out << "Spatial properties\n";
  emit(header);
  for (const auto& row : rows) emit(row);

  out << "\nTemporal properties (temporal_pv, mean over consecutive epochs)\n";
  std::vector<std::string> theader{"method"};
  for (std::size_t k : report.ks) theader.push_back("k=" + std::to_string(k) + "/train");
  for (std::size_t k : report.ks) theader.push_back("k=" + std::to_string(k) + "/test");
  std::vector<std::vector<std::string>> trows;
  for (const MethodMetrics& m : report.methods) {
    if (m.temporal.empty()) continue;
    std::vector<std::string> row{m.method};
    for (std::size_t k : report.ks) row.push_back(cell(m.mean_temporal(k, false)));
    for (std::size_t k : report.ks) row.push_back(cell(m.mean_temporal(k, true)));
    trows.push_back(std::move(row));
  }
  width.assign(theader.size(), 0);
  for (std::size_t c = 0; c < theader.size(); ++c) width[c] = theader[c].size();
  for (const auto& row : trows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  emit(theader);
  for (const auto& row : trows) emit(row);
  return out.str();
}

}  // namespace dvi
