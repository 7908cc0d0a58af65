#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dvi/matrix.hpp"

namespace dvi::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "dvi") {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (;;) {
      path_ = base / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (float& v : m.values()) v = static_cast<float>(n(rng));
  return m;
}

/// Independent exhaustive kNN: sort every other point by (distance, index).
/// Distances in long double so the oracle shares no arithmetic with the library.
/// (index, distance) lists sorted by (distance, index), computed in long double.
inline std::vector<std::vector<std::pair<std::uint32_t, long double>>> brute_knn_distances(
    const Matrix& queries, const Matrix& ref, std::size_t k, bool exclude_self) {
  std::vector<std::vector<std::pair<std::uint32_t, long double>>> out(queries.rows());
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    std::vector<std::pair<long double, std::uint32_t>> d;
    for (std::size_t j = 0; j < ref.rows(); ++j) {
      if (exclude_self && i == j) continue;
      long double acc = 0;
      for (std::size_t c = 0; c < ref.cols(); ++c) {
        const long double diff = static_cast<long double>(queries(i, c)) - static_cast<long double>(ref(j, c));
        acc += diff * diff;
      }
      d.emplace_back(acc, static_cast<std::uint32_t>(j));
    }
    std::sort(d.begin(), d.end());
    for (std::size_t r = 0; r < k; ++r) out[i].emplace_back(d[r].second, std::sqrt(d[r].first));
  }
  return out;
}

inline std::vector<std::vector<std::uint32_t>> brute_knn(const Matrix& queries, const Matrix& ref, std::size_t k,
                                                         bool exclude_self) {
  std::vector<std::vector<std::uint32_t>> out;
  for (const auto& list : brute_knn_distances(queries, ref, k, exclude_self)) {
    out.emplace_back();
    for (const auto& nb : list) out.back().push_back(nb.first);
  }
  return out;
}

inline std::size_t shared_count(std::vector<std::uint32_t> a, std::vector<std::uint32_t> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t n = 0;
  for (std::uint32_t v : a) n += std::binary_search(b.begin(), b.end(), v) ? 1 : 0;
  return n;
}

/// Textbook two-pass Pearson in long double.
inline double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace dvi::testing
