#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

#include "dvi/error.hpp"

namespace dvi {

/// Max-subtracted softmax; never overflows for finite logits.
template <typename E, typename T = std::remove_const_t<E>>
std::vector<T> softmax(std::span<E> logits) {
  std::vector<T> out(logits.size());
  if (logits.empty()) return out;
  const T peak = *std::max_element(logits.begin(), logits.end());
  T denom = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    denom += out[i];
  }
  for (auto& v : out) v /= denom;
  return out;
}

/// Affine map sending min -> 0 and max -> 1.
/// Throws DegenerateInputError for constant (or shorter than 2) vectors.
template <typename E, typename T = std::remove_const_t<E>>
std::vector<T> minmax_rescale(std::span<E> logits) {
  if (logits.size() < 2) throw DegenerateInputError("minmax_rescale: need at least 2 values");
  const auto [lo_it, hi_it] = std::minmax_element(logits.begin(), logits.end());
  const T lo = *lo_it;
  const T hi = *hi_it;
  if (!(hi > lo)) throw DegenerateInputError("minmax_rescale: constant vector");
  std::vector<T> out(logits.size());
  const T range = hi - lo;
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = (logits[i] - lo) / range;
  return out;
}

struct TopTwo {
  std::size_t first = 0;
  std::size_t second = 1;
};

/// Indices of the largest and second-largest entries; ties go to the lower index.
template <typename E>
TopTwo top_two(std::span<E> values) {
  if (values.size() < 2) throw ContractError("top_two: need at least 2 values");
  TopTwo t;
  if (values[1] > values[0]) t = {1, 0};
  for (std::size_t i = 2; i < values.size(); ++i) {
    if (values[i] > values[t.first]) {
      t.second = t.first;
      t.first = i;
    } else if (values[i] > values[t.second]) {
      t.second = i;
    }
  }
  return t;
}

template <typename E>
std::size_t argmax(std::span<E> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace dvi
