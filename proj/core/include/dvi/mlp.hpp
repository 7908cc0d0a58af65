#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dvi/matrix.hpp"
#include "dvi/tape.hpp"

namespace dvi {

enum class Activation : std::uint8_t { relu, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Feed-forward network y = act(x W + b) per layer. Weights are stored
/// in_dim x out_dim, biases as 1 x out_dim rows.
template <typename T>
struct BasicMlp {
  std::vector<BasicMatrix<T>> weights;
  std::vector<BasicMatrix<T>> biases;
  std::vector<Activation> activations;

  std::size_t layer_count() const noexcept { return weights.size(); }
  std::size_t in_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  std::size_t out_dim() const { return weights.empty() ? 0 : weights.back().cols(); }
  std::vector<std::size_t> layer_sizes() const;
  std::size_t parameter_count() const noexcept;

  /// Same shapes and activations, all parameters zero.
  BasicMlp zeros_like() const;

  template <typename U>
  BasicMlp<U> cast() const {
    BasicMlp<U> out;
    out.activations = activations;
    for (const auto& w : weights) out.weights.push_back(w.template cast<U>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<U>());
    return out;
  }

  bool operator==(const BasicMlp&) const = default;
};

using Mlp = BasicMlp<float>;
using MlpD = BasicMlp<double>;

/// Throws DimensionError unless consecutive layers compose.
template <typename T>
void validate(const BasicMlp<T>& mlp);

enum class Init : std::uint8_t {
  he_normal,       ///< N(0, 2/fan_in) weights, zero biases
  fan_in_uniform,  ///< U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases
};

/// Randomly initialized network. `hidden` applies to all layers but the
/// last, which uses `output`.
template <typename T>
BasicMlp<T> make_mlp(std::span<const std::size_t> sizes, Activation hidden, Activation output,
                     std::mt19937_64& rng, Init init = Init::he_normal);

template <typename T>
BasicMlp<T> zero_mlp(std::span<const std::size_t> sizes, Activation hidden, Activation output);

template <typename T>
BasicMatrix<T> forward(const BasicMlp<T>& mlp, const BasicMatrix<T>& input);

/// Parameter nodes of one network bound to a tape.
struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

template <typename T>
MlpVars bind(Tape<T>& tape, const BasicMlp<T>& mlp);

/// Records the forward pass on `tape`.
template <typename T>
Var forward(Tape<T>& tape, const BasicMlp<T>& mlp, const MlpVars& vars, Var input);

/// Collects parameter adjoints after tape.backward() into an MLP-shaped container.
template <typename T>
BasicMlp<T> collect_gradients(const Tape<T>& tape, const BasicMlp<T>& mlp, const MlpVars& vars);

/// Visits every parameter matrix (weights then bias per layer).
template <typename T, typename F>
void for_each_parameter(BasicMlp<T>& mlp, F&& f) {
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    f(l, mlp.weights[l]);
    f(l, mlp.biases[l]);
  }
}

template <typename T, typename F>
void for_each_parameter(const BasicMlp<T>& mlp, F&& f) {
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    f(l, mlp.weights[l]);
    f(l, mlp.biases[l]);
  }
}

/// Row-major concatenation of all parameters (weights then bias per layer).
template <typename T>
std::vector<T> flatten(const BasicMlp<T>& mlp);

/// Inverse of flatten for a network of the given shape.
template <typename T>
void unflatten(std::span<const T> flat, BasicMlp<T>& mlp);

}  // namespace dvi
