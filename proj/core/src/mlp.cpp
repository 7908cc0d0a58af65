#include "dvi/mlp.hpp"

#include <cmath>

namespace dvi {

std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw FormatError("unknown activation '" + name + "'");
}

template <typename T>
std::vector<std::size_t> BasicMlp<T>::layer_sizes() const {
  std::vector<std::size_t> sizes;
  if (weights.empty()) return sizes;
  sizes.push_back(weights.front().rows());
  for (const auto& w : weights) sizes.push_back(w.cols());
  return sizes;
}

template <typename T>
std::size_t BasicMlp<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

template <typename T>
BasicMlp<T> BasicMlp<T>::zeros_like() const {
  BasicMlp out;
  out.activations = activations;
  for (const auto& w : weights) out.weights.emplace_back(w.rows(), w.cols());
  for (const auto& b : biases) out.biases.emplace_back(b.rows(), b.cols());
  return out;
}

template <typename T>
void validate(const BasicMlp<T>& mlp) {
  if (mlp.weights.empty()) throw DimensionError("mlp: no layers");
  if (mlp.biases.size() != mlp.weights.size() || mlp.activations.size() != mlp.weights.size()) {
    throw DimensionError("mlp: weights/biases/activations count mismatch");
  }
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    if (mlp.biases[l].rows() != 1 || mlp.biases[l].cols() != mlp.weights[l].cols()) {
      throw DimensionError("mlp: bias shape mismatch at layer " + std::to_string(l));
    }
    if (l > 0 && mlp.weights[l - 1].cols() != mlp.weights[l].rows()) {
      throw DimensionError("mlp: layer " + std::to_string(l - 1) + " out-dim " +
                           std::to_string(mlp.weights[l - 1].cols()) + " != layer " +
                           std::to_string(l) + " in-dim " +
                           std::to_string(mlp.weights[l].rows()));
    }
  }
}

template <typename T>
BasicMlp<T> zero_mlp(std::span<const std::size_t> sizes, Activation hidden, Activation output) {
  if (sizes.size() < 2) throw DimensionError("mlp: need at least two layer sizes");
  BasicMlp<T> mlp;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    mlp.weights.emplace_back(sizes[l], sizes[l + 1]);
    mlp.biases.emplace_back(1, sizes[l + 1]);
    mlp.activations.push_back(l + 2 == sizes.size() ? output : hidden);
  }
  return mlp;
}

template <typename T>
BasicMlp<T> make_mlp(std::span<const std::size_t> sizes, Activation hidden, Activation output,
                     std::mt19937_64& rng, Init init) {
  BasicMlp<T> mlp = zero_mlp<T>(sizes, hidden, output);
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    const double fan_in = static_cast<double>(mlp.weights[l].rows());
    if (init == Init::he_normal) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : mlp.weights[l].values()) v = static_cast<T>(dist(rng));
    } else {
      const double bound = 1.0 / std::sqrt(fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : mlp.weights[l].values()) v = static_cast<T>(dist(rng));
      for (auto& v : mlp.biases[l].values()) v = static_cast<T>(dist(rng));
    }
  }
  return mlp;
}

template <typename T>
BasicMatrix<T> forward(const BasicMlp<T>& mlp, const BasicMatrix<T>& input) {
  validate(mlp);
  if (input.cols() != mlp.in_dim()) {
    throw DimensionError("forward: input width " + std::to_string(input.cols()) +
                         " != network in-dim " + std::to_string(mlp.in_dim()));
  }
  BasicMatrix<T> h = input;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    BasicMatrix<T> z = matmul(h, mlp.weights[l]);
    const auto bias = mlp.biases[l].row(0);
    const bool relu = mlp.activations[l] == Activation::relu;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto row = z.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) {
        const T v = row[j] + bias[j];
        row[j] = relu && !(v > T(0)) ? T(0) : v;
      }
    }
    h = std::move(z);
  }
  return h;
}

template <typename T>
MlpVars bind(Tape<T>& tape, const BasicMlp<T>& mlp) {
  validate(mlp);
  MlpVars vars;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    vars.weights.push_back(tape.parameter(mlp.weights[l]));
    vars.biases.push_back(tape.parameter(mlp.biases[l]));
  }
  return vars;
}

template <typename T>
Var forward(Tape<T>& tape, const BasicMlp<T>& mlp, const MlpVars& vars, Var input) {
  if (tape.value(input).cols() != mlp.in_dim()) {
    throw DimensionError("forward: input width does not match network in-dim");
  }
  Var h = input;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    h = tape.add_row(tape.matmul(h, vars.weights[l]), vars.biases[l]);
    if (mlp.activations[l] == Activation::relu) h = tape.relu(h);
  }
  return h;
}

template <typename T>
BasicMlp<T> collect_gradients(const Tape<T>& tape, const BasicMlp<T>& mlp, const MlpVars& vars) {
  BasicMlp<T> grads;
  grads.activations = mlp.activations;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    grads.weights.push_back(tape.gradient(vars.weights[l]));
    grads.biases.push_back(tape.gradient(vars.biases[l]));
  }
  return grads;
}

template <typename T>
std::vector<T> flatten(const BasicMlp<T>& mlp) {
  std::vector<T> flat;
  flat.reserve(mlp.parameter_count());
  for_each_parameter(mlp, [&](std::size_t, const BasicMatrix<T>& m) {
    flat.insert(flat.end(), m.storage().begin(), m.storage().end());
  });
  return flat;
}

template <typename T>
void unflatten(std::span<const T> flat, BasicMlp<T>& mlp) {
  if (flat.size() != mlp.parameter_count()) {
    throw DimensionError("unflatten: expected " + std::to_string(mlp.parameter_count()) +
                         " values, got " + std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for_each_parameter(mlp, [&](std::size_t, BasicMatrix<T>& m) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), m.size(), m.values().begin());
    offset += m.size();
  });
}

#define DVI_INSTANTIATE_MLP(T)                                                              \
  template struct BasicMlp<T>;                                                              \
  template void validate<T>(const BasicMlp<T>&);                                            \
  template BasicMlp<T> zero_mlp<T>(std::span<const std::size_t>, Activation, Activation);   \
  template BasicMlp<T> make_mlp<T>(std::span<const std::size_t>, Activation, Activation,    \
                                   std::mt19937_64&, Init);                                       \
  template BasicMatrix<T> forward<T>(const BasicMlp<T>&, const BasicMatrix<T>&);            \
  template MlpVars bind<T>(Tape<T>&, const BasicMlp<T>&);                                   \
  template Var forward<T>(Tape<T>&, const BasicMlp<T>&, const MlpVars&, Var);               \
  template BasicMlp<T> collect_gradients<T>(const Tape<T>&, const BasicMlp<T>&,             \
                                            const MlpVars&);                                \
  template std::vector<T> flatten<T>(const BasicMlp<T>&);                                   \
  template void unflatten<T>(std::span<const T>, BasicMlp<T>&);

DVI_INSTANTIATE_MLP(float)
DVI_INSTANTIATE_MLP(double)

#undef DVI_INSTANTIATE_MLP

}  // namespace dvi
