#include "dvi/tape.hpp"

#include <cmath>
#include <string>

namespace dvi {

namespace {

template <typename T>
void require_same_shape(const BasicMatrix<T>& a, const BasicMatrix<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                         "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace

template <typename T>
Var Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("tape: unknown variable");
  return nodes_[v.id];
}

template <typename T>
Var Tape<T>::constant(BasicMatrix<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::parameter(BasicMatrix<T> value) {
  Node n;
  n.value = std::move(value);
  n.tracked = true;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  Node n;
  n.op = Op::matmul;
  n.a = a.id;
  n.b = b.id;
  n.value = dvi::matmul(node(a).value, node(b).value);
  n.tracked = node(a).tracked || node(b).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  const auto& x = node(a).value;
  const auto& y = node(b).value;
  require_same_shape(x, y, "add");
  Node n;
  n.op = Op::add;
  n.a = a.id;
  n.b = b.id;
  n.value = x;
  auto out = n.value.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y.values()[i];
  n.tracked = node(a).tracked || node(b).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  const auto& x = node(a).value;
  const auto& y = node(b).value;
  require_same_shape(x, y, "sub");
  Node n;
  n.op = Op::sub;
  n.a = a.id;
  n.b = b.id;
  n.value = x;
  auto out = n.value.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y.values()[i];
  n.tracked = node(a).tracked || node(b).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  const auto& x = node(a).value;
  const auto& y = node(b).value;
  require_same_shape(x, y, "mul");
  Node n;
  n.op = Op::mul;
  n.a = a.id;
  n.b = b.id;
  n.value = x;
  auto out = n.value.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y.values()[i];
  n.tracked = node(a).tracked || node(b).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::add_row(Var a, Var row) {
  const auto& x = node(a).value;
  const auto& r = node(row).value;
  if (r.rows() != 1 || r.cols() != x.cols()) throw DimensionError("add_row: bias shape");
  Node n;
  n.op = Op::add_row;
  n.a = a.id;
  n.b = row.id;
  n.value = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto out = n.value.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += r(0, j);
  }
  n.tracked = node(a).tracked || node(row).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::scale(Var a, T factor) {
  Node n;
  n.op = Op::scale;
  n.a = a.id;
  n.s0 = factor;
  n.value = node(a).value;
  for (auto& v : n.value.values()) v *= factor;
  n.tracked = node(a).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::add_scalar(Var a, T offset) {
  Node n;
  n.op = Op::add_scalar;
  n.a = a.id;
  n.value = node(a).value;
  for (auto& v : n.value.values()) v += offset;
  n.tracked = node(a).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::pow(Var a, T exponent) {
  Node n;
  n.op = Op::pow;
  n.a = a.id;
  n.s0 = exponent;
  n.value = node(a).value;
  for (auto& v : n.value.values()) {
    if (!(v > T(0))) throw DegenerateInputError("pow: non-positive base");
    v = std::pow(v, exponent);
  }
  n.tracked = node(a).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::log(Var a) {
  Node n;
  n.op = Op::log;
  n.a = a.id;
  n.value = node(a).value;
  for (auto& v : n.value.values()) {
    if (!(v > T(0))) throw DegenerateInputError("log: non-positive argument");
    v = std::log(v);
  }
  n.tracked = node(a).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::relu(Var a) {
  Node n;
  n.op = Op::relu;
  n.a = a.id;
  n.value = node(a).value;
  for (auto& v : n.value.values()) v = v > T(0) ? v : T(0);
  n.tracked = node(a).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::clamp(Var a, T lo, T hi) {
  Node n;
  n.op = Op::clamp;
  n.a = a.id;
  n.s0 = lo;
  n.s1 = hi;
  n.value = node(a).value;
  for (auto& v : n.value.values()) v = std::clamp(v, lo, hi);
  n.tracked = node(a).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::sum(Var a) {
  Node n;
  n.op = Op::sum;
  n.a = a.id;
  T acc = T(0);
  for (T v : node(a).value.values()) acc += v;
  n.value = BasicMatrix<T>(1, 1, acc);
  n.tracked = node(a).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::mean(Var a) {
  const auto& x = node(a).value;
  if (x.empty()) throw ContractError("mean: empty operand");
  Node n;
  n.op = Op::mean;
  n.a = a.id;
  T acc = T(0);
  for (T v : x.values()) acc += v;
  n.value = BasicMatrix<T>(1, 1, acc / static_cast<T>(x.size()));
  n.tracked = node(a).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::row_sum(Var a) {
  const auto& x = node(a).value;
  Node n;
  n.op = Op::row_sum;
  n.a = a.id;
  n.value = BasicMatrix<T>(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    T acc = T(0);
    for (T v : x.row(i)) acc += v;
    n.value(i, 0) = acc;
  }
  n.tracked = node(a).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::gather_rows(Var a, std::vector<std::size_t> rows) {
  Node n;
  n.op = Op::gather_rows;
  n.a = a.id;
  n.value = dvi::gather_rows(node(a).value, std::span<const std::size_t>(rows));
  n.index = std::move(rows);
  n.tracked = node(a).tracked;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const auto& z = node(logits).value;
  if (labels.size() != z.rows()) throw DimensionError("softmax_cross_entropy: label count");
  Node n;
  n.op = Op::softmax_xent;
  n.a = logits.id;
  n.labels.assign(labels.begin(), labels.end());
  n.aux = BasicMatrix<T>(z.rows(), z.cols());
  T loss = T(0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto row = z.row(i);
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= z.cols()) {
      throw ContractError("softmax_cross_entropy: label out of range");
    }
    const T peak = *std::max_element(row.begin(), row.end());
    T denom = T(0);
    for (std::size_t j = 0; j < row.size(); ++j) {
      n.aux(i, j) = std::exp(row[j] - peak);
      denom += n.aux(i, j);
    }
    for (std::size_t j = 0; j < row.size(); ++j) n.aux(i, j) /= denom;
    loss -= (row[label] - peak) - std::log(denom);
  }
  n.value = BasicMatrix<T>(1, 1, loss / static_cast<T>(z.rows()));
  n.tracked = node(logits).tracked;
  return push(std::move(n));
}

template <typename T>
void Tape<T>::accumulate(std::size_t target, const BasicMatrix<T>& delta) {
  Node& t = nodes_[target];
  if (!t.tracked) return;
  auto g = t.grad.values();
  const auto d = delta.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i];
}

template <typename T>
void Tape<T>::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ContractError("backward: loss node is not scalar");
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    n.grad = BasicMatrix<T>();
    if (n.tracked && i <= loss.id) n.grad = BasicMatrix<T>(n.value.rows(), n.value.cols());
  }
  has_backward_ = true;
  if (!root.tracked) return;
  nodes_[loss.id].grad(0, 0) = T(1);

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.tracked || n.op == Op::leaf) continue;
    const BasicMatrix<T>& g = n.grad;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        const auto& a = nodes_[n.a].value;
        const auto& b = nodes_[n.b].value;
        if (nodes_[n.a].tracked) accumulate(n.a, matmul_a_bt(g, b));
        if (nodes_[n.b].tracked) accumulate(n.b, matmul_at_b(a, g));
        break;
      }
      case Op::add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::sub: {
        accumulate(n.a, g);
        if (nodes_[n.b].tracked) {
          BasicMatrix<T> neg = g;
          for (auto& v : neg.values()) v = -v;
          accumulate(n.b, neg);
        }
        break;
      }
      case Op::mul: {
        const auto& a = nodes_[n.a].value;
        const auto& b = nodes_[n.b].value;
        if (nodes_[n.a].tracked) {
          BasicMatrix<T> d = g;
          for (std::size_t i = 0; i < d.size(); ++i) d.values()[i] *= b.values()[i];
          accumulate(n.a, d);
        }
        if (nodes_[n.b].tracked) {
          BasicMatrix<T> d = g;
          for (std::size_t i = 0; i < d.size(); ++i) d.values()[i] *= a.values()[i];
          accumulate(n.b, d);
        }
        break;
      }
      case Op::add_row: {
        accumulate(n.a, g);
        if (nodes_[n.b].tracked) {
          BasicMatrix<T> d(1, g.cols());
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) d(0, j) += g(i, j);
          accumulate(n.b, d);
        }
        break;
      }
      case Op::scale: {
        BasicMatrix<T> d = g;
        for (auto& v : d.values()) v *= n.s0;
        accumulate(n.a, d);
        break;
      }
      case Op::add_scalar:
        accumulate(n.a, g);
        break;
      case Op::pow: {
        const auto& x = nodes_[n.a].value;
        BasicMatrix<T> d = g;
        for (std::size_t i = 0; i < d.size(); ++i) {
          d.values()[i] *= n.s0 * std::pow(x.values()[i], n.s0 - T(1));
        }
        accumulate(n.a, d);
        break;
      }
      case Op::log: {
        const auto& x = nodes_[n.a].value;
        BasicMatrix<T> d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d.values()[i] /= x.values()[i];
        accumulate(n.a, d);
        break;
      }
      case Op::relu: {
        const auto& x = nodes_[n.a].value;
        BasicMatrix<T> d = g;
        for (std::size_t i = 0; i < d.size(); ++i)
          if (!(x.values()[i] > T(0))) d.values()[i] = T(0);
        accumulate(n.a, d);
        break;
      }
      case Op::clamp: {
        const auto& x = nodes_[n.a].value;
        BasicMatrix<T> d = g;
        for (std::size_t i = 0; i < d.size(); ++i) {
          const T v = x.values()[i];
          if (v < n.s0 || v > n.s1) d.values()[i] = T(0);
        }
        accumulate(n.a, d);
        break;
      }
      case Op::sum: {
        const auto& x = nodes_[n.a].value;
        accumulate(n.a, BasicMatrix<T>(x.rows(), x.cols(), g(0, 0)));
        break;
      }
      case Op::mean: {
        const auto& x = nodes_[n.a].value;
        accumulate(n.a, BasicMatrix<T>(x.rows(), x.cols(),
                                       g(0, 0) / static_cast<T>(x.size())));
        break;
      }
      case Op::row_sum: {
        const auto& x = nodes_[n.a].value;
        BasicMatrix<T> d(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i)
          for (std::size_t j = 0; j < x.cols(); ++j) d(i, j) = g(i, 0);
        accumulate(n.a, d);
        break;
      }
      case Op::gather_rows: {
        Node& src = nodes_[n.a];
        if (!src.tracked) break;
        for (std::size_t i = 0; i < n.index.size(); ++i) {
          auto dst = src.grad.row(n.index[i]);
          const auto from = g.row(i);
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += from[j];
        }
        break;
      }
      case Op::softmax_xent: {
        BasicMatrix<T> d = n.aux;
        const T scale = g(0, 0) / static_cast<T>(d.rows());
        for (std::size_t i = 0; i < d.rows(); ++i) {
          d(i, static_cast<std::size_t>(n.labels[i])) -= T(1);
          for (auto& v : d.row(i)) v *= scale;
        }
        accumulate(n.a, d);
        break;
      }
    }
  }
}

template <typename T>
BasicMatrix<T> Tape<T>::gradient(Var v) const {
  const Node& n = node(v);
  if (!has_backward_ || n.grad.empty()) return BasicMatrix<T>(n.value.rows(), n.value.cols());
  return n.grad;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace dvi
