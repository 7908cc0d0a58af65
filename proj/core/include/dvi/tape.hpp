#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dvi/matrix.hpp"

namespace dvi {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode automatic differentiation over matrix-valued nodes.
///
/// Nodes are appended in evaluation order, so the recording is topologically
/// sorted by construction. `backward` seeds the (1x1) loss node with 1 and
/// sweeps the tape in reverse, accumulating adjoints into every node that
/// depends on a parameter.
template <typename T>
class Tape {
 public:
  Var constant(BasicMatrix<T> value);
  Var parameter(BasicMatrix<T> value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Elementwise product.
  Var mul(Var a, Var b);
  /// Adds a 1xC row to every row of `a`.
  Var add_row(Var a, Var row);
  Var scale(Var a, T factor);
  Var add_scalar(Var a, T offset);
  /// Elementwise a^exponent; `a` must be strictly positive.
  Var pow(Var a, T exponent);
  Var log(Var a);
  Var relu(Var a);
  /// Elementwise clamp; the adjoint is zero where the bound is active.
  Var clamp(Var a, T lo, T hi);
  Var sum(Var a);
  Var mean(Var a);
  /// NxC -> Nx1 sum over columns.
  Var row_sum(Var a);
  Var gather_rows(Var a, std::vector<std::size_t> rows);
  /// Mean softmax cross-entropy of NxC logits against integer labels.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);

  const BasicMatrix<T>& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Populates adjoints for every node reachable from `loss`.
  /// Throws ContractError when `loss` is not a 1x1 node.
  void backward(Var loss);

  /// Adjoint of `v` after backward(); zeros when `v` does not influence the loss.
  BasicMatrix<T> gradient(Var v) const;

 private:
  enum class Op : std::uint8_t {
    leaf,
    matmul,
    add,
    sub,
    mul,
    add_row,
    scale,
    add_scalar,
    pow,
    log,
    relu,
    clamp,
    sum,
    mean,
    row_sum,
    gather_rows,
    softmax_xent,
  };

  struct Node {
    Op op = Op::leaf;
    std::size_t a = 0;
    std::size_t b = 0;
    T s0 = T(0);
    T s1 = T(0);
    bool tracked = false;
    BasicMatrix<T> value;
    BasicMatrix<T> grad;
    std::vector<std::size_t> index;
    std::vector<int> labels;
    BasicMatrix<T> aux;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void accumulate(std::size_t target, const BasicMatrix<T>& delta);

  std::vector<Node> nodes_;
  bool has_backward_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dvi
