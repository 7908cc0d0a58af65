#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "dvi/error.hpp"
#include "dvi/matrix.hpp"
#include "dvi/mlp.hpp"
#include "dvi/optimizer.hpp"
#include "dvi/tape.hpp"
#include "dvi/transforms.hpp"
#include "test_support.hpp"

using namespace dvi;
using dvi::testing::rel_error;

TEST_SUITE("numerics") {

TEST_CASE("matmul variants agree with the naive triple loop") {
  std::mt19937_64 rng(1);
  const MatrixD a = testing::random_matrix(7, 5, rng).cast<double>();
  const MatrixD b = testing::random_matrix(5, 4, rng).cast<double>();
  const MatrixD c = testing::random_matrix(7, 4, rng).cast<double>();
  const auto naive = [](const MatrixD& x, const MatrixD& y) {
    MatrixD out(x.rows(), y.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) {
        double s = 0;
        for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * y(k, j);
        out(i, j) = s;
      }
    return out;
  };
  const auto close = [](const MatrixD& x, const MatrixD& y) {
    REQUIRE(x.rows() == y.rows());
    REQUIRE(x.cols() == y.cols());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.values()[i] == doctest::Approx(y.values()[i]).epsilon(1e-12));
  };
  close(matmul(a, b), naive(a, b));
  close(matmul_at_b(a, c), naive(transpose(a), c));
  close(matmul_a_bt(c, b), naive(c, transpose(b)));
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("matrix construction checks the data length") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<float>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), DimensionError);
}

TEST_CASE("forward: identity, zero and hand-evaluated relu nets") {
  std::vector<std::size_t> one = {1, 1};
  Mlp id = zero_mlp<float>(one, Activation::identity, Activation::identity);
  id.weights[0](0, 0) = 1.0f;
  CHECK(forward(id, Matrix::from_rows({{3.0f}}))(0, 0) == 3.0f);

  std::vector<std::size_t> sizes = {3, 4, 2};
  const Mlp zero = zero_mlp<float>(sizes, Activation::relu, Activation::identity);
  const Matrix out = forward(zero, Matrix::from_rows({{1, -2, 5}, {7, 0, 1}}));
  for (float v : out.values()) CHECK(v == 0.0f);

  // x = (1, 2); hidden = relu(W1 x + b1) with W1 = [[1,-1],[2,1]] (columns are units), b1 = (0.5, -4)
  // unit0 = 1*1 + 2*2 + 0.5 = 5.5, unit1 = relu(-1 + 2 - 4) = 0; out = 3*5.5 - 0 + 1 = 17.5
  std::vector<std::size_t> s2 = {2, 2, 1};
  Mlp net = zero_mlp<float>(s2, Activation::relu, Activation::identity);
  net.weights[0] = Matrix::from_rows({{1, -1}, {2, 1}});
  net.biases[0] = Matrix::from_rows({{0.5f, -4.0f}});
  net.weights[1] = Matrix::from_rows({{3}, {-2}});
  net.biases[1] = Matrix::from_rows({{1}});
  CHECK(forward(net, Matrix::from_rows({{1, 2}}))(0, 0) == doctest::Approx(17.5));
  CHECK_THROWS_AS(forward(net, Matrix::from_rows({{1, 2, 3}})), DimensionError);
}

TEST_CASE("backward: linear and quadratic closed forms") {
  Tape<double> t;
  const Var w = t.parameter(MatrixD::from_rows({{1.0}}));
  const Var x = t.constant(MatrixD::from_rows({{2.0}}));
  const Var loss = t.sum(t.matmul(x, w));
  t.backward(loss);
  CHECK(t.gradient(w)(0, 0) == 2.0);

  Tape<double> q;
  const Var v = q.parameter(MatrixD::from_rows({{1.0, 2.0}}));
  const Var unused = q.parameter(MatrixD::from_rows({{9.0}}));
  q.backward(q.sum(q.mul(v, v)));
  CHECK(q.gradient(v)(0, 0) == 2.0);
  CHECK(q.gradient(v)(0, 1) == 4.0);
  CHECK(q.gradient(unused)(0, 0) == 0.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<double> t;
  const Var v = t.parameter(MatrixD::from_rows({{1.0, 2.0}}));
  CHECK_THROWS_AS(t.backward(v), ContractError);
}

TEST_CASE("random 3-layer net gradients match central differences") {
  std::mt19937_64 rng(7);
  std::vector<std::size_t> sizes = {6, 8, 5, 3};
  MlpD net = make_mlp<double>(sizes, Activation::relu, Activation::identity, rng);
  const MatrixD input = testing::random_matrix(4, 6, rng).cast<double>();
  const std::vector<int> labels = {0, 2, 1, 2};

  const auto loss_of = [&](const MlpD& m) {
    Tape<double> t;
    const MlpVars vars = bind(t, m);
    const Var out = forward(t, m, vars, t.constant(input));
    const Var l = t.add(t.softmax_cross_entropy(out, labels), t.mean(t.mul(out, out)));
    return t.value(l)(0, 0);
  };

  Tape<double> t;
  const MlpVars vars = bind(t, net);
  const Var out = forward(t, net, vars, t.constant(input));
  t.backward(t.add(t.softmax_cross_entropy(out, labels), t.mean(t.mul(out, out))));
  const MlpD grads = collect_gradients(t, net, vars);

  std::vector<double> flat = flatten(net);
  const std::vector<double> analytic = flatten(grads);
  const double h = 1e-3;
  double worst = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    MlpD probe = net;
    std::vector<double> f = flat;
    f[i] += h;
    unflatten<double>(f, probe);
    const double up = loss_of(probe);
    f[i] -= 2 * h;
    unflatten<double>(f, probe);
    const double down = loss_of(probe);
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2 * h)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("sgd step arithmetic, zero gradient and layer-indexed failure") {
  std::vector<std::size_t> sizes = {1, 1};
  Mlp p = zero_mlp<float>(sizes, Activation::identity, Activation::identity);
  p.weights[0](0, 0) = 0.5f;
  Mlp g = p.zeros_like();
  g.weights[0](0, 0) = 1.0f;
  Mlp vel = p.zeros_like();
  sgd_step(p, g, vel, 0.01, 0.0);
  CHECK(p.weights[0](0, 0) == doctest::Approx(0.49));

  const Mlp before = p;
  Mlp vel2 = p.zeros_like();
  sgd_step(p, p.zeros_like(), vel2, 0.01, 0.9);
  CHECK(p == before);

  std::vector<std::size_t> deep = {2, 3, 1};
  Mlp q = zero_mlp<float>(deep, Activation::relu, Activation::identity);
  Mlp bad = q.zeros_like();
  bad.biases[1](0, 0) = std::numeric_limits<float>::quiet_NaN();
  Mlp vq = q.zeros_like();
  try {
    sgd_step(q, bad, vq, 0.01, 0.9);
    FAIL("expected OptimizationError");
  } catch (const OptimizationError& e) {
    CHECK(e.layer() == 1);
  }
  CHECK_THROWS_AS(sgd_step(q, q.zeros_like(), vq, 0.0, 0.9), ContractError);
  CHECK_THROWS_AS(sgd_step(q, q.zeros_like(), vq, 0.01, 1.0), ContractError);
}

TEST_CASE("momentum accumulates velocity") {
  std::vector<std::size_t> sizes = {1, 1};
  Mlp p = zero_mlp<float>(sizes, Activation::identity, Activation::identity);
  Mlp g = p.zeros_like();
  g.weights[0](0, 0) = 1.0f;
  Mlp vel = p.zeros_like();
  sgd_step(p, g, vel, 0.1, 0.5);  // v = 1, w = -0.1
  sgd_step(p, g, vel, 0.1, 0.5);  // v = 1.5, w = -0.25
  CHECK(p.weights[0](0, 0) == doctest::Approx(-0.25));
}

TEST_CASE("learning-rate schedule decays tenfold every 8 epochs") {
  const LrSchedule s;
  for (int e = 0; e < 8; ++e) CHECK(s.at(e) == doctest::Approx(0.01));
  for (int e = 8; e < 16; ++e) CHECK(s.at(e) == doctest::Approx(0.001));
  CHECK(s.at(16) == doctest::Approx(0.0001));
}

TEST_CASE("optimizer is bit-deterministic") {
  const auto run = [] {
    std::mt19937_64 rng(3);
    std::vector<std::size_t> sizes = {4, 6, 2};
    Mlp m = make_mlp<float>(sizes, Activation::relu, Activation::identity, rng);
    SgdOptimizer opt({&m}, LrSchedule{}, 0.9);
    for (int i = 0; i < 5; ++i) {
      Mlp g = m;
      for (auto& w : g.weights)
        for (float& v : w.values()) v *= 0.1f;
      std::vector<Mlp> grads = {g};
      opt.step(grads);
    }
    return flatten(m);
  };
  CHECK(run() == run());
}

TEST_CASE("minmax_rescale examples and degenerate input") {
  const auto r = [](std::vector<double> v) { return minmax_rescale(std::span<const double>(v)); };
  CHECK(r({0, 5, 10}) == std::vector<double>{0, 0.5, 1});
  CHECK(r({-1, 1}) == std::vector<double>{0, 1});
  CHECK(r({2, 2, 6}) == std::vector<double>{0, 0, 1});
  CHECK_THROWS_AS(r({3, 3, 3}), DegenerateInputError);
  const std::vector<double> once = r({0.3, -2, 7, 1});
  CHECK(r(once) == once);
}

TEST_CASE("softmax examples") {
  const auto s = [](std::vector<double> v) { return softmax(std::span<const double>(v)); };
  const auto half = s({0, 0});
  CHECK(half[0] == doctest::Approx(0.5));
  const auto big = s({1000, 0});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] == doctest::Approx(0.0));
  const auto third = s({std::log(2.0), 0});
  CHECK(third[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(third[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

}  // TEST_SUITE
