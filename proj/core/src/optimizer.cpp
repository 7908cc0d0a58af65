#include "dvi/optimizer.hpp"

#include <cmath>
#include <string>

namespace dvi {

double LrSchedule::at(int epoch) const {
  if (epoch < 0) throw ContractError("lr schedule: negative epoch");
  if (decay_every <= 0) return initial;
  return initial * std::pow(decay_factor, epoch / decay_every);
}

namespace {

void check_finite(const Mlp& grads, std::size_t layer_offset) {
  for (std::size_t l = 0; l < grads.layer_count(); ++l) {
    if (!grads.weights[l].all_finite() || !grads.biases[l].all_finite()) {
      throw OptimizationError(
          "non-finite gradient in layer " + std::to_string(layer_offset + l), layer_offset + l);
    }
  }
}

void apply(Mlp& params, const Mlp& grads, Mlp& velocity, double lr, double momentum) {
  const auto m = static_cast<float>(momentum);
  const auto rate = static_cast<float>(lr);
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    auto update = [&](Matrix& w, const Matrix& g, Matrix& v) {
      auto wv = w.values();
      auto gv = g.values();
      auto vv = v.values();
      for (std::size_t i = 0; i < wv.size(); ++i) {
        vv[i] = m * vv[i] + gv[i];
        wv[i] -= rate * vv[i];
      }
    };
    update(params.weights[l], grads.weights[l], velocity.weights[l]);
    update(params.biases[l], grads.biases[l], velocity.biases[l]);
  }
}

void require_lr(double lr, double momentum) {
  if (!(lr > 0.0)) throw ContractError("sgd: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("sgd: momentum outside [0,1)");
}

}  // namespace

void sgd_step(Mlp& params, const Mlp& grads, Mlp& velocity, double lr, double momentum) {
  require_lr(lr, momentum);
  if (grads.layer_sizes() != params.layer_sizes() ||
      velocity.layer_sizes() != params.layer_sizes()) {
    throw DimensionError("sgd: gradient shape does not match parameters");
  }
  check_finite(grads, 0);
  apply(params, grads, velocity, lr, momentum);
}

SgdOptimizer::SgdOptimizer(std::vector<Mlp*> params, LrSchedule schedule, double momentum)
    : params_(std::move(params)), schedule_(schedule), momentum_(momentum) {
  require_lr(schedule_.initial, momentum_);
  for (const Mlp* p : params_) velocity_.push_back(p->zeros_like());
}

void SgdOptimizer::step(std::span<const Mlp> grads) {
  if (grads.size() != params_.size()) throw DimensionError("sgd: gradient set size mismatch");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].layer_sizes() != params_[i]->layer_sizes()) {
      throw DimensionError("sgd: gradient shape does not match parameters");
    }
    check_finite(grads[i], offset);
    offset += grads[i].layer_count();
  }
  const double lr = learning_rate();
  for (std::size_t i = 0; i < grads.size(); ++i) {
    apply(*params_[i], grads[i], velocity_[i], lr, momentum_);
  }
}

}  // namespace dvi
