#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dvi/mlp.hpp"

namespace dvi {

/// Step decay: `initial` for the first `decay_every` epochs, then multiplied
/// by `decay_factor` once per further block of `decay_every` epochs.
struct LrSchedule {
  double initial = 0.01;
  int decay_every = 8;
  double decay_factor = 0.1;

  double at(int epoch) const;
};

/// One momentum-SGD update in place: v = momentum * v + g; w -= lr * v.
/// `velocity` must be shaped like `params`. Throws OptimizationError naming the
/// layer when a gradient is non-finite, before anything is modified.
void sgd_step(Mlp& params, const Mlp& grads, Mlp& velocity, double lr, double momentum);

/// Momentum SGD over a fixed set of networks with an epoch-indexed schedule.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Mlp*> params, LrSchedule schedule, double momentum);

  /// `grads[i]` matches `params[i]`. Layer indices in errors count across
  /// all networks in order.
  void step(std::span<const Mlp> grads);
  void next_epoch() noexcept { ++epoch_; }

  int epoch() const noexcept { return epoch_; }
  double learning_rate() const { return schedule_.at(epoch_); }

 private:
  std::vector<Mlp*> params_;
  std::vector<Mlp> velocity_;
  LrSchedule schedule_;
  double momentum_;
  int epoch_ = 0;
};

}  // namespace dvi
