#pragma once

#include <functional>
#include <string>
#include <vector>

#include "attrib/tensor.hpp"

namespace attrib {

// One Adam moment pair per parameter, keyed by position in a fixed parameter
// list so that update order is deterministic.
struct AdamState {
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Slot> slots;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  double weight_decay = 0.0;

  void init(const std::vector<TensorPtr>& params);
};

// Adam with decoupled weight decay: the decay shrinks the parameter after the
// adaptive update instead of entering the gradient, so the moment estimates
// stay pure gradient statistics.
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * mhat / (sqrt(vhat) + eps)
//   theta <- theta - lr * wd * theta
// lrs supplies one learning rate per parameter. trainable masks out frozen
// parameters: their values and moments are left untouched (bitwise).
// Throws std::runtime_error naming the first parameter with a non-finite
// gradient.
void adam_step(const std::vector<TensorPtr>& params, const std::vector<std::string>& names,
               AdamState& state, const std::vector<double>& lrs,
               const std::vector<std::uint8_t>& trainable);

// Convenience overload: one lr, everything trainable.
void adam_step(const std::vector<TensorPtr>& params, const std::vector<std::string>& names,
               AdamState& state, double lr);

// Central-difference gradient verification.
// f() must run a fresh forward/backward over `params` and return the loss;
// it is responsible for zeroing grads before backward. After calling f()
// once for the analytic gradients, each parameter entry is displaced by
// +/- eps and f re-evaluated (gradients from those probe calls are ignored).
// Returns max over entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double finite_difference_check(const std::function<double()>& f,
                               const std::vector<TensorPtr>& params, double eps);

}  // namespace attrib
