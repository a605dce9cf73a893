#include "attrib/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "attrib/errors.hpp"

namespace attrib {

void AdamState::init(const std::vector<TensorPtr>& params) {
  slots.assign(params.size(), {});
  for (std::size_t i = 0; i < params.size(); ++i) {
    slots[i].m.assign(params[i]->data.size(), 0.0);
    slots[i].v.assign(params[i]->data.size(), 0.0);
  }
  t = 0;
}

void adam_step(const std::vector<TensorPtr>& params, const std::vector<std::string>& names,
               AdamState& state, const std::vector<double>& lrs,
               const std::vector<std::uint8_t>& trainable) {
  if (state.slots.size() != params.size()) state.init(params);
  if (lrs.size() != params.size() || trainable.size() != params.size())
    throw std::invalid_argument("adam_step: lrs/trainable size mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!trainable[p]) continue;
    Tensor& th = *params[p];
    auto& slot = state.slots[p];
    const double lr = lrs[p];
    for (std::size_t i = 0; i < th.data.size(); ++i) {
      const double g = th.grad[i];
      if (!std::isfinite(g))
        throw NumericError("adam_step: non-finite gradient in parameter '" +
                           (p < names.size() ? names[p] : std::to_string(p)) + "'");
      slot.m[i] = state.beta1 * slot.m[i] + (1.0 - state.beta1) * g;
      slot.v[i] = state.beta2 * slot.v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      th.data[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
      th.data[i] -= lr * state.weight_decay * th.data[i];
    }
  }
}

void adam_step(const std::vector<TensorPtr>& params, const std::vector<std::string>& names,
               AdamState& state, double lr) {
  adam_step(params, names, state, std::vector<double>(params.size(), lr),
            std::vector<std::uint8_t>(params.size(), 1));
}

double finite_difference_check(const std::function<double()>& f,
                               const std::vector<TensorPtr>& params, double eps) {
  if (!(eps > 0.0 && eps <= 1e-3))
    throw std::invalid_argument("finite_difference_check: eps must be in (0, 1e-3]");
  for (const auto& p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
  const double base = f();
  if (!std::isfinite(base))
    throw std::runtime_error("finite_difference_check: non-finite loss");
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p->grad);

  double max_err = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& th = *params[p];
    for (std::size_t i = 0; i < th.data.size(); ++i) {
      const double saved = th.data[i];
      th.data[i] = saved + eps;
      const double fp = f();
      th.data[i] = saved - eps;
      const double fm = f();
      th.data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("finite_difference_check: non-finite loss at probe");
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[p][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
      max_err = std::max(max_err, std::fabs(a - numeric) / denom);
    }
  }
  // Leave the analytic gradients in place for the caller.
  for (std::size_t p = 0; p < params.size(); ++p) params[p]->grad = analytic[p];
  return max_err;
}

}  // namespace attrib
