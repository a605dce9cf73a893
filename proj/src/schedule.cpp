#include "attrib/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace attrib {

LrCurve lr_find(const std::function<double(double)>& train_step, const LrFindOptions& opts) {
  if (opts.steps < 2) throw std::invalid_argument("lr_find: need at least 2 steps");
  LrCurve curve;
  double avg = 0.0;
  double best = 0.0;
  for (int i = 0; i < opts.steps; ++i) {
    const double lr =
        opts.lr_start * std::pow(opts.lr_end / opts.lr_start,
                                 static_cast<double>(i) / (opts.steps - 1));
    const double loss = train_step(lr);
    if (i == 0 && !std::isfinite(loss))
      throw std::runtime_error("lr_find: loss non-finite at first step");
    avg = opts.smoothing * avg + (1.0 - opts.smoothing) * loss;
    const double smoothed = avg / (1.0 - std::pow(opts.smoothing, i + 1));
    curve.points.emplace_back(lr, smoothed);
    if (i == 0 || smoothed < best) best = smoothed;
    if (!std::isfinite(smoothed) || smoothed > opts.divergence_factor * best) break;
  }
  // Steepest negative slope of the smoothed curve; the grid is uniform in
  // log lr, so comparing successive differences is enough.
  double steepest = 0.0;
  std::size_t at = 0;
  bool found = false;
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    const double slope = curve.points[i + 1].second - curve.points[i].second;
    if (slope < steepest) {
      steepest = slope;
      at = i;
      found = true;
    }
  }
  curve.suggestion = found ? curve.points[at].first : curve.points.front().first;
  return curve;
}

double stlr(std::int64_t t, std::int64_t total_steps, double lr_max, double cut_frac,
            double ratio) {
  if (total_steps <= 0) throw std::invalid_argument("stlr: total steps must be positive");
  if (t < 0 || t > total_steps) throw std::invalid_argument("stlr: t outside [0, T]");
  const auto cut = static_cast<std::int64_t>(std::floor(total_steps * cut_frac));
  double p;
  if (t < cut) {
    p = static_cast<double>(t) / static_cast<double>(cut);
  } else {
    p = 1.0 - static_cast<double>(t - cut) / static_cast<double>(total_steps - cut);
  }
  return lr_max * (1.0 + p * (ratio - 1.0)) / ratio;
}

double sgdr(std::int64_t t, std::int64_t steps_per_epoch, double lr_max, double lr_min) {
  if (steps_per_epoch <= 0) throw std::invalid_argument("sgdr: steps per epoch must be positive");
  if (t < 0 || t > steps_per_epoch) throw std::invalid_argument("sgdr: t outside [0, T]");
  const double frac = static_cast<double>(t) / static_cast<double>(steps_per_epoch);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * frac));
}

std::vector<double> discriminative_lrs(double lr_high, int n_groups, double divisor) {
  if (!(lr_high > 0.0)) throw std::invalid_argument("discriminative_lrs: lr_high must be > 0");
  if (n_groups < 2) throw std::invalid_argument("discriminative_lrs: need at least 2 groups");
  const double lr_low = lr_high / divisor;
  std::vector<double> lrs(n_groups);
  for (int g = 0; g < n_groups; ++g)
    lrs[g] = lr_low * std::pow(lr_high / lr_low, static_cast<double>(g) / (n_groups - 1));
  return lrs;
}

int LayerGroups::n_trainable() const {
  int n = 0;
  for (bool f : frozen)
    if (!f) ++n;
  return n;
}

LayerGroups unfreeze_plan(Stage stage, int step_index) {
  if (step_index < 0) throw std::invalid_argument("unfreeze_plan: negative step");
  LayerGroups g;
  if (stage == Stage::pretrain) return g;  // everything trainable from scratch
  for (int i = 0; i < LayerGroups::kCount; ++i) g.frozen[i] = true;
  // head first, then one deeper group per step
  for (int s = 0; s <= step_index && s < LayerGroups::kCount; ++s)
    g.frozen[LayerGroups::kHead - s] = false;
  return g;
}

double beta1_for_lr(double lr, double lr_min, double lr_max, double beta1_max,
                    double beta1_min) {
  if (lr_max <= lr_min) return beta1_max;
  const double frac = (lr - lr_min) / (lr_max - lr_min);
  return beta1_max - (beta1_max - beta1_min) * frac;
}

}  // namespace attrib
