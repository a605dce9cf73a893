#include <cmath>
#include <vector>

#include "doctest.h"

#include "attrib/schedule.hpp"

using namespace attrib;

TEST_CASE("stlr endpoints and peak") {
  const double lr_max = 0.01;
  CHECK(stlr(0, 1000, lr_max) == doctest::Approx(lr_max / 32.0).epsilon(1e-15));
  const auto cut = static_cast<std::int64_t>(std::floor(1000 * 0.1));
  CHECK(stlr(cut, 1000, lr_max) == doctest::Approx(lr_max).epsilon(1e-15));
  CHECK(stlr(1000, 1000, lr_max) == doctest::Approx(lr_max / 32.0).epsilon(1e-15));
}

TEST_CASE("stlr hand value at t=550") {
  // cut=100, p=1-(550-100)/900=0.5, lr=0.01*(1+0.5*31)/32
  CHECK(stlr(550, 1000, 0.01) == doctest::Approx(5.15625e-3).epsilon(1e-12));
}

TEST_CASE("stlr matches the closed form on a grid") {
  const double lr_max = 2.5e-3, cut_frac = 0.1, ratio = 32.0;
  const std::int64_t T = 1000;
  const auto cut = static_cast<std::int64_t>(std::floor(T * cut_frac));
  for (std::int64_t t = 0; t <= T; ++t) {
    const double p = t < cut ? static_cast<double>(t) / cut
                             : 1.0 - static_cast<double>(t - cut) / (T - cut);
    const double expect = lr_max * (1.0 + p * (ratio - 1.0)) / ratio;
    CHECK(std::fabs(stlr(t, T, lr_max, cut_frac, ratio) - expect) < 1e-12);
  }
}

TEST_CASE("stlr is piecewise linear with the maximum at the cut") {
  const std::int64_t T = 500;
  const auto cut = static_cast<std::int64_t>(std::floor(T * 0.1));
  double prev = stlr(0, T, 1.0);
  for (std::int64_t t = 1; t <= T; ++t) {
    const double v = stlr(t, T, 1.0);
    if (t <= cut)
      CHECK(v > prev);
    else
      CHECK(v < prev);
    CHECK(v <= stlr(cut, T, 1.0) + 1e-15);
    prev = v;
  }
  CHECK_THROWS(stlr(0, 0, 1.0));
}

TEST_CASE("sgdr endpoints, midpoint, and closed form") {
  CHECK(sgdr(0, 100, 0.02) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(sgdr(100, 100, 0.02) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(sgdr(50, 100, 0.02, 0.004) == doctest::Approx(0.012).epsilon(1e-12));
  const double lr_max = 3e-3, lr_min = 1e-5;
  const std::int64_t T = 1000;
  for (std::int64_t t = 0; t <= T; ++t) {
    const double expect =
        lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * static_cast<double>(t) / T));
    CHECK(std::fabs(sgdr(t, T, lr_max, lr_min) - expect) < 1e-12);
  }
  CHECK_THROWS(sgdr(0, 0, 1.0));
}

TEST_CASE("sgdr is non-increasing within an epoch") {
  double prev = sgdr(0, 333, 0.5);
  for (std::int64_t t = 1; t <= 333; ++t) {
    const double v = sgdr(t, 333, 0.5);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("discriminative lrs span lr/2.6^4 to lr geometrically") {
  const auto lrs = discriminative_lrs(1e-2);
  CHECK(lrs.size() == 5);
  CHECK(lrs.front() == doctest::Approx(1e-2 / 45.6976).epsilon(1e-12));
  CHECK(lrs.front() == doctest::Approx(2.18829e-4).epsilon(1e-5));
  CHECK(lrs.back() == doctest::Approx(1e-2).epsilon(1e-15));
  CHECK(lrs.back() / lrs.front() == doctest::Approx(45.6976).epsilon(1e-12));
  for (std::size_t g = 1; g < lrs.size(); ++g) {
    CHECK(lrs[g] / lrs[g - 1] == doctest::Approx(2.6).epsilon(1e-9));
    CHECK(lrs[g] > lrs[g - 1]);
  }
}

TEST_CASE("discriminative lrs with two groups") {
  const auto lrs = discriminative_lrs(0.1, 2);
  CHECK(lrs[0] == doctest::Approx(0.1 / 45.6976).epsilon(1e-12));
  CHECK(lrs[1] == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("unfreeze plan walks from the head to the embedding") {
  for (Stage stage : {Stage::finetune, Stage::classify}) {
    auto g0 = unfreeze_plan(stage, 0);
    CHECK(g0.n_trainable() == 1);
    CHECK(g0.trainable(LayerGroups::kHead));

    auto g1 = unfreeze_plan(stage, 1);
    CHECK(g1.n_trainable() == 2);
    CHECK(g1.trainable(LayerGroups::kHead));
    CHECK(g1.trainable(LayerGroups::kLstm3));
    CHECK_FALSE(g1.trainable(LayerGroups::kLstm2));

    for (int step : {4, 5, 17}) {
      auto g = unfreeze_plan(stage, step);
      CHECK(g.n_trainable() == LayerGroups::kCount);
    }
  }
  // Unfreezing proceeds strictly last-to-first: a trainable group at step s
  // stays trainable at step s+1.
  for (int s = 0; s < 6; ++s) {
    auto a = unfreeze_plan(Stage::classify, s);
    auto b = unfreeze_plan(Stage::classify, s + 1);
    for (int g = 0; g < LayerGroups::kCount; ++g)
      if (a.trainable(g)) CHECK(b.trainable(g));
  }
}

TEST_CASE("lr_find grid endpoints and a synthetic parabola") {
  // Record the rates the finder visits via a loss that only logs.
  std::vector<double> seen;
  auto probe = [&](double lr) {
    seen.push_back(lr);
    return 1.0;  // flat loss: no divergence, no descent
  };
  LrFindOptions opts;
  auto curve = lr_find(probe, opts);
  CHECK(seen.front() == doctest::Approx(1e-7).epsilon(1e-12));
  CHECK(seen.back() == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(seen.size() == 100);
  // Flat loss has no descending region; the suggestion falls back to lr_start.
  CHECK(curve.suggestion == doctest::Approx(1e-7));

  // L(lr) = (log10 lr + 3)^2, minimum at 1e-3. The oracle replays the same
  // smoothing arithmetic and takes the steepest smoothed drop.
  auto loss_of = [](double lr) {
    const double t = std::log10(lr) + 3.0;
    return t * t;
  };
  curve = lr_find([&](double lr) { return loss_of(lr); }, opts);
  std::vector<double> smoothed;
  double avg = 0.0;
  for (int i = 0; i < opts.steps; ++i) {
    const double lr = opts.lr_start * std::pow(opts.lr_end / opts.lr_start,
                                               static_cast<double>(i) / (opts.steps - 1));
    avg = opts.smoothing * avg + (1.0 - opts.smoothing) * loss_of(lr);
    smoothed.push_back(avg / (1.0 - std::pow(opts.smoothing, i + 1)));
  }
  std::size_t best_i = 0;
  double best_slope = 0.0;
  for (std::size_t i = 0; i + 1 < smoothed.size(); ++i) {
    const double slope = smoothed[i + 1] - smoothed[i];
    if (slope < best_slope) {
      best_slope = slope;
      best_i = i;
    }
  }
  const double expected_lr = opts.lr_start * std::pow(opts.lr_end / opts.lr_start,
                                                      static_cast<double>(best_i) / 99.0);
  // The steepest descent sits left of the minimum at 1e-3.
  CHECK(expected_lr < 1e-3);
  const double grid_step = std::pow(opts.lr_end / opts.lr_start, 1.0 / 99.0);
  CHECK(curve.suggestion / expected_lr < grid_step * 1.0001);
  CHECK(expected_lr / curve.suggestion < grid_step * 1.0001);
}

TEST_CASE("lr_find stops early on monotonically increasing loss") {
  int calls = 0;
  auto rising = [&](double) {
    ++calls;
    return static_cast<double>(calls) * 10.0;
  };
  auto curve = lr_find(rising);
  CHECK(calls < 100);
  CHECK(curve.suggestion == doctest::Approx(1e-7));
}

TEST_CASE("lr_find rejects a non-finite first loss") {
  CHECK_THROWS(lr_find([](double) { return std::nan(""); }));
}

TEST_CASE("beta1 moves opposite to the learning rate") {
  CHECK(beta1_for_lr(0.0, 0.0, 1.0, 0.8, 0.7) == doctest::Approx(0.8));
  CHECK(beta1_for_lr(1.0, 0.0, 1.0, 0.8, 0.7) == doctest::Approx(0.7));
  CHECK(beta1_for_lr(0.5, 0.0, 1.0, 0.8, 0.7) == doctest::Approx(0.75));
}
