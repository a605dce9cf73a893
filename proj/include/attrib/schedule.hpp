#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace attrib {

// Result of a learning-rate range sweep: log-spaced rates with the
// exponentially smoothed loss observed at each, plus the suggested rate
// (the recorded rate at the steepest negative slope of the smoothed curve).
struct LrCurve {
  std::vector<std::pair<double, double>> points;  // (learning_rate, smoothed_loss)
  double suggestion = 0.0;
};

struct LrFindOptions {
  double lr_start = 1e-7;
  double lr_end = 10.0;
  int steps = 100;
  double smoothing = 0.98;
  double divergence_factor = 4.0;
};

// Sweeps lr_i = lr_start * (lr_end/lr_start)^(i/(steps-1)), calling
// train_step(lr) for one optimization step each and recording the smoothed
// loss; stops early once the smoothed loss exceeds divergence_factor times
// the best seen. The caller owns snapshot/restore of any state train_step
// mutates (see TrainSession::lr_find for the restoring wrapper).
// Throws std::runtime_error if the first loss is non-finite.
LrCurve lr_find(const std::function<double(double)>& train_step,
                const LrFindOptions& opts = {});

// Slanted triangular learning rate over steps t in [0, T]:
// short linear warm-up for cut = floor(T*cut_frac) steps, linear decay after.
double stlr(std::int64_t t, std::int64_t total_steps, double lr_max,
            double cut_frac = 0.1, double ratio = 32.0);

// Cosine annealing within one epoch; the caller restarts t at each epoch
// boundary: lr(t) = lr_min + (lr_max-lr_min)(1+cos(pi t/T))/2.
double sgdr(std::int64_t t, std::int64_t steps_per_epoch, double lr_max, double lr_min = 0.0);

// Geometric interpolation from lr_high/divisor (first group) up to lr_high
// (last group). Default divisor 2.6^4 matches the sliced-rate rule used for
// classifier fine-tuning.
std::vector<double> discriminative_lrs(double lr_high, int n_groups = 5,
                                       double divisor = 45.6976);

// Ordered layer groups from input side to output side, with frozen flags.
// Unfreezing proceeds strictly from the head toward the embedding.
struct LayerGroups {
  static constexpr int kCount = 5;
  // group indices
  static constexpr int kEmbedding = 0;
  static constexpr int kLstm1 = 1;
  static constexpr int kLstm2 = 2;
  static constexpr int kLstm3 = 3;
  static constexpr int kHead = 4;

  std::array<bool, kCount> frozen{};

  bool trainable(int group) const { return !frozen[group]; }
  int n_trainable() const;
};

enum class Stage { pretrain, finetune, classify };

// step 0 trains the head only; each following step unfreezes the next-deepest
// group; any step >= kCount-1 returns the fully unfrozen plan.
LayerGroups unfreeze_plan(Stage stage, int step_index);

// Momentum interpolation: beta1 moves opposite to the learning rate within a
// cycle, linearly between beta1_max (at lr_min) and beta1_min (at lr_max).
double beta1_for_lr(double lr, double lr_min, double lr_max, double beta1_max,
                    double beta1_min);

}  // namespace attrib
