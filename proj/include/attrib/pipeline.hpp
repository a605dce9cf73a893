#pragma once

#include <string>
#include <vector>

#include "attrib/config.hpp"
#include "attrib/corpus.hpp"
#include "attrib/eval.hpp"
#include "attrib/model.hpp"
#include "attrib/schedule.hpp"
#include "attrib/tokenizer.hpp"

namespace attrib {

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_perplexity = 0.0;
};

struct StageReport {
  std::vector<EpochStats> epochs;
  double best_valid_loss = 0.0;
  double wall_clock_sec = 0.0;
  bool diverged = false;
  std::string checkpoint_path;

  std::string to_json() const;
};

// One truncated-BPTT batch: targets are inputs shifted by one position.
struct LmBatch {
  std::vector<std::vector<int>> input;   // [batch][bptt]
  std::vector<std::vector<int>> target;  // [batch][bptt]
};

// Reshapes the stream column-wise into batch_size contiguous lanes and cuts
// bptt-sized windows; the trailing remainder of each lane is dropped. LSTM
// state is meant to carry across consecutive batches (reset per epoch).
// Throws if the stream is shorter than batch_size * (bptt + 1).
std::vector<LmBatch> make_lm_batches(const std::vector<int>& ids, int batch_size, int bptt);

// Value snapshot of every parameter plus batchnorm statistics; used for
// best-epoch tracking and for the state-restoring lr finder.
struct ModelSnapshot {
  std::vector<std::vector<double>> values;
  std::vector<double> bn_mean, bn_var;
};
ModelSnapshot snapshot_model(const Model& model);
void restore_model(Model& model, const ModelSnapshot& snapshot);
Model clone_model(const Model& model);

struct LmResult {
  Model model;  // best-validation weights
  StageReport report;
};

// Trains the language model from random init: SGDR within each epoch,
// decoupled weight decay, a 90/10 head/tail split of the token stream for
// validation, patience-based early stopping, best-validation weights kept.
// The learning-rate list is consumed left to right: each early stop resumes
// from the best weights at the next rate until the epoch budget is spent.
LmResult pretrain_lm(const std::string& corpus_text, const Tokenizer& tokenizer,
                     const ModelConfig& model_config, const TrainConfig& config);

// Gradual-unfreezing fine-tune of an existing language model on the target
// samples (training split only): 2 epochs per unfreeze step
// (head -> +lstm3 -> +lstm2 -> everything), then training continues on the
// full model until early stop or the epoch budget runs out.
LmResult finetune_lm(const Model& lm, const Tokenizer& tokenizer,
                     const std::vector<Sample>& train_samples, const TrainConfig& config);

// Cross-entropy of the model over a token stream (eval mode); perplexity is
// exp of this.
double lm_validation_loss(const Model& model, const std::vector<int>& ids, int batch_size,
                          int bptt);

struct ClassifierResult {
  Model model;
  std::vector<std::string> authors;  // label index -> author name
  Metrics metrics;                   // on the held-out split
  StageReport report;
};

// Replaces the decoder with a fresh classifier head and trains with the
// ULMFiT schedule: 2 epochs head-only, 2 epochs each for the next two
// unfreeze steps, then the full model for up to 6 epochs (early stop
// allowed), STLR with discriminative learning rates throughout. An 80/20
// stratified split of `labeled` provides the held-out metrics.
ClassifierResult train_classifier(const Model& encoder_source, const Tokenizer& tokenizer,
                                  const std::vector<Sample>& labeled,
                                  const TrainConfig& config);

// Evaluates an already-trained classifier on labeled samples.
Metrics evaluate_classifier(Model& model, const Tokenizer& tokenizer,
                            const std::vector<std::string>& authors,
                            const std::vector<Sample>& samples, int max_doc_tokens);

struct Prediction {
  int author_id = 0;
  std::vector<double> probabilities;
};

// Tokenizes, truncates from the front to max_doc_tokens, runs the classifier
// in eval mode. Throws if the text tokenizes to nothing.
Prediction predict_author(Model& model, const Tokenizer& tokenizer, const std::string& text,
                          int max_doc_tokens = 1400);

// Learning-rate range sweep over LM training steps. Snapshots the model and
// optimizer first and restores them bitwise afterwards.
LrCurve lr_find_lm(Model& model, const std::vector<int>& ids, const TrainConfig& config,
                   const LrFindOptions& opts = {});

}  // namespace attrib
