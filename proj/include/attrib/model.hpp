#pragma once

#include <optional>
#include <string>
#include <vector>

#include "attrib/rng.hpp"
#include "attrib/schedule.hpp"
#include "attrib/tensor.hpp"

namespace attrib {

// Base dropout rates, each scaled by ModelConfig::dropout_multiplier before
// use. weight_drop applies to the hidden-to-hidden matrices (DropConnect);
// the rest are variational masks sampled once per sequence.
struct DropoutRates {
  double output = 0.4;
  double hidden = 0.3;
  double input = 0.4;
  double embedding = 0.05;
  double weight_drop = 0.5;
};

struct ModelConfig {
  int vocab_size = 0;
  int embedding_size = 400;
  int hidden_size = 1150;
  int n_layers = 3;
  double dropout_multiplier = 0.5;
  DropoutRates base_dropouts;
  bool tie_weights = true;
  int n_classes = 0;  // 0 = language-model head
  int head_hidden = 50;

  double drop(double base) const { return base * dropout_multiplier; }
  // Final LSTM layer projects back to embedding_size when weights are tied.
  int output_size() const { return tie_weights ? embedding_size : hidden_size; }
  void validate() const;
};

struct LstmLayer {
  TensorPtr w;  // [in_dim x 4*out_dim], gate order i,f,g,o
  TensorPtr u;  // [out_dim x 4*out_dim], the weight-dropped matrix
  TensorPtr b;  // [4*out_dim]
  int in_dim = 0;
  int out_dim = 0;
};

struct LmHead {
  TensorPtr weight;  // [vocab x emb]; aliases the embedding when tied
  TensorPtr bias;    // [vocab]
};

struct ClassifierHead {
  TensorPtr w1, b1;          // [3*out_dim x head_hidden]
  TensorPtr gamma, beta;     // batchnorm affine
  TensorPtr w2, b2;          // [head_hidden x n_classes]
  BatchNormState bn;
};

struct Model {
  ModelConfig config;
  TensorPtr embedding;  // [vocab x emb]
  std::vector<LstmLayer> layers;
  std::optional<LmHead> lm;
  std::optional<ClassifierHead> classifier;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) matrices, zero biases,
// batchnorm at identity. Draw order is fixed for reproducibility.
Model init_model(const ModelConfig& config, Rng& rng);

// Replaces whatever head exists with a freshly initialized classifier head.
void attach_classifier_head(Model& model, int n_classes, Rng& rng);

// Parameters in fixed order with their layer group, for the optimizer and
// the freezing plan. The tied decoder weight is listed once (as the
// embedding).
struct NamedParam {
  std::string name;
  TensorPtr tensor;
  int group;  // LayerGroups index
};
std::vector<NamedParam> model_parameters(const Model& model);

// --- regularizers ------------------------------------------------------------

// DropConnect on a weight matrix: entries zeroed with probability p, the
// survivors scaled by 1/(1-p); sampled once per call, so one mask serves a
// whole sequence. p == 1 is defined as the zero matrix. Eval returns u.
TensorPtr apply_weight_drop(Tape* tape, const TensorPtr& u, double p, Rng& rng, bool train);

// Inverted-dropout mask with entries {0, 1/(1-p)}, sampled once and meant to
// be reused at every time step of a sequence. p must be < 1.
TensorPtr variational_mask(const std::vector<int>& shape, double p, Rng& rng);

// Zeroes whole vocabulary rows with probability p and rescales survivors.
TensorPtr embedding_dropout(Tape* tape, const TensorPtr& embedding, double p, Rng& rng,
                            bool train);

// --- forward passes ----------------------------------------------------------

// One LSTM cell step. x [batch x in], h,c [batch x out]; returns (h', c').
// Recorded on the tape as a single fused node.
std::pair<TensorPtr, TensorPtr> lstm_cell_forward(Tape* tape, const TensorPtr& x,
                                                  const TensorPtr& h, const TensorPtr& c,
                                                  const TensorPtr& w, const TensorPtr& u_masked,
                                                  const TensorPtr& b);

// Per-layer carried state, detached between truncated-BPTT batches.
struct EncoderState {
  std::vector<std::pair<TensorPtr, TensorPtr>> hc;  // (h, c) per layer
};
EncoderState zero_state(const ModelConfig& config, int batch);
EncoderState detach_state(const EncoderState& state);

struct EncoderOutput {
  std::vector<TensorPtr> outputs;  // final layer, one [batch x out_dim] per step
  EncoderState final_state;        // detached
};

// Embedding lookup -> embedding dropout -> stacked weight-dropped LSTM layers
// with variational dropout between layers and on the output. Eval mode is
// deterministic; train mode with all dropout probabilities zero matches it.
// token_ids is [batch][time]; all rows must have equal length >= 1.
EncoderOutput encoder_forward(Tape* tape, const Model& model,
                              const std::vector<std::vector<int>>& token_ids, bool train,
                              Rng& rng, const EncoderState* initial_state = nullptr);

// hidden [n x emb] -> logits [n x vocab]; tied weights share storage with the
// embedding, so logits == hidden * embedding^T + bias holds exactly.
TensorPtr lm_decode(Tape* tape, const TensorPtr& hidden, const LmHead& head);

// Concat-pooled classifier: [last step | max-over-time | mean-over-time]
// -> affine -> batchnorm -> ReLU -> dropout(train) -> affine -> logits.
// valid, when given, marks real (non-pad) positions, [batch x time] row-major.
TensorPtr classifier_logits(Tape* tape, Model& model, const std::vector<TensorPtr>& outputs,
                            const std::vector<std::uint8_t>* valid, bool train, Rng& rng);

// Softmax of classifier_logits; rows sum to 1. Argmax is the predicted class.
std::vector<double> classifier_forward(Model& model, const std::vector<TensorPtr>& outputs,
                                       const std::vector<std::uint8_t>* valid);

}  // namespace attrib
