#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attrib/model.hpp"
#include "attrib/schedule.hpp"

namespace attrib {

// Settings for one training stage. lrs holds the comma-separated learning
// rate list: when early stopping triggers with rates left, training resumes
// from the best checkpoint at the next rate.
struct TrainConfig {
  Stage stage = Stage::pretrain;
  int epochs = 1;
  int batch_size = 32;
  int bptt = 70;
  std::vector<double> lrs{0.01};
  double weight_decay = 0.1;
  double dropout_multiplier = 0.5;
  double beta1_max = 0.8;  // momentums (0.8, 0.7)
  double beta1_min = 0.7;
  std::uint64_t seed = 0;
  int early_stop_patience = 2;
  // Classifier documents longer than this keep only their final tokens.
  int max_doc_tokens = 1400;

  void validate() const;
};

std::string stage_name(Stage stage);
Stage stage_from_name(const std::string& name);
std::vector<double> parse_lr_list(const std::string& text);

// Mirrors a JSON config file: a TrainConfig plus model dimensions and paths.
// Unknown keys anywhere in the file are rejected.
struct RunConfig {
  TrainConfig train;
  ModelConfig model;
  std::string corpus_dir;
  std::string tokenizer_mode = "word";
  std::string vocab_file;
  std::string subword_file;
  std::string checkpoint_in;
  std::string checkpoint_out;

  static RunConfig from_json_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);
  std::string to_json() const;
};

}  // namespace attrib
