#pragma once

#include <string>
#include <vector>

#include "attrib/model.hpp"
#include "attrib/tokenizer.hpp"

namespace attrib {

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::vector<double> precision, recall, f1;

  std::string to_json() const;
};

struct FoldSummary {
  std::vector<double> scores;
  double mean = 0.0;
  double margin_of_error = 0.0;   // half-width of the confidence interval
  double margin_percent = 0.0;    // margin as % of the mean
};

// exp(mean cross-entropy loss).
double perplexity(double mean_loss);

// Confusion matrix, accuracy, per-class precision/recall/F1 (F1 defined as 0
// when precision+recall is 0), macro and weighted averages. Labels must lie
// in [0, n_classes).
Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                        int n_classes);

// Mean and the 95% (by default) confidence margin t_{(1+c)/2, k-1} * s/sqrt(k)
// using the Student-t critical value, since fold counts are small.
FoldSummary kfold_summary(const std::vector<double>& scores, double confidence = 0.95);

// Autoregressive sampling from the language model. temperature 0 is greedy
// argmax; otherwise tokens are drawn from softmax(logits/temperature).
// The prompt must tokenize to at least one token.
std::string generate_text(Model& model, const Tokenizer& tokenizer, const std::string& prompt,
                          int n_tokens, double temperature, std::uint64_t seed);

}  // namespace attrib
