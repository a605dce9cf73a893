#include "attrib/eval.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace attrib {

double perplexity(double mean_loss) {
  if (!std::isfinite(mean_loss)) throw std::invalid_argument("perplexity: non-finite loss");
  return std::exp(mean_loss);
}

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                        int n_classes) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw std::invalid_argument("compute_metrics: predictions/labels must have equal length >= 1");
  Metrics m;
  m.confusion.assign(n_classes, std::vector<std::int64_t>(n_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes || predictions[i] < 0 ||
        predictions[i] >= n_classes)
      throw std::out_of_range("compute_metrics: label outside class set at index " +
                              std::to_string(i));
    m.confusion[labels[i]][predictions[i]] += 1;
  }
  std::int64_t correct = 0;
  for (int c = 0; c < n_classes; ++c) correct += m.confusion[c][c];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());

  m.precision.assign(n_classes, 0.0);
  m.recall.assign(n_classes, 0.0);
  m.f1.assign(n_classes, 0.0);
  double weighted = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    std::int64_t tp = m.confusion[c][c], pred = 0, actual = 0;
    for (int k = 0; k < n_classes; ++k) {
      pred += m.confusion[k][c];
      actual += m.confusion[c][k];
    }
    m.precision[c] = pred > 0 ? static_cast<double>(tp) / pred : 0.0;
    m.recall[c] = actual > 0 ? static_cast<double>(tp) / actual : 0.0;
    const double pr = m.precision[c] + m.recall[c];
    m.f1[c] = pr > 0.0 ? 2.0 * m.precision[c] * m.recall[c] / pr : 0.0;
    m.macro_f1 += m.f1[c] / n_classes;
    weighted += m.f1[c] * static_cast<double>(actual);
  }
  m.weighted_f1 = weighted / static_cast<double>(labels.size());
  return m;
}

std::string Metrics::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["weighted_f1"] = weighted_f1;
  j["per_class"] = nlohmann::json::array();
  for (std::size_t c = 0; c < f1.size(); ++c)
    j["per_class"].push_back(
        {{"precision", precision[c]}, {"recall", recall[c]}, {"f1", f1[c]}});
  j["confusion"] = confusion;
  return j.dump(2);
}

FoldSummary kfold_summary(const std::vector<double>& scores, double confidence) {
  const std::size_t k = scores.size();
  if (k < 2) throw std::invalid_argument("kfold_summary: need at least 2 folds");
  FoldSummary s;
  s.scores = scores;
  for (double v : scores) s.mean += v;
  s.mean /= static_cast<double>(k);
  double ss = 0.0;
  for (double v : scores) ss += (v - s.mean) * (v - s.mean);
  const double sd = std::sqrt(ss / static_cast<double>(k - 1));
  const boost::math::students_t dist(static_cast<double>(k - 1));
  const double t_crit = boost::math::quantile(dist, (1.0 + confidence) / 2.0);
  s.margin_of_error = t_crit * sd / std::sqrt(static_cast<double>(k));
  s.margin_percent = s.mean != 0.0 ? 100.0 * s.margin_of_error / std::fabs(s.mean) : 0.0;
  return s;
}

std::string generate_text(Model& model, const Tokenizer& tokenizer, const std::string& prompt,
                          int n_tokens, double temperature, std::uint64_t seed) {
  if (n_tokens < 1) throw std::invalid_argument("generate_text: n_tokens must be >= 1");
  if (temperature < 0.0) throw std::invalid_argument("generate_text: negative temperature");
  if (!model.lm) throw std::runtime_error("generate_text: model has no language-model head");
  std::vector<int> ids = tokenizer.encode(prompt);
  if (!ids.empty() && ids.back() == tokenizer.vocab.specials.eos) ids.pop_back();
  if (ids.size() <= 1)  // bos only
    throw std::invalid_argument("generate_text: prompt is empty after tokenization");

  Rng rng = Rng(seed).stream(rng_stream::kSampling);
  Rng dropout_rng(0);  // eval mode draws nothing

  // Warm the state on the prompt, then sample token by token.
  EncoderState state = zero_state(model.config, 1);
  std::vector<int> generated = ids;
  TensorPtr logits;
  {
    std::vector<std::vector<int>> batch{ids};
    auto out = encoder_forward(nullptr, model, batch, false, dropout_rng, &state);
    state = out.final_state;
    logits = lm_decode(nullptr, out.outputs.back(), *model.lm);
  }
  for (int i = 0; i < n_tokens; ++i) {
    int next;
    if (temperature == 0.0) {
      next = 0;
      for (int v = 1; v < logits->cols(); ++v)
        if (logits->data[v] > logits->data[next]) next = v;
    } else {
      const auto probs = softmax_rows(*logits, temperature);
      double u = rng.next_double(), acc = 0.0;
      next = logits->cols() - 1;
      for (int v = 0; v < logits->cols(); ++v) {
        acc += probs[v];
        if (u < acc) {
          next = v;
          break;
        }
      }
    }
    generated.push_back(next);
    std::vector<std::vector<int>> step{{next}};
    auto out = encoder_forward(nullptr, model, step, false, dropout_rng, &state);
    state = out.final_state;
    logits = lm_decode(nullptr, out.outputs.back(), *model.lm);
  }
  return tokenizer.decode(generated);
}

}  // namespace attrib
