#include "attrib/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "attrib/errors.hpp"
#include "attrib/optim.hpp"
#include "json.hpp"

namespace attrib {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class StopWatch {
 public:
  StopWatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::vector<int> flat_targets(const LmBatch& batch) {
  const std::size_t b = batch.target.size(), t = batch.target[0].size();
  std::vector<int> out;
  out.reserve(b * t);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t k = 0; k < t; ++k) out.push_back(batch.target[r][k]);
  return out;
}

// Parameters, Adam state and freezing in one place; update order is the
// fixed model_parameters order.
struct Trainer {
  std::vector<NamedParam> params;
  std::vector<TensorPtr> tensors;
  std::vector<std::string> names;
  AdamState adam;

  Trainer(Model& model, const TrainConfig& cfg) {
    params = model_parameters(model);
    for (const auto& p : params) {
      tensors.push_back(p.tensor);
      names.push_back(p.name);
    }
    adam.beta2 = 0.99;
    adam.weight_decay = cfg.weight_decay;
    adam.init(tensors);
  }

  void rebind(Model& model) {  // after restore_model copies values in place
    params = model_parameters(model);
  }

  void zero_grads() {
    for (auto& t : tensors) t->zero_grad();
  }

  void reset_adam() { adam.init(tensors); }

  void step(const std::vector<double>& group_lrs, const LayerGroups& plan, double beta1) {
    adam.beta1 = beta1;
    std::vector<double> lrs(tensors.size());
    std::vector<std::uint8_t> trainable(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      lrs[i] = group_lrs[params[i].group];
      trainable[i] = plan.trainable(params[i].group) ? 1 : 0;
    }
    adam_step(tensors, names, adam, lrs, trainable);
  }
};

double tensor_loss(const TensorPtr& loss) {
  const double v = loss->data[0];
  if (!std::isfinite(v)) throw NumericError("training loss is non-finite");
  return v;
}

// --- language-model epochs ---------------------------------------------------

double lm_train_epoch(Model& model, Trainer& trainer, const std::vector<LmBatch>& batches,
                      double lr_max, const LayerGroups& plan, const TrainConfig& cfg,
                      Rng& dropout_rng) {
  EncoderState state = zero_state(model.config, static_cast<int>(batches[0].input.size()));
  double loss_sum = 0.0;
  const auto n = static_cast<std::int64_t>(batches.size());
  for (std::int64_t k = 0; k < n; ++k) {
    Tape tape;
    auto enc = encoder_forward(&tape, model, batches[k].input, true, dropout_rng, &state);
    state = enc.final_state;
    auto flat = stack_time(&tape, enc.outputs);
    auto logits = lm_decode(&tape, flat, *model.lm);
    auto loss = cross_entropy_flat(&tape, logits, flat_targets(batches[k]));
    loss_sum += tensor_loss(loss);
    trainer.zero_grads();
    tape.backward(loss);
    const double lr = sgdr(k, n, lr_max);
    const double beta1 = beta1_for_lr(lr, 0.0, lr_max, cfg.beta1_max, cfg.beta1_min);
    trainer.step(std::vector<double>(LayerGroups::kCount, lr), plan, beta1);
  }
  return loss_sum / static_cast<double>(n);
}

struct LmStreams {
  std::vector<int> train, valid;
};

// 90% head for training, 10% tail for validation.
LmStreams split_lm_stream(const std::vector<int>& ids) {
  LmStreams s;
  const std::size_t cut = ids.size() * 9 / 10;
  s.train.assign(ids.begin(), ids.begin() + cut);
  s.valid.assign(ids.begin() + cut, ids.end());
  return s;
}

LayerGroups lm_plan(Stage stage, int epochs_done) {
  if (stage == Stage::pretrain) return unfreeze_plan(Stage::pretrain, 0);
  const int step = epochs_done < 6 ? epochs_done / 2 : LayerGroups::kCount - 1;
  return unfreeze_plan(stage, step);
}

LmResult run_lm_stage(Model model, const Tokenizer& tokenizer, const std::vector<int>& ids,
                      const TrainConfig& cfg, Stage stage) {
  cfg.validate();
  if (model.config.vocab_size != tokenizer.vocab.size())
    throw DataError("vocabulary mismatch: model has " +
                    std::to_string(model.config.vocab_size) + " tokens, tokenizer " +
                    std::to_string(tokenizer.vocab.size()));
  StopWatch watch;
  const LmStreams streams = split_lm_stream(ids);
  const auto batches = make_lm_batches(streams.train, cfg.batch_size, cfg.bptt);

  Trainer trainer(model, cfg);
  Rng dropout_rng = Rng(cfg.seed).stream(rng_stream::kDropout);

  LmResult result;
  ModelSnapshot best = snapshot_model(model);
  double best_valid = kInf;
  double prev_valid = kInf;
  int rises = 0;
  std::size_t lr_idx = 0;
  const bool unfreeze = stage != Stage::pretrain;

  for (int epoch = 0; epoch < cfg.epochs && lr_idx < cfg.lrs.size(); ++epoch) {
    const LayerGroups plan = lm_plan(stage, epoch);
    double train_loss;
    try {
      train_loss = lm_train_epoch(model, trainer, batches, cfg.lrs[lr_idx], plan, cfg,
                                  dropout_rng);
    } catch (const NumericError& e) {
      std::cerr << "divergence: " << e.what() << "\n";
      result.report.diverged = true;
      break;
    }
    const double valid_loss =
        lm_validation_loss(model, streams.valid, cfg.batch_size, cfg.bptt);
    result.report.epochs.push_back(
        {epoch + 1, train_loss, valid_loss, perplexity(valid_loss)});
    std::cout << stage_name(stage) << " epoch " << (epoch + 1) << " lr " << cfg.lrs[lr_idx]
              << " train_loss " << train_loss << " valid_loss " << valid_loss << " ppl "
              << perplexity(valid_loss) << "\n";
    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      best = snapshot_model(model);
    }
    const bool early_stop_active = !unfreeze || epoch >= 6;
    rises = valid_loss > prev_valid ? rises + 1 : 0;
    prev_valid = valid_loss;
    if (early_stop_active && rises >= cfg.early_stop_patience) {
      // Early stop consumes the learning-rate list: resume from the best
      // weights at the next rate, or finish when the list is spent.
      ++lr_idx;
      restore_model(model, best);
      trainer.reset_adam();
      rises = 0;
      prev_valid = kInf;
    }
  }
  restore_model(model, best);
  result.report.best_valid_loss = best_valid;
  result.report.wall_clock_sec = watch.seconds();
  result.model = std::move(model);
  return result;
}

// --- classifier batching -----------------------------------------------------

struct EncodedDoc {
  std::vector<int> ids;
  int label = 0;
};

struct DocBatch {
  std::vector<std::vector<int>> ids;  // left-padded [batch][time]
  std::vector<std::uint8_t> valid;    // [batch x time] row-major
  std::vector<int> labels;
};

std::vector<EncodedDoc> encode_docs(const Tokenizer& tokenizer,
                                    const std::vector<Sample>& samples,
                                    const std::vector<std::string>& authors,
                                    int max_doc_tokens) {
  std::vector<EncodedDoc> docs;
  docs.reserve(samples.size());
  for (const auto& s : samples) {
    EncodedDoc d;
    d.ids = tokenizer.encode(sample_text(s));
    if (static_cast<int>(d.ids.size()) > max_doc_tokens)
      d.ids.erase(d.ids.begin(),
                  d.ids.end() - max_doc_tokens);  // keep the final tokens
    const auto it = std::lower_bound(authors.begin(), authors.end(), s.author);
    if (it == authors.end() || *it != s.author)
      throw DataError("sample author '" + s.author + "' not in the label set");
    d.label = static_cast<int>(it - authors.begin());
    docs.push_back(std::move(d));
  }
  return docs;
}

DocBatch assemble_batch(const std::vector<EncodedDoc>& docs, const std::vector<std::size_t>& order,
                        std::size_t from, std::size_t to, int pad_id) {
  DocBatch b;
  std::size_t max_len = 0;
  for (std::size_t i = from; i < to; ++i)
    max_len = std::max(max_len, docs[order[i]].ids.size());
  for (std::size_t i = from; i < to; ++i) {
    const auto& d = docs[order[i]];
    std::vector<int> row(max_len, pad_id);
    std::copy(d.ids.begin(), d.ids.end(), row.end() - d.ids.size());
    b.ids.push_back(std::move(row));
    for (std::size_t t = 0; t < max_len; ++t)
      b.valid.push_back(t >= max_len - d.ids.size() ? 1 : 0);
    b.labels.push_back(d.label);
  }
  return b;
}

double classifier_valid_loss(Model& model, const std::vector<EncodedDoc>& docs, int batch_size,
                             int pad_id) {
  Rng unused(0);
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  double loss_sum = 0.0;
  std::int64_t count = 0;
  for (std::size_t from = 0; from < docs.size(); from += batch_size) {
    const std::size_t to = std::min(docs.size(), from + batch_size);
    DocBatch b = assemble_batch(docs, order, from, to, pad_id);
    auto enc = encoder_forward(nullptr, model, b.ids, false, unused);
    auto logits = classifier_logits(nullptr, model, enc.outputs, &b.valid, false, unused);
    auto loss = cross_entropy_flat(nullptr, logits, b.labels);
    loss_sum += loss->data[0] * static_cast<double>(to - from);
    count += static_cast<std::int64_t>(to - from);
  }
  return loss_sum / static_cast<double>(count);
}

}  // namespace

// --- public API ----------------------------------------------------------------

std::string StageReport::to_json() const {
  nlohmann::json j;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"valid_loss", e.valid_loss},
                           {"valid_perplexity", e.valid_perplexity}});
  j["best_valid_loss"] = best_valid_loss;
  j["wall_clock_sec"] = wall_clock_sec;
  j["diverged"] = diverged;
  j["checkpoint"] = checkpoint_path;
  return j.dump(2);
}

std::vector<LmBatch> make_lm_batches(const std::vector<int>& ids, int batch_size, int bptt) {
  if (batch_size < 1 || bptt < 1)
    throw UsageError("make_lm_batches: batch_size and bptt must be >= 1");
  const std::size_t need = static_cast<std::size_t>(batch_size) * (bptt + 1);
  if (ids.size() < need)
    throw DataError("token stream of " + std::to_string(ids.size()) +
                    " ids is too short for batch_size " + std::to_string(batch_size) +
                    " x (bptt " + std::to_string(bptt) + " + 1)");
  const std::size_t lane_len = ids.size() / batch_size;
  const std::size_t n_batches = (lane_len - 1) / bptt;
  std::vector<LmBatch> batches(n_batches);
  for (std::size_t k = 0; k < n_batches; ++k) {
    auto& b = batches[k];
    b.input.assign(batch_size, std::vector<int>(bptt));
    b.target.assign(batch_size, std::vector<int>(bptt));
    for (int lane = 0; lane < batch_size; ++lane) {
      const std::size_t base = static_cast<std::size_t>(lane) * lane_len + k * bptt;
      for (int t = 0; t < bptt; ++t) {
        b.input[lane][t] = ids[base + t];
        b.target[lane][t] = ids[base + t + 1];
      }
    }
  }
  return batches;
}

ModelSnapshot snapshot_model(const Model& model) {
  ModelSnapshot s;
  for (const auto& p : model_parameters(model)) s.values.push_back(p.tensor->data);
  if (model.classifier) {
    s.bn_mean = model.classifier->bn.running_mean;
    s.bn_var = model.classifier->bn.running_var;
  }
  return s;
}

void restore_model(Model& model, const ModelSnapshot& snapshot) {
  const auto params = model_parameters(model);
  if (params.size() != snapshot.values.size())
    throw std::invalid_argument("restore_model: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor->data = snapshot.values[i];
  if (model.classifier) {
    model.classifier->bn.running_mean = snapshot.bn_mean;
    model.classifier->bn.running_var = snapshot.bn_var;
  }
}

Model clone_model(const Model& model) {
  Model m;
  m.config = model.config;
  auto copy = [](const TensorPtr& t) {
    auto c = Tensor::copy_of(*t);
    c->requires_grad = t->requires_grad;
    c->ensure_grad();
    return c;
  };
  m.embedding = copy(model.embedding);
  for (const auto& l : model.layers)
    m.layers.push_back({copy(l.w), copy(l.u), copy(l.b), l.in_dim, l.out_dim});
  if (model.lm) {
    LmHead h;
    h.weight = model.config.tie_weights ? m.embedding : copy(model.lm->weight);
    h.bias = copy(model.lm->bias);
    m.lm = std::move(h);
  }
  if (model.classifier) {
    const auto& c = *model.classifier;
    ClassifierHead h;
    h.w1 = copy(c.w1);
    h.b1 = copy(c.b1);
    h.gamma = copy(c.gamma);
    h.beta = copy(c.beta);
    h.w2 = copy(c.w2);
    h.b2 = copy(c.b2);
    h.bn = c.bn;
    m.classifier = std::move(h);
  }
  return m;
}

double lm_validation_loss(const Model& model, const std::vector<int>& ids, int batch_size,
                          int bptt) {
  if (!model.lm) throw DataError("lm_validation_loss: model has no language-model head");
  const int feasible = static_cast<int>(ids.size() / (bptt + 1));
  const int bs = std::max(1, std::min(batch_size, feasible));
  const auto batches = make_lm_batches(ids, bs, bptt);
  Rng unused(0);
  Model& m = const_cast<Model&>(model);  // eval mode mutates nothing
  EncoderState state = zero_state(model.config, bs);
  double loss_sum = 0.0;
  for (const auto& batch : batches) {
    auto enc = encoder_forward(nullptr, m, batch.input, false, unused, &state);
    state = enc.final_state;
    auto flat = stack_time(nullptr, enc.outputs);
    auto logits = lm_decode(nullptr, flat, *m.lm);
    auto loss = cross_entropy_flat(nullptr, logits, flat_targets(batch));
    loss_sum += loss->data[0];
  }
  return loss_sum / static_cast<double>(batches.size());
}

LmResult pretrain_lm(const std::string& corpus_text, const Tokenizer& tokenizer,
                     const ModelConfig& model_config, const TrainConfig& config) {
  ModelConfig mc = model_config;
  mc.vocab_size = tokenizer.vocab.size();
  mc.n_classes = 0;
  mc.dropout_multiplier = config.dropout_multiplier;
  Rng init_rng = Rng(config.seed).stream(rng_stream::kInit);
  Model model = init_model(mc, init_rng);
  return run_lm_stage(std::move(model), tokenizer, tokenizer.encode(corpus_text), config,
                      Stage::pretrain);
}

LmResult finetune_lm(const Model& lm, const Tokenizer& tokenizer,
                     const std::vector<Sample>& train_samples, const TrainConfig& config) {
  if (!lm.lm)
    throw DataError("finetune expects a language-model checkpoint (head shape mismatch)");
  if (train_samples.empty()) throw DataError("finetune_lm: no training samples");
  std::vector<int> ids;
  for (const auto& s : train_samples) {
    const auto doc = tokenizer.encode(sample_text(s));
    ids.insert(ids.end(), doc.begin(), doc.end());
  }
  Model model = clone_model(lm);
  model.config.dropout_multiplier = config.dropout_multiplier;
  return run_lm_stage(std::move(model), tokenizer, ids, config, Stage::finetune);
}

ClassifierResult train_classifier(const Model& encoder_source, const Tokenizer& tokenizer,
                                  const std::vector<Sample>& labeled,
                                  const TrainConfig& config) {
  config.validate();
  const auto authors = author_set(labeled);
  if (authors.size() < 2) throw DataError("train_classifier: need at least 2 classes");
  if (encoder_source.config.vocab_size != tokenizer.vocab.size())
    throw DataError("vocabulary mismatch between encoder and tokenizer");

  StopWatch watch;
  Model model = clone_model(encoder_source);
  model.config.dropout_multiplier = config.dropout_multiplier;
  Rng root(config.seed);
  Rng init_rng = root.stream(rng_stream::kInit);
  Rng dropout_rng = root.stream(rng_stream::kDropout);
  Rng shuffle_rng = root.stream(rng_stream::kShuffle);
  attach_classifier_head(model, static_cast<int>(authors.size()), init_rng);

  auto [train_samples, held_out] = stratified_split(labeled, 0.2, config.seed);
  const int pad_id = tokenizer.vocab.specials.pad;
  const auto train_docs = encode_docs(tokenizer, train_samples, authors, config.max_doc_tokens);
  const auto valid_docs = encode_docs(tokenizer, held_out, authors, config.max_doc_tokens);

  Trainer trainer(model, config);
  ClassifierResult result;
  ModelSnapshot best = snapshot_model(model);
  double best_valid = kInf;
  double prev_valid = kInf;
  int rises = 0;
  int epochs_done = 0;

  // ULMFiT classifier schedule: head 2 epochs, +group 2, +group 2, full 6.
  struct Phase {
    int plan_step;
    int epochs;
  };
  const Phase phases[] = {{0, 2}, {1, 2}, {2, 2}, {LayerGroups::kCount - 1, 6}};
  const double lr_max = config.lrs.front();
  const auto group_lr_max = discriminative_lrs(lr_max, LayerGroups::kCount);

  for (const auto& phase : phases) {
    if (epochs_done >= config.epochs || result.report.diverged) break;
    const LayerGroups plan = unfreeze_plan(Stage::classify, phase.plan_step);
    const int phase_epochs = std::min(phase.epochs, config.epochs - epochs_done);
    const std::size_t n_batches =
        (train_docs.size() + config.batch_size - 1) / config.batch_size;
    const std::int64_t total_steps =
        static_cast<std::int64_t>(phase_epochs) * static_cast<std::int64_t>(n_batches);
    std::int64_t step_in_phase = 0;
    const bool final_phase = phase.plan_step == LayerGroups::kCount - 1;
    for (int e = 0; e < phase_epochs; ++e) {
      std::vector<std::size_t> order(train_docs.size());
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
      double loss_sum = 0.0;
      std::int64_t n_steps = 0;
      try {
        for (std::size_t from = 0; from < train_docs.size();
             from += config.batch_size, ++step_in_phase) {
          const std::size_t to = std::min(train_docs.size(),
                                          from + static_cast<std::size_t>(config.batch_size));
          if (to - from < 2 && train_docs.size() > 1) continue;  // batchnorm needs n >= 2
          DocBatch b = assemble_batch(train_docs, order, from, to, pad_id);
          Tape tape;
          auto enc = encoder_forward(&tape, model, b.ids, true, dropout_rng);
          auto logits = classifier_logits(&tape, model, enc.outputs, &b.valid, true, dropout_rng);
          auto loss = cross_entropy_flat(&tape, logits, b.labels);
          loss_sum += tensor_loss(loss);
          ++n_steps;
          trainer.zero_grads();
          tape.backward(loss);
          const double frac = stlr(step_in_phase, total_steps, 1.0);
          std::vector<double> lrs(LayerGroups::kCount);
          for (int g = 0; g < LayerGroups::kCount; ++g) lrs[g] = group_lr_max[g] * frac;
          const double beta1 =
              beta1_for_lr(frac, 1.0 / 32.0, 1.0, config.beta1_max, config.beta1_min);
          trainer.step(lrs, plan, beta1);
        }
      } catch (const NumericError& err) {
        std::cerr << "divergence: " << err.what() << "\n";
        result.report.diverged = true;
        break;
      }
      const double train_loss = n_steps > 0 ? loss_sum / static_cast<double>(n_steps) : 0.0;
      const double valid_loss =
          classifier_valid_loss(model, valid_docs, config.batch_size, pad_id);
      ++epochs_done;
      result.report.epochs.push_back({epochs_done, train_loss, valid_loss, 0.0});
      std::cout << "classify epoch " << epochs_done << " (unfreeze step " << phase.plan_step
                << ") train_loss " << train_loss << " valid_loss " << valid_loss << "\n";
      if (valid_loss < best_valid) {
        best_valid = valid_loss;
        best = snapshot_model(model);
      }
      rises = valid_loss > prev_valid ? rises + 1 : 0;
      prev_valid = valid_loss;
      if (final_phase && rises >= config.early_stop_patience) {
        epochs_done = config.epochs;  // stop everything
        break;
      }
    }
  }
  restore_model(model, best);
  result.report.best_valid_loss = best_valid;
  result.report.wall_clock_sec = watch.seconds();
  result.authors = authors;
  result.metrics = evaluate_classifier(model, tokenizer, authors, held_out,
                                       config.max_doc_tokens);
  result.model = std::move(model);
  return result;
}

Metrics evaluate_classifier(Model& model, const Tokenizer& tokenizer,
                            const std::vector<std::string>& authors,
                            const std::vector<Sample>& samples, int max_doc_tokens) {
  if (!model.classifier) throw DataError("evaluate_classifier: no classifier head");
  const auto docs = encode_docs(tokenizer, samples, authors, max_doc_tokens);
  std::vector<int> predictions, labels;
  for (const auto& d : docs) {
    Rng unused(0);
    std::vector<std::vector<int>> batch{d.ids};
    auto enc = encoder_forward(nullptr, model, batch, false, unused);
    const auto probs = classifier_forward(model, enc.outputs, nullptr);
    predictions.push_back(static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin()));
    labels.push_back(d.label);
  }
  return compute_metrics(predictions, labels, static_cast<int>(authors.size()));
}

Prediction predict_author(Model& model, const Tokenizer& tokenizer, const std::string& text,
                          int max_doc_tokens) {
  if (!model.classifier) throw DataError("predict_author: model has no classifier head");
  std::vector<int> ids = tokenizer.encode(text);
  if (ids.size() <= 2)  // bos + eos only
    throw DataError("predict_author: text is empty after tokenization");
  if (static_cast<int>(ids.size()) > max_doc_tokens)
    ids.erase(ids.begin(), ids.end() - max_doc_tokens);
  Rng unused(0);
  std::vector<std::vector<int>> batch{ids};
  auto enc = encoder_forward(nullptr, model, batch, false, unused);
  Prediction p;
  p.probabilities = classifier_forward(model, enc.outputs, nullptr);
  p.author_id = static_cast<int>(
      std::max_element(p.probabilities.begin(), p.probabilities.end()) -
      p.probabilities.begin());
  return p;
}

LrCurve lr_find_lm(Model& model, const std::vector<int>& ids, const TrainConfig& config,
                   const LrFindOptions& opts) {
  if (!model.lm) throw DataError("lr_find_lm: model has no language-model head");
  const auto batches = make_lm_batches(ids, config.batch_size, config.bptt);
  const ModelSnapshot before = snapshot_model(model);
  Trainer trainer(model, config);
  const AdamState adam_before = trainer.adam;
  Rng dropout_rng = Rng(config.seed).stream(rng_stream::kDropout);
  EncoderState state = zero_state(model.config, config.batch_size);
  std::size_t k = 0;
  const LayerGroups plan = unfreeze_plan(Stage::pretrain, 0);
  auto step = [&](double lr) {
    const auto& batch = batches[k % batches.size()];
    ++k;
    Tape tape;
    auto enc = encoder_forward(&tape, model, batch.input, true, dropout_rng, &state);
    state = enc.final_state;
    auto flat = stack_time(&tape, enc.outputs);
    auto logits = lm_decode(&tape, flat, *model.lm);
    auto loss = cross_entropy_flat(&tape, logits, flat_targets(batch));
    const double value = loss->data[0];
    if (std::isfinite(value)) {
      trainer.zero_grads();
      tape.backward(loss);
      try {
        trainer.step(std::vector<double>(LayerGroups::kCount, lr), plan, config.beta1_max);
      } catch (const NumericError&) {
        // The sweep is expected to diverge at large rates; the curve records it.
      }
    }
    return value;
  };
  LrCurve curve = lr_find(step, opts);
  restore_model(model, before);
  trainer.adam = adam_before;
  return curve;
}

}  // namespace attrib
