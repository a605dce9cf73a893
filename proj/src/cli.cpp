#include "attrib/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "attrib/checkpoint.hpp"
#include "attrib/config.hpp"
#include "attrib/corpus.hpp"
#include "attrib/errors.hpp"
#include "attrib/eval.hpp"
#include "attrib/pipeline.hpp"
#include "attrib/text.hpp"
#include "attrib/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace attrib {

namespace {

Tokenizer load_tokenizer(const std::string& mode_name, const std::string& vocab_file,
                         const std::string& subword_file) {
  Tokenizer t;
  t.mode = token_mode_from_name(mode_name);
  if (vocab_file.empty()) throw UsageError("a vocab file is required (vocab_file)");
  t.vocab = Vocab::load(vocab_file, t.mode);
  if (t.mode == TokenMode::subword) {
    if (subword_file.empty())
      throw UsageError("subword mode requires a subword model file (subword_file)");
    t.subword = SubwordModel::load(subword_file);
  }
  return t;
}

Tokenizer tokenizer_for_checkpoint(const LoadedCheckpoint& ckpt, const RunConfig& cfg) {
  const std::string vocab = !cfg.vocab_file.empty() ? cfg.vocab_file : ckpt.vocab_path;
  const std::string sub = !cfg.subword_file.empty() ? cfg.subword_file : ckpt.subword_path;
  if (vocab.empty())
    throw DataError("checkpoint has no embedded vocab and none was configured");
  if (ckpt.meta.vocab_fingerprint != 0 &&
      fnv1a64_file(vocab) != ckpt.meta.vocab_fingerprint)
    throw DataError("tokenizer fingerprint mismatch: " + vocab +
                    " is not the vocabulary this checkpoint was trained with");
  return load_tokenizer(ckpt.meta.tokenizer_mode, vocab, sub);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

void save_stage_checkpoint(const Model& model, const RunConfig& cfg, Stage stage,
                           const std::string& out_dir, StageReport& report) {
  CheckpointMeta meta;
  meta.model_config = model.config;
  meta.train_config = cfg.train;
  meta.train_config.stage = stage;
  meta.tokenizer_mode = cfg.tokenizer_mode;
  meta.has_subword = !cfg.subword_file.empty();
  if (!cfg.vocab_file.empty()) meta.vocab_fingerprint = fnv1a64_file(cfg.vocab_file);
  save_checkpoint(model, meta, out_dir, cfg.vocab_file, cfg.subword_file);
  report.checkpoint_path = out_dir;
  write_text_file(out_dir + ".report.json", report.to_json() + "\n");
  std::cout << "checkpoint written to " << out_dir << "\n";
}

RunConfig require_config(const std::string& config_path, std::optional<std::uint64_t> seed,
                         const std::string& out_dir) {
  if (config_path.empty()) throw UsageError("--config is required");
  RunConfig cfg = RunConfig::from_json_file(config_path);
  if (seed) cfg.train.seed = *seed;
  if (!out_dir.empty()) cfg.checkpoint_out = out_dir;
  return cfg;
}

std::vector<Sample> load_samples(const std::string& corpus_dir, std::size_t chunk_words) {
  const auto docs = ingest(corpus_dir);
  auto samples = chunk_documents(docs, chunk_words);
  if (samples.empty())
    throw DataError("corpus " + corpus_dir + " yields no " + std::to_string(chunk_words) +
                    "-word samples");
  return samples;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"LSTM language-model transfer learning for authorship attribution"};
  app.require_subcommand(1);

  std::string config_path, out_dir, corpus_dir, mode = "word", vocab_out, model_out;
  std::string checkpoint_dir, text_file, prompt;
  std::optional<std::uint64_t> seed;
  std::size_t chunk_words = 750;
  std::size_t max_size = 60000;
  std::int64_t min_count = 3;
  std::size_t target_size = 29996;  // leaves room for the four specials
  int n_tokens = 100, k_folds = 5, n_authors = 2;
  double temperature = 0.8;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "seed for all randomness");
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_dir, "output directory");
  };

  auto* build_vocab = app.add_subcommand("build-vocab", "build a word or character vocabulary");
  build_vocab->add_option("--corpus", corpus_dir)->required();
  build_vocab->add_option("--mode", mode, "word|char");
  build_vocab->add_option("--vocab-out", vocab_out)->required();
  build_vocab->add_option("--max-size", max_size);
  build_vocab->add_option("--min-count", min_count);

  auto* train_subword = app.add_subcommand("train-subword", "train the unigram subword model");
  train_subword->add_option("--corpus", corpus_dir)->required();
  train_subword->add_option("--model-out", model_out)->required();
  train_subword->add_option("--vocab-out", vocab_out)->required();
  train_subword->add_option("--target-size", target_size);
  train_subword->add_option("--min-count", min_count);

  auto* pretrain = app.add_subcommand("pretrain", "train the language model from scratch");
  add_common(pretrain);
  auto* finetune = app.add_subcommand("finetune", "fine-tune a pretrained language model");
  add_common(finetune);
  finetune->add_option("--chunk-words", chunk_words);
  auto* classify = app.add_subcommand("train-classifier", "train the authorship classifier");
  add_common(classify);
  classify->add_option("--chunk-words", chunk_words);

  auto* predict = app.add_subcommand("predict", "predict the author of a text");
  predict->add_option("--checkpoint", checkpoint_dir)->required();
  predict->add_option("--text-file", text_file)->required();
  predict->add_option("--config", config_path);

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a classifier on a labeled corpus");
  evaluate->add_option("--checkpoint", checkpoint_dir)->required();
  evaluate->add_option("--corpus", corpus_dir)->required();
  evaluate->add_option("--chunk-words", chunk_words);
  evaluate->add_option("--config", config_path);

  auto* kfold = app.add_subcommand("kfold", "k-fold cross-validation of the classifier");
  add_common(kfold);
  kfold->add_option("--k", k_folds);
  kfold->add_option("--chunk-words", chunk_words);

  auto* lr_find_cmd = app.add_subcommand("lr-find", "learning-rate range sweep");
  add_common(lr_find_cmd);

  auto* generate = app.add_subcommand("generate", "generate text from a language model");
  generate->add_option("--checkpoint", checkpoint_dir)->required();
  generate->add_option("--prompt", prompt)->required();
  generate->add_option("--n-tokens", n_tokens);
  generate->add_option("--temperature", temperature);
  generate->add_option("--seed", seed);

  auto* subset = app.add_subcommand("subset", "balanced author subset manifest");
  subset->add_option("--corpus", corpus_dir)->required();
  subset->add_option("--authors", n_authors)->required();
  subset->add_option("--chunk-words", chunk_words);
  subset->add_option("--seed", seed);
  subset->add_option("--out", out_dir);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  if (build_vocab->parsed()) {
    const std::string text = read_corpus_text(corpus_dir);
    Vocab v;
    if (mode == "word") {
      v = build_word_vocab(apply_repetition_markers(pre_tokenize(text)), max_size, min_count);
    } else if (mode == "char" || mode == "character") {
      v = build_char_vocab(text);
    } else {
      throw UsageError("build-vocab handles word|char; train-subword builds subword vocabs");
    }
    v.save(vocab_out);
    std::cout << "vocab of " << v.size() << " tokens written to " << vocab_out << "\n";
    return 0;
  }

  if (train_subword->parsed()) {
    const std::string text = read_corpus_text(corpus_dir);
    SubwordModel sm = train_unigram(text, target_size, min_count);
    sm.save(model_out);
    Vocab v = vocab_from_subword(sm);
    v.save(vocab_out);
    std::cout << "subword model of " << sm.pieces.size() << " pieces written to " << model_out
              << ", vocab to " << vocab_out << "\n";
    return 0;
  }

  if (pretrain->parsed()) {
    RunConfig cfg = require_config(config_path, seed, out_dir);
    cfg.train.stage = Stage::pretrain;
    Tokenizer tok = load_tokenizer(cfg.tokenizer_mode, cfg.vocab_file, cfg.subword_file);
    const std::string text = read_corpus_text(cfg.corpus_dir);
    LmResult res = pretrain_lm(text, tok, cfg.model, cfg.train);
    if (cfg.checkpoint_out.empty()) throw UsageError("checkpoint_out (or --out) is required");
    save_stage_checkpoint(res.model, cfg, Stage::pretrain, cfg.checkpoint_out, res.report);
    return res.report.diverged ? 3 : 0;
  }

  if (finetune->parsed()) {
    RunConfig cfg = require_config(config_path, seed, out_dir);
    cfg.train.stage = Stage::finetune;
    LoadedCheckpoint ckpt = load_checkpoint(cfg.checkpoint_in);
    if (ckpt.meta.model_config.n_classes > 0)
      throw DataError("head shape mismatch: cannot fine-tune a classifier checkpoint as a "
                      "language model");
    if (cfg.vocab_file.empty()) cfg.vocab_file = ckpt.vocab_path;
    if (cfg.subword_file.empty()) cfg.subword_file = ckpt.subword_path;
    Tokenizer tok = tokenizer_for_checkpoint(ckpt, cfg);
    auto samples = load_samples(cfg.corpus_dir, chunk_words);
    auto [train_split, test_split] = stratified_split(samples, 0.2, cfg.train.seed);
    LmResult res = finetune_lm(ckpt.model, tok, train_split, cfg.train);
    if (cfg.checkpoint_out.empty()) throw UsageError("checkpoint_out (or --out) is required");
    save_stage_checkpoint(res.model, cfg, Stage::finetune, cfg.checkpoint_out, res.report);
    std::cout << "fine-tuned perplexity " << perplexity(res.report.best_valid_loss) << "\n";
    return res.report.diverged ? 3 : 0;
  }

  if (classify->parsed()) {
    RunConfig cfg = require_config(config_path, seed, out_dir);
    cfg.train.stage = Stage::classify;
    LoadedCheckpoint ckpt = load_checkpoint(cfg.checkpoint_in);
    if (cfg.vocab_file.empty()) cfg.vocab_file = ckpt.vocab_path;
    if (cfg.subword_file.empty()) cfg.subword_file = ckpt.subword_path;
    Tokenizer tok = tokenizer_for_checkpoint(ckpt, cfg);
    auto samples = load_samples(cfg.corpus_dir, chunk_words);
    ClassifierResult res = train_classifier(ckpt.model, tok, samples, cfg.train);
    if (cfg.checkpoint_out.empty()) throw UsageError("checkpoint_out (or --out) is required");
    save_stage_checkpoint(res.model, cfg, Stage::classify, cfg.checkpoint_out, res.report);
    json labels = json::array();
    for (const auto& a : res.authors) labels.push_back(a);
    write_text_file(cfg.checkpoint_out + ".labels.json", labels.dump() + "\n");
    write_text_file(cfg.checkpoint_out + ".metrics.json", res.metrics.to_json() + "\n");
    std::cout << res.metrics.to_json() << "\n";
    return res.report.diverged ? 3 : 0;
  }

  if (predict->parsed()) {
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_dir);
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::from_json_file(config_path);
    Tokenizer tok = tokenizer_for_checkpoint(ckpt, cfg);
    std::ifstream in(text_file, std::ios::binary);
    if (!in) throw DataError("cannot read " + text_file);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Prediction p = predict_author(ckpt.model, tok, text,
                                  ckpt.meta.train_config.max_doc_tokens);
    json out{{"author", p.author_id}, {"probabilities", p.probabilities}};
    const std::string labels_path = checkpoint_dir + ".labels.json";
    if (fs::exists(labels_path)) {
      std::ifstream lf(labels_path);
      json labels = json::parse(lf);
      out["author_name"] = labels.at(p.author_id);
    }
    std::cout << out.dump() << "\n";
    return 0;
  }

  if (evaluate->parsed()) {
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_dir);
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::from_json_file(config_path);
    Tokenizer tok = tokenizer_for_checkpoint(ckpt, cfg);
    auto samples = load_samples(corpus_dir, chunk_words);
    const std::string labels_path = checkpoint_dir + ".labels.json";
    if (!fs::exists(labels_path))
      throw DataError("missing " + labels_path + " (written by train-classifier)");
    std::ifstream lf(labels_path);
    std::vector<std::string> authors = json::parse(lf).get<std::vector<std::string>>();
    Metrics m = evaluate_classifier(ckpt.model, tok, authors, samples,
                                    ckpt.meta.train_config.max_doc_tokens);
    std::cout << m.to_json() << "\n";
    return 0;
  }

  if (kfold->parsed()) {
    RunConfig cfg = require_config(config_path, seed, out_dir);
    cfg.train.stage = Stage::classify;
    LoadedCheckpoint ckpt = load_checkpoint(cfg.checkpoint_in);
    if (cfg.vocab_file.empty()) cfg.vocab_file = ckpt.vocab_path;
    if (cfg.subword_file.empty()) cfg.subword_file = ckpt.subword_path;
    Tokenizer tok = tokenizer_for_checkpoint(ckpt, cfg);
    auto samples = load_samples(cfg.corpus_dir, chunk_words);
    const auto folds = kfold_split(samples, k_folds, cfg.train.seed);
    std::vector<double> accs, f1s;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::cout << "fold " << (f + 1) << "/" << folds.size() << "\n";
      TrainConfig fold_cfg = cfg.train;
      fold_cfg.seed = cfg.train.seed + f;
      ClassifierResult res = train_classifier(ckpt.model, tok, folds[f].train, fold_cfg);
      Metrics m = evaluate_classifier(res.model, tok, res.authors, folds[f].validation,
                                      fold_cfg.max_doc_tokens);
      accs.push_back(m.accuracy);
      f1s.push_back(m.macro_f1);
      std::cout << "fold " << (f + 1) << " accuracy " << m.accuracy << " macro_f1 "
                << m.macro_f1 << "\n";
    }
    const FoldSummary acc = kfold_summary(accs), f1 = kfold_summary(f1s);
    json out{{"folds", static_cast<int>(folds.size())},
             {"accuracy",
              {{"per_fold", accs},
               {"mean", acc.mean},
               {"margin_of_error", acc.margin_of_error},
               {"margin_percent", acc.margin_percent}}},
             {"macro_f1",
              {{"per_fold", f1s},
               {"mean", f1.mean},
               {"margin_of_error", f1.margin_of_error},
               {"margin_percent", f1.margin_percent}}}};
    std::cout << out.dump(2) << "\n";
    if (!out_dir.empty()) write_text_file(out_dir + "/kfold.json", out.dump(2) + "\n");
    return 0;
  }

  if (lr_find_cmd->parsed()) {
    RunConfig cfg = require_config(config_path, seed, out_dir);
    Tokenizer tok;
    Model model;
    if (!cfg.checkpoint_in.empty()) {
      LoadedCheckpoint ckpt = load_checkpoint(cfg.checkpoint_in);
      if (cfg.vocab_file.empty()) cfg.vocab_file = ckpt.vocab_path;
      if (cfg.subword_file.empty()) cfg.subword_file = ckpt.subword_path;
      tok = tokenizer_for_checkpoint(ckpt, cfg);
      model = std::move(ckpt.model);
    } else {
      tok = load_tokenizer(cfg.tokenizer_mode, cfg.vocab_file, cfg.subword_file);
      ModelConfig mc = cfg.model;
      mc.vocab_size = tok.vocab.size();
      Rng init_rng = Rng(cfg.train.seed).stream(rng_stream::kInit);
      model = init_model(mc, init_rng);
    }
    const std::string text = read_corpus_text(cfg.corpus_dir);
    LrCurve curve = lr_find_lm(model, tok.encode(text), cfg.train);
    std::cout << "lr,smoothed_loss\n";
    for (const auto& [lr, loss] : curve.points) std::cout << lr << "," << loss << "\n";
    std::cout << "suggested_lr " << curve.suggestion << "\n";
    return 0;
  }

  if (generate->parsed()) {
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_dir);
    RunConfig cfg;
    Tokenizer tok = tokenizer_for_checkpoint(ckpt, cfg);
    if (!ckpt.model.lm) throw DataError("generate needs a language-model checkpoint");
    const std::string text = generate_text(ckpt.model, tok, prompt, n_tokens, temperature,
                                           seed.value_or(ckpt.meta.train_config.seed));
    std::cout << text << "\n";
    return 0;
  }

  if (subset->parsed()) {
    auto samples = load_samples(corpus_dir, chunk_words);
    const auto indices = balanced_subset_indices(samples, n_authors, seed.value_or(0));
    // Manifest: chosen sample indices (into deterministic ingest order)
    // grouped by author.
    json by_author = json::object();
    for (std::size_t i : indices) {
      const std::string& a = samples[i].author;
      if (!by_author.contains(a)) by_author[a] = json::array();
      by_author[a].push_back(i);
    }
    json out{{"n_authors", n_authors},
             {"samples_per_author", indices.size() / static_cast<std::size_t>(n_authors)},
             {"partitions", by_author}};
    const std::string path = out_dir.empty() ? "subset.json" : out_dir;
    write_text_file(path, out.dump(2) + "\n");
    std::cout << "subset manifest written to " << path << "\n";
    return 0;
  }

  return 1;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
  try {
    return run(args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace attrib
