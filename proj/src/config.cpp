#include "attrib/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "attrib/errors.hpp"
#include "json.hpp"

using nlohmann::json;

namespace attrib {

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("config: epochs must be >= 1");
  if (batch_size < 1) throw UsageError("config: batch_size must be >= 1");
  if (bptt < 1) throw UsageError("config: bptt must be >= 1");
  if (lrs.empty()) throw UsageError("config: at least one learning rate required");
  for (double lr : lrs)
    if (lr < 0.0) throw UsageError("config: negative learning rate");
  if (weight_decay < 0.0) throw UsageError("config: negative weight decay");
  if (dropout_multiplier < 0.0) throw UsageError("config: negative dropout multiplier");
  if (early_stop_patience < 1) throw UsageError("config: early_stop_patience must be >= 1");
  if (max_doc_tokens < 1) throw UsageError("config: max_doc_tokens must be >= 1");
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::pretrain:
      return "pretrain";
    case Stage::finetune:
      return "finetune";
    case Stage::classify:
      return "classify";
  }
  throw std::logic_error("unknown stage");
}

Stage stage_from_name(const std::string& name) {
  if (name == "pretrain") return Stage::pretrain;
  if (name == "finetune") return Stage::finetune;
  if (name == "classify") return Stage::classify;
  throw UsageError("unknown stage '" + name + "'");
}

std::vector<double> parse_lr_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("bad learning rate '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty learning-rate list");
  return out;
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw UsageError("config: unknown key '" + it.key() + "' in " + where);
}

}  // namespace

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  reject_unknown(j, {"train", "model", "corpus_dir", "tokenizer_mode", "vocab_file",
                     "subword_file", "checkpoint_in", "checkpoint_out"},
                 "top level");
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown(t,
                   {"stage", "epochs", "batch_size", "bptt", "lr", "weight_decay",
                    "dropout_multiplier", "momentums", "seed", "early_stop_patience",
                    "max_doc_tokens"},
                   "train");
    if (t.contains("stage")) c.train.stage = stage_from_name(t["stage"].get<std::string>());
    if (t.contains("epochs")) c.train.epochs = t["epochs"].get<int>();
    if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<int>();
    if (t.contains("bptt")) c.train.bptt = t["bptt"].get<int>();
    if (t.contains("lr")) {
      if (t["lr"].is_string())
        c.train.lrs = parse_lr_list(t["lr"].get<std::string>());
      else if (t["lr"].is_array())
        c.train.lrs = t["lr"].get<std::vector<double>>();
      else
        c.train.lrs = {t["lr"].get<double>()};
    }
    if (t.contains("weight_decay")) c.train.weight_decay = t["weight_decay"].get<double>();
    if (t.contains("dropout_multiplier"))
      c.train.dropout_multiplier = t["dropout_multiplier"].get<double>();
    if (t.contains("momentums")) {
      c.train.beta1_max = t["momentums"][0].get<double>();
      c.train.beta1_min = t["momentums"][1].get<double>();
    }
    if (t.contains("seed")) c.train.seed = t["seed"].get<std::uint64_t>();
    if (t.contains("early_stop_patience"))
      c.train.early_stop_patience = t["early_stop_patience"].get<int>();
    if (t.contains("max_doc_tokens")) c.train.max_doc_tokens = t["max_doc_tokens"].get<int>();
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m,
                   {"embedding_size", "hidden_size", "n_layers", "tie_weights", "head_hidden",
                    "base_dropouts"},
                   "model");
    if (m.contains("embedding_size")) c.model.embedding_size = m["embedding_size"].get<int>();
    if (m.contains("hidden_size")) c.model.hidden_size = m["hidden_size"].get<int>();
    if (m.contains("n_layers")) c.model.n_layers = m["n_layers"].get<int>();
    if (m.contains("tie_weights")) c.model.tie_weights = m["tie_weights"].get<bool>();
    if (m.contains("head_hidden")) c.model.head_hidden = m["head_hidden"].get<int>();
    if (m.contains("base_dropouts")) {
      const json& d = m["base_dropouts"];
      reject_unknown(d, {"output", "hidden", "input", "embedding", "weight_drop"},
                     "base_dropouts");
      if (d.contains("output")) c.model.base_dropouts.output = d["output"].get<double>();
      if (d.contains("hidden")) c.model.base_dropouts.hidden = d["hidden"].get<double>();
      if (d.contains("input")) c.model.base_dropouts.input = d["input"].get<double>();
      if (d.contains("embedding"))
        c.model.base_dropouts.embedding = d["embedding"].get<double>();
      if (d.contains("weight_drop"))
        c.model.base_dropouts.weight_drop = d["weight_drop"].get<double>();
    }
  }
  if (j.contains("corpus_dir")) c.corpus_dir = j["corpus_dir"].get<std::string>();
  if (j.contains("tokenizer_mode")) c.tokenizer_mode = j["tokenizer_mode"].get<std::string>();
  if (j.contains("vocab_file")) c.vocab_file = j["vocab_file"].get<std::string>();
  if (j.contains("subword_file")) c.subword_file = j["subword_file"].get<std::string>();
  if (j.contains("checkpoint_in")) c.checkpoint_in = j["checkpoint_in"].get<std::string>();
  if (j.contains("checkpoint_out")) c.checkpoint_out = j["checkpoint_out"].get<std::string>();
  c.model.dropout_multiplier = c.train.dropout_multiplier;
  return c;
}

std::string RunConfig::to_json() const {
  json j;
  j["train"] = {{"stage", stage_name(train.stage)},
                {"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"bptt", train.bptt},
                {"lr", train.lrs},
                {"weight_decay", train.weight_decay},
                {"dropout_multiplier", train.dropout_multiplier},
                {"momentums", {train.beta1_max, train.beta1_min}},
                {"seed", train.seed},
                {"early_stop_patience", train.early_stop_patience},
                {"max_doc_tokens", train.max_doc_tokens}};
  j["model"] = {{"embedding_size", model.embedding_size},
                {"hidden_size", model.hidden_size},
                {"n_layers", model.n_layers},
                {"tie_weights", model.tie_weights},
                {"head_hidden", model.head_hidden}};
  j["corpus_dir"] = corpus_dir;
  j["tokenizer_mode"] = tokenizer_mode;
  j["vocab_file"] = vocab_file;
  j["subword_file"] = subword_file;
  j["checkpoint_in"] = checkpoint_in;
  j["checkpoint_out"] = checkpoint_out;
  return j.dump(2);
}

}  // namespace attrib
