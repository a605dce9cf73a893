#include "attrib/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace attrib {

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes.data(), bytes.size());
}

namespace {

struct ArrayEntry {
  std::string name;
  std::vector<int> shape;
  const std::vector<double>* data = nullptr;
};

// Fixed serialization order. The tied decoder weight is the embedding and is
// not stored twice.
std::vector<ArrayEntry> array_table(const Model& model) {
  std::vector<ArrayEntry> t;
  auto put = [&](const std::string& name, const TensorPtr& p) {
    t.push_back({name, p->shape, &p->data});
  };
  put("embedding", model.embedding);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const std::string base = "lstm" + std::to_string(l + 1);
    put(base + ".w", model.layers[l].w);
    put(base + ".u", model.layers[l].u);
    put(base + ".b", model.layers[l].b);
  }
  if (model.lm) {
    if (!model.config.tie_weights) put("lm.weight", model.lm->weight);
    put("lm.bias", model.lm->bias);
  }
  if (model.classifier) {
    const auto& c = *model.classifier;
    put("cls.w1", c.w1);
    put("cls.b1", c.b1);
    put("cls.gamma", c.gamma);
    put("cls.beta", c.beta);
    put("cls.w2", c.w2);
    put("cls.b2", c.b2);
    t.push_back({"cls.bn.running_mean", {model.config.head_hidden}, &c.bn.running_mean});
    t.push_back({"cls.bn.running_var", {model.config.head_hidden}, &c.bn.running_var});
  }
  return t;
}

json model_config_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size},
              {"embedding_size", c.embedding_size},
              {"hidden_size", c.hidden_size},
              {"n_layers", c.n_layers},
              {"dropout_multiplier", c.dropout_multiplier},
              {"base_dropouts",
               {{"output", c.base_dropouts.output},
                {"hidden", c.base_dropouts.hidden},
                {"input", c.base_dropouts.input},
                {"embedding", c.base_dropouts.embedding},
                {"weight_drop", c.base_dropouts.weight_drop}}},
              {"tie_weights", c.tie_weights},
              {"n_classes", c.n_classes},
              {"head_hidden", c.head_hidden}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embedding_size = j.at("embedding_size").get<int>();
  c.hidden_size = j.at("hidden_size").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.dropout_multiplier = j.at("dropout_multiplier").get<double>();
  const auto& d = j.at("base_dropouts");
  c.base_dropouts.output = d.at("output").get<double>();
  c.base_dropouts.hidden = d.at("hidden").get<double>();
  c.base_dropouts.input = d.at("input").get<double>();
  c.base_dropouts.embedding = d.at("embedding").get<double>();
  c.base_dropouts.weight_drop = d.at("weight_drop").get<double>();
  c.tie_weights = j.at("tie_weights").get<bool>();
  c.n_classes = j.at("n_classes").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  return c;
}

json train_config_json(const TrainConfig& c) {
  return json{{"stage", stage_name(c.stage)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"bptt", c.bptt},
              {"lrs", c.lrs},
              {"weight_decay", c.weight_decay},
              {"dropout_multiplier", c.dropout_multiplier},
              {"momentums", {c.beta1_max, c.beta1_min}},
              {"seed", c.seed},
              {"early_stop_patience", c.early_stop_patience},
              {"max_doc_tokens", c.max_doc_tokens}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.stage = stage_from_name(j.at("stage").get<std::string>());
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.bptt = j.at("bptt").get<int>();
  c.lrs = j.at("lrs").get<std::vector<double>>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.dropout_multiplier = j.at("dropout_multiplier").get<double>();
  c.beta1_max = j.at("momentums")[0].get<double>();
  c.beta1_min = j.at("momentums")[1].get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.early_stop_patience = j.at("early_stop_patience").get<int>();
  c.max_doc_tokens = j.at("max_doc_tokens").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::string& dir,
                     const std::string& vocab_file_src, const std::string& subword_file_src) {
  const auto table = array_table(model);
  std::string blob;
  json arrays = json::array();
  for (const auto& e : table) {
    const std::size_t offset = blob.size();
    for (double v : *e.data) {
      const float f = static_cast<float>(v);
      char bytes[4];
      std::memcpy(bytes, &f, 4);
      blob.append(bytes, 4);
    }
    arrays.push_back({{"name", e.name},
                      {"shape", e.shape},
                      {"offset", offset},
                      {"length", blob.size() - offset}});
  }
  json manifest{{"format_version", kCheckpointFormatVersion},
                {"model", model_config_json(meta.model_config)},
                {"train", train_config_json(meta.train_config)},
                {"tokenizer",
                 {{"mode", meta.tokenizer_mode},
                  {"vocab_fingerprint", meta.vocab_fingerprint},
                  {"has_subword", meta.has_subword}}},
                {"arrays", arrays},
                {"blob_fnv1a", fnv1a64(blob.data(), blob.size())}};

  const fs::path target(dir);
  const fs::path tmp(dir + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  {
    std::ofstream mf(tmp / "manifest.json", std::ios::binary);
    mf << manifest.dump(2) << '\n';
    std::ofstream pb(tmp / "params.bin", std::ios::binary);
    pb.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!mf || !pb) throw std::runtime_error("cannot write checkpoint under " + tmp.string());
  }
  if (!vocab_file_src.empty()) fs::copy_file(vocab_file_src, tmp / "vocab.txt");
  if (!subword_file_src.empty()) fs::copy_file(subword_file_src, tmp / "subword.tsv");
  fs::remove_all(target);
  fs::rename(tmp, target);
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream mf(root / "manifest.json", std::ios::binary);
  if (!mf) throw std::runtime_error("checkpoint " + dir + ": missing manifest.json");
  json manifest = json::parse(mf);
  const int version = manifest.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion)
    throw std::runtime_error("checkpoint " + dir + ": format version " +
                             std::to_string(version) + " not supported (expected " +
                             std::to_string(kCheckpointFormatVersion) + ")");
  LoadedCheckpoint out;
  out.meta.model_config = model_config_from_json(manifest.at("model"));
  out.meta.train_config = train_config_from_json(manifest.at("train"));
  out.meta.tokenizer_mode = manifest.at("tokenizer").at("mode").get<std::string>();
  out.meta.vocab_fingerprint =
      manifest.at("tokenizer").at("vocab_fingerprint").get<std::uint64_t>();
  out.meta.has_subword = manifest.at("tokenizer").at("has_subword").get<bool>();

  std::ifstream pb(root / "params.bin", std::ios::binary);
  if (!pb) throw std::runtime_error("checkpoint " + dir + ": missing params.bin");
  std::string blob((std::istreambuf_iterator<char>(pb)), std::istreambuf_iterator<char>());
  if (fnv1a64(blob.data(), blob.size()) != manifest.at("blob_fnv1a").get<std::uint64_t>())
    throw std::runtime_error("checkpoint " + dir + ": params.bin checksum mismatch");

  // Rebuild the model skeleton, then fill arrays from the blob.
  Rng rng(0);
  out.model = init_model(out.meta.model_config, rng);
  std::vector<std::pair<std::string, std::vector<double>*>> dests;
  {
    Model& m = out.model;
    dests.push_back({"embedding", &m.embedding->data});
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const std::string base = "lstm" + std::to_string(l + 1);
      dests.push_back({base + ".w", &m.layers[l].w->data});
      dests.push_back({base + ".u", &m.layers[l].u->data});
      dests.push_back({base + ".b", &m.layers[l].b->data});
    }
    if (m.lm) {
      if (!m.config.tie_weights) dests.push_back({"lm.weight", &m.lm->weight->data});
      dests.push_back({"lm.bias", &m.lm->bias->data});
    }
    if (m.classifier) {
      auto& c = *m.classifier;
      c.bn.running_mean.assign(m.config.head_hidden, 0.0);
      c.bn.running_var.assign(m.config.head_hidden, 1.0);
      dests.push_back({"cls.w1", &c.w1->data});
      dests.push_back({"cls.b1", &c.b1->data});
      dests.push_back({"cls.gamma", &c.gamma->data});
      dests.push_back({"cls.beta", &c.beta->data});
      dests.push_back({"cls.w2", &c.w2->data});
      dests.push_back({"cls.b2", &c.b2->data});
      dests.push_back({"cls.bn.running_mean", &c.bn.running_mean});
      dests.push_back({"cls.bn.running_var", &c.bn.running_var});
    }
  }
  const json& arrays = manifest.at("arrays");
  if (arrays.size() != dests.size())
    throw std::runtime_error("checkpoint " + dir + ": array count mismatch (" +
                             std::to_string(arrays.size()) + " stored, " +
                             std::to_string(dests.size()) + " expected)");
  for (std::size_t i = 0; i < dests.size(); ++i) {
    const json& a = arrays[i];
    if (a.at("name").get<std::string>() != dests[i].first)
      throw std::runtime_error("checkpoint " + dir + ": array " + std::to_string(i) +
                               " is '" + a.at("name").get<std::string>() + "', expected '" +
                               dests[i].first + "'");
    const std::size_t offset = a.at("offset").get<std::size_t>();
    const std::size_t length = a.at("length").get<std::size_t>();
    std::vector<double>& dst = *dests[i].second;
    if (length != dst.size() * 4 || offset + length > blob.size())
      throw std::runtime_error("checkpoint " + dir + ": array '" + dests[i].first +
                               "' has " + std::to_string(length) + " bytes, expected " +
                               std::to_string(dst.size() * 4));
    for (std::size_t k = 0; k < dst.size(); ++k) {
      float f;
      std::memcpy(&f, blob.data() + offset + 4 * k, 4);
      dst[k] = static_cast<double>(f);
    }
  }
  if (fs::exists(root / "vocab.txt")) {
    out.vocab_path = (root / "vocab.txt").string();
    const std::uint64_t fp = fnv1a64_file(out.vocab_path);
    if (out.meta.vocab_fingerprint != 0 && fp != out.meta.vocab_fingerprint)
      throw std::runtime_error("checkpoint " + dir +
                               ": vocab fingerprint mismatch (file " + std::to_string(fp) +
                               ", manifest " + std::to_string(out.meta.vocab_fingerprint) + ")");
  }
  if (fs::exists(root / "subword.tsv")) out.subword_path = (root / "subword.tsv").string();
  return out;
}

}  // namespace attrib
