#include "attrib/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace attrib {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

template <class Expr>
void gmap_add(Tensor& t, int rows, int cols, const Expr& e) {
  MapM(t.grad.data(), rows, cols).noalias() += e;
}

TensorPtr uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
  auto t = Tensor::zeros(std::move(shape), true);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t->data) v = rng.uniform(-bound, bound);
  return t;
}

LstmLayer init_layer(int in_dim, int out_dim, Rng& rng) {
  LstmLayer l;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  l.w = uniform_init({in_dim, 4 * out_dim}, in_dim, rng);
  l.u = uniform_init({out_dim, 4 * out_dim}, out_dim, rng);
  l.b = Tensor::zeros({4 * out_dim}, true);
  return l;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= 0 || embedding_size <= 0 || hidden_size <= 0 || n_layers <= 0 ||
      head_hidden <= 0)
    throw std::invalid_argument("ModelConfig: sizes must be positive");
  for (double base : {base_dropouts.output, base_dropouts.hidden, base_dropouts.input,
                      base_dropouts.embedding, base_dropouts.weight_drop}) {
    const double p = drop(base);
    if (p < 0.0 || p > 1.0)
      throw std::invalid_argument("ModelConfig: effective dropout outside [0,1]");
  }
  if (n_classes < 0) throw std::invalid_argument("ModelConfig: negative class count");
}

Model init_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  Model m;
  m.config = config;
  m.embedding = uniform_init({config.vocab_size, config.embedding_size},
                             config.embedding_size, rng);
  int in_dim = config.embedding_size;
  for (int l = 0; l < config.n_layers; ++l) {
    const int out_dim = (l == config.n_layers - 1) ? config.output_size() : config.hidden_size;
    m.layers.push_back(init_layer(in_dim, out_dim, rng));
    in_dim = out_dim;
  }
  if (config.n_classes > 0) {
    attach_classifier_head(m, config.n_classes, rng);
  } else {
    LmHead lm;
    lm.weight = config.tie_weights
                    ? m.embedding
                    : uniform_init({config.vocab_size, config.output_size()},
                                   config.output_size(), rng);
    lm.bias = Tensor::zeros({config.vocab_size}, true);
    m.lm = std::move(lm);
  }
  return m;
}

void attach_classifier_head(Model& model, int n_classes, Rng& rng) {
  if (n_classes < 2) throw std::invalid_argument("classifier head needs at least 2 classes");
  model.lm.reset();
  model.config.n_classes = n_classes;
  const int pooled = 3 * model.config.output_size();
  ClassifierHead h;
  h.w1 = uniform_init({pooled, model.config.head_hidden}, pooled, rng);
  h.b1 = Tensor::zeros({model.config.head_hidden}, true);
  h.gamma = Tensor::full({model.config.head_hidden}, 1.0, true);
  h.beta = Tensor::zeros({model.config.head_hidden}, true);
  h.w2 = uniform_init({model.config.head_hidden, n_classes}, model.config.head_hidden, rng);
  h.b2 = Tensor::zeros({n_classes}, true);
  h.bn.running_mean.assign(model.config.head_hidden, 0.0);
  h.bn.running_var.assign(model.config.head_hidden, 1.0);
  model.classifier = std::move(h);
}

std::vector<NamedParam> model_parameters(const Model& model) {
  std::vector<NamedParam> out;
  out.push_back({"embedding", model.embedding, LayerGroups::kEmbedding});
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const int group = LayerGroups::kLstm1 + static_cast<int>(l);
    const std::string base = "lstm" + std::to_string(l + 1);
    out.push_back({base + ".w", model.layers[l].w, group});
    out.push_back({base + ".u", model.layers[l].u, group});
    out.push_back({base + ".b", model.layers[l].b, group});
  }
  if (model.lm) {
    if (!model.config.tie_weights)
      out.push_back({"lm.weight", model.lm->weight, LayerGroups::kHead});
    out.push_back({"lm.bias", model.lm->bias, LayerGroups::kHead});
  }
  if (model.classifier) {
    const auto& c = *model.classifier;
    out.push_back({"cls.w1", c.w1, LayerGroups::kHead});
    out.push_back({"cls.b1", c.b1, LayerGroups::kHead});
    out.push_back({"cls.gamma", c.gamma, LayerGroups::kHead});
    out.push_back({"cls.beta", c.beta, LayerGroups::kHead});
    out.push_back({"cls.w2", c.w2, LayerGroups::kHead});
    out.push_back({"cls.b2", c.b2, LayerGroups::kHead});
  }
  return out;
}

TensorPtr apply_weight_drop(Tape* tape, const TensorPtr& u, double p, Rng& rng, bool train) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("apply_weight_drop: p outside [0,1]");
  if (!train || p == 0.0) return u;
  auto mask = Tensor::zeros(u->shape);
  if (p < 1.0) {
    const double keep = 1.0 / (1.0 - p);
    for (auto& v : mask->data) v = rng.next_double() >= p ? keep : 0.0;
  }
  return masked_mul(tape, u, mask);
}

TensorPtr variational_mask(const std::vector<int>& shape, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("variational_mask: p must be in [0,1)");
  auto mask = Tensor::zeros(shape);
  const double keep = 1.0 / (1.0 - p);
  for (auto& v : mask->data) v = rng.next_double() >= p ? keep : 0.0;
  return mask;
}

TensorPtr embedding_dropout(Tape* tape, const TensorPtr& embedding, double p, Rng& rng,
                            bool train) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("embedding_dropout: p must be in [0,1)");
  if (!train || p == 0.0) return embedding;
  const int v = embedding->rows(), e = embedding->cols();
  auto mask = Tensor::zeros(embedding->shape);
  const double keep = 1.0 / (1.0 - p);
  for (int r = 0; r < v; ++r) {
    const double m = rng.next_double() >= p ? keep : 0.0;
    for (int c = 0; c < e; ++c) mask->data[static_cast<std::size_t>(r) * e + c] = m;
  }
  return masked_mul(tape, embedding, mask);
}

std::pair<TensorPtr, TensorPtr> lstm_cell_forward(Tape* tape, const TensorPtr& x,
                                                  const TensorPtr& h, const TensorPtr& c,
                                                  const TensorPtr& w, const TensorPtr& u_masked,
                                                  const TensorPtr& b) {
  const int batch = x->rows(), in_dim = x->cols();
  const int out_dim = h->cols();
  if (w->rows() != in_dim || w->cols() != 4 * out_dim)
    throw std::invalid_argument("lstm_cell: W is " + shape_str(w->shape) + ", expected [" +
                                std::to_string(in_dim) + "x" + std::to_string(4 * out_dim) + "]");
  if (u_masked->rows() != out_dim || u_masked->cols() != 4 * out_dim)
    throw std::invalid_argument("lstm_cell: U is " + shape_str(u_masked->shape) +
                                ", expected [" + std::to_string(out_dim) + "x" +
                                std::to_string(4 * out_dim) + "]");
  if (h->rows() != batch || c->rows() != batch || c->cols() != out_dim)
    throw std::invalid_argument("lstm_cell: state shape mismatch " + shape_str(h->shape) +
                                " / " + shape_str(c->shape));
  if (b->size() != 4 * out_dim)
    throw std::invalid_argument("lstm_cell: bias shape mismatch " + shape_str(b->shape));

  // gates = x W + h U + b, columns [i | f | g | o]
  auto gates = Tensor::zeros({batch, 4 * out_dim});
  {
    MapM g(gates->data.data(), batch, 4 * out_dim);
    g.noalias() = MapC(x->data.data(), batch, in_dim) * MapC(w->data.data(), in_dim, 4 * out_dim);
    g.noalias() +=
        MapC(h->data.data(), batch, out_dim) * MapC(u_masked->data.data(), out_dim, 4 * out_dim);
    g.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b->data.data(), 4 * out_dim);
  }
  const bool rg = x->requires_grad || h->requires_grad || c->requires_grad ||
                  w->requires_grad || u_masked->requires_grad || b->requires_grad;
  auto h_new = Tensor::zeros({batch, out_dim}, rg);
  auto c_new = Tensor::zeros({batch, out_dim}, rg);
  // Gate activations are kept in place of the pre-activations for the backward.
  for (int r = 0; r < batch; ++r) {
    double* gr = gates->data.data() + static_cast<std::size_t>(r) * 4 * out_dim;
    const double* cr = c->data.data() + static_cast<std::size_t>(r) * out_dim;
    double* hn = h_new->data.data() + static_cast<std::size_t>(r) * out_dim;
    double* cn = c_new->data.data() + static_cast<std::size_t>(r) * out_dim;
    for (int j = 0; j < out_dim; ++j) {
      const double ig = 1.0 / (1.0 + std::exp(-gr[j]));
      const double fg = 1.0 / (1.0 + std::exp(-gr[out_dim + j]));
      const double gg = std::tanh(gr[2 * out_dim + j]);
      const double og = 1.0 / (1.0 + std::exp(-gr[3 * out_dim + j]));
      gr[j] = ig;
      gr[out_dim + j] = fg;
      gr[2 * out_dim + j] = gg;
      gr[3 * out_dim + j] = og;
      cn[j] = fg * cr[j] + ig * gg;
      hn[j] = og * std::tanh(cn[j]);
    }
  }
  if (tape && rg) {
    TensorPtr xc = x, hc = h, cc = c, wc = w, uc = u_masked, bc = b, gc = gates,
              ho = h_new, co = c_new;
    tape->record([xc, hc, cc, wc, uc, bc, gc, ho, co, batch, in_dim, out_dim]() {
      // d_gates holds gradients w.r.t. the gate pre-activations.
      std::vector<double> d_gates(static_cast<std::size_t>(batch) * 4 * out_dim);
      for (int r = 0; r < batch; ++r) {
        const double* g = gc->data.data() + static_cast<std::size_t>(r) * 4 * out_dim;
        const double* cn = co->data.data() + static_cast<std::size_t>(r) * out_dim;
        const double* dh = ho->grad.data() + static_cast<std::size_t>(r) * out_dim;
        const double* dc_out = co->grad.data() + static_cast<std::size_t>(r) * out_dim;
        const double* cold = cc->data.data() + static_cast<std::size_t>(r) * out_dim;
        double* dg = d_gates.data() + static_cast<std::size_t>(r) * 4 * out_dim;
        for (int j = 0; j < out_dim; ++j) {
          const double ig = g[j], fg = g[out_dim + j], gg = g[2 * out_dim + j],
                       og = g[3 * out_dim + j];
          const double tc = std::tanh(cn[j]);
          const double dc = dh[j] * og * (1.0 - tc * tc) + dc_out[j];
          dg[j] = dc * gg * ig * (1.0 - ig);
          dg[out_dim + j] = dc * cold[j] * fg * (1.0 - fg);
          dg[2 * out_dim + j] = dc * ig * (1.0 - gg * gg);
          dg[3 * out_dim + j] = dh[j] * tc * og * (1.0 - og);
          if (cc->requires_grad)
            cc->grad[static_cast<std::size_t>(r) * out_dim + j] += dc * fg;
        }
      }
      MapC dg(d_gates.data(), batch, 4 * out_dim);
      if (xc->requires_grad)
        gmap_add(*xc, batch, in_dim, dg * MapC(wc->data.data(), in_dim, 4 * out_dim).transpose());
      if (hc->requires_grad)
        gmap_add(*hc, batch, out_dim,
                 dg * MapC(uc->data.data(), out_dim, 4 * out_dim).transpose());
      if (wc->requires_grad)
        gmap_add(*wc, in_dim, 4 * out_dim,
                 MapC(xc->data.data(), batch, in_dim).transpose() * dg);
      if (uc->requires_grad)
        gmap_add(*uc, out_dim, 4 * out_dim,
                 MapC(hc->data.data(), batch, out_dim).transpose() * dg);
      if (bc->requires_grad)
        Eigen::Map<Eigen::RowVectorXd>(bc->grad.data(), 4 * out_dim) += dg.colwise().sum();
    });
  }
  return {h_new, c_new};
}

EncoderState zero_state(const ModelConfig& config, int batch) {
  EncoderState s;
  for (int l = 0; l < config.n_layers; ++l) {
    const int out_dim = (l == config.n_layers - 1) ? config.output_size() : config.hidden_size;
    s.hc.emplace_back(Tensor::zeros({batch, out_dim}), Tensor::zeros({batch, out_dim}));
  }
  return s;
}

EncoderState detach_state(const EncoderState& state) {
  EncoderState s;
  for (const auto& [h, c] : state.hc)
    s.hc.emplace_back(Tensor::copy_of(*h), Tensor::copy_of(*c));
  return s;
}

EncoderOutput encoder_forward(Tape* tape, const Model& model,
                              const std::vector<std::vector<int>>& token_ids, bool train,
                              Rng& rng, const EncoderState* initial_state) {
  const auto& cfg = model.config;
  const int batch = static_cast<int>(token_ids.size());
  if (batch == 0) throw std::invalid_argument("encoder_forward: empty batch");
  const int time = static_cast<int>(token_ids[0].size());
  if (time == 0) throw std::invalid_argument("encoder_forward: zero-length sequence");
  for (const auto& row : token_ids)
    if (static_cast<int>(row.size()) != time)
      throw std::invalid_argument("encoder_forward: ragged batch");
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < time; ++t)
      if (token_ids[b][t] < 0 || token_ids[b][t] >= cfg.vocab_size)
        throw std::out_of_range("encoder_forward: token id " + std::to_string(token_ids[b][t]) +
                                " out of range at batch " + std::to_string(b) + " position " +
                                std::to_string(t));

  TensorPtr emb = embedding_dropout(tape, model.embedding, cfg.drop(cfg.base_dropouts.embedding),
                                    rng, train);
  // Per-sequence masks: input, between layers, output.
  TensorPtr input_mask, output_mask;
  std::vector<TensorPtr> hidden_masks;
  if (train) {
    if (cfg.drop(cfg.base_dropouts.input) > 0.0)
      input_mask = variational_mask({batch, cfg.embedding_size},
                                    cfg.drop(cfg.base_dropouts.input), rng);
    for (int l = 0; l + 1 < cfg.n_layers; ++l)
      hidden_masks.push_back(
          cfg.drop(cfg.base_dropouts.hidden) > 0.0
              ? variational_mask({batch, model.layers[l].out_dim},
                                 cfg.drop(cfg.base_dropouts.hidden), rng)
              : nullptr);
    if (cfg.drop(cfg.base_dropouts.output) > 0.0)
      output_mask = variational_mask({batch, cfg.output_size()},
                                     cfg.drop(cfg.base_dropouts.output), rng);
  }
  std::vector<TensorPtr> u_masked;
  for (const auto& layer : model.layers)
    u_masked.push_back(
        apply_weight_drop(tape, layer.u, cfg.drop(cfg.base_dropouts.weight_drop), rng, train));

  EncoderState state = initial_state ? *initial_state : zero_state(cfg, batch);
  if (static_cast<int>(state.hc.size()) != cfg.n_layers)
    throw std::invalid_argument("encoder_forward: state layer count mismatch");

  // Embedded inputs per step.
  std::vector<TensorPtr> acts(time);
  std::vector<int> ids_t(batch);
  for (int t = 0; t < time; ++t) {
    for (int b = 0; b < batch; ++b) ids_t[b] = token_ids[b][t];
    acts[t] = row_lookup(tape, emb, ids_t);
    if (input_mask) acts[t] = masked_mul(tape, acts[t], input_mask);
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    TensorPtr h = state.hc[l].first, c = state.hc[l].second;
    for (int t = 0; t < time; ++t) {
      auto [h2, c2] =
          lstm_cell_forward(tape, acts[t], h, c, model.layers[l].w, u_masked[l],
                            model.layers[l].b);
      h = h2;
      c = c2;
      acts[t] = h2;
    }
    state.hc[l] = {h, c};
    if (l + 1 < cfg.n_layers && !hidden_masks.empty() && hidden_masks[l])
      for (int t = 0; t < time; ++t) acts[t] = masked_mul(tape, acts[t], hidden_masks[l]);
  }
  if (output_mask)
    for (int t = 0; t < time; ++t) acts[t] = masked_mul(tape, acts[t], output_mask);

  EncoderOutput out;
  out.outputs = std::move(acts);
  out.final_state = detach_state(state);
  return out;
}

TensorPtr lm_decode(Tape* tape, const TensorPtr& hidden, const LmHead& head) {
  if (hidden->cols() != head.weight->cols())
    throw std::invalid_argument("lm_decode: hidden width " + shape_str(hidden->shape) +
                                " does not match decoder " + shape_str(head.weight->shape));
  return add_rowvec(tape, matmul_nt(tape, hidden, head.weight), head.bias);
}

TensorPtr classifier_logits(Tape* tape, Model& model, const std::vector<TensorPtr>& outputs,
                            const std::vector<std::uint8_t>* valid, bool train, Rng& rng) {
  if (!model.classifier) throw std::runtime_error("model has no classifier head");
  if (outputs.empty()) throw std::invalid_argument("classifier: zero-length sequence");
  auto& head = *model.classifier;
  TensorPtr last = outputs.back();
  TensorPtr mx = max_over_time(tape, outputs, valid);
  TensorPtr mn = mean_over_time(tape, outputs, valid);
  TensorPtr pooled = concat_cols(tape, {last, mx, mn});
  TensorPtr z = affine(tape, pooled, head.w1, head.b1);
  z = batchnorm(tape, z, head.gamma, head.beta, head.bn, train);
  z = relu(tape, z);
  const double p = model.config.drop(model.config.base_dropouts.output);
  if (train && p > 0.0) z = masked_mul(tape, z, variational_mask(z->shape, p, rng));
  return affine(tape, z, head.w2, head.b2);
}

std::vector<double> classifier_forward(Model& model, const std::vector<TensorPtr>& outputs,
                                       const std::vector<std::uint8_t>* valid) {
  Rng unused(0);
  TensorPtr logits = classifier_logits(nullptr, model, outputs, valid, false, unused);
  return softmax_rows(*logits);
}

}  // namespace attrib
