#include <cmath>
#include <vector>

#include "doctest.h"

#include "attrib/model.hpp"
#include "attrib/optim.hpp"
#include "attrib/rng.hpp"
#include "attrib/tensor.hpp"

using namespace attrib;

namespace {

TensorPtr random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
  auto t = Tensor::zeros(std::move(shape), requires_grad);
  for (auto& v : t->data) v = rng.uniform(-0.8, 0.8);
  return t;
}

// Reference cell built from the generic primitives; the fused node must
// agree with this route bitwise-closely and with finite differences.
std::pair<TensorPtr, TensorPtr> lstm_cell_composed(Tape* tape, const TensorPtr& x,
                                                   const TensorPtr& h, const TensorPtr& c,
                                                   const TensorPtr& w, const TensorPtr& u,
                                                   const TensorPtr& b) {
  const int out_dim = h->cols();
  auto gates = add_rowvec(tape, add(tape, matmul(tape, x, w), matmul(tape, h, u)), b);
  auto ig = sigmoid(tape, slice_cols(tape, gates, 0, out_dim));
  auto fg = sigmoid(tape, slice_cols(tape, gates, out_dim, out_dim));
  auto gg = tanh_op(tape, slice_cols(tape, gates, 2 * out_dim, out_dim));
  auto og = sigmoid(tape, slice_cols(tape, gates, 3 * out_dim, out_dim));
  auto c_new = add(tape, mul(tape, fg, c), mul(tape, ig, gg));
  auto h_new = mul(tape, og, tanh_op(tape, c_new));
  return {h_new, c_new};
}

ModelConfig toy_config(int vocab, int emb, int hidden, double multiplier = 0.0) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.embedding_size = emb;
  cfg.hidden_size = hidden;
  cfg.n_layers = 3;
  cfg.dropout_multiplier = multiplier;
  return cfg;
}

}  // namespace

TEST_CASE("lstm cell with all-zero weights and state returns zeros") {
  auto x = Tensor::full({2, 3}, 0.7);
  auto h = Tensor::zeros({2, 4});
  auto c = Tensor::zeros({2, 4});
  auto w = Tensor::zeros({3, 16});
  auto u = Tensor::zeros({4, 16});
  auto b = Tensor::zeros({16});
  auto [h2, c2] = lstm_cell_forward(nullptr, x, h, c, w, u, b);
  for (double v : h2->data) CHECK(v == 0.0);
  for (double v : c2->data) CHECK(v == 0.0);
}

TEST_CASE("saturated forget gate preserves the cell state") {
  Rng rng(1);
  auto x = random_tensor({1, 3}, rng, false);
  auto h = Tensor::zeros({1, 4});
  auto c = Tensor::from({1, 4}, {0.3, -0.2, 0.9, -0.6});
  auto w = Tensor::zeros({3, 16});
  auto u = Tensor::zeros({4, 16});
  auto b = Tensor::zeros({16});
  for (int j = 0; j < 4; ++j) {
    b->data[4 + j] = 60.0;   // forget gate saturates at 1
    b->data[j] = -60.0;      // input gate saturates at 0
  }
  auto [h2, c2] = lstm_cell_forward(nullptr, x, h, c, w, u, b);
  for (int j = 0; j < 4; ++j) CHECK(c2->data[j] == doctest::Approx(c->data[j]).epsilon(1e-12));
}

TEST_CASE("fused lstm cell matches the primitive-composed route") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor({3, 5}, rng);
    auto h = random_tensor({3, 4}, rng);
    auto c = random_tensor({3, 4}, rng);
    auto w = random_tensor({5, 16}, rng);
    auto u = random_tensor({4, 16}, rng);
    auto b = random_tensor({16}, rng);

    Tape t1;
    auto [h1, c1] = lstm_cell_forward(&t1, x, h, c, w, u, b);
    auto loss1 = add(&t1, mean_all(&t1, h1), mean_all(&t1, c1));
    for (auto& p : {x, h, c, w, u, b}) p->zero_grad();
    t1.backward(loss1);
    std::vector<std::vector<double>> grads1;
    for (auto& p : {x, h, c, w, u, b}) grads1.push_back(p->grad);
    const auto h1_data = h1->data, c1_data = c1->data;

    Tape t2;
    auto [h2, c2] = lstm_cell_composed(&t2, x, h, c, w, u, b);
    auto loss2 = add(&t2, mean_all(&t2, h2), mean_all(&t2, c2));
    for (auto& p : {x, h, c, w, u, b}) p->zero_grad();
    t2.backward(loss2);

    for (std::size_t i = 0; i < h1_data.size(); ++i) {
      CHECK(h1_data[i] == doctest::Approx(h2->data[i]).epsilon(1e-14));
      CHECK(c1_data[i] == doctest::Approx(c2->data[i]).epsilon(1e-14));
    }
    std::size_t pi = 0;
    for (auto& p : {x, h, c, w, u, b}) {
      for (std::size_t i = 0; i < p->grad.size(); ++i)
        CHECK(grads1[pi][i] == doctest::Approx(p->grad[i]).epsilon(1e-12));
      ++pi;
    }
  }
}

TEST_CASE("lstm cell gradient check at hidden 4") {
  Rng rng(21);
  for (int seed = 0; seed < 5; ++seed) {
    auto x = random_tensor({2, 3}, rng, false);
    auto h = random_tensor({2, 4}, rng, false);
    auto c = random_tensor({2, 4}, rng, false);
    auto w = random_tensor({3, 16}, rng);
    auto u = random_tensor({4, 16}, rng);
    auto b = random_tensor({16}, rng);
    auto f = [&]() {
      for (auto& p : {w, u, b}) p->zero_grad();
      Tape tape;
      auto [h2, c2] = lstm_cell_forward(&tape, x, h, c, w, u, b);
      auto loss = add(&tape, mean_all(&tape, h2), mean_all(&tape, c2));
      tape.backward(loss);
      return loss->data[0];
    };
    CHECK(finite_difference_check(f, {w, u, b}, 1e-5) <= 1e-4);
  }
}

TEST_CASE("lstm cell rejects mismatched shapes") {
  auto x = Tensor::zeros({2, 3});
  auto h = Tensor::zeros({2, 4});
  auto c = Tensor::zeros({2, 4});
  auto w = Tensor::zeros({3, 12});  // wrong: needs 16 columns
  auto u = Tensor::zeros({4, 16});
  auto b = Tensor::zeros({16});
  CHECK_THROWS_AS(lstm_cell_forward(nullptr, x, h, c, w, u, b), std::invalid_argument);
}

TEST_CASE("weight drop keeps, zeroes, or rescales") {
  Rng rng(5);
  auto u = random_tensor({40, 40}, rng);
  auto same = apply_weight_drop(nullptr, u, 0.0, rng, true);
  CHECK(same.get() == u.get());

  auto zeroed = apply_weight_drop(nullptr, u, 1.0, rng, true);
  for (double v : zeroed->data) CHECK(v == 0.0);

  auto eval = apply_weight_drop(nullptr, u, 0.5, rng, false);
  CHECK(eval.get() == u.get());

  CHECK_THROWS(apply_weight_drop(nullptr, u, 1.5, rng, true));
}

TEST_CASE("weight drop zeroes about p of the entries at p=0.5") {
  Rng rng(7);
  auto u = Tensor::full({1000, 1000}, 1.0, true);
  auto masked = apply_weight_drop(nullptr, u, 0.5, rng, true);
  std::size_t zeros = 0;
  for (double v : masked->data) {
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == doctest::Approx(2.0));  // 1/(1-p)
  }
  const double frac = static_cast<double>(zeros) / 1e6;
  CHECK(frac > 0.498);
  CHECK(frac < 0.502);
}

TEST_CASE("dropout masks preserve expectation") {
  Rng rng(13);
  const double p = 0.3;
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    auto mask = variational_mask({1, 1}, p, rng);
    sum += mask->data[0];
  }
  // mean of the mask is 1 within 3 sigma of the Monte Carlo error
  const double sigma = std::sqrt(p / (1.0 - p) / n);
  CHECK(std::fabs(sum / n - 1.0) < 3.0 * sigma);
}

TEST_CASE("embedding dropout zeroes whole rows and rescales the rest") {
  Rng rng(17);
  auto emb = Tensor::full({50, 8}, 1.0, true);
  auto dropped = embedding_dropout(nullptr, emb, 0.4, rng, true);
  int zero_rows = 0;
  for (int r = 0; r < 50; ++r) {
    const double first = dropped->data[static_cast<std::size_t>(r) * 8];
    for (int c = 0; c < 8; ++c)
      CHECK(dropped->data[static_cast<std::size_t>(r) * 8 + c] == first);
    if (first == 0.0)
      ++zero_rows;
    else
      CHECK(first == doctest::Approx(1.0 / 0.6));
  }
  CHECK(zero_rows > 0);
  auto same = embedding_dropout(nullptr, emb, 0.0, rng, true);
  CHECK(same.get() == emb.get());
  CHECK_THROWS(embedding_dropout(nullptr, emb, 1.0, rng, true));
  CHECK_THROWS(variational_mask({2, 2}, 1.0, rng));
}

TEST_CASE("encoder output shape is batch x time x embedding when tied") {
  ModelConfig cfg = toy_config(30, 12, 20);
  Rng init(3);
  Model m = init_model(cfg, init);
  Rng dr(4);
  std::vector<std::vector<int>> ids(2, std::vector<int>(5));
  for (auto& row : ids)
    for (auto& v : row) v = static_cast<int>(dr.next_below(30));
  auto out = encoder_forward(nullptr, m, ids, false, dr);
  CHECK(out.outputs.size() == 5);
  for (auto& step : out.outputs) CHECK(step->shape == std::vector<int>{2, 12});
  CHECK(out.final_state.hc.size() == 3);
  CHECK(out.final_state.hc[0].first->shape == std::vector<int>{2, 20});
  CHECK(out.final_state.hc[2].first->shape == std::vector<int>{2, 12});
}

TEST_CASE("encoder eval mode is deterministic and out-of-range ids are rejected") {
  ModelConfig cfg = toy_config(10, 6, 8);
  cfg.dropout_multiplier = 0.5;
  Rng init(3);
  Model m = init_model(cfg, init);
  Rng dr(4);
  std::vector<std::vector<int>> ids{{1, 2, 3, 4}, {5, 6, 7, 8}};
  auto a = encoder_forward(nullptr, m, ids, false, dr);
  auto b = encoder_forward(nullptr, m, ids, false, dr);
  for (std::size_t t = 0; t < a.outputs.size(); ++t)
    CHECK(a.outputs[t]->data == b.outputs[t]->data);

  std::vector<std::vector<int>> bad{{1, 10}};
  CHECK_THROWS_WITH_AS(encoder_forward(nullptr, m, bad, false, dr),
                       doctest::Contains("position 1"), std::out_of_range);
}

TEST_CASE("train mode with zero dropout equals eval mode") {
  ModelConfig cfg = toy_config(10, 6, 8, 0.0);
  Rng init(3);
  Model m = init_model(cfg, init);
  Rng dr1(4), dr2(4);
  std::vector<std::vector<int>> ids{{1, 2, 3}, {4, 5, 6}};
  auto train_out = encoder_forward(nullptr, m, ids, true, dr1);
  auto eval_out = encoder_forward(nullptr, m, ids, false, dr2);
  for (std::size_t t = 0; t < train_out.outputs.size(); ++t)
    CHECK(train_out.outputs[t]->data == eval_out.outputs[t]->data);
}

TEST_CASE("weight-drop mask is fixed across time steps within a sequence") {
  // With h=0 feeding step 1 and a shared mask, two sequences over identical
  // inputs with the same rng state produce identical outputs; more directly,
  // the mask tensor is created once per forward call by construction. Here we
  // check the observable consequence: one train forward with weight_drop only
  // equals a second one with a fresh rng in the same state.
  ModelConfig cfg = toy_config(10, 6, 8, 1.0);
  cfg.base_dropouts = {0.0, 0.0, 0.0, 0.0, 0.5};  // weight drop only
  Rng init(3);
  Model m = init_model(cfg, init);
  std::vector<std::vector<int>> ids{{1, 2, 3, 4, 5, 6, 7}};
  Rng dr1(9), dr2(9);
  auto a = encoder_forward(nullptr, m, ids, true, dr1);
  auto b = encoder_forward(nullptr, m, ids, true, dr2);
  for (std::size_t t = 0; t < a.outputs.size(); ++t)
    CHECK(a.outputs[t]->data == b.outputs[t]->data);
}

TEST_CASE("tied decode shares storage with the embedding") {
  ModelConfig cfg = toy_config(12, 6, 9);
  Rng init(5);
  Model m = init_model(cfg, init);
  REQUIRE(m.lm.has_value());
  CHECK(m.lm->weight.get() == m.embedding.get());

  Rng dr(1);
  auto hidden = random_tensor({3, 6}, dr, false);
  auto logits = lm_decode(nullptr, hidden, *m.lm);
  CHECK(logits->shape == std::vector<int>{3, 12});
  // logits == hidden * embedding^T + bias, exactly
  for (int r = 0; r < 3; ++r)
    for (int v = 0; v < 12; ++v) {
      double dot = m.lm->bias->data[v];
      for (int e = 0; e < 6; ++e) dot += hidden->at(r, e) * m.embedding->at(v, e);
      CHECK(logits->at(r, v) == dot);
    }

  // changing embedding row k changes logit k everywhere
  m.embedding->data[7 * 6 + 2] += 1.0;
  auto logits2 = lm_decode(nullptr, hidden, *m.lm);
  for (int r = 0; r < 3; ++r) {
    CHECK(logits2->at(r, 7) != logits->at(r, 7));
    CHECK(logits2->at(r, 3) == logits->at(r, 3));
  }
}

TEST_CASE("zero hidden and zero bias give uniform softmax at loss ln V") {
  ModelConfig cfg = toy_config(40, 6, 9);
  Rng init(5);
  Model m = init_model(cfg, init);
  auto hidden = Tensor::zeros({4, 6});
  auto logits = lm_decode(nullptr, hidden, *m.lm);
  auto loss = cross_entropy_flat(nullptr, logits, {0, 1, 2, 3});
  CHECK(loss->data[0] == doctest::Approx(std::log(40.0)).epsilon(1e-12));
}

TEST_CASE("classifier forward pools, normalizes rows, and widths follow classes") {
  ModelConfig cfg = toy_config(10, 6, 8);
  cfg.n_classes = 16;
  Rng init(5);
  Model m = init_model(cfg, init);
  REQUIRE(m.classifier.has_value());
  CHECK(m.classifier->w2->shape == std::vector<int>{50, 16});

  Rng dr(2);
  std::vector<TensorPtr> steps;
  for (int t = 0; t < 4; ++t) steps.push_back(random_tensor({3, 6}, dr, false));
  const auto probs = classifier_forward(m, steps, nullptr);
  REQUIRE(probs.size() == 3 * 16);
  for (int r = 0; r < 3; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 16; ++c) sum += probs[static_cast<std::size_t>(r) * 16 + c];
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("constant hidden sequence pools to three copies") {
  ModelConfig cfg = toy_config(10, 4, 8);
  cfg.n_classes = 3;
  Rng init(5);
  Model m = init_model(cfg, init);
  auto step = Tensor::from({1, 4}, {0.1, -0.2, 0.3, -0.4});
  std::vector<TensorPtr> steps(5, step);
  auto last = steps.back();
  auto mx = max_over_time(nullptr, steps);
  auto mn = mean_over_time(nullptr, steps);
  for (int j = 0; j < 4; ++j) {
    CHECK(mx->data[j] == doctest::Approx(last->data[j]));
    CHECK(mn->data[j] == doctest::Approx(last->data[j]));
  }
}

TEST_CASE("prediction is invariant to a constant shift of the logits") {
  // softmax(z + c) == softmax(z); check through the public forward by
  // shifting the final bias.
  ModelConfig cfg = toy_config(10, 4, 8);
  cfg.n_classes = 4;
  Rng init(5);
  Model m = init_model(cfg, init);
  Rng dr(2);
  std::vector<TensorPtr> steps;
  for (int t = 0; t < 3; ++t) steps.push_back(random_tensor({2, 4}, dr, false));
  const auto p1 = classifier_forward(m, steps, nullptr);
  for (auto& v : m.classifier->b2->data) v += 7.5;
  const auto p2 = classifier_forward(m, steps, nullptr);
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-9));
}

TEST_CASE("classifier rejects an empty sequence") {
  ModelConfig cfg = toy_config(10, 4, 8);
  cfg.n_classes = 3;
  Rng init(5);
  Model m = init_model(cfg, init);
  Rng dr(0);
  std::vector<TensorPtr> steps;
  CHECK_THROWS(classifier_logits(nullptr, m, steps, nullptr, false, dr));
}

TEST_CASE("full toy model gradient check over 5 seeds") {
  // V=20, emb=8, hidden=12, 3 layers, dropouts off: the module-level variant
  // of the acceptance gradient oracle, at a smaller sequence for speed.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ModelConfig cfg = toy_config(20, 8, 12, 0.0);
    Rng init(seed);
    Model m = init_model(cfg, init);
    Rng dr(0);
    std::vector<std::vector<int>> ids{{1, 3, 5}, {7, 9, 11}};
    std::vector<int> targets{3, 5, 7, 9, 11, 13};
    std::vector<TensorPtr> params;
    std::vector<std::string> names;
    for (auto& p : model_parameters(m)) {
      params.push_back(p.tensor);
      names.push_back(p.name);
    }
    auto f = [&]() {
      for (auto& p : params) p->zero_grad();
      Tape tape;
      auto enc = encoder_forward(&tape, m, ids, false, dr);
      auto flat = stack_time(&tape, enc.outputs);
      auto logits = lm_decode(&tape, flat, *m.lm);
      auto loss = cross_entropy_flat(&tape, logits, targets);
      tape.backward(loss);
      return loss->data[0];
    };
    CHECK(finite_difference_check(f, params, 1e-5) <= 1e-4);
  }
}
