#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"

#include "attrib/errors.hpp"
#include "attrib/optim.hpp"
#include "attrib/rng.hpp"
#include "attrib/tensor.hpp"

using namespace attrib;

namespace {

TensorPtr random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true,
                        double lo = -1.0, double hi = 1.0) {
  auto t = Tensor::zeros(std::move(shape), requires_grad);
  for (auto& v : t->data) v = rng.uniform(lo, hi);
  return t;
}

// Max relative FD error over `params` for a graph builder returning the loss.
double fd_error(const std::function<TensorPtr(Tape*)>& build,
                const std::vector<TensorPtr>& params, double eps = 1e-6) {
  auto f = [&]() {
    for (auto& p : params) p->zero_grad();
    Tape tape;
    auto loss = build(&tape);
    tape.backward(loss);
    return loss->data[0];
  };
  return finite_difference_check(f, params, eps);
}

}  // namespace

TEST_CASE("matmul identity") {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto out = matmul(nullptr, a, eye);
  CHECK(out->data == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("sigmoid of zero is one half") {
  auto x = Tensor::zeros({3});
  auto y = sigmoid(nullptr, x);
  for (double v : y->data) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("mean-over-time of ones") {
  std::vector<TensorPtr> steps;
  for (int t = 0; t < 4; ++t) steps.push_back(Tensor::full({1, 2}, 1.0));
  auto out = mean_over_time(nullptr, steps);
  CHECK(out->shape == std::vector<int>{1, 2});
  CHECK(out->data[0] == doctest::Approx(1.0));
  CHECK(out->data[1] == doctest::Approx(1.0));
}

TEST_CASE("shape mismatch names the op and shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  CHECK_THROWS_WITH_AS(matmul(nullptr, a, b), doctest::Contains("matmul"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(matmul(nullptr, a, b), doctest::Contains("[2x3]"),
                       std::invalid_argument);
}

TEST_CASE("backward of sum gives ones") {
  auto x = Tensor::from({5}, {1, 2, 3, 4, 5}, true);
  Tape tape;
  auto loss = sum_all(&tape, x);
  tape.backward(loss);
  for (double g : x->grad) CHECK(g == 1.0);
}

TEST_CASE("backward of dot product is 2x") {
  auto x = Tensor::from({1, 2}, {1, 2}, true);
  Tape tape;
  auto loss = sum_all(&tape, mul(&tape, x, x));
  tape.backward(loss);
  CHECK(x->grad[0] == doctest::Approx(2.0));
  CHECK(x->grad[1] == doctest::Approx(4.0));
}

TEST_CASE("backward requires scalar loss") {
  auto x = Tensor::from({2}, {1, 2}, true);
  Tape tape;
  auto y = mul(&tape, x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("unreached leaves keep zero grad") {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  auto y = Tensor::from({3}, {4, 5, 6}, true);
  Tape tape;
  auto loss = sum_all(&tape, x);
  tape.backward(loss);
  for (double g : y->grad) CHECK(g == 0.0);
}

TEST_CASE("two-layer tanh net matches finite differences") {
  Rng rng(7);
  auto x = random_tensor({4, 3}, rng, false);
  auto w1 = random_tensor({3, 5}, rng);
  auto b1 = random_tensor({5}, rng);
  auto w2 = random_tensor({5, 2}, rng);
  auto b2 = random_tensor({2}, rng);
  auto build = [&](Tape* tape) {
    auto h = tanh_op(tape, affine(tape, x, w1, b1));
    auto out = tanh_op(tape, affine(tape, h, w2, b2));
    return mean_all(tape, out);
  };
  CHECK(fd_error(build, {w1, b1, w2, b2}) < 1e-5);
}

TEST_CASE("finite_difference_check on x^2 and on a constant") {
  auto x = Tensor::from({1}, {1.0}, true);
  auto f = [&]() {
    x->zero_grad();
    Tape tape;
    auto loss = sum_all(&tape, mul(&tape, x, x));
    tape.backward(loss);
    return loss->data[0];
  };
  CHECK(finite_difference_check(f, {x}, 1e-6) <= 1e-8);

  auto c = Tensor::from({1}, {2.0}, true);
  auto fc = [&]() {
    c->zero_grad();
    Tape tape;
    auto loss = Tensor::scalar(3.0, true);
    return loss->data[0];
  };
  CHECK(finite_difference_check(fc, {c}, 1e-6) == 0.0);
}

TEST_CASE("every primitive passes a finite-difference sweep") {
  Rng rng(123);
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    // matmul + add + multiply + sigmoid/tanh
    {
      auto a = random_tensor({3, 4}, rng);
      auto b = random_tensor({4, 2}, rng);
      auto c = random_tensor({3, 2}, rng);
      auto build = [&](Tape* tape) {
        auto y = matmul(tape, a, b);
        y = add(tape, y, c);
        y = mul(tape, sigmoid(tape, y), tanh_op(tape, y));
        return mean_all(tape, y);
      };
      CHECK(fd_error(build, {a, b, c}, 1e-5) < 1e-5);
    }
    // relu away from the kink, slicing, concatenation
    {
      auto a = random_tensor({2, 6}, rng, true, 0.1, 1.0);
      auto b = random_tensor({2, 3}, rng, true, -1.0, -0.1);
      auto build = [&](Tape* tape) {
        auto lhs = slice_cols(tape, a, 1, 3);
        auto cat = concat_cols(tape, {lhs, relu(tape, b)});
        return mean_all(tape, cat);
      };
      CHECK(fd_error(build, {a, b}, 1e-5) < 1e-5);
    }
    // row-lookup, masked-multiply, stack/pooling
    {
      auto table = random_tensor({6, 3}, rng);
      auto mask = random_tensor({2, 3}, rng, false);
      std::vector<int> ids{1, 5};
      auto simple = [&](Tape* tape) {
        auto e = row_lookup(tape, table, ids);
        e = masked_mul(tape, e, mask);
        std::vector<TensorPtr> steps{e, row_lookup(tape, table, {0, 2}),
                                     row_lookup(tape, table, {3, 4})};
        auto pooled = concat_cols(
            tape, {mean_over_time(tape, steps), max_over_time(tape, steps)});
        auto flat = stack_time(tape, steps);
        return add(tape, mean_all(tape, pooled), mean_all(tape, flat));
      };
      CHECK(fd_error(simple, {table}, 1e-5) < 1e-5);
    }
    // affine + batchnorm (train mode) + cross-entropy. The affine bias is
    // normalized away (structurally zero gradient), so it stays out of the
    // relative-error check; w still exercises batchnorm's input gradient.
    {
      auto x = random_tensor({5, 4}, rng, false);
      auto w = random_tensor({4, 3}, rng);
      auto b = random_tensor({3}, rng, false);
      auto gamma = random_tensor({3}, rng, true, 0.5, 1.5);
      auto beta = random_tensor({3}, rng);
      std::vector<int> targets{0, 2, 1, 2, 0};
      BatchNormState bn;
      auto build = [&](Tape* tape) {
        auto y = affine(tape, x, w, b);
        y = batchnorm(tape, y, gamma, beta, bn, true);
        return cross_entropy_flat(tape, y, targets);
      };
      CHECK(fd_error(build, {w, gamma, beta}, 1e-5) < 1e-5);
    }
  }
}

TEST_CASE("adam first step moves by about lr") {
  auto theta = Tensor::zeros({1}, true);
  theta->grad[0] = 1.0;
  AdamState state;
  state.beta1 = 0.9;
  state.beta2 = 0.999;
  state.weight_decay = 0.0;
  adam_step({theta}, {"theta"}, state, 0.1);
  CHECK(std::fabs(theta->data[0] - (-0.1)) < 1e-8);
  CHECK(state.t == 1);
}

TEST_CASE("adam with zero gradient and zero decay is the identity") {
  auto theta = Tensor::from({3}, {0.5, -0.25, 1.0}, true);
  const auto before = theta->data;
  AdamState state;
  state.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) {
    theta->zero_grad();
    adam_step({theta}, {"theta"}, state, 0.01);
  }
  CHECK(theta->data == before);
}

TEST_CASE("decoupled weight decay shrinks the parameter directly") {
  auto theta = Tensor::from({1}, {1.0}, true);
  AdamState state;
  state.weight_decay = 0.1;
  theta->zero_grad();
  adam_step({theta}, {"theta"}, state, 0.01);
  CHECK(theta->data[0] == doctest::Approx(0.999).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients by name") {
  auto theta = Tensor::zeros({1}, true);
  theta->grad[0] = std::nan("");
  AdamState state;
  CHECK_THROWS_WITH_AS(adam_step({theta}, {"lstm1.w"}, state, 0.1),
                       doctest::Contains("lstm1.w"), NumericError);
}

TEST_CASE("cross entropy under uniform logits equals ln V") {
  const int v = 188;
  auto logits = Tensor::zeros({4, v});
  std::vector<int> targets{0, 17, 99, 187};
  auto loss = cross_entropy_flat(nullptr, logits, targets);
  CHECK(loss->data[0] == doctest::Approx(std::log(188.0)).epsilon(1e-12));
  CHECK(loss->data[0] == doctest::Approx(5.2364).epsilon(1e-4));
}

TEST_CASE("cross entropy of confident correct logits approaches zero") {
  auto logits = Tensor::zeros({1, 3});
  logits->data = {50.0, 0.0, 0.0};
  auto loss = cross_entropy_flat(nullptr, logits, {0});
  CHECK(loss->data[0] < 1e-20);
  CHECK(loss->data[0] >= 0.0);
}

TEST_CASE("cross entropy hand example") {
  auto logits = Tensor::zeros({1, 3});
  logits->data = {0.0, 0.0, std::log(2.0)};
  auto loss = cross_entropy_flat(nullptr, logits, {2});
  // softmax = (1/4, 1/4, 2/4); -log(1/2) = ln 2
  CHECK(loss->data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects out-of-range targets with the row index") {
  auto logits = Tensor::zeros({2, 3});
  CHECK_THROWS_WITH_AS(cross_entropy_flat(nullptr, logits, {0, 3}), doctest::Contains("row 1"),
                       std::out_of_range);
}

TEST_CASE("cross entropy is non-negative on random logits") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = random_tensor({3, 7}, rng, false, -5.0, 5.0);
    std::vector<int> targets{static_cast<int>(rng.next_below(7)),
                             static_cast<int>(rng.next_below(7)),
                             static_cast<int>(rng.next_below(7))};
    CHECK(cross_entropy_flat(nullptr, logits, targets)->data[0] >= 0.0);
  }
}

TEST_CASE("forward and backward are bitwise deterministic") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = random_tensor({4, 3}, rng, false);
    auto w = random_tensor({3, 3}, rng);
    Tape tape;
    auto y = tanh_op(&tape, matmul(&tape, x, w));
    auto loss = mean_all(&tape, y);
    w->zero_grad();
    tape.backward(loss);
    return std::make_pair(y->data, w->grad);
  };
  const auto a = run(42);
  const auto b = run(42);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
