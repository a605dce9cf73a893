#include "attrib/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace attrib {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

MapC cmap(const Tensor& t, int r, int c) { return MapC(t.data.data(), r, c); }
MapM gmap(Tensor& t, int r, int c) { return MapM(t.grad.data(), r, c); }

[[noreturn]] void shape_error(const char* op, const std::vector<int>& a,
                              const std::vector<int>& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) +
                              " vs " + shape_str(b));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) shape_error(op, a.shape, b.shape);
}

bool want_grad(std::initializer_list<const TensorPtr*> ins) {
  for (const TensorPtr* p : ins)
    if (*p && (*p)->requires_grad) return true;
  return false;
}

TensorPtr make_out(std::vector<int> shape, bool requires_grad) {
  auto t = Tensor::zeros(std::move(shape), requires_grad);
  return t;
}

// Elementwise unary op with derivative expressed in terms of the output.
template <class F, class DF>
TensorPtr unary_from_output(Tape* tape, const TensorPtr& x, F f, DF dfdy) {
  auto out = make_out(x->shape, x->requires_grad);
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = f(x->data[i]);
  if (tape && x->requires_grad) {
    TensorPtr xc = x, oc = out;
    tape->record([xc, oc, dfdy]() {
      for (std::size_t i = 0; i < xc->data.size(); ++i)
        xc->grad[i] += oc->grad[i] * dfdy(oc->data[i]);
    });
  }
  return out;
}

}  // namespace

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void Tensor::zero_grad() {
  if (requires_grad) std::fill(grad.begin(), grad.end(), 0.0);
}

void Tensor::ensure_grad() {
  if (requires_grad && grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

TensorPtr Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  for (int d : shape)
    if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension in " + shape_str(shape));
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.assign(static_cast<std::size_t>(shape_numel(t->shape)), 0.0);
  t->requires_grad = requires_grad;
  t->ensure_grad();
  return t;
}

TensorPtr Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  std::fill(t->data.begin(), t->data.end(), value);
  return t;
}

TensorPtr Tensor::from(std::vector<int> shape, std::vector<double> values,
                       bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("Tensor::from: " + shape_str(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  t->shape = std::move(shape);
  t->data = std::move(values);
  t->requires_grad = requires_grad;
  t->ensure_grad();
  return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = {};
  t->data = {value};
  t->requires_grad = requires_grad;
  t->ensure_grad();
  return t;
}

TensorPtr Tensor::copy_of(const Tensor& t) {
  auto c = std::make_shared<Tensor>();
  c->shape = t.shape;
  c->data = t.data;
  c->requires_grad = false;
  return c;
}

void Tape::backward(const TensorPtr& loss) {
  if (!loss || !loss->is_scalar())
    throw std::invalid_argument("Tape::backward: loss must be a scalar tensor");
  if (!loss->requires_grad)
    throw std::invalid_argument("Tape::backward: loss does not require grad");
  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ---------------------------------------------------------------------------

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    shape_error("matmul", a->shape, b->shape);
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = make_out({m, n}, want_grad({&a, &b}));
  MapM(out->data.data(), m, n).noalias() = cmap(*a, m, k) * cmap(*b, k, n);
  if (tape && out->requires_grad) {
    TensorPtr ac = a, bc = b, oc = out;
    tape->record([ac, bc, oc, m, k, n]() {
      MapC go(oc->grad.data(), m, n);
      if (ac->requires_grad) gmap(*ac, m, k).noalias() += go * cmap(*bc, k, n).transpose();
      if (bc->requires_grad) gmap(*bc, k, n).noalias() += cmap(*ac, m, k).transpose() * go;
    });
  }
  return out;
}

TensorPtr matmul_nt(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[1])
    shape_error("matmul_nt", a->shape, b->shape);
  const int m = a->shape[0], k = a->shape[1], n = b->shape[0];
  auto out = make_out({m, n}, want_grad({&a, &b}));
  MapM(out->data.data(), m, n).noalias() = cmap(*a, m, k) * cmap(*b, n, k).transpose();
  if (tape && out->requires_grad) {
    TensorPtr ac = a, bc = b, oc = out;
    tape->record([ac, bc, oc, m, k, n]() {
      MapC go(oc->grad.data(), m, n);
      if (ac->requires_grad) gmap(*ac, m, k).noalias() += go * cmap(*bc, n, k);
      if (bc->requires_grad) gmap(*bc, n, k).noalias() += go.transpose() * cmap(*ac, m, k);
    });
  }
  return out;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("add", *a, *b);
  auto out = make_out(a->shape, want_grad({&a, &b}));
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  if (tape && out->requires_grad) {
    TensorPtr ac = a, bc = b, oc = out;
    tape->record([ac, bc, oc]() {
      for (std::size_t i = 0; i < oc->data.size(); ++i) {
        if (ac->requires_grad) ac->grad[i] += oc->grad[i];
        if (bc->requires_grad) bc->grad[i] += oc->grad[i];
      }
    });
  }
  return out;
}

TensorPtr add_rowvec(Tape* tape, const TensorPtr& x, const TensorPtr& b) {
  const int n = x->rows(), f = x->cols();
  if (b->size() != f) shape_error("add_rowvec", x->shape, b->shape);
  auto out = make_out(x->shape, want_grad({&x, &b}));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < f; ++c)
      out->data[static_cast<std::size_t>(r) * f + c] =
          x->data[static_cast<std::size_t>(r) * f + c] + b->data[c];
  if (tape && out->requires_grad) {
    TensorPtr xc = x, bc = b, oc = out;
    tape->record([xc, bc, oc, n, f]() {
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < f; ++c) {
          const double g = oc->grad[static_cast<std::size_t>(r) * f + c];
          if (xc->requires_grad) xc->grad[static_cast<std::size_t>(r) * f + c] += g;
          if (bc->requires_grad) bc->grad[c] += g;
        }
    });
  }
  return out;
}

TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("multiply", *a, *b);
  auto out = make_out(a->shape, want_grad({&a, &b}));
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
  if (tape && out->requires_grad) {
    TensorPtr ac = a, bc = b, oc = out;
    tape->record([ac, bc, oc]() {
      for (std::size_t i = 0; i < oc->data.size(); ++i) {
        if (ac->requires_grad) ac->grad[i] += oc->grad[i] * bc->data[i];
        if (bc->requires_grad) bc->grad[i] += oc->grad[i] * ac->data[i];
      }
    });
  }
  return out;
}

TensorPtr sigmoid(Tape* tape, const TensorPtr& x) {
  return unary_from_output(
      tape, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double y) { return y * (1.0 - y); });
}

TensorPtr tanh_op(Tape* tape, const TensorPtr& x) {
  return unary_from_output(
      tape, x, [](double v) { return std::tanh(v); },
      [](double y) { return 1.0 - y * y; });
}

TensorPtr relu(Tape* tape, const TensorPtr& x) {
  return unary_from_output(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

TensorPtr scale(Tape* tape, const TensorPtr& x, double k) {
  auto out = make_out(x->shape, x->requires_grad);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] * k;
  if (tape && x->requires_grad) {
    TensorPtr xc = x, oc = out;
    tape->record([xc, oc, k]() {
      for (std::size_t i = 0; i < xc->data.size(); ++i) xc->grad[i] += oc->grad[i] * k;
    });
  }
  return out;
}

TensorPtr concat_cols(Tape* tape, const std::vector<TensorPtr>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const int n = xs[0]->rows();
  int total = 0;
  bool rg = false;
  for (const auto& x : xs) {
    if (x->rows() != n) shape_error("concat", xs[0]->shape, x->shape);
    total += x->cols();
    rg = rg || x->requires_grad;
  }
  auto out = make_out({n, total}, rg);
  int off = 0;
  for (const auto& x : xs) {
    const int c = x->cols();
    for (int r = 0; r < n; ++r)
      std::copy_n(x->data.begin() + static_cast<std::size_t>(r) * c, c,
                  out->data.begin() + static_cast<std::size_t>(r) * total + off);
    off += c;
  }
  if (tape && rg) {
    std::vector<TensorPtr> xc = xs;
    TensorPtr oc = out;
    tape->record([xc, oc, n, total]() {
      int off = 0;
      for (const auto& x : xc) {
        const int c = x->cols();
        if (x->requires_grad)
          for (int r = 0; r < n; ++r)
            for (int j = 0; j < c; ++j)
              x->grad[static_cast<std::size_t>(r) * c + j] +=
                  oc->grad[static_cast<std::size_t>(r) * total + off + j];
        off += c;
      }
    });
  }
  return out;
}

TensorPtr slice_cols(Tape* tape, const TensorPtr& x, int start, int n) {
  const int rows = x->rows(), cols = x->cols();
  if (start < 0 || n <= 0 || start + n > cols)
    throw std::invalid_argument("slice_cols: [" + std::to_string(start) + "," +
                                std::to_string(start + n) + ") out of " + shape_str(x->shape));
  auto out = make_out({rows, n}, x->requires_grad);
  for (int r = 0; r < rows; ++r)
    std::copy_n(x->data.begin() + static_cast<std::size_t>(r) * cols + start, n,
                out->data.begin() + static_cast<std::size_t>(r) * n);
  if (tape && x->requires_grad) {
    TensorPtr xc = x, oc = out;
    tape->record([xc, oc, rows, cols, start, n]() {
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < n; ++j)
          xc->grad[static_cast<std::size_t>(r) * cols + start + j] +=
              oc->grad[static_cast<std::size_t>(r) * n + j];
    });
  }
  return out;
}

TensorPtr row_lookup(Tape* tape, const TensorPtr& table, const std::vector<int>& ids) {
  const int v = table->rows(), e = table->cols();
  const int n = static_cast<int>(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || ids[i] >= v)
      throw std::out_of_range("row_lookup: id " + std::to_string(ids[i]) + " at position " +
                              std::to_string(i) + " outside table of " + std::to_string(v) +
                              " rows");
  auto out = make_out({n, e}, table->requires_grad);
  for (int r = 0; r < n; ++r)
    std::copy_n(table->data.begin() + static_cast<std::size_t>(ids[r]) * e, e,
                out->data.begin() + static_cast<std::size_t>(r) * e);
  if (tape && table->requires_grad) {
    TensorPtr tc = table, oc = out;
    std::vector<int> idc = ids;
    tape->record([tc, oc, idc, e]() {
      for (std::size_t r = 0; r < idc.size(); ++r)
        for (int j = 0; j < e; ++j)
          tc->grad[static_cast<std::size_t>(idc[r]) * e + j] += oc->grad[r * e + j];
    });
  }
  return out;
}

TensorPtr masked_mul(Tape* tape, const TensorPtr& x, const TensorPtr& mask) {
  check_same_shape("masked-multiply", *x, *mask);
  auto out = make_out(x->shape, x->requires_grad);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] * mask->data[i];
  if (tape && x->requires_grad) {
    TensorPtr xc = x, mc = mask, oc = out;
    tape->record([xc, mc, oc]() {
      for (std::size_t i = 0; i < xc->data.size(); ++i)
        xc->grad[i] += oc->grad[i] * mc->data[i];
    });
  }
  return out;
}

TensorPtr stack_time(Tape* tape, const std::vector<TensorPtr>& steps) {
  if (steps.empty()) throw std::invalid_argument("stack_time: no steps");
  const int b = steps[0]->rows(), h = steps[0]->cols();
  const int T = static_cast<int>(steps.size());
  bool rg = false;
  for (const auto& s : steps) {
    if (s->rows() != b || s->cols() != h) shape_error("stack_time", steps[0]->shape, s->shape);
    rg = rg || s->requires_grad;
  }
  auto out = make_out({b * T, h}, rg);
  for (int t = 0; t < T; ++t)
    for (int r = 0; r < b; ++r)
      std::copy_n(steps[t]->data.begin() + static_cast<std::size_t>(r) * h, h,
                  out->data.begin() + (static_cast<std::size_t>(r) * T + t) * h);
  if (tape && rg) {
    std::vector<TensorPtr> sc = steps;
    TensorPtr oc = out;
    tape->record([sc, oc, b, h, T]() {
      for (int t = 0; t < T; ++t) {
        if (!sc[t]->requires_grad) continue;
        for (int r = 0; r < b; ++r)
          for (int j = 0; j < h; ++j)
            sc[t]->grad[static_cast<std::size_t>(r) * h + j] +=
                oc->grad[(static_cast<std::size_t>(r) * T + t) * h + j];
      }
    });
  }
  return out;
}

namespace {

void check_pool_args(const char* op, const std::vector<TensorPtr>& steps,
                     const std::vector<std::uint8_t>* valid) {
  if (steps.empty()) throw std::invalid_argument(std::string(op) + ": empty sequence");
  const int b = steps[0]->rows(), h = steps[0]->cols();
  for (const auto& s : steps)
    if (s->rows() != b || s->cols() != h) shape_error(op, steps[0]->shape, s->shape);
  if (valid) {
    if (valid->size() != static_cast<std::size_t>(b) * steps.size())
      throw std::invalid_argument(std::string(op) + ": valid mask size mismatch");
    for (int r = 0; r < b; ++r) {
      bool any = false;
      for (std::size_t t = 0; t < steps.size(); ++t)
        any = any || (*valid)[static_cast<std::size_t>(r) * steps.size() + t] != 0;
      if (!any)
        throw std::invalid_argument(std::string(op) + ": row " + std::to_string(r) +
                                    " has no valid steps");
    }
  }
}

}  // namespace

TensorPtr mean_over_time(Tape* tape, const std::vector<TensorPtr>& steps,
                         const std::vector<std::uint8_t>* valid) {
  check_pool_args("mean-over-time", steps, valid);
  const int b = steps[0]->rows(), h = steps[0]->cols();
  const int T = static_cast<int>(steps.size());
  bool rg = false;
  for (const auto& s : steps) rg = rg || s->requires_grad;
  auto out = make_out({b, h}, rg);
  std::vector<double> counts(b, 0.0);
  for (int r = 0; r < b; ++r) {
    for (int t = 0; t < T; ++t) {
      if (valid && !(*valid)[static_cast<std::size_t>(r) * T + t]) continue;
      counts[r] += 1.0;
      for (int j = 0; j < h; ++j)
        out->data[static_cast<std::size_t>(r) * h + j] +=
            steps[t]->data[static_cast<std::size_t>(r) * h + j];
    }
    for (int j = 0; j < h; ++j) out->data[static_cast<std::size_t>(r) * h + j] /= counts[r];
  }
  if (tape && rg) {
    std::vector<TensorPtr> sc = steps;
    TensorPtr oc = out;
    std::vector<std::uint8_t> vmask = valid ? *valid : std::vector<std::uint8_t>();
    tape->record([sc, oc, vmask, counts, b, h, T]() {
      for (int t = 0; t < T; ++t) {
        if (!sc[t]->requires_grad) continue;
        for (int r = 0; r < b; ++r) {
          if (!vmask.empty() && !vmask[static_cast<std::size_t>(r) * T + t]) continue;
          for (int j = 0; j < h; ++j)
            sc[t]->grad[static_cast<std::size_t>(r) * h + j] +=
                oc->grad[static_cast<std::size_t>(r) * h + j] / counts[r];
        }
      }
    });
  }
  return out;
}

TensorPtr max_over_time(Tape* tape, const std::vector<TensorPtr>& steps,
                        const std::vector<std::uint8_t>* valid) {
  check_pool_args("max-over-time", steps, valid);
  const int b = steps[0]->rows(), h = steps[0]->cols();
  const int T = static_cast<int>(steps.size());
  bool rg = false;
  for (const auto& s : steps) rg = rg || s->requires_grad;
  auto out = make_out({b, h}, rg);
  // argmax per (row, feature); ties go to the earliest step.
  std::vector<int> argmax(static_cast<std::size_t>(b) * h, -1);
  for (int r = 0; r < b; ++r)
    for (int j = 0; j < h; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      int bt = -1;
      for (int t = 0; t < T; ++t) {
        if (valid && !(*valid)[static_cast<std::size_t>(r) * T + t]) continue;
        const double v = steps[t]->data[static_cast<std::size_t>(r) * h + j];
        if (v > best) {
          best = v;
          bt = t;
        }
      }
      out->data[static_cast<std::size_t>(r) * h + j] = best;
      argmax[static_cast<std::size_t>(r) * h + j] = bt;
    }
  if (tape && rg) {
    std::vector<TensorPtr> sc = steps;
    TensorPtr oc = out;
    tape->record([sc, oc, argmax, b, h]() {
      for (int r = 0; r < b; ++r)
        for (int j = 0; j < h; ++j) {
          const int t = argmax[static_cast<std::size_t>(r) * h + j];
          if (sc[t]->requires_grad)
            sc[t]->grad[static_cast<std::size_t>(r) * h + j] +=
                oc->grad[static_cast<std::size_t>(r) * h + j];
        }
    });
  }
  return out;
}

TensorPtr affine(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  return add_rowvec(tape, matmul(tape, x, w), b);
}

TensorPtr batchnorm(Tape* tape, const TensorPtr& x, const TensorPtr& gamma,
                    const TensorPtr& beta, BatchNormState& state, bool train) {
  const int n = x->rows(), f = x->cols();
  if (gamma->size() != f || beta->size() != f)
    shape_error("batchnorm", x->shape, gamma->shape);
  if (state.running_mean.empty()) {
    state.running_mean.assign(f, 0.0);
    state.running_var.assign(f, 1.0);
  }
  auto out = make_out(x->shape, want_grad({&x, &gamma, &beta}));
  std::vector<double> mean(f, 0.0), var(f, 0.0), inv_std(f, 0.0);
  if (train) {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < f; ++c) mean[c] += x->at(r, c);
    for (int c = 0; c < f; ++c) mean[c] /= n;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < f; ++c) {
        const double d = x->at(r, c) - mean[c];
        var[c] += d * d;
      }
    for (int c = 0; c < f; ++c) var[c] /= n;  // biased, used for normalization
    for (int c = 0; c < f; ++c) {
      // Unbiased variance feeds the running estimate.
      const double unbiased = n > 1 ? var[c] * n / (n - 1) : var[c];
      state.running_mean[c] =
          (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
      state.running_var[c] =
          (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  for (int c = 0; c < f; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < f; ++c)
      out->at(r, c) = gamma->data[c] * (x->at(r, c) - mean[c]) * inv_std[c] + beta->data[c];
  if (tape && out->requires_grad) {
    TensorPtr xc = x, gc = gamma, bc = beta, oc = out;
    tape->record([xc, gc, bc, oc, mean, inv_std, n, f, train]() {
      for (int c = 0; c < f; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int r = 0; r < n; ++r) {
          const double xhat = (xc->at(r, c) - mean[c]) * inv_std[c];
          const double dy = oc->grad[static_cast<std::size_t>(r) * f + c];
          sum_dy += dy;
          sum_dy_xhat += dy * xhat;
        }
        if (gc->requires_grad) gc->grad[c] += sum_dy_xhat;
        if (bc->requires_grad) bc->grad[c] += sum_dy;
        if (xc->requires_grad) {
          for (int r = 0; r < n; ++r) {
            const double xhat = (xc->at(r, c) - mean[c]) * inv_std[c];
            const double dy = oc->grad[static_cast<std::size_t>(r) * f + c];
            double dx;
            if (train) {
              dx = gc->data[c] * inv_std[c] *
                   (dy - sum_dy / n - xhat * sum_dy_xhat / n);
            } else {
              dx = gc->data[c] * inv_std[c] * dy;  // running stats are constants
            }
            xc->grad[static_cast<std::size_t>(r) * f + c] += dx;
          }
        }
      }
    });
  }
  return out;
}

TensorPtr sum_all(Tape* tape, const TensorPtr& x) {
  auto out = Tensor::scalar(0.0, x->requires_grad);
  double s = 0.0;
  for (double v : x->data) s += v;
  out->data[0] = s;
  if (tape && x->requires_grad) {
    TensorPtr xc = x, oc = out;
    tape->record([xc, oc]() {
      for (std::size_t i = 0; i < xc->data.size(); ++i) xc->grad[i] += oc->grad[0];
    });
  }
  return out;
}

TensorPtr mean_all(Tape* tape, const TensorPtr& x) {
  return scale(tape, sum_all(tape, x), 1.0 / static_cast<double>(x->size()));
}

TensorPtr cross_entropy_flat(Tape* tape, const TensorPtr& logits,
                             const std::vector<int>& targets) {
  const int n = logits->rows(), v = logits->cols();
  if (static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("cross_entropy_flat: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(n) + " rows");
  for (int r = 0; r < n; ++r)
    if (targets[r] < 0 || targets[r] >= v)
      throw std::out_of_range("cross_entropy_flat: target " + std::to_string(targets[r]) +
                              " out of range at row " + std::to_string(r));
  // Stable log-softmax; the softmax probabilities are kept for the backward.
  auto probs = std::make_shared<std::vector<double>>(logits->data.size());
  double loss = 0.0;
  for (int r = 0; r < n; ++r) {
    const double* row = logits->data.data() + static_cast<std::size_t>(r) * v;
    double mx = row[0];
    for (int c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < v; ++c) z += std::exp(row[c] - mx);
    const double log_z = std::log(z) + mx;
    for (int c = 0; c < v; ++c)
      (*probs)[static_cast<std::size_t>(r) * v + c] = std::exp(row[c] - log_z);
    loss += log_z - row[targets[r]];
  }
  auto out = Tensor::scalar(loss / n, logits->requires_grad);
  if (tape && logits->requires_grad) {
    TensorPtr lc = logits, oc = out;
    std::vector<int> tc = targets;
    tape->record([lc, oc, tc, probs, n, v]() {
      const double g = oc->grad[0] / n;
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < v; ++c)
          lc->grad[static_cast<std::size_t>(r) * v + c] +=
              g * ((*probs)[static_cast<std::size_t>(r) * v + c] - (c == tc[r] ? 1.0 : 0.0));
    });
  }
  return out;
}

std::vector<double> softmax_rows(const Tensor& logits, double temperature) {
  const int n = logits.rows(), v = logits.cols();
  std::vector<double> probs(logits.data.size());
  for (int r = 0; r < n; ++r) {
    const double* row = logits.data.data() + static_cast<std::size_t>(r) * v;
    double mx = row[0];
    for (int c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < v; ++c) z += std::exp((row[c] - mx) / temperature);
    for (int c = 0; c < v; ++c)
      probs[static_cast<std::size_t>(r) * v + c] = std::exp((row[c] - mx) / temperature) / z;
  }
  return probs;
}

}  // namespace attrib
