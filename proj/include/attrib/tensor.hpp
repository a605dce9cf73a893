#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace attrib {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor of 64-bit floats. Gradients live in a parallel
// buffer of the same shape, allocated iff requires_grad.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data when requires_grad
  bool requires_grad = false;

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  // 2-d accessors. rows()/cols() treat a 1-d tensor as a single row.
  int rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  int cols() const { return shape.empty() ? 1 : shape.back(); }
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool is_scalar() const { return data.size() == 1 && shape.empty(); }

  void zero_grad();
  void ensure_grad();

  static TensorPtr zeros(std::vector<int> shape, bool requires_grad = false);
  static TensorPtr full(std::vector<int> shape, double value, bool requires_grad = false);
  static TensorPtr from(std::vector<int> shape, std::vector<double> values,
                        bool requires_grad = false);
  static TensorPtr scalar(double value, bool requires_grad = false);
  // Deep copy of values (not grad); result does not require grad.
  static TensorPtr copy_of(const Tensor& t);
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Reverse-mode tape. Operations append nodes in execution order, which is a
// topological order by construction; backward() replays the nodes once, in
// reverse. A tape and the tensors it references are owned by one training
// session at a time.
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  // Seeds loss->grad with 1 and propagates. loss must be scalar.
  // Gradients accumulate into existing buffers.
  void backward(const TensorPtr& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

// ---------------------------------------------------------------------------
// Primitives. Every op takes the tape first; pass nullptr to skip recording
// (pure evaluation). Output requires_grad iff any differentiable input does.
// Shape mismatches throw std::invalid_argument naming the op and both shapes.
// ---------------------------------------------------------------------------

// [m×k] · [k×n] -> [m×n]
TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
// a · b^T where a is [m×k], b is [n×k] -> [m×n]. Used by the tied decoder.
TensorPtr matmul_nt(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
// x [n×f] + row vector b [f], broadcast over rows.
TensorPtr add_rowvec(Tape* tape, const TensorPtr& x, const TensorPtr& b);
TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sigmoid(Tape* tape, const TensorPtr& x);
TensorPtr tanh_op(Tape* tape, const TensorPtr& x);
TensorPtr relu(Tape* tape, const TensorPtr& x);
TensorPtr scale(Tape* tape, const TensorPtr& x, double k);
// Concatenate along columns: [n×c1],[n×c2],... -> [n×(c1+c2+...)]
TensorPtr concat_cols(Tape* tape, const std::vector<TensorPtr>& xs);
TensorPtr slice_cols(Tape* tape, const TensorPtr& x, int start, int n);
// Embedding lookup: rows of table [v×e] selected by ids -> [|ids|×e].
TensorPtr row_lookup(Tape* tape, const TensorPtr& table, const std::vector<int>& ids);
// Elementwise multiply by a constant mask (no gradient into the mask).
TensorPtr masked_mul(Tape* tape, const TensorPtr& x, const TensorPtr& mask);
// Stack T step tensors [b×h] into [(b*T)×h], row order (b, t) -> b*T + t.
TensorPtr stack_time(Tape* tape, const std::vector<TensorPtr>& steps);

// Pooling over a sequence of step tensors [b×h]. valid, when given, is a
// [b×T] 0/1 matrix (row-major vector); masked-out steps do not contribute.
// Every row must have at least one valid step.
TensorPtr mean_over_time(Tape* tape, const std::vector<TensorPtr>& steps,
                         const std::vector<std::uint8_t>* valid = nullptr);
TensorPtr max_over_time(Tape* tape, const std::vector<TensorPtr>& steps,
                        const std::vector<std::uint8_t>* valid = nullptr);

// x [n×i] · w [i×o] + b [o]
TensorPtr affine(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);

// Running statistics for batch normalization (state, not parameters).
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Train mode normalizes with batch statistics and updates the running ones;
// eval mode uses the running statistics and records nothing about the batch.
TensorPtr batchnorm(Tape* tape, const TensorPtr& x, const TensorPtr& gamma,
                    const TensorPtr& beta, BatchNormState& state, bool train);

TensorPtr sum_all(Tape* tape, const TensorPtr& x);
TensorPtr mean_all(Tape* tape, const TensorPtr& x);

// Mean over rows of -log softmax(logits)[target]. logits [n×v], one target
// id per row. Batch-by-time inputs are flattened to rows before this call.
TensorPtr cross_entropy_flat(Tape* tape, const TensorPtr& logits,
                             const std::vector<int>& targets);

// Row-wise softmax, optionally with a temperature divisor (forward only).
std::vector<double> softmax_rows(const Tensor& logits, double temperature = 1.0);

}  // namespace attrib
