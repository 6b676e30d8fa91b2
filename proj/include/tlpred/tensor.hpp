// Copyright 2026 The tlpred Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TLPRED__TENSOR_HPP_
#define TLPRED__TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlpred
{

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape & shape);
std::size_t numel_of(const Shape & shape);

/// Raised by primitives whose operands do not satisfy the shape rule.
class ShapeError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Storage precision of primitive outputs. Float32 rounds every primitive result (and every
/// optimizer update) to single precision; gradient checks always run in float64.
enum class Precision { kFloat64, kFloat32 };

Precision precision();
void set_precision(Precision p);

class PrecisionScope
{
public:
  explicit PrecisionScope(Precision p);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope &) = delete;
  PrecisionScope & operator=(const PrecisionScope &) = delete;

private:
  Precision previous_;
};

struct TensorImpl
{
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward sweep reaches this tensor
  bool requires_grad = false;
};

/// Dense row-major tensor handle. Copies share storage; use clone() for a deep copy.
class Tensor
{
public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);  // 1 x n
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape & shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // 2-D view helpers; a rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  Tensor clone() const;
  // Same values, no tape history.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl> & impl() const { return impl_; }

private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of primitive applications. Nodes are appended as primitives run, so the
/// record is topologically sorted by construction.
class Tape
{
public:
  using BackwardFn = std::function<void()>;

  struct Node
  {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape & operator=(const Tape &) = delete;

  void record(
    std::vector<std::shared_ptr<TensorImpl>> inputs, std::shared_ptr<TensorImpl> output,
    BackwardFn backward);

  /// Assigns d(loss)/d(t) to the grad slot of every requires_grad ancestor of `loss`.
  /// Throws if `loss` is not scalar, is not produced on this tape, or the tape was already swept.
  void backward(const Tensor & loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }
  bool swept() const { return swept_; }

  /// Tape receiving records on this thread, or nullptr (no-grad mode).
  static Tape * active();

private:
  friend class TapeScope;
  std::vector<Node> nodes_;
  bool swept_ = false;
};

/// Makes a tape the active recording target for the current thread.
class TapeScope
{
public:
  explicit TapeScope(Tape & tape);
  ~TapeScope();
  TapeScope(const TapeScope &) = delete;
  TapeScope & operator=(const TapeScope &) = delete;

private:
  Tape * previous_;
};

/// Suspends recording for the current thread.
class NoGradScope
{
public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope &) = delete;
  NoGradScope & operator=(const NoGradScope &) = delete;

private:
  Tape * previous_;
};

enum class PrimitiveKind {
  kMatmul,
  kLinear,
  kAdd,
  kSub,
  kMul,
  kScalarMul,
  kScaleRows,
  kConcat,
  kConcatRows,
  kSoftmax,
  kLeakyRelu,
  kSigmoid,
  kTanh,
  kSum,
  kMean,
  kL2Norm,
  kSlice,
  kEmbed,
  kTranspose,
  kReshape,
  kBceWithLogits,
};

std::string to_string(PrimitiveKind kind);

// ---- primitives -------------------------------------------------------------------------------
// Shape rules are stated per primitive. No implicit broadcasting except where an operand is a
// single element (scalar-tensor).

/// (m x k) . (k x n) -> m x n
Tensor matmul(const Tensor & a, const Tensor & b);
/// x (m x in), w (out x in), optional b (out elements) -> x w^T + b, m x out
Tensor linear(const Tensor & x, const Tensor & w, const Tensor & b = Tensor());
/// Same shape, or one operand with a single element.
Tensor add(const Tensor & a, const Tensor & b);
Tensor sub(const Tensor & a, const Tensor & b);
Tensor mul(const Tensor & a, const Tensor & b);
Tensor scalar_mul(const Tensor & a, double s);
/// x (m x n), w (m x 1) -> row r of x scaled by w[r]
Tensor scale_rows(const Tensor & x, const Tensor & w);
/// Concatenate along the last axis; leading extents must agree.
Tensor concat(const std::vector<Tensor> & parts);
/// Stack 2-D tensors along the first axis; column counts must agree.
Tensor concat_rows(const std::vector<Tensor> & parts);
/// Softmax along the last axis. Rejects an empty last axis.
Tensor softmax(const Tensor & x);
Tensor leaky_relu(const Tensor & x, double slope);
Tensor sigmoid(const Tensor & x);
Tensor tanh(const Tensor & x);
/// Reductions over every element -> shape {1}.
Tensor sum(const Tensor & x);
Tensor mean(const Tensor & x);
Tensor l2norm(const Tensor & x);
/// Columns [begin, end) of the last axis.
Tensor slice(const Tensor & x, std::size_t begin, std::size_t end);
/// Row lookup: table (v x d), indices -> (indices.size() x d).
Tensor embed(const Tensor & table, std::span<const std::size_t> indices);
Tensor transpose(const Tensor & x);
Tensor reshape(const Tensor & x, Shape shape);
/// Elementwise binary cross-entropy of sigmoid(z) against a constant target in [0, 1].
Tensor bce_with_logits(const Tensor & logits, double target);

/// Dispatch form for the fixed-arity primitives; `param` carries the slope / scale / bounds.
Tensor apply_primitive(
  PrimitiveKind kind, const std::vector<Tensor> & inputs, double param = 0.0,
  double param2 = 0.0);

// ---- gradient checking ------------------------------------------------------------------------

struct GradReport
{
  double max_rel_err = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
  bool failed = false;  // NaN/Inf at a probe point or in the analytic gradient
  std::string message;

  bool passed(double tolerance) const { return !failed && max_rel_err < tolerance; }
};

/// Compares backward-sweep gradients of the scalar `f` with respect to every tensor in `inputs`
/// against central differences. rel_err = |a - n| / max(1, |a|, |n|). Runs in float64.
GradReport grad_check(
  const std::function<Tensor()> & f, std::span<Tensor> inputs, double eps = 1e-5);

GradReport grad_check(
  const std::function<Tensor(const Tensor &)> & f, Tensor x, double eps = 1e-5);

}  // namespace tlpred

#endif  // TLPRED__TENSOR_HPP_
