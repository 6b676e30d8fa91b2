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

#include "tlpred/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tlpred
{

namespace
{

thread_local Tape * g_active_tape = nullptr;
thread_local Precision g_precision = Precision::kFloat64;

std::vector<double> & grad_slot(TensorImpl & t)
{
  if (t.grad.empty()) {
    t.grad.assign(t.data.size(), 0.0);
  }
  return t.grad;
}

[[noreturn]] void shape_fail(const std::string & op, const Shape & a, const Shape & b)
{
  throw ShapeError(op + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

[[noreturn]] void shape_fail(const std::string & op, const Shape & a, const std::string & why)
{
  throw ShapeError(op + ": shape " + to_string(a) + " " + why);
}

void require_defined(const Tensor & t, const char * op)
{
  if (!t.defined()) {
    throw std::invalid_argument(std::string(op) + ": undefined tensor operand");
  }
}

void require_rank2(const Tensor & t, const char * op)
{
  require_defined(t, op);
  if (t.rank() != 2) {
    shape_fail(op, t.shape(), "is not rank 2");
  }
}

std::size_t last_extent(const Shape & s) { return s.empty() ? 1 : s.back(); }

// Rounds a primitive result to the active precision and enforces finiteness, then records the
// tape node when any input is differentiable and a tape is active.
template <typename MakeBackward>
Tensor emit(
  PrimitiveKind kind, Shape shape, std::vector<double> data,
  std::initializer_list<const Tensor *> inputs, MakeBackward make_backward)
{
  if (g_precision == Precision::kFloat32) {
    for (double & v : data) {
      v = static_cast<double>(static_cast<float>(v));
    }
  }
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw std::domain_error(to_string(kind) + ": produced a non-finite value");
    }
  }
  Tensor out(std::move(shape), std::move(data));
  Tape * tape = g_active_tape;
  if (tape == nullptr) {
    return out;
  }
  bool any = false;
  for (const Tensor * t : inputs) {
    any = any || t->requires_grad();
  }
  if (!any) {
    return out;
  }
  out.impl()->requires_grad = true;
  std::vector<std::shared_ptr<TensorImpl>> ins;
  ins.reserve(inputs.size());
  for (const Tensor * t : inputs) {
    ins.push_back(t->impl());
  }
  tape->record(std::move(ins), out.impl(), make_backward(out.impl().get()));
  return out;
}

bool wants_grad(const TensorImpl * t) { return t->requires_grad; }

}  // namespace

std::string to_string(const Shape & shape)
{
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? ", " : "") << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t numel_of(const Shape & shape)
{
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

PrecisionScope::PrecisionScope(Precision p) : previous_(g_precision) { g_precision = p; }
PrecisionScope::~PrecisionScope() { g_precision = previous_; }

// ---- Tensor ---------------------------------------------------------------------------------

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
: impl_(std::make_shared<TensorImpl>())
{
  if (numel_of(shape) != data.size()) {
    throw ShapeError(
      "Tensor: shape " + to_string(shape) + " does not hold " + std::to_string(data.size()) +
      " elements");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad)
{
  const std::size_t n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value)
{
  const std::size_t n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::row(std::vector<double> values)
{
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
{
  return Tensor({rows, cols}, std::move(values));
}

const Shape & Tensor::shape() const
{
  require_defined(*this, "shape");
  return impl_->shape;
}

std::size_t Tensor::numel() const { return defined() ? impl_->data.size() : 0; }

std::size_t Tensor::rows() const
{
  const Shape & s = shape();
  return s.size() >= 2 ? numel() / s.back() : 1;
}

std::size_t Tensor::cols() const { return last_extent(shape()); }

std::span<const double> Tensor::data() const
{
  require_defined(*this, "data");
  return impl_->data;
}

std::span<double> Tensor::mutable_data()
{
  require_defined(*this, "mutable_data");
  return impl_->data;
}

double Tensor::item() const
{
  if (numel() != 1) {
    shape_fail("item", shape(), "is not a single element");
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t i) const { return data()[i]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

bool Tensor::requires_grad() const { return defined() && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on)
{
  require_defined(*this, "set_requires_grad");
  impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return defined() && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const
{
  require_defined(*this, "grad");
  return impl_->grad;
}

void Tensor::zero_grad()
{
  require_defined(*this, "zero_grad");
  impl_->grad.clear();
}

Tensor Tensor::clone() const
{
  require_defined(*this, "clone");
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
  t.impl_->grad = impl_->grad;
  return t;
}

Tensor Tensor::detach() const
{
  require_defined(*this, "detach");
  return Tensor(impl_->shape, impl_->data, false);
}

// ---- Tape -----------------------------------------------------------------------------------

void Tape::record(
  std::vector<std::shared_ptr<TensorImpl>> inputs, std::shared_ptr<TensorImpl> output,
  BackwardFn backward)
{
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor & loss)
{
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    shape_fail("backward", loss.shape(), "is not scalar-shaped");
  }
  if (swept_) {
    throw std::logic_error("backward: tape already swept; clear it and re-record first");
  }
  const TensorImpl * target = loss.impl().get();
  std::size_t end = nodes_.size();
  while (end > 0 && nodes_[end - 1].output.get() != target) {
    --end;
  }
  if (end == 0) {
    throw std::invalid_argument("backward: loss was not produced on this tape");
  }
  swept_ = true;
  loss.impl()->grad.assign(1, 1.0);
  for (std::size_t i = end; i-- > 0;) {
    Node & node = nodes_[i];
    if (node.output->grad.empty()) {
      continue;
    }
    node.backward();
  }
}

void Tape::clear()
{
  nodes_.clear();
  swept_ = false;
}

Tape * Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape & tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

std::string to_string(PrimitiveKind kind)
{
  switch (kind) {
    case PrimitiveKind::kMatmul:
      return "matmul";
    case PrimitiveKind::kLinear:
      return "linear";
    case PrimitiveKind::kAdd:
      return "add";
    case PrimitiveKind::kSub:
      return "sub";
    case PrimitiveKind::kMul:
      return "mul";
    case PrimitiveKind::kScalarMul:
      return "scalar_mul";
    case PrimitiveKind::kScaleRows:
      return "scale_rows";
    case PrimitiveKind::kConcat:
      return "concat";
    case PrimitiveKind::kConcatRows:
      return "concat_rows";
    case PrimitiveKind::kSoftmax:
      return "softmax";
    case PrimitiveKind::kLeakyRelu:
      return "leaky_relu";
    case PrimitiveKind::kSigmoid:
      return "sigmoid";
    case PrimitiveKind::kTanh:
      return "tanh";
    case PrimitiveKind::kSum:
      return "sum";
    case PrimitiveKind::kMean:
      return "mean";
    case PrimitiveKind::kL2Norm:
      return "l2norm";
    case PrimitiveKind::kSlice:
      return "slice";
    case PrimitiveKind::kEmbed:
      return "embed";
    case PrimitiveKind::kTranspose:
      return "transpose";
    case PrimitiveKind::kReshape:
      return "reshape";
    case PrimitiveKind::kBceWithLogits:
      return "bce_with_logits";
  }
  return "unknown";
}

// ---- primitives -----------------------------------------------------------------------------

Tensor matmul(const Tensor & a, const Tensor & b)
{
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k) {
    shape_fail("matmul", a.shape(), b.shape());
  }
  std::vector<double> out(m * n, 0.0);
  const double * pa = a.data().data();
  const double * pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double * row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double * brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] += av * brow[j];
      }
    }
  }
  return emit(PrimitiveKind::kMatmul, {m, n}, std::move(out), {&a, &b}, [&](TensorImpl * o) {
    TensorImpl * ia = a.impl().get();
    TensorImpl * ib = b.impl().get();
    return [o, ia, ib, m, k, n]() {
      const std::vector<double> & g = o->grad;
      if (wants_grad(ia)) {
        auto & ga = grad_slot(*ia);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              acc += g[i * n + j] * ib->data[p * n + j];
            }
            ga[i * k + p] += acc;
          }
        }
      }
      if (wants_grad(ib)) {
        auto & gb = grad_slot(*ib);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ia->data[i * k + p];
            for (std::size_t j = 0; j < n; ++j) {
              gb[p * n + j] += av * g[i * n + j];
            }
          }
        }
      }
    };
  });
}

Tensor linear(const Tensor & x, const Tensor & w, const Tensor & b)
{
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const std::size_t m = x.shape()[0];
  const std::size_t in = x.shape()[1];
  const std::size_t out_dim = w.shape()[0];
  if (w.shape()[1] != in) {
    shape_fail("linear", x.shape(), w.shape());
  }
  const bool has_bias = b.defined();
  if (has_bias && b.numel() != out_dim) {
    shape_fail("linear", w.shape(), b.shape());
  }
  std::vector<double> out(m * out_dim);
  const double * px = x.data().data();
  const double * pw = w.data().data();
  const double * pb = has_bias ? b.data().data() : nullptr;
  for (std::size_t i = 0; i < m; ++i) {
    const double * xr = px + i * in;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double * wr = pw + o * in;
      double acc = 0.0;
      for (std::size_t p = 0; p < in; ++p) {
        acc += xr[p] * wr[p];
      }
      out[i * out_dim + o] = has_bias ? acc + pb[o] : acc;
    }
  }
  auto make = [&](TensorImpl * o) {
    TensorImpl * ix = x.impl().get();
    TensorImpl * iw = w.impl().get();
    TensorImpl * ib = has_bias ? b.impl().get() : nullptr;
    return [o, ix, iw, ib, m, in, out_dim]() {
      const std::vector<double> & g = o->grad;
      if (wants_grad(ix)) {
        auto & gx = grad_slot(*ix);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t oo = 0; oo < out_dim; ++oo) {
            const double gv = g[i * out_dim + oo];
            if (gv == 0.0) {
              continue;
            }
            const double * wr = iw->data.data() + oo * in;
            double * gxr = gx.data() + i * in;
            for (std::size_t p = 0; p < in; ++p) {
              gxr[p] += gv * wr[p];
            }
          }
        }
      }
      if (wants_grad(iw)) {
        auto & gw = grad_slot(*iw);
        for (std::size_t i = 0; i < m; ++i) {
          const double * xr = ix->data.data() + i * in;
          for (std::size_t oo = 0; oo < out_dim; ++oo) {
            const double gv = g[i * out_dim + oo];
            if (gv == 0.0) {
              continue;
            }
            double * gwr = gw.data() + oo * in;
            for (std::size_t p = 0; p < in; ++p) {
              gwr[p] += gv * xr[p];
            }
          }
        }
      }
      if (ib != nullptr && wants_grad(ib)) {
        auto & gb = grad_slot(*ib);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t oo = 0; oo < out_dim; ++oo) {
            gb[oo] += g[i * out_dim + oo];
          }
        }
      }
    };
  };
  if (has_bias) {
    return emit(PrimitiveKind::kLinear, {m, out_dim}, std::move(out), {&x, &w, &b}, make);
  }
  return emit(PrimitiveKind::kLinear, {m, out_dim}, std::move(out), {&x, &w}, make);
}

namespace
{

enum class BinaryOp { kAdd, kSub, kMul };

Tensor binary(PrimitiveKind kind, BinaryOp op, const Tensor & a, const Tensor & b)
{
  const std::string name = to_string(kind);
  require_defined(a, name.c_str());
  require_defined(b, name.c_str());
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    shape_fail(name, a.shape(), b.shape());
  }
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = numel_of(shape);
  const auto & da = a.data();
  const auto & db = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = da[a_scalar ? 0 : i];
    const double y = db[b_scalar ? 0 : i];
    switch (op) {
      case BinaryOp::kAdd:
        out[i] = x + y;
        break;
      case BinaryOp::kSub:
        out[i] = x - y;
        break;
      case BinaryOp::kMul:
        out[i] = x * y;
        break;
    }
  }
  return emit(kind, shape, std::move(out), {&a, &b}, [&](TensorImpl * o) {
    TensorImpl * ia = a.impl().get();
    TensorImpl * ib = b.impl().get();
    return [o, ia, ib, a_scalar, b_scalar, n, op]() {
      const std::vector<double> & g = o->grad;
      if (wants_grad(ia)) {
        auto & ga = grad_slot(*ia);
        for (std::size_t i = 0; i < n; ++i) {
          double d = g[i];
          if (op == BinaryOp::kMul) {
            d *= ib->data[b_scalar ? 0 : i];
          }
          ga[a_scalar ? 0 : i] += d;
        }
      }
      if (wants_grad(ib)) {
        auto & gb = grad_slot(*ib);
        for (std::size_t i = 0; i < n; ++i) {
          double d = g[i];
          if (op == BinaryOp::kSub) {
            d = -d;
          } else if (op == BinaryOp::kMul) {
            d *= ia->data[a_scalar ? 0 : i];
          }
          gb[b_scalar ? 0 : i] += d;
        }
      }
    };
  });
}

template <typename Fwd, typename Deriv>
Tensor unary(PrimitiveKind kind, const Tensor & x, Fwd fwd, Deriv deriv)
{
  require_defined(x, to_string(kind).c_str());
  const auto & dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) {
    out[i] = fwd(dx[i]);
  }
  return emit(kind, x.shape(), std::move(out), {&x}, [&](TensorImpl * o) {
    TensorImpl * ix = x.impl().get();
    return [o, ix, deriv]() {
      auto & gx = grad_slot(*ix);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += o->grad[i] * deriv(ix->data[i], o->data[i]);
      }
    };
  });
}

double stable_sigmoid(double z)
{
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor & a, const Tensor & b)
{
  return binary(PrimitiveKind::kAdd, BinaryOp::kAdd, a, b);
}

Tensor sub(const Tensor & a, const Tensor & b)
{
  return binary(PrimitiveKind::kSub, BinaryOp::kSub, a, b);
}

Tensor mul(const Tensor & a, const Tensor & b)
{
  return binary(PrimitiveKind::kMul, BinaryOp::kMul, a, b);
}

Tensor scalar_mul(const Tensor & a, double s)
{
  return unary(
    PrimitiveKind::kScalarMul, a, [s](double v) { return s * v; },
    [s](double, double) { return s; });
}

Tensor scale_rows(const Tensor & x, const Tensor & w)
{
  require_rank2(x, "scale_rows");
  require_defined(w, "scale_rows");
  const std::size_t m = x.shape()[0];
  const std::size_t n = x.shape()[1];
  if (w.numel() != m) {
    shape_fail("scale_rows", x.shape(), w.shape());
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = x.data()[i * n + j] * w.data()[i];
    }
  }
  return emit(PrimitiveKind::kScaleRows, {m, n}, std::move(out), {&x, &w}, [&](TensorImpl * o) {
    TensorImpl * ix = x.impl().get();
    TensorImpl * iw = w.impl().get();
    return [o, ix, iw, m, n]() {
      const auto & g = o->grad;
      if (wants_grad(ix)) {
        auto & gx = grad_slot(*ix);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            gx[i * n + j] += g[i * n + j] * iw->data[i];
          }
        }
      }
      if (wants_grad(iw)) {
        auto & gw = grad_slot(*iw);
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            acc += g[i * n + j] * ix->data[i * n + j];
          }
          gw[i] += acc;
        }
      }
    };
  });
}

Tensor concat(const std::vector<Tensor> & parts)
{
  if (parts.empty()) {
    throw ShapeError("concat: no operands");
  }
  for (const auto & p : parts) {
    require_defined(p, "concat");
  }
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::size_t total = 0;
  for (const auto & p : parts) {
    Shape l(p.shape().begin(), p.shape().end() - 1);
    if (l != lead || p.rank() == 0) {
      shape_fail("concat", parts[0].shape(), p.shape());
    }
    total += p.shape().back();
  }
  const std::size_t outer = numel_of(lead);
  std::vector<double> out(outer * total);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto & p : parts) {
    const std::size_t w = p.shape().back();
    offsets.push_back(off);
    for (std::size_t r = 0; r < outer; ++r) {
      std::copy_n(p.data().data() + r * w, w, out.data() + r * total + off);
    }
    off += w;
  }
  Shape shape = lead;
  shape.push_back(total);
  // Variable arity, so the node is recorded here rather than through emit(). Copying values
  // cannot introduce non-finite entries or change precision.
  Tensor result(shape, std::move(out));
  Tape * tape = Tape::active();
  bool any = false;
  for (const auto & p : parts) {
    any = any || p.requires_grad();
  }
  if (tape != nullptr && any) {
    result.impl()->requires_grad = true;
    std::vector<std::shared_ptr<TensorImpl>> ins;
    std::vector<std::size_t> widths;
    for (const auto & p : parts) {
      ins.push_back(p.impl());
      widths.push_back(p.shape().back());
    }
    TensorImpl * o = result.impl().get();
    std::vector<TensorImpl *> raw;
    for (const auto & i : ins) {
      raw.push_back(i.get());
    }
    tape->record(ins, result.impl(), [o, raw, widths, offsets, outer, total]() {
      for (std::size_t k = 0; k < raw.size(); ++k) {
        if (!wants_grad(raw[k])) {
          continue;
        }
        auto & gk = grad_slot(*raw[k]);
        const std::size_t w = widths[k];
        for (std::size_t r = 0; r < outer; ++r) {
          for (std::size_t c = 0; c < w; ++c) {
            gk[r * w + c] += o->grad[r * total + offsets[k] + c];
          }
        }
      }
    });
  }
  return result;
}

Tensor concat_rows(const std::vector<Tensor> & parts)
{
  if (parts.empty()) {
    throw ShapeError("concat_rows: no operands");
  }
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto & p : parts) {
    require_defined(p, "concat_rows");
    if (p.rank() > 2 || p.cols() != cols) {
      shape_fail("concat_rows", parts[0].shape(), p.shape());
    }
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  std::vector<std::size_t> starts;
  for (const auto & p : parts) {
    starts.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Tensor result({rows, cols}, std::move(out));
  Tape * tape = Tape::active();
  bool any = false;
  for (const auto & p : parts) {
    any = any || p.requires_grad();
  }
  if (tape != nullptr && any) {
    result.impl()->requires_grad = true;
    std::vector<std::shared_ptr<TensorImpl>> ins;
    std::vector<TensorImpl *> raw;
    for (const auto & p : parts) {
      ins.push_back(p.impl());
      raw.push_back(p.impl().get());
    }
    TensorImpl * o = result.impl().get();
    tape->record(ins, result.impl(), [o, raw, starts]() {
      for (std::size_t k = 0; k < raw.size(); ++k) {
        if (!wants_grad(raw[k])) {
          continue;
        }
        auto & gk = grad_slot(*raw[k]);
        for (std::size_t i = 0; i < gk.size(); ++i) {
          gk[i] += o->grad[starts[k] + i];
        }
      }
    });
  }
  return result;
}

Tensor softmax(const Tensor & x)
{
  require_defined(x, "softmax");
  const std::size_t w = x.rank() == 0 ? 0 : x.shape().back();
  if (w == 0) {
    shape_fail("softmax", x.shape(), "has an empty reduction axis");
  }
  const std::size_t outer = x.numel() / w;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < outer; ++r) {
    const double * in = x.data().data() + r * w;
    double * o = out.data() + r * w;
    const double mx = *std::max_element(in, in + w);
    double z = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (std::size_t c = 0; c < w; ++c) {
      o[c] /= z;
    }
  }
  return emit(PrimitiveKind::kSoftmax, x.shape(), std::move(out), {&x}, [&](TensorImpl * o) {
    TensorImpl * ix = x.impl().get();
    return [o, ix, outer, w]() {
      auto & gx = grad_slot(*ix);
      for (std::size_t r = 0; r < outer; ++r) {
        const double * y = o->data.data() + r * w;
        const double * g = o->grad.data() + r * w;
        double dot = 0.0;
        for (std::size_t c = 0; c < w; ++c) {
          dot += g[c] * y[c];
        }
        for (std::size_t c = 0; c < w; ++c) {
          gx[r * w + c] += y[c] * (g[c] - dot);
        }
      }
    };
  });
}

Tensor leaky_relu(const Tensor & x, double slope)
{
  return unary(
    PrimitiveKind::kLeakyRelu, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
    [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor & x)
{
  return unary(
    PrimitiveKind::kSigmoid, x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor & x)
{
  return unary(
    PrimitiveKind::kTanh, x, [](double v) { return std::tanh(v); },
    [](double, double y) { return 1.0 - y * y; });
}

namespace
{

enum class Reduction { kSum, kMean, kNorm };

Tensor reduce(PrimitiveKind kind, Reduction r, const Tensor & x)
{
  require_defined(x, to_string(kind).c_str());
  const std::size_t n = x.numel();
  if (n == 0 && r == Reduction::kMean) {
    shape_fail("mean", x.shape(), "is empty");
  }
  double acc = 0.0;
  for (double v : x.data()) {
    acc += r == Reduction::kNorm ? v * v : v;
  }
  double value = acc;
  if (r == Reduction::kMean) {
    value = acc / static_cast<double>(n);
  } else if (r == Reduction::kNorm) {
    value = std::sqrt(acc);
  }
  return emit(kind, {1}, {value}, {&x}, [&](TensorImpl * o) {
    TensorImpl * ix = x.impl().get();
    return [o, ix, r, n]() {
      auto & gx = grad_slot(*ix);
      const double g = o->grad[0];
      const double norm = o->data[0];
      for (std::size_t i = 0; i < n; ++i) {
        switch (r) {
          case Reduction::kSum:
            gx[i] += g;
            break;
          case Reduction::kMean:
            gx[i] += g / static_cast<double>(n);
            break;
          case Reduction::kNorm:
            // The subgradient at the origin is taken as zero.
            if (norm > 0.0) {
              gx[i] += g * ix->data[i] / norm;
            }
            break;
        }
      }
    };
  });
}

}  // namespace

Tensor sum(const Tensor & x) { return reduce(PrimitiveKind::kSum, Reduction::kSum, x); }
Tensor mean(const Tensor & x) { return reduce(PrimitiveKind::kMean, Reduction::kMean, x); }
Tensor l2norm(const Tensor & x) { return reduce(PrimitiveKind::kL2Norm, Reduction::kNorm, x); }

Tensor slice(const Tensor & x, std::size_t begin, std::size_t end)
{
  require_defined(x, "slice");
  if (x.rank() == 0) {
    shape_fail("slice", x.shape(), "has no axis to slice");
  }
  const std::size_t w = x.shape().back();
  if (begin > end || end > w) {
    shape_fail(
      "slice", x.shape(),
      "cannot be sliced to [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
  }
  const std::size_t outer = x.numel() / std::max<std::size_t>(w, 1);
  const std::size_t nw = end - begin;
  std::vector<double> out(outer * nw);
  for (std::size_t r = 0; r < outer; ++r) {
    std::copy_n(x.data().data() + r * w + begin, nw, out.data() + r * nw);
  }
  Shape shape = x.shape();
  shape.back() = nw;
  return emit(PrimitiveKind::kSlice, shape, std::move(out), {&x}, [&](TensorImpl * o) {
    TensorImpl * ix = x.impl().get();
    return [o, ix, outer, w, nw, begin]() {
      auto & gx = grad_slot(*ix);
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t c = 0; c < nw; ++c) {
          gx[r * w + begin + c] += o->grad[r * nw + c];
        }
      }
    };
  });
}

Tensor embed(const Tensor & table, std::span<const std::size_t> indices)
{
  require_rank2(table, "embed");
  const std::size_t v = table.shape()[0];
  const std::size_t d = table.shape()[1];
  std::vector<double> out(indices.size() * d);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= v) {
      shape_fail("embed", table.shape(), "has no row " + std::to_string(indices[k]));
    }
    std::copy_n(table.data().data() + indices[k] * d, d, out.data() + k * d);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return emit(
    PrimitiveKind::kEmbed, {idx.size(), d}, std::move(out), {&table}, [&](TensorImpl * o) {
      TensorImpl * it = table.impl().get();
      return [o, it, idx, d]() {
        auto & gt = grad_slot(*it);
        for (std::size_t k = 0; k < idx.size(); ++k) {
          for (std::size_t c = 0; c < d; ++c) {
            gt[idx[k] * d + c] += o->grad[k * d + c];
          }
        }
      };
    });
}

Tensor transpose(const Tensor & x)
{
  require_defined(x, "transpose");
  if (x.rank() > 2) {
    shape_fail("transpose", x.shape(), "is not rank <= 2");
  }
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[j * m + i] = x.data()[i * n + j];
    }
  }
  return emit(PrimitiveKind::kTranspose, {n, m}, std::move(out), {&x}, [&](TensorImpl * o) {
    TensorImpl * ix = x.impl().get();
    return [o, ix, m, n]() {
      auto & gx = grad_slot(*ix);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          gx[i * n + j] += o->grad[j * m + i];
        }
      }
    };
  });
}

Tensor reshape(const Tensor & x, Shape shape)
{
  require_defined(x, "reshape");
  if (numel_of(shape) != x.numel()) {
    shape_fail("reshape", x.shape(), shape);
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return emit(PrimitiveKind::kReshape, shape, std::move(out), {&x}, [&](TensorImpl * o) {
    TensorImpl * ix = x.impl().get();
    return [o, ix]() {
      auto & gx = grad_slot(*ix);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += o->grad[i];
      }
    };
  });
}

Tensor bce_with_logits(const Tensor & logits, double target)
{
  if (!(target >= 0.0 && target <= 1.0)) {
    throw std::invalid_argument("bce_with_logits: target must lie in [0, 1]");
  }
  return unary(
    PrimitiveKind::kBceWithLogits, logits,
    [target](double z) {
      return std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
    },
    [target](double z, double) { return stable_sigmoid(z) - target; });
}

Tensor apply_primitive(
  PrimitiveKind kind, const std::vector<Tensor> & inputs, double param, double param2)
{
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw std::invalid_argument(
        to_string(kind) + ": expected " + std::to_string(n) + " inputs, got " +
        std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case PrimitiveKind::kMatmul:
      arity(2);
      return matmul(inputs[0], inputs[1]);
    case PrimitiveKind::kLinear:
      if (inputs.size() == 2) {
        return linear(inputs[0], inputs[1]);
      }
      arity(3);
      return linear(inputs[0], inputs[1], inputs[2]);
    case PrimitiveKind::kAdd:
      arity(2);
      return add(inputs[0], inputs[1]);
    case PrimitiveKind::kSub:
      arity(2);
      return sub(inputs[0], inputs[1]);
    case PrimitiveKind::kMul:
      arity(2);
      return mul(inputs[0], inputs[1]);
    case PrimitiveKind::kScalarMul:
      arity(1);
      return scalar_mul(inputs[0], param);
    case PrimitiveKind::kScaleRows:
      arity(2);
      return scale_rows(inputs[0], inputs[1]);
    case PrimitiveKind::kConcat:
      return concat(inputs);
    case PrimitiveKind::kConcatRows:
      return concat_rows(inputs);
    case PrimitiveKind::kSoftmax:
      arity(1);
      return softmax(inputs[0]);
    case PrimitiveKind::kLeakyRelu:
      arity(1);
      return leaky_relu(inputs[0], param);
    case PrimitiveKind::kSigmoid:
      arity(1);
      return sigmoid(inputs[0]);
    case PrimitiveKind::kTanh:
      arity(1);
      return tanh(inputs[0]);
    case PrimitiveKind::kSum:
      arity(1);
      return sum(inputs[0]);
    case PrimitiveKind::kMean:
      arity(1);
      return mean(inputs[0]);
    case PrimitiveKind::kL2Norm:
      arity(1);
      return l2norm(inputs[0]);
    case PrimitiveKind::kSlice:
      arity(1);
      return slice(inputs[0], static_cast<std::size_t>(param), static_cast<std::size_t>(param2));
    case PrimitiveKind::kEmbed: {
      arity(2);
      std::vector<std::size_t> idx;
      for (double v : inputs[1].data()) {
        idx.push_back(static_cast<std::size_t>(v));
      }
      return embed(inputs[0], idx);
    }
    case PrimitiveKind::kTranspose:
      arity(1);
      return transpose(inputs[0]);
    case PrimitiveKind::kReshape:
      arity(1);
      return reshape(inputs[0], {static_cast<std::size_t>(param), static_cast<std::size_t>(param2)});
    case PrimitiveKind::kBceWithLogits:
      arity(1);
      return bce_with_logits(inputs[0], param);
  }
  throw std::invalid_argument("apply_primitive: unknown kind");
}

// ---- gradient checking ----------------------------------------------------------------------

GradReport grad_check(const std::function<Tensor()> & f, std::span<Tensor> inputs, double eps)
{
  if (!(eps > 0.0)) {
    throw std::invalid_argument("grad_check: eps must be positive");
  }
  PrecisionScope f64(Precision::kFloat64);
  GradReport report;

  std::vector<bool> flags;
  for (auto & t : inputs) {
    flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  auto restore = [&]() {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      inputs[k].set_requires_grad(flags[k]);
    }
  };

  std::vector<std::vector<double>> analytic;
  try {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = f();
    }
    tape.backward(loss);
    for (auto & t : inputs) {
      analytic.emplace_back(
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.numel(), 0.0));
    }
  } catch (const std::domain_error & e) {
    report.failed = true;
    report.message = std::string("analytic pass failed: ") + e.what();
    restore();
    return report;
  }

  NoGradScope no_grad;
  auto probe = [&](std::size_t k, std::size_t i, double sign, double & value) -> bool {
    try {
      value = f().item();
    } catch (const std::domain_error &) {
      value = std::nan("");
    }
    if (!std::isfinite(value)) {
      report.failed = true;
      report.worst_input = k;
      report.worst_index = i;
      std::ostringstream os;
      os << "non-finite value at probe input=" << k << " index=" << i << " offset=" << sign * eps;
      report.message = os.str();
      return false;
    }
    return true;
  };

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      double fp = 0.0;
      double fm = 0.0;
      data[i] = orig + eps;
      const bool ok_p = probe(k, i, 1.0, fp);
      data[i] = orig - eps;
      const bool ok_m = ok_p && probe(k, i, -1.0, fm);
      data[i] = orig;
      if (!ok_p || !ok_m) {
        restore();
        return report;
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.probes;
      if (rel > report.max_rel_err || report.probes == 1) {
        report.max_rel_err = rel;
        report.worst_input = k;
        report.worst_index = i;
      }
    }
  }
  restore();
  return report;
}

GradReport grad_check(const std::function<Tensor(const Tensor &)> & f, Tensor x, double eps)
{
  std::vector<Tensor> inputs{x};
  return grad_check([&]() { return f(inputs[0]); }, inputs, eps);
}

}  // namespace tlpred
