// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "trifuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "trifuse/rng.hpp"

namespace trifuse {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw DimensionError("tensor rank must be 1..3, got shape " + shape_string(shape));
  }
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
}

std::string pair_message(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
         shape_string(b.shape());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError(pair_message(op, a, b));
}

// C += op(A)·op(B) where op(A) is [m x k] and op(B) is [k x n].
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      const double av = trans_a ? a[t * m + i] : a[i * k + t];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      if (!trans_b) {
        const double* brow = b + t * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + t];
      }
    }
  }
}

// Geometry shared by matmul and matmul_nt.
struct MatmulPlan {
  std::size_t batch = 1;
  std::size_t m = 0, k = 0, n = 0;
  bool shared_b = true;  // right operand reused across the batch
  Shape out;
};

MatmulPlan plan_matmul(const char* op, const Tensor& a, const Tensor& b, bool b_transposed) {
  MatmulPlan p;
  if (b.rank() == 2) {
    p.shared_b = true;
    const std::size_t bk = b_transposed ? b.dim(1) : b.dim(0);
    p.n = b_transposed ? b.dim(0) : b.dim(1);
    if (a.rank() == 2) {
      p.m = a.dim(0);
      p.k = a.dim(1);
      p.out = {p.m, p.n};
    } else if (a.rank() == 3) {
      p.batch = 1;
      p.m = a.dim(0) * a.dim(1);
      p.k = a.dim(2);
      p.out = {a.dim(0), a.dim(1), p.n};
    } else {
      throw DimensionError(pair_message(op, a, b));
    }
    if (bk != p.k) throw DimensionError(pair_message(op, a, b));
    return p;
  }
  if (a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0)) {
    p.shared_b = false;
    p.batch = a.dim(0);
    p.m = a.dim(1);
    p.k = a.dim(2);
    const std::size_t bk = b_transposed ? b.dim(2) : b.dim(1);
    p.n = b_transposed ? b.dim(1) : b.dim(2);
    if (bk != p.k) throw DimensionError(pair_message(op, a, b));
    p.out = {p.batch, p.m, p.n};
    return p;
  }
  throw DimensionError(pair_message(op, a, b));
}

Tensor matmul_impl(Tape& tape, const Tensor& a, const Tensor& b, bool b_transposed,
                   const char* op) {
  const MatmulPlan p = plan_matmul(op, a, b, b_transposed);
  Tensor out(p.out);
  const std::size_t a_step = p.m * p.k;
  const std::size_t b_step = p.shared_b ? 0 : p.k * p.n;
  const std::size_t c_step = p.m * p.n;
  {
    auto av = a.values();
    auto bv = b.values();
    auto cv = out.values_mut();
    for (std::size_t s = 0; s < p.batch; ++s) {
      gemm(false, b_transposed, p.m, p.n, p.k, av.data() + s * a_step, bv.data() + s * b_step,
           cv.data() + s * c_step);
    }
  }
  require_finite(out, op);
  tape.record({&a, &b}, out, [a, b, out, p, b_transposed, a_step, b_step, c_step]() mutable {
    auto dc = out.grad();
    if (a.requires_grad()) {
      auto da = a.grad_mut();
      auto bv = b.values();
      // dA = dC·op(B)ᵀ
      for (std::size_t s = 0; s < p.batch; ++s) {
        gemm(false, !b_transposed, p.m, p.k, p.n, dc.data() + s * c_step,
             bv.data() + s * b_step, da.data() + s * a_step);
      }
    }
    if (b.requires_grad()) {
      auto db = b.grad_mut();
      auto av = a.values();
      for (std::size_t s = 0; s < p.batch; ++s) {
        if (!b_transposed) {
          // dB = Aᵀ·dC, [k x n]
          gemm(true, false, p.k, p.n, p.m, av.data() + s * a_step, dc.data() + s * c_step,
               db.data() + s * b_step);
        } else {
          // B is [n x k]: dB = dCᵀ·A
          gemm(true, false, p.n, p.k, p.m, dc.data() + s * c_step, av.data() + s * a_step,
               db.data() + s * b_step);
        }
      }
    }
  });
  return out;
}

template <class Forward, class Derivative>
Tensor unary(Tape& tape, const Tensor& x, const char* op, Forward f, Derivative df) {
  Tensor out(x.shape());
  {
    auto xv = x.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
  }
  require_finite(out, op);
  tape.record({&x}, out, [x, out, df]() mutable {
    auto dx = x.grad_mut();
    auto g = out.grad();
    auto xv = x.values();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * df(xv[i]);
  });
  return out;
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, bool requires_grad) {
  validate_shape(shape);
  impl_ = std::make_shared<Impl>();
  impl_->values.assign(shape_size(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  validate_shape(shape);
  if (values.size() != shape_size(shape)) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::fill(t.impl_->values.begin(), t.impl_->values.end(), value);
  return t;
}

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return impl_ ? impl_->shape : kEmpty;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::size() const { return impl_ ? impl_->values.size() : 0; }

std::span<const double> Tensor::values() const { return impl_->values; }
std::span<double> Tensor::values_mut() const { return impl_->values; }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) const { impl_->requires_grad = on; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::grad_mut() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const {
  return Tensor(impl_->shape, impl_->values, false);
}

Tensor Tensor::clone() const {
  return Tensor(impl_->shape, impl_->values, impl_->requires_grad);
}

// ---------------------------------------------------------------------------
// Mask

Mask Mask::all_valid(std::size_t rows, std::size_t cols) {
  return Mask{rows, cols, std::vector<std::uint8_t>(rows * cols, 1)};
}

Mask Mask::from_lengths(const std::vector<std::size_t>& lengths, std::size_t cols) {
  Mask m{lengths.size(), cols, std::vector<std::uint8_t>(lengths.size() * cols, 0)};
  for (std::size_t r = 0; r < lengths.size(); ++r) {
    if (lengths[r] > cols) {
      throw DimensionError("mask length " + std::to_string(lengths[r]) + " exceeds width " +
                           std::to_string(cols));
    }
    std::fill_n(m.valid.begin() + static_cast<std::ptrdiff_t>(r * cols), lengths[r], 1);
  }
  return m;
}

std::size_t Mask::count(std::size_t r) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < cols; ++c) n += valid[r * cols + c] ? 1 : 0;
  return n;
}

// ---------------------------------------------------------------------------
// Tape

void Tape::record(std::initializer_list<const Tensor*> inputs, Tensor& output, BackwardFn fn) {
  if (!recording()) return;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor* t) { return t->requires_grad(); });
  if (!any) return;
  if (consumed_) throw TapeError("recording onto a tape that was already consumed by backward()");
  output.set_requires_grad(true);
  entries_.push_back({output, std::move(fn)});
}

void Tape::record(const std::vector<Tensor>& inputs, Tensor& output, BackwardFn fn) {
  if (!recording()) return;
  const bool any =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return;
  if (consumed_) throw TapeError("recording onto a tape that was already consumed by backward()");
  output.set_requires_grad(true);
  entries_.push_back({output, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("backward() called twice on the same tape; reset() it first");
  if (loss.size() != 1) {
    throw TapeError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  consumed_ = true;
  Tensor seed = loss;
  seed.grad_mut()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

// ---------------------------------------------------------------------------
// Ops

void require_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                         shape_string(t.shape()));
    }
  }
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  return matmul_impl(tape, a, b, false, "matmul");
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
  return matmul_impl(tape, a, b, true, "matmul_nt");
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  {
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  }
  require_finite(out, "add");
  tape.record({&a, &b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto da = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (b.requires_grad()) {
      auto db = b.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
    }
  });
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  {
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  }
  require_finite(out, "sub");
  tape.record({&a, &b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto da = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (b.requires_grad()) {
      auto db = b.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
  return out;
}

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("hadamard", a, b);
  Tensor out(a.shape());
  {
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  }
  require_finite(out, "hadamard");
  tape.record({&a, &b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    auto av = a.values();
    auto bv = b.values();
    if (a.requires_grad()) {
      auto da = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto db = b.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(
      tape, x, "scale", [factor](double v) { return v * factor; },
      [factor](double) { return factor; });
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || bias.dim(0) != last_dim(x)) {
    throw DimensionError(pair_message("add_bias", x, bias));
  }
  const std::size_t d = bias.size();
  Tensor out(x.shape());
  {
    auto xv = x.values();
    auto bv = bias.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] + bv[i % d];
  }
  require_finite(out, "add_bias");
  tape.record({&x, &bias}, out, [x, bias, out, d]() mutable {
    auto g = out.grad();
    if (x.requires_grad()) {
      auto dx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto db = bias.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) db[i % d] += g[i];
    }
  });
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(Tape& tape, const Tensor& x) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  return unary(
      tape, x, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))); },
      [](double v) {
        const double t = std::tanh(kC * (v + kA * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      });
}

Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  require_finite(out, "sum");
  tape.record({&x}, out, [x, out]() mutable {
    const double g = out.grad()[0];
    for (auto& d : x.grad_mut()) d += g;
  });
  return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double n = static_cast<double>(x.size());
  Tensor out = Tensor::scalar(s / n);
  require_finite(out, "mean");
  tape.record({&x}, out, [x, out, n]() mutable {
    const double g = out.grad()[0] / n;
    for (auto& d : x.grad_mut()) d += g;
  });
  return out;
}

namespace {

// Softmax backward shared by the plain and masked variants:
// dX = Y ⊙ (dY − rowsum(dY ⊙ Y)).
void softmax_backward(std::span<const double> y, std::span<const double> dy, std::span<double> dx,
                      std::size_t cols) {
  const std::size_t rows = y.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t off = r * cols;
    double dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += dy[off + c] * y[off + c];
    for (std::size_t c = 0; c < cols; ++c) dx[off + c] += y[off + c] * (dy[off + c] - dot);
  }
}

}  // namespace

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  const std::size_t cols = last_dim(x);
  Tensor out(x.shape());
  {
    auto xv = x.values();
    auto ov = out.values_mut();
    for (std::size_t off = 0; off < xv.size(); off += cols) {
      double mx = xv[off];
      for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, xv[off + c]);
      double z = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        ov[off + c] = std::exp(xv[off + c] - mx);
        z += ov[off + c];
      }
      for (std::size_t c = 0; c < cols; ++c) ov[off + c] /= z;
    }
  }
  require_finite(out, "softmax_rows");
  tape.record({&x}, out, [x, out, cols]() mutable {
    softmax_backward(out.values(), out.grad(), x.grad_mut(), cols);
  });
  return out;
}

Tensor masked_softmax_rows(Tape& tape, const Tensor& x, const Mask& key_mask) {
  const std::size_t cols = last_dim(x);
  std::size_t batch = 1;
  std::size_t rows_per_batch = 0;
  if (x.rank() == 2) {
    rows_per_batch = x.dim(0);
  } else if (x.rank() == 3) {
    batch = x.dim(0);
    rows_per_batch = x.dim(1);
  } else {
    throw DimensionError("masked_softmax_rows: need rank 2 or 3, got " + shape_string(x.shape()));
  }
  if (key_mask.rows != batch || key_mask.cols != cols) {
    throw DimensionError("masked_softmax_rows: mask [" + std::to_string(key_mask.rows) + "x" +
                         std::to_string(key_mask.cols) + "] does not fit scores " +
                         shape_string(x.shape()));
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (key_mask.count(b) == 0) {
      throw DegenerateInputError("masked_softmax_rows: sequence " + std::to_string(b) +
                                 " has no valid position");
    }
  }
  Tensor out(x.shape());
  {
    auto xv = x.values();
    auto ov = out.values_mut();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t r = 0; r < rows_per_batch; ++r) {
        const std::size_t off = (b * rows_per_batch + r) * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c) {
          if (key_mask.at(b, c)) mx = std::max(mx, xv[off + c]);
        }
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          ov[off + c] = key_mask.at(b, c) ? std::exp(xv[off + c] - mx) : 0.0;
          z += ov[off + c];
        }
        for (std::size_t c = 0; c < cols; ++c) ov[off + c] /= z;
      }
    }
  }
  require_finite(out, "masked_softmax_rows");
  // Masked entries have y == 0, so the shared rule yields zero gradient there.
  tape.record({&x}, out, [x, out, cols]() mutable {
    softmax_backward(out.values(), out.grad(), x.grad_mut(), cols);
  });
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = last_dim(x);
  if (gain.rank() != 1 || gain.dim(0) != d) throw DimensionError(pair_message("layer_norm", x, gain));
  if (bias.rank() != 1 || bias.dim(0) != d) throw DimensionError(pair_message("layer_norm", x, bias));
  if (!(eps > 0.0)) throw ValidationError("layer_norm: eps must be positive");
  const std::size_t rows = x.size() / d;
  Tensor out(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> rstd(rows);
  {
    auto xv = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    auto ov = out.values_mut();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * d;
      double mu = 0.0;
      for (std::size_t c = 0; c < d; ++c) mu += xv[off + c];
      mu /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t c = 0; c < d; ++c) var += (xv[off + c] - mu) * (xv[off + c] - mu);
      var /= static_cast<double>(d);
      rstd[r] = 1.0 / std::sqrt(var + eps);
      for (std::size_t c = 0; c < d; ++c) {
        xhat[off + c] = (xv[off + c] - mu) * rstd[r];
        ov[off + c] = xhat[off + c] * gv[c] + bv[c];
      }
    }
  }
  require_finite(out, "layer_norm");
  tape.record({&x, &gain, &bias}, out,
              [x, gain, bias, out, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)]() mutable {
                auto g = out.grad();
                if (gain.requires_grad()) {
                  auto dg = gain.grad_mut();
                  for (std::size_t i = 0; i < g.size(); ++i) dg[i % d] += g[i] * xhat[i];
                }
                if (bias.requires_grad()) {
                  auto db = bias.grad_mut();
                  for (std::size_t i = 0; i < g.size(); ++i) db[i % d] += g[i];
                }
                if (x.requires_grad()) {
                  auto dx = x.grad_mut();
                  auto gv = gain.values();
                  const double inv_d = 1.0 / static_cast<double>(d);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const std::size_t off = r * d;
                    double m1 = 0.0;
                    double m2 = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                      const double dxh = g[off + c] * gv[c];
                      m1 += dxh;
                      m2 += dxh * xhat[off + c];
                    }
                    m1 *= inv_d;
                    m2 *= inv_d;
                    for (std::size_t c = 0; c < d; ++c) {
                      const double dxh = g[off + c] * gv[c];
                      dx[off + c] += rstd[r] * (dxh - m1 - xhat[off + c] * m2);
                    }
                  }
                }
              });
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double p, bool training, Rng* rng) {
  if (!training || p == 0.0) return x;
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("dropout: p must lie in [0, 1)");
  if (rng == nullptr) throw ValidationError("dropout: training mode needs an Rng");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factor(x.size());
  for (auto& f : factor) f = rng->bernoulli(p) ? 0.0 : keep_scale;
  Tensor out(x.shape());
  {
    auto xv = x.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * factor[i];
  }
  tape.record({&x}, out, [x, out, factor = std::move(factor)]() mutable {
    auto g = out.grad();
    auto dx = x.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor[i];
  });
  return out;
}

Tensor concat_last(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape l = p.shape();
    l.pop_back();
    if (l != lead) throw DimensionError(pair_message("concat_last", parts[0], p));
    total += last_dim(p);
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  const std::size_t rows = out.size() / total;
  {
    auto ov = out.values_mut();
    std::size_t col = 0;
    for (const auto& p : parts) {
      const std::size_t w = last_dim(p);
      auto pv = p.values();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * w), w,
                    ov.begin() + static_cast<std::ptrdiff_t>(r * total + col));
      }
      col += w;
    }
  }
  tape.record(parts, out, [parts, out, rows, total]() mutable {
    auto g = out.grad();
    std::size_t col = 0;
    for (auto& p : parts) {
      const std::size_t w = last_dim(p);
      if (p.requires_grad()) {
        auto dp = p.grad_mut();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < w; ++c) dp[r * w + c] += g[r * total + col + c];
        }
      }
      col += w;
    }
  });
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  tape.record({&x}, out, [x, out]() mutable {
    auto g = out.grad();
    auto dx = x.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
  return out;
}

Tensor select(Tape& tape, const Tensor& x, std::size_t index) {
  if (index >= x.size()) {
    throw DimensionError("select: index " + std::to_string(index) + " out of range for " +
                         shape_string(x.shape()));
  }
  Tensor out = Tensor::scalar(x.values()[index]);
  tape.record({&x}, out, [x, out, index]() mutable { x.grad_mut()[index] += out.grad()[0]; });
  return out;
}

Tensor scale_by(Tape& tape, const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw DimensionError(pair_message("scale_by", x, s));
  const double sv = s.values()[0];
  Tensor out(x.shape());
  {
    auto xv = x.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * sv;
  }
  require_finite(out, "scale_by");
  tape.record({&x, &s}, out, [x, s, out, sv]() mutable {
    auto g = out.grad();
    auto xv = x.values();
    if (x.requires_grad()) {
      auto dx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * sv;
    }
    if (s.requires_grad()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
      s.grad_mut()[0] += acc;
    }
  });
  return out;
}

Tensor embedding(Tape& tape, const Tensor& table, const std::vector<int>& ids, std::size_t batch,
                 std::size_t seq) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be rank 2");
  if (ids.size() != batch * seq) {
    throw DimensionError("embedding: expected " + std::to_string(batch * seq) + " ids, got " +
                         std::to_string(ids.size()));
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw ValidationError("embedding: token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(vocab));
    }
  }
  Tensor out({batch, seq, d});
  {
    auto tv = table.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[i]) * d), d,
                  ov.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
  }
  tape.record({&table}, out, [table, out, ids, d]() mutable {
    auto g = out.grad();
    auto dt = table.grad_mut();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t row = static_cast<std::size_t>(ids[i]) * d;
      for (std::size_t c = 0; c < d; ++c) dt[row + c] += g[i * d + c];
    }
  });
  return out;
}

double grad_check(const LossFn& forward, const std::vector<Tensor>& params, double eps) {
  std::vector<Tensor> ps = params;
  for (auto& p : ps) p.zero_grad();
  {
    Tape tape;
    Tensor loss = forward(tape);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto& p : ps) {
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) analytic.assign(p.grad().begin(), p.grad().end());
    auto values = p.values_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      double plus = 0.0;
      {
        Tape tape(Tape::Mode::inference);
        plus = forward(tape).item();
      }
      values[i] = saved - eps;
      double minus = 0.0;
      {
        Tape tape(Tape::Mode::inference);
        minus = forward(tape).item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[i];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace trifuse
