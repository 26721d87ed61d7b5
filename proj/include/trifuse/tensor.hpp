// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors (rank 1-3) with tape-based reverse-mode
// differentiation. Every op takes the tape it records onto; an op records
// only when at least one input requires a gradient, so inference passes over
// frozen tensors leave the tape empty.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "trifuse/error.hpp"

namespace trifuse {

class Rng;

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Shared handle to a tensor buffer. Copies alias the same storage; use
/// clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor.
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  std::span<double> values_mut() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on) const;

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Gradient buffer, allocated as zeros on first access.
  std::span<double> grad_mut() const;
  void zero_grad() const;

  /// Deep copy; the result carries no gradient and does not require one.
  Tensor detach() const;
  /// Deep copy preserving requires_grad (gradient is not copied).
  Tensor clone() const;

  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Validity marker over [rows x cols] positions (batch x sequence). A
/// single-sequence mask has rows == 1.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> valid;

  static Mask all_valid(std::size_t rows, std::size_t cols);
  static Mask from_lengths(const std::vector<std::size_t>& lengths, std::size_t cols);

  bool at(std::size_t r, std::size_t c) const { return valid[r * cols + c] != 0; }
  std::size_t count(std::size_t r) const;
};

/// Ordered record of differentiable ops. Entries are appended as ops run, so
/// the record is already in topological order.
class Tape {
 public:
  enum class Mode { record, inference };
  using BackwardFn = std::function<void()>;

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::record; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return entries_.size(); }

  /// Records `output` as produced from `inputs`. If no input requires a
  /// gradient (or the tape is in inference mode) nothing is recorded.
  void record(std::initializer_list<const Tensor*> inputs, Tensor& output, BackwardFn fn);
  void record(const std::vector<Tensor>& inputs, Tensor& output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
  /// Gradients accumulate into existing buffers.
  void backward(const Tensor& loss);

  void reset();

 private:
  struct Entry {
    Tensor output;
    BackwardFn backward;
  };
  Mode mode_;
  bool consumed_ = false;
  std::vector<Entry> entries_;
};

// Linear algebra. Shapes: [m x k]·[k x n]; [b x m x k]·[k x n] (shared right
// operand); [b x m x k]·[b x k x n] (batched).
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// a·bᵀ with the same rank combinations as matmul.
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);

// Pointwise.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
/// Adds a rank-1 bias along the last axis.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor relu(Tape& tape, const Tensor& x);
/// Tanh approximation of GELU.
Tensor gelu(Tape& tape, const Tensor& x);

// Reductions to a [1] tensor.
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

/// Softmax over the last axis, max-subtracted per row.
Tensor softmax_rows(Tape& tape, const Tensor& x);
/// Softmax over the last axis where column c of batch row b takes part only
/// if key_mask.at(b, c). Masked columns receive exactly zero probability
/// (the additive -inf convention). Shapes: [S x S'] with key_mask [1 x S'],
/// or [B x S x S'] with key_mask [B x S'].
Tensor masked_softmax_rows(Tape& tape, const Tensor& x, const Mask& key_mask);

/// Normalizes each last-axis row to zero mean and unit variance, then applies
/// gain and bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// Inverted dropout. Identity when !training or p == 0; otherwise draws one
/// keep decision per element from `rng`.
Tensor dropout(Tape& tape, const Tensor& x, double p, bool training, Rng* rng);

/// Concatenation along the last axis; all other extents must agree.
Tensor concat_last(Tape& tape, const std::vector<Tensor>& parts);

/// Same values, new shape with equal element count.
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

/// Element i of a tensor as a [1] tensor.
Tensor select(Tape& tape, const Tensor& x, std::size_t index);
/// x scaled by the single value held in s ([1] tensor), differentiable in both.
Tensor scale_by(Tape& tape, const Tensor& x, const Tensor& s);

/// Row lookup: table [V x d], ids (length B*S) -> [B x S x d]. Rows of
/// `table` used more than once accumulate their gradients.
Tensor embedding(Tape& tape, const Tensor& table, const std::vector<int>& ids, std::size_t batch,
                 std::size_t seq);

/// Throws NumericError naming `op` if any value of t is NaN or Inf.
void require_finite(const Tensor& t, const char* op);

/// Forward function for grad_check: runs the computation on the given tape
/// and returns a scalar loss.
using LossFn = std::function<Tensor(Tape&)>;

/// Central finite-difference check of every coordinate of `params`. Returns
/// the largest |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const LossFn& forward, const std::vector<Tensor>& params, double eps = 1e-5);

}  // namespace trifuse
