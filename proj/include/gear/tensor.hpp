// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gear {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

class Tape;

/// Dense row-major tensor of 64-bit floats. Copies are cheap handles that
/// share storage; use clone() for an independent buffer. A tensor is either
/// a constant (node() < 0) or a node on exactly one Tape, in which case
/// backward passes see it as differentiable.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  /// 1-D tensor from a value list.
  static Tensor vec(std::vector<double> values);

  bool valid() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }

  /// 2-D accessors; throw on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i);
  double& at(std::size_t i, std::size_t j);

  /// Value of a size-1 tensor.
  double item() const;

  std::span<const double> data() const;
  std::span<double> data_mut();

  /// Deep copy with its own buffer; always a constant.
  Tensor clone() const;

  bool grad_enabled() const { return node_ >= 0; }
  int node() const { return node_; }
  Tape* tape() const { return tape_; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;

  friend class Tape;
  friend Tensor stop_gradient(const Tensor& x);
};

/// Reverse-mode tape. Nodes are appended in topological order (an op's
/// inputs always precede it), so backward() is a single reverse sweep.
/// Single-threaded by construction; one tape per training step.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a differentiable leaf. Shares the buffer.
  Tensor leaf(const Tensor& value);

  /// Runs the reverse sweep from a grad-enabled scalar root. Gradients are
  /// populated for exactly the grad-enabled ancestors of root; calling again
  /// with another root resets them.
  void backward(const Tensor& root);

  bool has_grad(const Tensor& t) const;
  /// Gradient of `t` from the last backward(); throws if absent.
  Tensor grad(const Tensor& t) const;
  /// Like grad(), but zeros for untouched ancestors.
  Tensor grad_or_zeros(const Tensor& t) const;

  std::size_t node_count() const { return nodes_.size(); }

  // --- op support ---------------------------------------------------------
  using BackwardFn = std::function<void(Tape&)>;
  Tensor emit(const char* op, Shape shape, std::vector<double> data,
              BackwardFn fn);
  std::span<const double> grad_of(int node) const;
  void accumulate(int node, std::span<const double> contrib);

 private:
  struct Node {
    const char* op;
    BackwardFn fn;
    std::size_t size;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::vector<char> grad_present_;
};

// --- ops -------------------------------------------------------------------
// Every op works on constants (pure evaluation, no tape) and on tape nodes.
// Mixing nodes from two different tapes is a contract error.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, double s);

/// x: r x c, bias: length-c vector (or 1 x c). Adds bias to every row.
Tensor add_row(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);   // subgradient at 0 is 0
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);  // ln(1 + e^x), overflow-safe

Tensor matmul(const Tensor& a, const Tensor& b);

/// Row-wise softmax with per-row max subtraction. Rows sum to 1.
Tensor row_softmax(const Tensor& x);

/// Concatenation along the last axis. All 1-D, or all 2-D with equal rows.
Tensor concat_last(const std::vector<Tensor>& xs);

Tensor reshape(const Tensor& x, Shape shape);

/// out[i] = x[perm[i]]. perm must be a permutation of the row indices.
Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm);

/// Identity on values, constant for the backward pass. Shares the buffer,
/// so it marks a graph edge rather than copying data.
Tensor stop_gradient(const Tensor& x);

Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar

/// out[i] = mean over t of table[ids[i][t]]. Empty id lists give zero rows.
Tensor embedding_mean(const Tensor& table,
                      const std::vector<std::vector<int>>& ids);

/// out[i] = table[ids[i]]; a plain row gather.
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

/// Block-diagonal Q.K^T: rows come in consecutive groups of `group_rows`
/// (one group per sample); out[g*i+r][c] = dot(q[g*i+r], k[g*i+c]).
Tensor attention_scores(const Tensor& q, const Tensor& k,
                        std::size_t group_rows);

/// Block-diagonal A.V over the same grouping: out[g*i+r] = sum_c a[g*i+r][c] * v[g*i+c].
Tensor attention_apply(const Tensor& a, const Tensor& v,
                       std::size_t group_rows);

}  // namespace gear
