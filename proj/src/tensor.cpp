// SPDX-License-Identifier: Apache-2.0
#include "gear/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "gear/errors.hpp"

namespace gear {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// --- Tensor ------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(shape_size(t.shape_), 0.0);
  return t;
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (auto& v : *t.data_) v = value;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != values.size())
    throw DimensionError("Tensor::from: shape " + shape_str(shape) +
                         " does not hold " + std::to_string(values.size()) +
                         " values");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::vec(std::vector<double> values) {
  const std::size_t n = values.size();
  return from({n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw ContractError("rows(): tensor is not 2-D, shape " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw ContractError("cols(): tensor is not 2-D, shape " + shape_str(shape_));
  return shape_[1];
}

double Tensor::at(std::size_t i) const { return (*data_).at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
  return (*data_).at(i * cols() + j);
}

double& Tensor::at(std::size_t i) { return (*data_).at(i); }

double& Tensor::at(std::size_t i, std::size_t j) {
  return (*data_).at(i * cols() + j);
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item(): tensor has " + std::to_string(size()) +
                        " elements");
  return (*data_)[0];
}

std::span<const double> Tensor::data() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

std::span<double> Tensor::data_mut() {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

Tensor Tensor::clone() const {
  if (!valid()) return Tensor();
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<std::vector<double>>(*data_);
  return t;
}

// --- Tape --------------------------------------------------------------------

Tensor Tape::leaf(const Tensor& value) {
  if (!value.valid()) throw ContractError("leaf(): empty tensor");
  Tensor t;
  t.shape_ = value.shape_;
  t.data_ = value.data_;  // shared, not copied
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{"leaf", nullptr, t.size()});
  return t;
}

Tensor Tape::emit(const char* op, Shape shape, std::vector<double> data,
                  BackwardFn fn) {
  Tensor t = Tensor::from(std::move(shape), std::move(data));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{op, std::move(fn), t.size()});
  return t;
}

void Tape::backward(const Tensor& root) {
  if (!root.grad_enabled() || root.tape_ != this)
    throw ContractError("backward(): root is not a node on this tape");
  if (root.size() != 1)
    throw ContractError("backward(): root must be scalar, shape " +
                        shape_str(root.shape()));
  grads_.assign(nodes_.size(), {});
  grad_present_.assign(nodes_.size(), 0);
  const int root_id = root.node_;
  grads_[root_id] = {1.0};
  grad_present_[root_id] = 1;
  for (int id = root_id; id >= 0; --id) {
    if (!grad_present_[id]) continue;
    if (nodes_[id].fn) nodes_[id].fn(*this);
  }
}

bool Tape::has_grad(const Tensor& t) const {
  if (!t.grad_enabled() || t.tape_ != this) return false;
  const auto id = static_cast<std::size_t>(t.node_);
  return id < grad_present_.size() && grad_present_[id];
}

Tensor Tape::grad(const Tensor& t) const {
  if (!t.grad_enabled() || t.tape_ != this)
    throw ContractError("grad(): tensor is not a node on this tape");
  if (!has_grad(t))
    throw ContractError("grad(): no gradient recorded for this node");
  return Tensor::from(t.shape(), grads_[static_cast<std::size_t>(t.node_)]);
}

Tensor Tape::grad_or_zeros(const Tensor& t) const {
  if (!t.grad_enabled() || t.tape_ != this)
    throw ContractError("grad_or_zeros(): tensor is not a node on this tape");
  if (!has_grad(t)) return Tensor::zeros(t.shape());
  return Tensor::from(t.shape(), grads_[static_cast<std::size_t>(t.node_)]);
}

std::span<const double> Tape::grad_of(int node) const {
  return {grads_[static_cast<std::size_t>(node)].data(),
          grads_[static_cast<std::size_t>(node)].size()};
}

void Tape::accumulate(int node, std::span<const double> contrib) {
  if (node < 0) return;
  const auto id = static_cast<std::size_t>(node);
  if (!grad_present_[id]) {
    grads_[id].assign(nodes_[id].size, 0.0);
    grad_present_[id] = 1;
  }
  auto& g = grads_[id];
  for (std::size_t i = 0; i < contrib.size(); ++i) g[i] += contrib[i];
}

// --- op helpers ----------------------------------------------------------------

namespace {

void require_valid(const Tensor& t, const char* op) {
  if (!t.valid()) throw ContractError(std::string(op) + ": empty tensor");
}

Tape* common_tape(std::initializer_list<const Tensor*> ts, const char* op) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->grad_enabled()) continue;
    if (tape && t->tape() != tape)
      throw ContractError(std::string(op) + ": inputs live on different tapes");
    tape = t->tape();
  }
  return tape;
}

// Shared pointer to a tensor's storage, for capture in backward closures.
using Buf = std::shared_ptr<const std::vector<double>>;

Buf buf_of(const Tensor& t) {
  return std::make_shared<const std::vector<double>>(t.data().begin(),
                                                     t.data().end());
}

// An op closure needs its own node id to read grad_of(out_id), but that id
// only exists after emit(). The tape appends nodes in order, so the id the
// next emit() will assign is node_count() at call time.
int next_node_id(Tape* tape) { return static_cast<int>(tape->node_count()); }

Tensor emit_unary(const char* op, const Tensor& x, std::vector<double> out,
                  std::function<double(double, double)> dx_from_xval_and_og,
                  Tape* tape) {
  if (!tape) return Tensor::from(x.shape(), std::move(out));
  Buf xv = buf_of(x);
  const int xn = x.node();
  const int out_id = next_node_id(tape);
  return tape->emit(op, x.shape(), std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    std::vector<double> dx(og.size());
    for (std::size_t i = 0; i < og.size(); ++i)
      dx[i] = dx_from_xval_and_og((*xv)[i], og[i]);
    t.accumulate(xn, dx);
  });
}

}  // namespace

// --- arithmetic -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_valid(a, "add");
  require_valid(b, "add");
  if (a.shape() != b.shape())
    throw DimensionError("add: shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<double> out(a.size());
  auto as = a.data(), bs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] + bs[i];
  Tape* tape = common_tape({&a, &b}, "add");
  if (!tape) return Tensor::from(a.shape(), std::move(out));
  const int an = a.node(), bn = b.node();
  const int out_id = next_node_id(tape);
  return tape->emit("add", a.shape(), std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    t.accumulate(an, og);
    t.accumulate(bn, og);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_valid(a, "sub");
  require_valid(b, "sub");
  if (a.shape() != b.shape())
    throw DimensionError("sub: shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<double> out(a.size());
  auto as = a.data(), bs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] - bs[i];
  Tape* tape = common_tape({&a, &b}, "sub");
  if (!tape) return Tensor::from(a.shape(), std::move(out));
  const int an = a.node(), bn = b.node();
  const int out_id = next_node_id(tape);
  return tape->emit("sub", a.shape(), std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    t.accumulate(an, og);
    if (bn >= 0) {
      std::vector<double> neg(og.size());
      for (std::size_t i = 0; i < og.size(); ++i) neg[i] = -og[i];
      t.accumulate(bn, neg);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_valid(a, "mul");
  require_valid(b, "mul");
  if (a.shape() != b.shape())
    throw DimensionError("mul: shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<double> out(a.size());
  auto as = a.data(), bs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] * bs[i];
  Tape* tape = common_tape({&a, &b}, "mul");
  if (!tape) return Tensor::from(a.shape(), std::move(out));
  Buf av = buf_of(a), bv = buf_of(b);
  const int an = a.node(), bn = b.node();
  const int out_id = next_node_id(tape);
  return tape->emit("mul", a.shape(), std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    if (an >= 0) {
      std::vector<double> da(og.size());
      for (std::size_t i = 0; i < og.size(); ++i) da[i] = og[i] * (*bv)[i];
      t.accumulate(an, da);
    }
    if (bn >= 0) {
      std::vector<double> db(og.size());
      for (std::size_t i = 0; i < og.size(); ++i) db[i] = og[i] * (*av)[i];
      t.accumulate(bn, db);
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  require_valid(x, "scale");
  std::vector<double> out(x.size());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] * s;
  Tape* tape = common_tape({&x}, "scale");
  if (!tape) return Tensor::from(x.shape(), std::move(out));
  const int xn = x.node();
  const int out_id = next_node_id(tape);
  return tape->emit("scale", x.shape(), std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    std::vector<double> dx(og.size());
    for (std::size_t i = 0; i < og.size(); ++i) dx[i] = og[i] * s;
    t.accumulate(xn, dx);
  });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_valid(x, "add_row");
  require_valid(bias, "add_row");
  if (x.ndim() != 2)
    throw DimensionError("add_row: x must be 2-D, shape " +
                         shape_str(x.shape()));
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  const bool ok = (bias.ndim() == 1 && bias.shape()[0] == c) ||
                  (bias.ndim() == 2 && bias.shape()[0] == 1 && bias.shape()[1] == c);
  if (!ok)
    throw DimensionError("add_row: bias shape " + shape_str(bias.shape()) +
                         " does not match row width " + std::to_string(c));
  std::vector<double> out(x.size());
  auto xs = x.data(), bs = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xs[i * c + j] + bs[j];
  Tape* tape = common_tape({&x, &bias}, "add_row");
  if (!tape) return Tensor::from(x.shape(), std::move(out));
  const int xn = x.node(), bn = bias.node();
  const int out_id = next_node_id(tape);
  return tape->emit("add_row", x.shape(), std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    t.accumulate(xn, og);
    if (bn >= 0) {
      std::vector<double> db(c, 0.0);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) db[j] += og[i * c + j];
      t.accumulate(bn, db);
    }
  });
}

// --- elementwise nonlinearities ---------------------------------------------

Tensor relu(const Tensor& x) {
  require_valid(x, "relu");
  std::vector<double> out(x.size());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] > 0.0 ? xs[i] : 0.0;
  Tape* tape = common_tape({&x}, "relu");
  return emit_unary(
      "relu", x, std::move(out),
      [](double xv, double og) { return xv > 0.0 ? og : 0.0; }, tape);
}

Tensor abs(const Tensor& x) {
  require_valid(x, "abs");
  std::vector<double> out(x.size());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(xs[i]);
  Tape* tape = common_tape({&x}, "abs");
  // subgradient at 0 fixed to 0
  return emit_unary(
      "abs", x, std::move(out),
      [](double xv, double og) {
        return xv > 0.0 ? og : (xv < 0.0 ? -og : 0.0);
      },
      tape);
}

Tensor tanh(const Tensor& x) {
  require_valid(x, "tanh");
  std::vector<double> out(x.size());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xs[i]);
  Tape* tape = common_tape({&x}, "tanh");
  return emit_unary(
      "tanh", x, std::move(out),
      [](double xv, double og) {
        const double y = std::tanh(xv);
        return og * (1.0 - y * y);
      },
      tape);
}

namespace {

double softplus_val(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid_val(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor softplus(const Tensor& x) {
  require_valid(x, "softplus");
  std::vector<double> out(x.size());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_val(xs[i]);
  Tape* tape = common_tape({&x}, "softplus");
  return emit_unary(
      "softplus", x, std::move(out),
      [](double xv, double og) { return og * sigmoid_val(xv); }, tape);
}

// --- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_valid(a, "matmul");
  require_valid(b, "matmul");
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0])
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  const std::size_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
  std::vector<double> out(r * c, 0.0);
  {
    auto as = a.data(), bs = b.data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t l = 0; l < k; ++l) {
        const double av = as[i * k + l];
        if (av == 0.0) continue;
        const double* brow = &bs[l * c];
        double* orow = &out[i * c];
        for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
      }
  }
  Tape* tape = common_tape({&a, &b}, "matmul");
  if (!tape) return Tensor::from({r, c}, std::move(out));
  Buf av = buf_of(a), bv = buf_of(b);
  const int an = a.node(), bn = b.node();
  const int out_id = next_node_id(tape);
  return tape->emit("matmul", {r, c}, std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    if (an >= 0) {
      // dA = dC . B^T
      std::vector<double> da(r * k, 0.0);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const double g = og[i * c + j];
          if (g == 0.0) continue;
          const double* brow = &(*bv)[0];
          for (std::size_t l = 0; l < k; ++l) da[i * k + l] += g * brow[l * c + j];
        }
      t.accumulate(an, da);
    }
    if (bn >= 0) {
      // dB = A^T . dC
      std::vector<double> db(k * c, 0.0);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t l = 0; l < k; ++l) {
          const double aval = (*av)[i * k + l];
          if (aval == 0.0) continue;
          for (std::size_t j = 0; j < c; ++j)
            db[l * c + j] += aval * og[i * c + j];
        }
      t.accumulate(bn, db);
    }
  });
}

Tensor row_softmax(const Tensor& x) {
  require_valid(x, "row_softmax");
  if (x.ndim() != 2 || x.shape()[1] < 1)
    throw DimensionError("row_softmax: need 2-D with >= 1 column, shape " +
                         shape_str(x.shape()));
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  auto xs = x.data();
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!std::isfinite(xs[i]))
      throw NumericError("row_softmax: non-finite input at flat index " +
                         std::to_string(i));
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double m = xs[i * c];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, xs[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(xs[i * c + j] - m);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  Tape* tape = common_tape({&x}, "row_softmax");
  if (!tape) return Tensor::from(x.shape(), std::move(out));
  auto yv = std::make_shared<const std::vector<double>>(out);
  const int xn = x.node();
  const int out_id = next_node_id(tape);
  return tape->emit("row_softmax", x.shape(), std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    std::vector<double> dx(r * c);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j)
        dot += og[i * c + j] * (*yv)[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        dx[i * c + j] = (*yv)[i * c + j] * (og[i * c + j] - dot);
    }
    t.accumulate(xn, dx);
  });
}

Tensor concat_last(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("concat_last: no inputs");
  for (const auto& x : xs) require_valid(x, "concat_last");
  const std::size_t nd = xs[0].ndim();
  if (nd != 1 && nd != 2)
    throw DimensionError("concat_last: inputs must be 1-D or 2-D");
  std::size_t rows = nd == 2 ? xs[0].shape()[0] : 1;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& x : xs) {
    if (x.ndim() != nd)
      throw DimensionError("concat_last: mixed ranks");
    if (nd == 2 && x.shape()[0] != rows)
      throw DimensionError("concat_last: leading dims differ, " +
                           std::to_string(rows) + " vs " +
                           std::to_string(x.shape()[0]));
    const std::size_t w = nd == 2 ? x.shape()[1] : x.shape()[0];
    widths.push_back(w);
    total += w;
  }
  std::vector<double> out(rows * total);
  {
    std::size_t off = 0;
    for (std::size_t m = 0; m < xs.size(); ++m) {
      auto src = xs[m].data();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < widths[m]; ++j)
          out[i * total + off + j] = src[i * widths[m] + j];
      off += widths[m];
    }
  }
  Shape oshape = nd == 2 ? Shape{rows, total} : Shape{total};
  std::vector<const Tensor*> ptrs;
  Tape* tape = nullptr;
  for (const auto& x : xs) {
    if (!x.grad_enabled()) continue;
    if (tape && x.tape() != tape)
      throw ContractError("concat_last: inputs live on different tapes");
    tape = x.tape();
  }
  if (!tape) return Tensor::from(std::move(oshape), std::move(out));
  std::vector<int> in_nodes;
  for (const auto& x : xs) in_nodes.push_back(x.node());
  const int out_id = next_node_id(tape);
  return tape->emit("concat_last", std::move(oshape), std::move(out),
                    [=](Tape& t) {
                      auto og = t.grad_of(out_id);
                      std::size_t off = 0;
                      for (std::size_t m = 0; m < widths.size(); ++m) {
                        if (in_nodes[m] >= 0 && widths[m] > 0) {
                          std::vector<double> dx(rows * widths[m]);
                          for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < widths[m]; ++j)
                              dx[i * widths[m] + j] = og[i * total + off + j];
                          t.accumulate(in_nodes[m], dx);
                        }
                        off += widths[m];
                      }
                    });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_valid(x, "reshape");
  if (shape_size(shape) != x.size())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " +
                         shape_str(shape) + " changes element count");
  std::vector<double> out(x.data().begin(), x.data().end());
  Tape* tape = common_tape({&x}, "reshape");
  if (!tape) return Tensor::from(std::move(shape), std::move(out));
  const int xn = x.node();
  const int out_id = next_node_id(tape);
  return tape->emit("reshape", std::move(shape), std::move(out), [=](Tape& t) {
    t.accumulate(xn, t.grad_of(out_id));
  });
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  require_valid(x, "permute_rows");
  if (x.ndim() != 2)
    throw DimensionError("permute_rows: x must be 2-D, shape " +
                         shape_str(x.shape()));
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (perm.size() != r)
    throw ContractError("permute_rows: perm size " +
                        std::to_string(perm.size()) + " vs " +
                        std::to_string(r) + " rows");
  std::vector<char> seen(r, 0);
  for (auto p : perm) {
    if (p >= r || seen[p])
      throw ContractError("permute_rows: not a permutation");
    seen[p] = 1;
  }
  std::vector<double> out(r * c);
  auto xs = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xs[perm[i] * c + j];
  Tape* tape = common_tape({&x}, "permute_rows");
  if (!tape) return Tensor::from(x.shape(), std::move(out));
  const int xn = x.node();
  const int out_id = next_node_id(tape);
  auto pcopy = perm;
  return tape->emit("permute_rows", x.shape(), std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    std::vector<double> dx(r * c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx[pcopy[i] * c + j] += og[i * c + j];
    t.accumulate(xn, dx);
  });
}

Tensor stop_gradient(const Tensor& x) {
  require_valid(x, "stop_gradient");
  Tensor out;
  out.shape_ = x.shape_;
  out.data_ = x.data_;  // same buffer, no tape identity
  return out;
}

Tensor sum(const Tensor& x) {
  require_valid(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tape* tape = common_tape({&x}, "sum");
  if (!tape) return Tensor::scalar(s);
  const int xn = x.node();
  const std::size_t n = x.size();
  const int out_id = next_node_id(tape);
  return tape->emit("sum", {1}, {s}, [=](Tape& t) {
    const double g = t.grad_of(out_id)[0];
    std::vector<double> dx(n, g);
    t.accumulate(xn, dx);
  });
}

Tensor mean(const Tensor& x) {
  require_valid(x, "mean");
  if (x.size() == 0) throw ContractError("mean: empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t n = x.size();
  const double m = s / static_cast<double>(n);
  Tape* tape = common_tape({&x}, "mean");
  if (!tape) return Tensor::scalar(m);
  const int xn = x.node();
  const int out_id = next_node_id(tape);
  return tape->emit("mean", {1}, {m}, [=](Tape& t) {
    const double g = t.grad_of(out_id)[0] / static_cast<double>(n);
    std::vector<double> dx(n, g);
    t.accumulate(xn, dx);
  });
}

Tensor embedding_mean(const Tensor& table,
                      const std::vector<std::vector<int>>& ids) {
  require_valid(table, "embedding_mean");
  if (table.ndim() != 2)
    throw DimensionError("embedding_mean: table must be 2-D");
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  const std::size_t batch = ids.size();
  for (const auto& row : ids)
    for (int id : row)
      if (id < 0 || static_cast<std::size_t>(id) >= vocab)
        throw ContractError("embedding_mean: token id " + std::to_string(id) +
                            " outside vocab of " + std::to_string(vocab));
  std::vector<double> out(batch * d, 0.0);
  auto ts = table.data();
  for (std::size_t i = 0; i < batch; ++i) {
    if (ids[i].empty()) continue;
    const double inv = 1.0 / static_cast<double>(ids[i].size());
    for (int id : ids[i]) {
      const double* row = &ts[static_cast<std::size_t>(id) * d];
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += row[j] * inv;
    }
  }
  Tape* tape = common_tape({&table}, "embedding_mean");
  if (!tape) return Tensor::from({batch, d}, std::move(out));
  const int tn = table.node();
  const int out_id = next_node_id(tape);
  auto ids_copy = std::make_shared<const std::vector<std::vector<int>>>(ids);
  return tape->emit("embedding_mean", {batch, d}, std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    std::vector<double> dt(vocab * d, 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto& row_ids = (*ids_copy)[i];
      if (row_ids.empty()) continue;
      const double inv = 1.0 / static_cast<double>(row_ids.size());
      for (int id : row_ids)
        for (std::size_t j = 0; j < d; ++j)
          dt[static_cast<std::size_t>(id) * d + j] += og[i * d + j] * inv;
    }
    t.accumulate(tn, dt);
  });
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  require_valid(table, "embedding_rows");
  if (table.ndim() != 2)
    throw DimensionError("embedding_rows: table must be 2-D");
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw ContractError("embedding_rows: token id " + std::to_string(id) +
                          " outside vocab of " + std::to_string(vocab));
  const std::size_t n = ids.size();
  std::vector<double> out(n * d);
  auto ts = table.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out[i * d + j] = ts[static_cast<std::size_t>(ids[i]) * d + j];
  Tape* tape = common_tape({&table}, "embedding_rows");
  if (!tape) return Tensor::from({n, d}, std::move(out));
  const int tn = table.node();
  const int out_id = next_node_id(tape);
  auto ids_copy = std::make_shared<const std::vector<int>>(ids);
  return tape->emit("embedding_rows", {n, d}, std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    std::vector<double> dt(vocab * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        dt[static_cast<std::size_t>((*ids_copy)[i]) * d + j] += og[i * d + j];
    t.accumulate(tn, dt);
  });
}

Tensor attention_scores(const Tensor& q, const Tensor& k,
                        std::size_t group_rows) {
  require_valid(q, "attention_scores");
  require_valid(k, "attention_scores");
  if (q.ndim() != 2 || k.ndim() != 2 || q.shape() != k.shape())
    throw DimensionError("attention_scores: q " + shape_str(q.shape()) +
                         " vs k " + shape_str(k.shape()));
  const std::size_t n = q.shape()[0], d = q.shape()[1];
  if (group_rows == 0 || n % group_rows != 0)
    throw DimensionError("attention_scores: " + std::to_string(n) +
                         " rows not divisible into groups of " +
                         std::to_string(group_rows));
  const std::size_t g = group_rows, blocks = n / g;
  std::vector<double> out(n * g, 0.0);
  {
    auto qs = q.data(), ks = k.data();
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t i = 0; i < g; ++i)
        for (std::size_t j = 0; j < g; ++j) {
          double dot = 0.0;
          const double* qr = &qs[(b * g + i) * d];
          const double* kr = &ks[(b * g + j) * d];
          for (std::size_t l = 0; l < d; ++l) dot += qr[l] * kr[l];
          out[(b * g + i) * g + j] = dot;
        }
  }
  Tape* tape = common_tape({&q, &k}, "attention_scores");
  if (!tape) return Tensor::from({n, g}, std::move(out));
  Buf qv = buf_of(q), kv = buf_of(k);
  const int qn = q.node(), kn = k.node();
  const int out_id = next_node_id(tape);
  return tape->emit("attention_scores", {n, g}, std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    if (qn >= 0) {
      std::vector<double> dq(n * d, 0.0);
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < g; ++i)
          for (std::size_t j = 0; j < g; ++j) {
            const double gv = og[(b * g + i) * g + j];
            if (gv == 0.0) continue;
            const double* kr = &(*kv)[(b * g + j) * d];
            double* dqr = &dq[(b * g + i) * d];
            for (std::size_t l = 0; l < d; ++l) dqr[l] += gv * kr[l];
          }
      t.accumulate(qn, dq);
    }
    if (kn >= 0) {
      std::vector<double> dk(n * d, 0.0);
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < g; ++i)
          for (std::size_t j = 0; j < g; ++j) {
            const double gv = og[(b * g + i) * g + j];
            if (gv == 0.0) continue;
            const double* qr = &(*qv)[(b * g + i) * d];
            double* dkr = &dk[(b * g + j) * d];
            for (std::size_t l = 0; l < d; ++l) dkr[l] += gv * qr[l];
          }
      t.accumulate(kn, dk);
    }
  });
}

Tensor attention_apply(const Tensor& a, const Tensor& v,
                       std::size_t group_rows) {
  require_valid(a, "attention_apply");
  require_valid(v, "attention_apply");
  if (a.ndim() != 2 || v.ndim() != 2)
    throw DimensionError("attention_apply: inputs must be 2-D");
  const std::size_t n = v.shape()[0], d = v.shape()[1];
  const std::size_t g = group_rows;
  if (g == 0 || n % g != 0 || a.shape()[0] != n || a.shape()[1] != g)
    throw DimensionError("attention_apply: a " + shape_str(a.shape()) +
                         " incompatible with v " + shape_str(v.shape()) +
                         " in groups of " + std::to_string(g));
  const std::size_t blocks = n / g;
  std::vector<double> out(n * d, 0.0);
  {
    auto as = a.data(), vs = v.data();
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t i = 0; i < g; ++i)
        for (std::size_t j = 0; j < g; ++j) {
          const double w = as[(b * g + i) * g + j];
          if (w == 0.0) continue;
          const double* vr = &vs[(b * g + j) * d];
          double* orow = &out[(b * g + i) * d];
          for (std::size_t l = 0; l < d; ++l) orow[l] += w * vr[l];
        }
  }
  Tape* tape = common_tape({&a, &v}, "attention_apply");
  if (!tape) return Tensor::from({n, d}, std::move(out));
  Buf av = buf_of(a), vv = buf_of(v);
  const int an = a.node(), vn = v.node();
  const int out_id = next_node_id(tape);
  return tape->emit("attention_apply", {n, d}, std::move(out), [=](Tape& t) {
    auto og = t.grad_of(out_id);
    if (an >= 0) {
      std::vector<double> da(n * g, 0.0);
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < g; ++i)
          for (std::size_t j = 0; j < g; ++j) {
            const double* ogr = &og[(b * g + i) * d];
            const double* vr = &(*vv)[(b * g + j) * d];
            double dot = 0.0;
            for (std::size_t l = 0; l < d; ++l) dot += ogr[l] * vr[l];
            da[(b * g + i) * g + j] = dot;
          }
      t.accumulate(an, da);
    }
    if (vn >= 0) {
      std::vector<double> dv(n * d, 0.0);
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < g; ++i)
          for (std::size_t j = 0; j < g; ++j) {
            const double w = (*av)[(b * g + i) * g + j];
            if (w == 0.0) continue;
            const double* ogr = &og[(b * g + i) * d];
            double* dvr = &dv[(b * g + j) * d];
            for (std::size_t l = 0; l < d; ++l) dvr[l] += w * ogr[l];
          }
      t.accumulate(vn, dv);
    }
  });
}

}  // namespace gear
