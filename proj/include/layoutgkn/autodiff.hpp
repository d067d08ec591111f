#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// Operations record a backward closure on the thread's active Tape (see TapeScope)
// whenever one of their inputs requires a gradient. Without an active tape nothing
// is recorded, which is how inference runs.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace lgkn::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
};

// Shared handle to a node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<Node>()) {}
  explicit Tensor(Matrix value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    if (requires_grad) enable_grad();
  }
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false) {
    return Tensor(Matrix::Zero(rows, cols), requires_grad);
  }
  static Tensor scalar(double v) { return Tensor(Matrix::Constant(1, 1, v)); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const {
    if (rows() != 1 || cols() != 1) throw InvalidArgument("item(): tensor is " + shape_str());
    return node_->value(0, 0);
  }

  void enable_grad() {
    node_->requires_grad = true;
    node_->grad = Matrix::Zero(rows(), cols());
  }
  void zero_grad() {
    if (node_->requires_grad) node_->grad.setZero();
  }
  std::string shape_str() const { return "(" + std::to_string(rows()) + "x" + std::to_string(cols()) + ")"; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

class Tape {
 public:
  void record(std::function<void()> fn) {
    if (consumed_) throw std::logic_error("Tape: recording onto a tape that was already replayed; call reset()");
    ops_.push_back(std::move(fn));
  }

  // Seeds d(loss)/d(loss) = 1 and replays closures in exact reverse order.
  void backward(const Tensor& loss) {
    if (loss.rows() != 1 || loss.cols() != 1)
      throw InvalidArgument("Tape::backward: loss must be 1x1, got " + loss.shape_str());
    if (consumed_) throw std::logic_error("Tape::backward: replayed twice without reset()");
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.grad()(0, 0) += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void reset() {
    ops_.clear();
    consumed_ = false;
  }
  std::size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

namespace detail {
inline thread_local Tape* active_tape = nullptr;
}

inline Tape* active_tape() { return detail::active_tape; }

// Makes `tape` the recording target for this thread until destroyed.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : prev_(detail::active_tape) { detail::active_tape = &tape; }
  ~TapeScope() { detail::active_tape = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Suspends recording (inference inside a training scope, finite differences).
class NoGradScope {
 public:
  NoGradScope() : prev_(detail::active_tape) { detail::active_tape = nullptr; }
  ~NoGradScope() { detail::active_tape = prev_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* prev_;
};

namespace detail {

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw InvalidArgument(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

inline bool any_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

// Wraps a forward value; if recording, `bw(grad_out)` is queued on the tape.
template <class Backward>
Tensor emit(Matrix value, bool needs_grad, Backward&& bw) {
  Tensor out(std::move(value));
  Tape* tape = active_tape;
  if (tape != nullptr && needs_grad) {
    out.enable_grad();
    tape->record([o = out.node(), bw = std::forward<Backward>(bw)]() { bw(o->grad); });
  }
  return out;
}

}  // namespace detail

inline Tensor constant(Matrix m) { return Tensor(std::move(m), false); }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) detail::shape_error("matmul", a, b);
  Matrix v = a.value() * b.value();
  return detail::emit(std::move(v), detail::any_grad({&a, &b}), [a, b](const Matrix& g) {
    if (a.requires_grad()) a.grad().noalias() += g * b.value().transpose();
    if (b.requires_grad()) b.grad().noalias() += a.value().transpose() * g;
  });
}

inline Tensor transpose(const Tensor& a) {
  Matrix v = a.value().transpose();
  return detail::emit(std::move(v), a.requires_grad(), [a](const Matrix& g) { a.grad() += g.transpose(); });
}

namespace detail {
// b either matches a or is a single row broadcast over a's rows.
inline bool row_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return false;
  if (b.rows() == 1 && b.cols() == a.cols()) return true;
  shape_error(op, a, b);
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  const bool bc = detail::row_broadcast("add", a, b);
  Matrix v = bc ? Matrix(a.value().rowwise() + b.value().row(0)) : Matrix(a.value() + b.value());
  return detail::emit(std::move(v), detail::any_grad({&a, &b}), [a, b, bc](const Matrix& g) {
    if (a.requires_grad()) a.grad() += g;
    if (b.requires_grad()) {
      if (bc)
        b.grad() += g.colwise().sum();
      else
        b.grad() += g;
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  const bool bc = detail::row_broadcast("sub", a, b);
  Matrix v = bc ? Matrix(a.value().rowwise() - b.value().row(0)) : Matrix(a.value() - b.value());
  return detail::emit(std::move(v), detail::any_grad({&a, &b}), [a, b, bc](const Matrix& g) {
    if (a.requires_grad()) a.grad() += g;
    if (b.requires_grad()) {
      if (bc)
        b.grad() -= g.colwise().sum();
      else
        b.grad() -= g;
    }
  });
}

// Elementwise product of equal shapes.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_error("mul", a, b);
  Matrix v = a.value().cwiseProduct(b.value());
  return detail::emit(std::move(v), detail::any_grad({&a, &b}), [a, b](const Matrix& g) {
    if (a.requires_grad()) a.grad() += g.cwiseProduct(b.value());
    if (b.requires_grad()) b.grad() += g.cwiseProduct(a.value());
  });
}

inline Tensor scale(const Tensor& a, double s) {
  Matrix v = a.value() * s;
  return detail::emit(std::move(v), a.requires_grad(), [a, s](const Matrix& g) { a.grad() += g * s; });
}

inline Tensor shift(const Tensor& a, double c) {
  Matrix v = a.value().array() + c;
  return detail::emit(std::move(v), a.requires_grad(), [a](const Matrix& g) { a.grad() += g; });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  Eigen::Index cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) detail::shape_error("concat_cols", parts[0], p);
    cols += p.cols();
    needs = needs || p.requires_grad();
  }
  Matrix v(parts[0].rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return detail::emit(std::move(v), needs, [parts](const Matrix& g) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) p.grad() += g.middleCols(at, p.cols());
      at += p.cols();
    }
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: no inputs");
  Eigen::Index rows = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) detail::shape_error("concat_rows", parts[0], p);
    rows += p.rows();
    needs = needs || p.requires_grad();
  }
  Matrix v(rows, parts[0].cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return detail::emit(std::move(v), needs, [parts](const Matrix& g) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) p.grad() += g.middleRows(at, p.rows());
      at += p.rows();
    }
  });
}

inline Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols())
    throw InvalidArgument("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                          ") outside " + a.shape_str());
  Matrix v = a.value().middleCols(begin, count);
  return detail::emit(std::move(v), a.requires_grad(),
                      [a, begin, count](const Matrix& g) { a.grad().middleCols(begin, count) += g; });
}

inline Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows())
    throw InvalidArgument("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                          ") outside " + a.shape_str());
  Matrix v = a.value().middleRows(begin, count);
  return detail::emit(std::move(v), a.requires_grad(),
                      [a, begin, count](const Matrix& g) { a.grad().middleRows(begin, count) += g; });
}

// out[i] = a[index[i]]
inline Tensor gather_rows(const Tensor& a, std::vector<int> index) {
  Matrix v(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows())
      throw InvalidArgument("gather_rows: index " + std::to_string(index[i]) + " outside " + a.shape_str());
    v.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  return detail::emit(std::move(v), a.requires_grad(), [a, index = std::move(index)](const Matrix& g) {
    for (std::size_t i = 0; i < index.size(); ++i) a.grad().row(index[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

// out[s] = sum (or mean) of rows i with segment[i] == s; empty segments give zero rows.
inline Tensor segment_reduce(const Tensor& a, std::vector<int> segment, int num_segments, bool mean) {
  if (static_cast<Eigen::Index>(segment.size()) != a.rows())
    throw InvalidArgument("segment_reduce: " + std::to_string(segment.size()) + " segment ids for " + a.shape_str());
  std::vector<double> weight(static_cast<std::size_t>(num_segments), 1.0);
  if (mean) {
    std::vector<int> count(static_cast<std::size_t>(num_segments), 0);
    for (int s : segment) {
      if (s < 0 || s >= num_segments) throw InvalidArgument("segment_reduce: segment id out of range");
      count[s]++;
    }
    for (int s = 0; s < num_segments; ++s) weight[s] = count[s] > 0 ? 1.0 / count[s] : 0.0;
  }
  Matrix v = Matrix::Zero(num_segments, a.cols());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (segment[i] < 0 || segment[i] >= num_segments) throw InvalidArgument("segment_reduce: segment id out of range");
    v.row(segment[i]) += a.value().row(static_cast<Eigen::Index>(i));
  }
  for (int s = 0; s < num_segments; ++s) v.row(s) *= weight[s];
  return detail::emit(std::move(v), a.requires_grad(),
                      [a, segment = std::move(segment), weight = std::move(weight)](const Matrix& g) {
                        for (std::size_t i = 0; i < segment.size(); ++i)
                          a.grad().row(static_cast<Eigen::Index>(i)) += g.row(segment[i]) * weight[segment[i]];
                      });
}

inline Tensor segment_sum(const Tensor& a, std::vector<int> segment, int n) {
  return segment_reduce(a, std::move(segment), n, false);
}
inline Tensor segment_mean(const Tensor& a, std::vector<int> segment, int n) {
  return segment_reduce(a, std::move(segment), n, true);
}

inline Tensor row_sum(const Tensor& a) {
  Matrix v = a.value().rowwise().sum();
  return detail::emit(std::move(v), a.requires_grad(),
                      [a](const Matrix& g) { a.grad().colwise() += g.col(0); });
}

inline Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw InvalidArgument("mean_rows: no rows");
  Matrix v = a.value().colwise().mean();
  const double inv = 1.0 / static_cast<double>(a.rows());
  return detail::emit(std::move(v), a.requires_grad(),
                      [a, inv](const Matrix& g) { a.grad().rowwise() += g.row(0) * inv; });
}

inline Tensor sum(const Tensor& a) {
  Matrix v = Matrix::Constant(1, 1, a.value().sum());
  return detail::emit(std::move(v), a.requires_grad(), [a](const Matrix& g) { a.grad().array() += g(0, 0); });
}

inline Tensor relu(const Tensor& a) {
  Matrix v = a.value().cwiseMax(0.0);
  return detail::emit(std::move(v), a.requires_grad(), [a](const Matrix& g) {
    a.grad().array() += (a.value().array() > 0.0).select(g.array(), 0.0);
  });
}

inline Tensor sigmoid(const Tensor& a) {
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Matrix s = v;
  return detail::emit(std::move(v), a.requires_grad(), [a, s = std::move(s)](const Matrix& g) {
    a.grad().array() += g.array() * s.array() * (1.0 - s.array());
  });
}

inline Tensor tanh(const Tensor& a) {
  Matrix v = a.value().array().tanh().matrix();
  Matrix t = v;
  return detail::emit(std::move(v), a.requires_grad(), [a, t = std::move(t)](const Matrix& g) {
    a.grad().array() += g.array() * (1.0 - t.array().square());
  });
}

inline Tensor exp(const Tensor& a) {
  Matrix v = a.value().array().exp().matrix();
  Matrix e = v;
  return detail::emit(std::move(v), a.requires_grad(),
                      [a, e = std::move(e)](const Matrix& g) { a.grad() += g.cwiseProduct(e); });
}

inline Tensor log(const Tensor& a) {
  Matrix v = a.value().array().log().matrix();
  return detail::emit(std::move(v), a.requires_grad(),
                      [a](const Matrix& g) { a.grad().array() += g.array() / a.value().array(); });
}

inline Tensor square(const Tensor& a) {
  Matrix v = a.value().array().square().matrix();
  return detail::emit(std::move(v), a.requires_grad(),
                      [a](const Matrix& g) { a.grad().array() += 2.0 * g.array() * a.value().array(); });
}

inline Tensor sqrt(const Tensor& a) {
  Matrix v = a.value().array().sqrt().matrix();
  Matrix r = v;
  return detail::emit(std::move(v), a.requires_grad(),
                      [a, r = std::move(r)](const Matrix& g) { a.grad().array() += 0.5 * g.array() / r.array(); });
}

// out(i, j) = ||a_i - b_j||^2
inline Tensor sqdist(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) detail::shape_error("sqdist", a, b);
  const Eigen::Index ra = a.rows(), rb = b.rows();
  Matrix v(ra, rb);
  for (Eigen::Index i = 0; i < ra; ++i)
    for (Eigen::Index j = 0; j < rb; ++j) v(i, j) = (a.value().row(i) - b.value().row(j)).squaredNorm();
  return detail::emit(std::move(v), detail::any_grad({&a, &b}), [a, b](const Matrix& g) {
    if (a.requires_grad()) {
      Matrix ga = a.value().array().colwise() * g.rowwise().sum().array();
      ga.noalias() -= g * b.value();
      a.grad() += 2.0 * ga;
    }
    if (b.requires_grad()) {
      Matrix gb = b.value().array().colwise() * g.colwise().sum().transpose().array();
      gb.noalias() -= g.transpose() * a.value();
      b.grad() += 2.0 * gb;
    }
  });
}

inline Tensor softmax_rows(const Tensor& a) {
  Matrix v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    v.row(i).array() -= v.row(i).maxCoeff();
    v.row(i) = v.row(i).array().exp().matrix();
    v.row(i) /= v.row(i).sum();
  }
  Matrix p = v;
  return detail::emit(std::move(v), a.requires_grad(), [a, p = std::move(p)](const Matrix& g) {
    Eigen::VectorXd dot = g.cwiseProduct(p).rowwise().sum();
    a.grad().array() += p.array() * (g.array().colwise() - dot.array());
  });
}

// <a, b>_F as a 1x1 tensor.
inline Tensor frobenius_dot(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_error("frobenius_dot", a, b);
  Matrix v = Matrix::Constant(1, 1, a.value().cwiseProduct(b.value()).sum());
  return detail::emit(std::move(v), detail::any_grad({&a, &b}), [a, b](const Matrix& g) {
    if (a.requires_grad()) a.grad() += g(0, 0) * b.value();
    if (b.requires_grad()) b.grad() += g(0, 0) * a.value();
  });
}

// Per-row normalization with learned 1 x c gain and bias.
inline Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols()) detail::shape_error("layernorm", x, gamma);
  if (beta.rows() != 1 || beta.cols() != x.cols()) detail::shape_error("layernorm", x, beta);
  const Eigen::Index c = x.cols();
  Eigen::VectorXd mean = x.value().rowwise().mean();
  Matrix centered = x.value().colwise() - mean;
  Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / static_cast<double>(c)) + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix v = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return detail::emit(std::move(v), detail::any_grad({&x, &gamma, &beta}),
                      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), c](const Matrix& g) {
                        if (gamma.requires_grad()) gamma.grad() += g.cwiseProduct(xhat).colwise().sum();
                        if (beta.requires_grad()) beta.grad() += g.colwise().sum();
                        if (x.requires_grad()) {
                          Matrix dxhat = g.array().rowwise() * gamma.value().row(0).array();
                          Eigen::VectorXd m1 = dxhat.rowwise().mean();
                          Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / static_cast<double>(c);
                          Matrix dx = dxhat.colwise() - m1;
                          dx -= (xhat.array().colwise() * m2.array()).matrix();
                          x.grad() += (dx.array().colwise() * inv_std.array()).matrix();
                        }
                      });
}

struct BatchNormState {
  RowVector running_mean;
  RowVector running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(Eigen::Index cols)
      : running_mean(RowVector::Zero(cols)), running_var(RowVector::Ones(cols)) {}
};

// Per-column normalization with the running estimates as a fixed affine map (evaluation mode).
inline Tensor batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, const BatchNormState& state) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols()) detail::shape_error("batchnorm", x, gamma);
  if (beta.rows() != 1 || beta.cols() != x.cols()) detail::shape_error("batchnorm", x, beta);
  if (state.running_mean.cols() != x.cols()) throw InvalidArgument("batchnorm: running stats width mismatch");
  RowVector inv_std = (state.running_var.array() + state.eps).rsqrt();
  RowVector a = gamma.value().row(0).cwiseProduct(inv_std);
  Matrix xhat = (x.value().rowwise() - state.running_mean).array().rowwise() * inv_std.array();
  Matrix v = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return detail::emit(std::move(v), detail::any_grad({&x, &gamma, &beta}),
                      [x, gamma, beta, xhat = std::move(xhat), a](const Matrix& g) {
                        if (gamma.requires_grad()) gamma.grad() += g.cwiseProduct(xhat).colwise().sum();
                        if (beta.requires_grad()) beta.grad() += g.colwise().sum();
                        if (x.requires_grad()) x.grad() += (g.array().rowwise() * a.array()).matrix();
                      });
}

// Per-column normalization. Training mode normalizes by batch statistics and updates the
// running estimates; evaluation mode is batchnorm_eval.
inline Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                        bool training) {
  if (!training) return batchnorm_eval(x, gamma, beta, state);
  if (gamma.rows() != 1 || gamma.cols() != x.cols()) detail::shape_error("batchnorm", x, gamma);
  if (beta.rows() != 1 || beta.cols() != x.cols()) detail::shape_error("batchnorm", x, beta);
  if (state.running_mean.cols() != x.cols()) throw InvalidArgument("batchnorm: running stats width mismatch");
  const bool needs = detail::any_grad({&x, &gamma, &beta});
  const Eigen::Index n = x.rows();
  if (n == 0) throw InvalidArgument("batchnorm: empty batch");
  RowVector mean = x.value().colwise().mean();
  Matrix centered = x.value().rowwise() - mean;
  RowVector var = centered.array().square().colwise().sum() / static_cast<double>(n);
  RowVector inv_std = (var.array() + state.eps).rsqrt();
  Matrix xhat = centered.array().rowwise() * inv_std.array();
  state.running_mean = (1 - state.momentum) * state.running_mean + state.momentum * mean;
  if (n > 1)
    state.running_var = (1 - state.momentum) * state.running_var +
                        state.momentum * var * (static_cast<double>(n) / static_cast<double>(n - 1));
  Matrix v = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return detail::emit(std::move(v), needs, [x, gamma, beta, xhat = std::move(xhat), inv_std, n](const Matrix& g) {
    if (gamma.requires_grad()) gamma.grad() += g.cwiseProduct(xhat).colwise().sum();
    if (beta.requires_grad()) beta.grad() += g.colwise().sum();
    if (x.requires_grad()) {
      Matrix dxhat = g.array().rowwise() * gamma.value().row(0).array();
      RowVector m1 = dxhat.colwise().mean();
      RowVector m2 = dxhat.cwiseProduct(xhat).colwise().sum() / static_cast<double>(n);
      Matrix dx = dxhat.rowwise() - m1;
      dx -= (xhat.array().rowwise() * m2.array()).matrix();
      x.grad() += (dx.array().rowwise() * inv_std.array()).matrix();
    }
  });
}

// Max over requires-grad input entries of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|), where
// g_fd is the central difference with step h. Inputs without requires_grad are skipped.
inline double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> inputs, double h = 1e-5) {
  std::vector<Matrix> analytic;
  {
    for (Tensor t : inputs) t.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f();
    if (y.rows() != 1 || y.cols() != 1) throw InvalidArgument("grad_check: function must be scalar, got " + y.shape_str());
    tape.backward(y);
    for (const auto& t : inputs) analytic.push_back(t.requires_grad() ? t.grad() : Matrix());
  }
  NoGradScope no_grad;
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    Tensor handle = inputs[k];
    Matrix& x = handle.mutable_value();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double saved = x.data()[i];
      x.data()[i] = saved + h;
      const double fp = f().item();
      x.data()[i] = saved - h;
      const double fm = f().item();
      x.data()[i] = saved;
      const double fd = (fp - fm) / (2 * h);
      const double ad = analytic[k].data()[i];
      worst = std::max(worst, std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)}));
    }
  }
  return worst;
}

}  // namespace lgkn::ad
