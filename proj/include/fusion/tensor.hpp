#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fusion/common.hpp"
#include "fusion/kernels.hpp"

namespace fusion {

using Act = kernels::Unary;

struct TensorData {
  Shape shape;
  std::vector<real_t> value;
  std::vector<real_t> grad;  // empty until first accumulation
  bool requires_grad = false;
  int node = -1;  // producing node id in the owning graph, -1 for leaves
};

// Value-semantic handle to a dense rank-1/rank-2 tensor. Copies share the
// underlying storage; graphs capture these handles in their backward
// closures. A tensor and any graph it participates in are confined to one
// thread while the graph is being built or walked; finished parameter sets
// are safe to share read-only.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, real_t v);
  static Tensor of(Shape shape, std::vector<real_t> values);
  static Tensor vec(std::vector<real_t> values);
  static Tensor mat(int rows, int cols, std::vector<real_t> values);
  static Tensor scalar(real_t v) { return of({1}, {v}); }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  int rows() const { return d_->shape[0]; }
  int cols() const { return d_->shape[1]; }
  std::size_t size() const { return d_->value.size(); }
  bool is_scalar() const { return d_ && d_->value.size() == 1; }

  std::vector<real_t>& value() { return d_->value; }
  const std::vector<real_t>& value() const { return d_->value; }
  real_t at(int i) const { return d_->value[static_cast<std::size_t>(i)]; }
  real_t at(int i, int j) const {
    return d_->value[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
                     static_cast<std::size_t>(j)];
  }
  real_t item() const;

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    d_->requires_grad = on;
    return *this;
  }

  // Gradient buffer, allocated (zeroed) on first use.
  std::vector<real_t>& grad();
  // Read view that treats an untouched buffer as all zeros.
  real_t grad_at(std::size_t i) const;
  bool grad_allocated() const { return !d_->grad.empty(); }
  void zero_grad();

  int node() const { return d_->node; }

  std::shared_ptr<TensorData> data() const { return d_; }

 private:
  friend class Graph;
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

enum class InitScheme { uniform_fan_in, zeros, ones };

// Fresh trainable parameter. uniform_fan_in draws from
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = last dimension;
// deterministic for a fixed (seed, stream) pair.
Tensor init_param(const Shape& shape, InitScheme scheme, std::uint64_t seed,
                  std::uint64_t stream = 0);

// Reverse-mode tape. Ops append nodes in execution order; backward replays
// the closures in exact reverse order, once each. Single-threaded by
// contract (inner kernels may fork worker threads internally).
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // out[m,n] = a[m,k] * b[k,n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  // out[m,n] = a[m,k] * b[n,k]^T
  Tensor matmul_nt(const Tensor& a, const Tensor& b);
  // out[m] = a[m,k] * x[k]
  Tensor matvec(const Tensor& a, const Tensor& x);
  // out[k] = a[m,k]^T * x[m]
  Tensor matvec_t(const Tensor& a, const Tensor& x);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, real_t c);
  Tensor neg(const Tensor& a) { return scale(a, real_t(-1)); }

  // Broadcast a vector across the rows of a matrix.
  Tensor add_rowvec(const Tensor& m, const Tensor& v);
  Tensor mul_rowvec(const Tensor& m, const Tensor& v);

  Tensor activation(const Tensor& x, Act kind);

  // Numerically-shifted softmax over a vector. Masked positions (mask byte
  // zero) get weight exactly 0 and receive no gradient; at least one
  // position must stay unmasked.
  Tensor softmax(const Tensor& x, const std::vector<std::uint8_t>* mask = nullptr);
  // Row-wise shifted softmax over a matrix.
  Tensor softmax_rows(const Tensor& s);

  // Concatenate along `axis` (0 for vectors; 0 or 1 for matrices).
  Tensor concat(const std::vector<Tensor>& parts, int axis);

  Tensor row(const Tensor& m, int i);
  Tensor stack_rows(const std::vector<Tensor>& rows);
  Tensor transpose(const Tensor& m);

  Tensor sum(const Tensor& x);
  Tensor dot(const Tensor& a, const Tensor& b);
  Tensor pick(const Tensor& v, int i);
  // log(max(x, floor)); clamped entries get zero gradient.
  Tensor log_floor(const Tensor& x, real_t floor);

  Tensor colwise_mean(const Tensor& m);
  // Column maxima; ties resolve to the lowest row index.
  Tensor colwise_max(const Tensor& m);

  // Copy of table row `r`. Gradient reaches the table only when
  // `trainable_row` is set (per-row fine-tuning masks).
  Tensor lookup_row(const Tensor& table, int r, bool trainable_row);

  // s[i,j] = sum_l d[l] * (p[i,l] * q[j,l])  — see kernels::sym_scores.
  Tensor sym_scores(const Tensor& p, const Tensor& q, const Tensor& d);

  // Seed d(loss)/d(loss)=1 and accumulate gradients into every
  // requires_grad tensor reachable from `loss`. Parameters not on this
  // graph keep their (zero) gradients. Loss must be scalar.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::function<void()> back;  // empty for untracked forward-only records
  };
  std::vector<Node> nodes_;

  Tensor make(Shape shape, bool tracked);
  void record(std::function<void()> back);
};

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 = check every coordinate; otherwise a seeded sample per tensor.
  int max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  // When non-empty, each coordinate is certified by its best step from this
  // ladder instead of the single eps. Central differences trade truncation
  // against cancellation noise; coordinates with near-zero gradients need a
  // wider step than steep ones, and a wrong analytic gradient fails at
  // every step either way.
  std::vector<double> step_ladder;
};

// Max relative error between reverse-mode gradients and central finite
// differences of `f` over the given parameters. `f` must be a deterministic
// function of the parameter values (no live dropout). Relative error uses
// denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<Tensor(Graph&)>& f, std::span<Tensor> params,
                  const GradCheckOptions& opt = {});

}  // namespace fusion
