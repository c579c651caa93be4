#include "fusion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fusion/rng.hpp"

namespace fusion {

namespace {

std::shared_ptr<TensorData> make_data(Shape shape, std::vector<real_t> values) {
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->value = std::move(values);
  return d;
}

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must be non-empty");
  for (int dim : shape)
    if (dim < 1) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
  if (shape.size() > 2) throw ShapeError("only rank-1/rank-2 tensors supported");
}

const real_t* grad_ptr(const std::shared_ptr<TensorData>& d) {
  return d->grad.empty() ? nullptr : d->grad.data();
}

real_t* acc_ptr(const std::shared_ptr<TensorData>& d) {
  if (d->grad.empty()) d->grad.assign(d->value.size(), real_t(0));
  return d->grad.data();
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
  check_shape(shape);
  auto n = shape_numel(shape);
  return Tensor(make_data(std::move(shape), std::vector<real_t>(n, real_t(0))));
}

Tensor Tensor::full(Shape shape, real_t v) {
  check_shape(shape);
  auto n = shape_numel(shape);
  return Tensor(make_data(std::move(shape), std::vector<real_t>(n, v)));
}

Tensor Tensor::of(Shape shape, std::vector<real_t> values) {
  check_shape(shape);
  if (shape_numel(shape) != values.size())
    throw ShapeError("value count " + std::to_string(values.size()) + " does not fill shape " +
                     shape_str(shape));
  return Tensor(make_data(std::move(shape), std::move(values)));
}

Tensor Tensor::vec(std::vector<real_t> values) {
  Shape s{static_cast<int>(values.size())};
  return of(std::move(s), std::move(values));
}

Tensor Tensor::mat(int rows, int cols, std::vector<real_t> values) {
  return of({rows, cols}, std::move(values));
}

real_t Tensor::item() const {
  if (!is_scalar()) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
  return d_->value[0];
}

std::vector<real_t>& Tensor::grad() {
  if (d_->grad.empty()) d_->grad.assign(d_->value.size(), real_t(0));
  return d_->grad;
}

real_t Tensor::grad_at(std::size_t i) const {
  return d_->grad.empty() ? real_t(0) : d_->grad[i];
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), real_t(0));
}

Tensor init_param(const Shape& shape, InitScheme scheme, std::uint64_t seed,
                  std::uint64_t stream) {
  check_shape(shape);
  Tensor t = Tensor::zeros(shape);
  switch (scheme) {
    case InitScheme::zeros:
      break;
    case InitScheme::ones:
      std::fill(t.value().begin(), t.value().end(), real_t(1));
      break;
    case InitScheme::uniform_fan_in: {
      const int fan_in = shape.back();
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Rng rng(seed, stream);
      for (auto& v : t.value()) v = static_cast<real_t>(rng.uniform(-bound, bound));
      break;
    }
  }
  t.set_requires_grad(true);
  return t;
}

Tensor Graph::make(Shape shape, bool tracked) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.d_->requires_grad = tracked;
  if (tracked) t.d_->node = static_cast<int>(nodes_.size());
  return t;
}

void Graph::record(std::function<void()> back) { nodes_.push_back(Node{std::move(back)}); }

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul shape mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  const bool tracked = a.requires_grad() || b.requires_grad();
  Tensor out = make({m, n}, tracked);
  kernels::matmul_nn(a.value().data(), b.value().data(), out.value().data(), m, k, n, false);
  if (tracked)
    record([ad = a.data(), bd = b.data(), od = out.data(), m, k, n] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (ad->requires_grad)
        kernels::matmul_nt(g, bd->value.data(), acc_ptr(ad), m, n, k, true);
      if (bd->requires_grad)
        kernels::matmul_tn(ad->value.data(), g, acc_ptr(bd), m, k, n, true);
    });
  return out;
}

Tensor Graph::matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw ShapeError("matmul_nt shape mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n = b.rows();
  const bool tracked = a.requires_grad() || b.requires_grad();
  Tensor out = make({m, n}, tracked);
  kernels::matmul_nt(a.value().data(), b.value().data(), out.value().data(), m, k, n, false);
  if (tracked)
    record([ad = a.data(), bd = b.data(), od = out.data(), m, k, n] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (ad->requires_grad)
        kernels::matmul_nn(g, bd->value.data(), acc_ptr(ad), m, n, k, true);
      if (bd->requires_grad)
        kernels::matmul_tn(g, ad->value.data(), acc_ptr(bd), m, n, k, true);
    });
  return out;
}

Tensor Graph::matvec(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.cols() != x.dim(0))
    throw ShapeError("matvec shape mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(x.shape()));
  const int m = a.rows(), k = a.cols();
  const bool tracked = a.requires_grad() || x.requires_grad();
  Tensor out = make({m}, tracked);
  kernels::matvec(a.value().data(), x.value().data(), out.value().data(), m, k, false);
  if (tracked)
    record([ad = a.data(), xd = x.data(), od = out.data(), m, k] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (ad->requires_grad) kernels::outer_acc(g, xd->value.data(), acc_ptr(ad), m, k);
      if (xd->requires_grad) kernels::matvec_t(ad->value.data(), g, acc_ptr(xd), m, k, true);
    });
  return out;
}

Tensor Graph::matvec_t(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.rows() != x.dim(0))
    throw ShapeError("matvec_t shape mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(x.shape()));
  const int m = a.rows(), k = a.cols();
  const bool tracked = a.requires_grad() || x.requires_grad();
  Tensor out = make({k}, tracked);
  kernels::matvec_t(a.value().data(), x.value().data(), out.value().data(), m, k, false);
  if (tracked)
    record([ad = a.data(), xd = x.data(), od = out.data(), m, k] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (ad->requires_grad) kernels::outer_acc(xd->value.data(), g, acc_ptr(ad), m, k);
      if (xd->requires_grad) kernels::matvec(ad->value.data(), g, acc_ptr(xd), m, k, true);
    });
  return out;
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + " shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}
}  // namespace

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const bool tracked = a.requires_grad() || b.requires_grad();
  Tensor out = make(a.shape(), tracked);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + b.value()[i];
  if (tracked)
    record([ad = a.data(), bd = b.data(), od = out.data(), n] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (ad->requires_grad) {
        real_t* ga = acc_ptr(ad);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bd->requires_grad) {
        real_t* gb = acc_ptr(bd);
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  return out;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const bool tracked = a.requires_grad() || b.requires_grad();
  Tensor out = make(a.shape(), tracked);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] - b.value()[i];
  if (tracked)
    record([ad = a.data(), bd = b.data(), od = out.data(), n] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (ad->requires_grad) {
        real_t* ga = acc_ptr(ad);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bd->requires_grad) {
        real_t* gb = acc_ptr(bd);
        for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
      }
    });
  return out;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const bool tracked = a.requires_grad() || b.requires_grad();
  Tensor out = make(a.shape(), tracked);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] * b.value()[i];
  if (tracked)
    record([ad = a.data(), bd = b.data(), od = out.data(), n] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (ad->requires_grad) {
        real_t* ga = acc_ptr(ad);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bd->value[i];
      }
      if (bd->requires_grad) {
        real_t* gb = acc_ptr(bd);
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * ad->value[i];
      }
    });
  return out;
}

Tensor Graph::scale(const Tensor& a, real_t c) {
  const bool tracked = a.requires_grad();
  Tensor out = make(a.shape(), tracked);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] * c;
  if (tracked)
    record([ad = a.data(), od = out.data(), c, n] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      real_t* ga = acc_ptr(ad);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * c;
    });
  return out;
}

Tensor Graph::add_rowvec(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.rank() != 1 || m.cols() != v.dim(0))
    throw ShapeError("add_rowvec shape mismatch " + shape_str(m.shape()) + " + " +
                     shape_str(v.shape()));
  const int rows = m.rows(), cols = m.cols();
  const bool tracked = m.requires_grad() || v.requires_grad();
  Tensor out = make({rows, cols}, tracked);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out.value()[static_cast<std::size_t>(i) * cols + j] =
          m.value()[static_cast<std::size_t>(i) * cols + j] + v.value()[j];
  if (tracked)
    record([md = m.data(), vd = v.data(), od = out.data(), rows, cols] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (md->requires_grad) {
        real_t* gm = acc_ptr(md);
        for (long i = 0; i < static_cast<long>(rows) * cols; ++i) gm[i] += g[i];
      }
      if (vd->requires_grad) {
        real_t* gv = acc_ptr(vd);
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) gv[j] += g[static_cast<long>(i) * cols + j];
      }
    });
  return out;
}

Tensor Graph::mul_rowvec(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.rank() != 1 || m.cols() != v.dim(0))
    throw ShapeError("mul_rowvec shape mismatch " + shape_str(m.shape()) + " * " +
                     shape_str(v.shape()));
  const int rows = m.rows(), cols = m.cols();
  const bool tracked = m.requires_grad() || v.requires_grad();
  Tensor out = make({rows, cols}, tracked);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out.value()[static_cast<std::size_t>(i) * cols + j] =
          m.value()[static_cast<std::size_t>(i) * cols + j] * v.value()[j];
  if (tracked)
    record([md = m.data(), vd = v.data(), od = out.data(), rows, cols] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (md->requires_grad) {
        real_t* gm = acc_ptr(md);
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) {
            const long idx = static_cast<long>(i) * cols + j;
            gm[idx] += g[idx] * vd->value[j];
          }
      }
      if (vd->requires_grad) {
        real_t* gv = acc_ptr(vd);
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) {
            const long idx = static_cast<long>(i) * cols + j;
            gv[j] += g[idx] * md->value[idx];
          }
      }
    });
  return out;
}

Tensor Graph::activation(const Tensor& x, Act kind) {
  const bool tracked = x.requires_grad();
  Tensor out = make(x.shape(), tracked);
  const long n = static_cast<long>(x.size());
  kernels::apply_unary(kind, x.value().data(), out.value().data(), n);
  if (tracked)
    record([xd = x.data(), od = out.data(), kind, n] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      real_t* gx = acc_ptr(xd);
      switch (kind) {
        case Act::relu:
          // subgradient 0 at exactly 0
          for (long i = 0; i < n; ++i)
            if (xd->value[i] > real_t(0)) gx[i] += g[i];
          break;
        case Act::tanh_fn:
          for (long i = 0; i < n; ++i)
            gx[i] += g[i] * (real_t(1) - od->value[i] * od->value[i]);
          break;
        case Act::sigmoid:
          for (long i = 0; i < n; ++i)
            gx[i] += g[i] * od->value[i] * (real_t(1) - od->value[i]);
          break;
      }
    });
  return out;
}

namespace {

// Shifted softmax of one row into `out`; mask may be null.
void softmax_row(const real_t* x, const std::uint8_t* mask, real_t* out, int n) {
  real_t mx = -std::numeric_limits<real_t>::infinity();
  int live = 0;
  for (int i = 0; i < n; ++i) {
    if (mask && !mask[i]) continue;
    ++live;
    if (x[i] > mx) mx = x[i];
  }
  if (live == 0) throw EmptySupportError("softmax: all positions masked");
  real_t sum = 0;
  for (int i = 0; i < n; ++i) {
    if (mask && !mask[i]) {
      out[i] = real_t(0);
      continue;
    }
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= sum;
}

void softmax_row_back(const real_t* y, const real_t* g, real_t* gx, int n) {
  real_t dot = 0;
  for (int i = 0; i < n; ++i) dot += g[i] * y[i];
  for (int i = 0; i < n; ++i) gx[i] += y[i] * (g[i] - dot);
}

}  // namespace

Tensor Graph::softmax(const Tensor& x, const std::vector<std::uint8_t>* mask) {
  if (x.rank() != 1) throw ShapeError("softmax expects a vector");
  const int n = x.dim(0);
  if (mask && static_cast<int>(mask->size()) != n)
    throw ShapeError("softmax mask length mismatch");
  const bool tracked = x.requires_grad();
  Tensor out = make({n}, tracked);
  softmax_row(x.value().data(), mask ? mask->data() : nullptr, out.value().data(), n);
  if (tracked)
    record([xd = x.data(), od = out.data(), n] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      softmax_row_back(od->value.data(), g, acc_ptr(xd), n);
    });
  return out;
}

Tensor Graph::softmax_rows(const Tensor& s) {
  if (s.rank() != 2) throw ShapeError("softmax_rows expects a matrix");
  const int m = s.rows(), n = s.cols();
  const bool tracked = s.requires_grad();
  Tensor out = make({m, n}, tracked);
  for (int i = 0; i < m; ++i)
    softmax_row(s.value().data() + static_cast<long>(i) * n, nullptr,
                out.value().data() + static_cast<long>(i) * n, n);
  if (tracked)
    record([sd = s.data(), od = out.data(), m, n] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      real_t* gx = acc_ptr(sd);
      for (int i = 0; i < m; ++i)
        softmax_row_back(od->value.data() + static_cast<long>(i) * n,
                         g + static_cast<long>(i) * n, gx + static_cast<long>(i) * n, n);
    });
  return out;
}

Tensor Graph::concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw EmptyInputError("concat of zero parts");
  const int rank = parts[0].rank();
  if ((rank == 1 && axis != 0) || (rank == 2 && axis != 0 && axis != 1) || rank > 2)
    throw ShapeError("concat: bad axis " + std::to_string(axis));
  bool tracked = false;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: mixed ranks");
    tracked = tracked || p.requires_grad();
  }

  if (rank == 1) {
    int total = 0;
    for (const auto& p : parts) total += p.dim(0);
    Tensor out = make({total}, tracked);
    std::size_t at = 0;
    for (const auto& p : parts) {
      std::copy(p.value().begin(), p.value().end(), out.value().begin() + at);
      at += p.size();
    }
    if (tracked)
      record([ps = parts, od = out.data()] {
        const real_t* g = grad_ptr(od);
        if (!g) return;
        std::size_t at = 0;
        for (const auto& p : ps) {
          if (p.requires_grad()) {
            real_t* gp = acc_ptr(p.data());
            for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g[at + i];
          }
          at += p.size();
        }
      });
    return out;
  }

  if (axis == 0) {
    const int cols = parts[0].cols();
    int rows = 0;
    for (const auto& p : parts) {
      if (p.cols() != cols) throw ShapeError("concat axis 0: column mismatch");
      rows += p.rows();
    }
    Tensor out = make({rows, cols}, tracked);
    std::size_t at = 0;
    for (const auto& p : parts) {
      std::copy(p.value().begin(), p.value().end(), out.value().begin() + at);
      at += p.size();
    }
    if (tracked)
      record([ps = parts, od = out.data()] {
        const real_t* g = grad_ptr(od);
        if (!g) return;
        std::size_t at = 0;
        for (const auto& p : ps) {
          if (p.requires_grad()) {
            real_t* gp = acc_ptr(p.data());
            for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g[at + i];
          }
          at += p.size();
        }
      });
    return out;
  }

  // axis == 1
  const int rows = parts[0].rows();
  int cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat axis 1: row mismatch");
    cols += p.cols();
  }
  Tensor out = make({rows, cols}, tracked);
  int off = 0;
  for (const auto& p : parts) {
    const int pc = p.cols();
    for (int i = 0; i < rows; ++i)
      std::copy(p.value().begin() + static_cast<long>(i) * pc,
                p.value().begin() + static_cast<long>(i + 1) * pc,
                out.value().begin() + static_cast<long>(i) * cols + off);
    off += pc;
  }
  if (tracked)
    record([ps = parts, od = out.data(), rows, cols] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      int off = 0;
      for (const auto& p : ps) {
        const int pc = p.cols();
        if (p.requires_grad()) {
          real_t* gp = acc_ptr(p.data());
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pc; ++j)
              gp[static_cast<long>(i) * pc + j] += g[static_cast<long>(i) * cols + off + j];
        }
        off += pc;
      }
    });
  return out;
}

Tensor Graph::row(const Tensor& m, int i) {
  if (m.rank() != 2) throw ShapeError("row expects a matrix");
  if (i < 0 || i >= m.rows()) throw ShapeError("row index out of range");
  const int cols = m.cols();
  const bool tracked = m.requires_grad();
  Tensor out = make({cols}, tracked);
  std::copy(m.value().begin() + static_cast<long>(i) * cols,
            m.value().begin() + static_cast<long>(i + 1) * cols, out.value().begin());
  if (tracked)
    record([md = m.data(), od = out.data(), i, cols] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      real_t* gm = acc_ptr(md);
      for (int j = 0; j < cols; ++j) gm[static_cast<long>(i) * cols + j] += g[j];
    });
  return out;
}

Tensor Graph::stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw EmptyInputError("stack_rows of zero rows");
  const int cols = rows[0].dim(0);
  bool tracked = false;
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.dim(0) != cols) throw ShapeError("stack_rows: row length mismatch");
    tracked = tracked || r.requires_grad();
  }
  const int n = static_cast<int>(rows.size());
  Tensor out = make({n, cols}, tracked);
  for (int i = 0; i < n; ++i)
    std::copy(rows[i].value().begin(), rows[i].value().end(),
              out.value().begin() + static_cast<long>(i) * cols);
  if (tracked)
    record([rs = rows, od = out.data(), cols] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      for (std::size_t i = 0; i < rs.size(); ++i) {
        if (!rs[i].requires_grad()) continue;
        real_t* gr = acc_ptr(rs[i].data());
        for (int j = 0; j < cols; ++j) gr[j] += g[i * cols + j];
      }
    });
  return out;
}

Tensor Graph::transpose(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("transpose expects a matrix");
  const int rows = m.rows(), cols = m.cols();
  const bool tracked = m.requires_grad();
  Tensor out = make({cols, rows}, tracked);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out.value()[static_cast<std::size_t>(j) * rows + i] =
          m.value()[static_cast<std::size_t>(i) * cols + j];
  if (tracked)
    record([md = m.data(), od = out.data(), rows, cols] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      real_t* gm = acc_ptr(md);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          gm[static_cast<long>(i) * cols + j] += g[static_cast<long>(j) * rows + i];
    });
  return out;
}

Tensor Graph::sum(const Tensor& x) {
  const bool tracked = x.requires_grad();
  Tensor out = make({1}, tracked);
  real_t s = 0;
  for (real_t v : x.value()) s += v;
  out.value()[0] = s;
  if (tracked)
    record([xd = x.data(), od = out.data()] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      real_t* gx = acc_ptr(xd);
      for (std::size_t i = 0; i < xd->value.size(); ++i) gx[i] += g[0];
    });
  return out;
}

Tensor Graph::dot(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.dim(0) != b.dim(0))
    throw ShapeError("dot shape mismatch");
  const bool tracked = a.requires_grad() || b.requires_grad();
  Tensor out = make({1}, tracked);
  real_t s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.value()[i] * b.value()[i];
  out.value()[0] = s;
  if (tracked)
    record([ad = a.data(), bd = b.data(), od = out.data()] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (ad->requires_grad) {
        real_t* ga = acc_ptr(ad);
        for (std::size_t i = 0; i < ad->value.size(); ++i) ga[i] += g[0] * bd->value[i];
      }
      if (bd->requires_grad) {
        real_t* gb = acc_ptr(bd);
        for (std::size_t i = 0; i < bd->value.size(); ++i) gb[i] += g[0] * ad->value[i];
      }
    });
  return out;
}

Tensor Graph::pick(const Tensor& v, int i) {
  if (v.rank() != 1) throw ShapeError("pick expects a vector");
  if (i < 0 || i >= v.dim(0)) throw ShapeError("pick index out of range");
  const bool tracked = v.requires_grad();
  Tensor out = make({1}, tracked);
  out.value()[0] = v.value()[static_cast<std::size_t>(i)];
  if (tracked)
    record([vd = v.data(), od = out.data(), i] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      acc_ptr(vd)[i] += g[0];
    });
  return out;
}

Tensor Graph::log_floor(const Tensor& x, real_t floor) {
  const bool tracked = x.requires_grad();
  Tensor out = make(x.shape(), tracked);
  for (std::size_t i = 0; i < x.size(); ++i)
    out.value()[i] = std::log(std::max(x.value()[i], floor));
  if (tracked)
    record([xd = x.data(), od = out.data(), floor] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      real_t* gx = acc_ptr(xd);
      for (std::size_t i = 0; i < xd->value.size(); ++i)
        if (xd->value[i] > floor) gx[i] += g[i] / xd->value[i];
    });
  return out;
}

Tensor Graph::colwise_mean(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("colwise_mean expects a matrix");
  const int rows = m.rows(), cols = m.cols();
  const bool tracked = m.requires_grad();
  Tensor out = make({cols}, tracked);
  for (int j = 0; j < cols; ++j) {
    real_t s = 0;
    for (int i = 0; i < rows; ++i) s += m.value()[static_cast<long>(i) * cols + j];
    out.value()[j] = s / static_cast<real_t>(rows);
  }
  if (tracked)
    record([md = m.data(), od = out.data(), rows, cols] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      real_t* gm = acc_ptr(md);
      const real_t inv = real_t(1) / static_cast<real_t>(rows);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) gm[static_cast<long>(i) * cols + j] += g[j] * inv;
    });
  return out;
}

Tensor Graph::colwise_max(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("colwise_max expects a matrix");
  const int rows = m.rows(), cols = m.cols();
  const bool tracked = m.requires_grad();
  Tensor out = make({cols}, tracked);
  std::vector<int> arg(static_cast<std::size_t>(cols), 0);
  for (int j = 0; j < cols; ++j) {
    real_t best = m.value()[j];
    int bi = 0;
    for (int i = 1; i < rows; ++i) {
      const real_t v = m.value()[static_cast<long>(i) * cols + j];
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    out.value()[j] = best;
    arg[static_cast<std::size_t>(j)] = bi;
  }
  if (tracked)
    record([md = m.data(), od = out.data(), arg = std::move(arg), cols] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      real_t* gm = acc_ptr(md);
      for (int j = 0; j < cols; ++j)
        gm[static_cast<long>(arg[static_cast<std::size_t>(j)]) * cols + j] += g[j];
    });
  return out;
}

Tensor Graph::lookup_row(const Tensor& table, int r, bool trainable_row) {
  if (table.rank() != 2) throw ShapeError("lookup_row expects a matrix table");
  if (r < 0 || r >= table.rows()) throw ShapeError("lookup_row index out of range");
  const int cols = table.cols();
  const bool tracked = table.requires_grad() && trainable_row;
  Tensor out = make({cols}, tracked);
  std::copy(table.value().begin() + static_cast<long>(r) * cols,
            table.value().begin() + static_cast<long>(r + 1) * cols, out.value().begin());
  if (tracked)
    record([td = table.data(), od = out.data(), r, cols] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      real_t* gt = acc_ptr(td);
      for (int j = 0; j < cols; ++j) gt[static_cast<long>(r) * cols + j] += g[j];
    });
  return out;
}

Tensor Graph::sym_scores(const Tensor& p, const Tensor& q, const Tensor& d) {
  if (p.rank() != 2 || q.rank() != 2 || d.rank() != 1 || p.cols() != q.cols() ||
      p.cols() != d.dim(0))
    throw ShapeError("sym_scores shape mismatch");
  const int m = p.rows(), n = q.rows(), k = p.cols();
  const bool tracked = p.requires_grad() || q.requires_grad() || d.requires_grad();
  Tensor out = make({m, n}, tracked);
  kernels::sym_scores(p.value().data(), q.value().data(), d.value().data(), out.value().data(),
                      m, n, k, false);
  if (tracked)
    record([pd = p.data(), qd = q.data(), dd = d.data(), od = out.data(), m, n, k] {
      const real_t* g = grad_ptr(od);
      if (!g) return;
      if (pd->requires_grad) {
        // dP = (G * Q) scaled per column by d
        std::vector<real_t> t(static_cast<std::size_t>(m) * k);
        kernels::matmul_nn(g, qd->value.data(), t.data(), m, n, k, false);
        real_t* gp = acc_ptr(pd);
        for (int i = 0; i < m; ++i)
          for (int l = 0; l < k; ++l)
            gp[static_cast<long>(i) * k + l] += dd->value[l] * t[static_cast<long>(i) * k + l];
      }
      if (qd->requires_grad || dd->requires_grad) {
        // T2 = G^T * P, shared by dQ and dD
        std::vector<real_t> t2(static_cast<std::size_t>(n) * k);
        kernels::matmul_tn(g, pd->value.data(), t2.data(), m, n, k, false);
        if (qd->requires_grad) {
          real_t* gq = acc_ptr(qd);
          for (int j = 0; j < n; ++j)
            for (int l = 0; l < k; ++l)
              gq[static_cast<long>(j) * k + l] +=
                  dd->value[l] * t2[static_cast<long>(j) * k + l];
        }
        if (dd->requires_grad) {
          real_t* gd = acc_ptr(dd);
          for (int j = 0; j < n; ++j)
            for (int l = 0; l < k; ++l)
              gd[l] += t2[static_cast<long>(j) * k + l] * qd->value[static_cast<long>(j) * k + l];
        }
      }
    });
  return out;
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar())
    throw ContractError("backward expects a scalar loss");
  loss.data()->grad.assign(1, real_t(1));
  if (loss.node() < 0) return;  // leaf loss: nothing further reachable
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    if (it->back) it->back();
}

double grad_check(const std::function<Tensor(Graph&)>& f, std::span<Tensor> params,
                  const GradCheckOptions& opt) {
  for (auto& p : params) p.zero_grad();
  std::vector<std::vector<real_t>> analytic;
  {
    Graph g;
    Tensor loss = f(g);
    g.backward(loss);
    for (auto& p : params) {
      std::vector<real_t> copy(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) copy[i] = p.grad_at(i);
      analytic.push_back(std::move(copy));
    }
  }
  auto eval = [&f]() {
    Graph g;
    return static_cast<double>(f(g).item());
  };

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    std::vector<std::size_t> coords;
    const std::size_t n = p.size();
    if (opt.max_coords_per_tensor <= 0 ||
        n <= static_cast<std::size_t>(opt.max_coords_per_tensor)) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      Rng rng(opt.seed, 0x6fd1u + pi);
      for (int c = 0; c < opt.max_coords_per_tensor; ++c)
        coords.push_back(static_cast<std::size_t>(rng.next_below(n)));
    }
    const std::vector<double> steps =
        opt.step_ladder.empty() ? std::vector<double>{opt.eps} : opt.step_ladder;
    for (std::size_t i : coords) {
      const real_t saved = p.value()[i];
      const double an = static_cast<double>(analytic[pi][i]);
      double best = std::numeric_limits<double>::infinity();
      for (double eps : steps) {
        p.value()[i] = saved + static_cast<real_t>(eps);
        const double fp = eval();
        p.value()[i] = saved - static_cast<real_t>(eps);
        const double fm = eval();
        p.value()[i] = saved;
        const double fd = (fp - fm) / (2.0 * eps);
        const double rel =
            std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
        best = std::min(best, rel);
      }
      if (best > max_rel) max_rel = best;
    }
  }
  return max_rel;
}

}  // namespace fusion
