#include "fusion/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fusion::kernels {

namespace {

std::atomic<bool> g_parallel{true};

bool go_parallel(long work) {
#ifdef _OPENMP
  return g_parallel.load(std::memory_order_relaxed) && work >= kParallelGrain;
#else
  (void)work;
  return false;
#endif
}

inline real_t unary_eval(Unary f, real_t v) {
  switch (f) {
    case Unary::relu:
      return v > real_t(0) ? v : real_t(0);
    case Unary::tanh_fn:
      return std::tanh(v);
    case Unary::sigmoid:
      return real_t(1) / (real_t(1) + std::exp(-v));
  }
  return real_t(0);
}

}  // namespace

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

void matmul_nn_serial(const real_t* a, const real_t* b, real_t* out, int m, int k, int n,
                      bool acc) {
  for (int i = 0; i < m; ++i) {
    real_t* orow = out + static_cast<long>(i) * n;
    if (!acc)
      for (int j = 0; j < n; ++j) orow[j] = real_t(0);
    const real_t* arow = a + static_cast<long>(i) * k;
    for (int l = 0; l < k; ++l) {
      const real_t av = arow[l];
      const real_t* brow = b + static_cast<long>(l) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_nn(const real_t* a, const real_t* b, real_t* out, int m, int k, int n, bool acc) {
  if (!go_parallel(static_cast<long>(m) * k * n)) {
    matmul_nn_serial(a, b, out, m, k, n, acc);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) matmul_nn_serial(a + static_cast<long>(i) * k, b,
                                               out + static_cast<long>(i) * n, 1, k, n, acc);
#endif
}

void matmul_nt_serial(const real_t* a, const real_t* b, real_t* out, int m, int k, int n,
                      bool acc) {
  for (int i = 0; i < m; ++i) {
    const real_t* arow = a + static_cast<long>(i) * k;
    real_t* orow = out + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) {
      const real_t* brow = b + static_cast<long>(j) * k;
      real_t s = 0;
      for (int l = 0; l < k; ++l) s += arow[l] * brow[l];
      orow[j] = acc ? orow[j] + s : s;
    }
  }
}

void matmul_nt(const real_t* a, const real_t* b, real_t* out, int m, int k, int n, bool acc) {
  if (!go_parallel(static_cast<long>(m) * k * n)) {
    matmul_nt_serial(a, b, out, m, k, n, acc);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) matmul_nt_serial(a + static_cast<long>(i) * k, b,
                                               out + static_cast<long>(i) * n, 1, k, n, acc);
#endif
}

void matmul_tn_serial(const real_t* a, const real_t* b, real_t* out, int m, int k, int n,
                      bool acc) {
  for (int p = 0; p < k; ++p) {
    real_t* orow = out + static_cast<long>(p) * n;
    if (!acc)
      for (int j = 0; j < n; ++j) orow[j] = real_t(0);
    for (int i = 0; i < m; ++i) {
      const real_t av = a[static_cast<long>(i) * k + p];
      const real_t* brow = b + static_cast<long>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_tn(const real_t* a, const real_t* b, real_t* out, int m, int k, int n, bool acc) {
  if (!go_parallel(static_cast<long>(m) * k * n)) {
    matmul_tn_serial(a, b, out, m, k, n, acc);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int p = 0; p < k; ++p) {
    real_t* orow = out + static_cast<long>(p) * n;
    if (!acc)
      for (int j = 0; j < n; ++j) orow[j] = real_t(0);
    for (int i = 0; i < m; ++i) {
      const real_t av = a[static_cast<long>(i) * k + p];
      const real_t* brow = b + static_cast<long>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
#endif
}

void matvec_serial(const real_t* a, const real_t* x, real_t* out, int m, int k, bool acc) {
  for (int i = 0; i < m; ++i) {
    const real_t* arow = a + static_cast<long>(i) * k;
    real_t s = 0;
    for (int l = 0; l < k; ++l) s += arow[l] * x[l];
    out[i] = acc ? out[i] + s : s;
  }
}

void matvec(const real_t* a, const real_t* x, real_t* out, int m, int k, bool acc) {
  if (!go_parallel(static_cast<long>(m) * k)) {
    matvec_serial(a, x, out, m, k, acc);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const real_t* arow = a + static_cast<long>(i) * k;
    real_t s = 0;
    for (int l = 0; l < k; ++l) s += arow[l] * x[l];
    out[i] = acc ? out[i] + s : s;
  }
#endif
}

void matvec_t_serial(const real_t* a, const real_t* x, real_t* out, int m, int k, bool acc) {
  for (int p = 0; p < k; ++p) {
    real_t s = 0;
    for (int i = 0; i < m; ++i) s += a[static_cast<long>(i) * k + p] * x[i];
    out[p] = acc ? out[p] + s : s;
  }
}

void matvec_t(const real_t* a, const real_t* x, real_t* out, int m, int k, bool acc) {
  if (!go_parallel(static_cast<long>(m) * k)) {
    matvec_t_serial(a, x, out, m, k, acc);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int p = 0; p < k; ++p) {
    real_t s = 0;
    for (int i = 0; i < m; ++i) s += a[static_cast<long>(i) * k + p] * x[i];
    out[p] = acc ? out[p] + s : s;
  }
#endif
}

void outer_acc_serial(const real_t* g, const real_t* x, real_t* out, int m, int k) {
  for (int i = 0; i < m; ++i) {
    real_t* orow = out + static_cast<long>(i) * k;
    const real_t gv = g[i];
    for (int l = 0; l < k; ++l) orow[l] += gv * x[l];
  }
}

void outer_acc(const real_t* g, const real_t* x, real_t* out, int m, int k) {
  if (!go_parallel(static_cast<long>(m) * k)) {
    outer_acc_serial(g, x, out, m, k);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    real_t* orow = out + static_cast<long>(i) * k;
    const real_t gv = g[i];
    for (int l = 0; l < k; ++l) orow[l] += gv * x[l];
  }
#endif
}

void sym_scores_serial(const real_t* p, const real_t* q, const real_t* d, real_t* out, int m,
                       int n, int k, bool acc) {
  for (int i = 0; i < m; ++i) {
    const real_t* prow = p + static_cast<long>(i) * k;
    real_t* orow = out + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) {
      const real_t* qrow = q + static_cast<long>(j) * k;
      real_t s = 0;
      for (int l = 0; l < k; ++l) s += d[l] * (prow[l] * qrow[l]);
      orow[j] = acc ? orow[j] + s : s;
    }
  }
}

void sym_scores(const real_t* p, const real_t* q, const real_t* d, real_t* out, int m, int n,
                int k, bool acc) {
  if (!go_parallel(static_cast<long>(m) * n * k)) {
    sym_scores_serial(p, q, d, out, m, n, k, acc);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) sym_scores_serial(p + static_cast<long>(i) * k, q, d,
                                                out + static_cast<long>(i) * n, 1, n, k, acc);
#endif
}

void apply_unary_serial(Unary f, const real_t* x, real_t* out, long n) {
  for (long i = 0; i < n; ++i) out[i] = unary_eval(f, x[i]);
}

void apply_unary(Unary f, const real_t* x, real_t* out, long n) {
  if (!go_parallel(n * 8)) {  // weight transcendental apply heavier than a madd
    apply_unary_serial(f, x, out, n);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = unary_eval(f, x[i]);
#endif
}

}  // namespace fusion::kernels
