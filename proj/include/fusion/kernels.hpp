#pragma once

#include "fusion/common.hpp"

// Dense inner-loop kernels backing the tensor ops.
//
// Every kernel exists twice: a `_serial` reference and an OpenMP variant
// parallelized over independent output elements. Each output element is
// always produced by exactly one thread with the identical serial reduction
// order, so the two paths are bitwise identical; the dispatching entry
// points pick the parallel path only when OpenMP is compiled in, the global
// switch is on, and the work size clears kParallelGrain.
//
// Matrix arguments are dense row-major.
namespace fusion::kernels {

// Runtime switch for the OpenMP paths (on by default when compiled in).
void set_parallel(bool on);
bool parallel_enabled();

// Work sizes (multiply-add count) below this run serial even when the
// switch is on; fork-join overhead dominates tiny updates.
inline constexpr long kParallelGrain = 16384;

// out[m,n] (+)= a[m,k] * b[k,n]
void matmul_nn(const real_t* a, const real_t* b, real_t* out, int m, int k, int n, bool acc);
void matmul_nn_serial(const real_t* a, const real_t* b, real_t* out, int m, int k, int n, bool acc);

// out[m,n] (+)= a[m,k] * b[n,k]^T
void matmul_nt(const real_t* a, const real_t* b, real_t* out, int m, int k, int n, bool acc);
void matmul_nt_serial(const real_t* a, const real_t* b, real_t* out, int m, int k, int n, bool acc);

// out[k,n] (+)= a[m,k]^T * b[m,n]
void matmul_tn(const real_t* a, const real_t* b, real_t* out, int m, int k, int n, bool acc);
void matmul_tn_serial(const real_t* a, const real_t* b, real_t* out, int m, int k, int n, bool acc);

// out[m] (+)= a[m,k] * x[k]
void matvec(const real_t* a, const real_t* x, real_t* out, int m, int k, bool acc);
void matvec_serial(const real_t* a, const real_t* x, real_t* out, int m, int k, bool acc);

// out[k] (+)= a[m,k]^T * x[m]
void matvec_t(const real_t* a, const real_t* x, real_t* out, int m, int k, bool acc);
void matvec_t_serial(const real_t* a, const real_t* x, real_t* out, int m, int k, bool acc);

// out[m,k] += g[m] outer x[k]
void outer_acc(const real_t* g, const real_t* x, real_t* out, int m, int k);
void outer_acc_serial(const real_t* g, const real_t* x, real_t* out, int m, int k);

// out[i,j] (+)= sum_l d[l] * (p[i,l] * q[j,l])
//
// Diagonal bilinear pairing used by the symmetric attention scores. The
// per-term grouping d*(p*q) is load-bearing: swapping the p and q operands
// commutes inside each product, so score matrices built from (P,Q) and
// (Q,P) are exact transposes of each other.
void sym_scores(const real_t* p, const real_t* q, const real_t* d, real_t* out, int m, int n,
                int k, bool acc);
void sym_scores_serial(const real_t* p, const real_t* q, const real_t* d, real_t* out, int m,
                       int n, int k, bool acc);

enum class Unary { relu, tanh_fn, sigmoid };

// out[i] = f(x[i])
void apply_unary(Unary f, const real_t* x, real_t* out, long n);
void apply_unary_serial(Unary f, const real_t* x, real_t* out, long n);

}  // namespace fusion::kernels
