#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <vector>

#include "doctest.h"
#include "fusion/kernels.hpp"
#include "fusion/rng.hpp"

using namespace fusion;
namespace k = fusion::kernels;

namespace {

std::vector<real_t> random_vec(std::size_t n, Rng& rng) {
  std::vector<real_t> v(n);
  for (auto& x : v) x = static_cast<real_t>(rng.uniform(-2.0, 2.0));
  return v;
}

// Naive reference used only by this test file.
std::vector<real_t> naive_matmul(const std::vector<real_t>& a, const std::vector<real_t>& b,
                                 int m, int kk, int n) {
  std::vector<real_t> out(static_cast<std::size_t>(m) * n, 0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      real_t s = 0;
      for (int l = 0; l < kk; ++l) s += a[i * kk + l] * b[l * n + j];
      out[i * n + j] = s;
    }
  return out;
}

}  // namespace

TEST_CASE("matmul_nn matches naive reference") {
  Rng rng(1, 0);
  for (int m : {1, 3, 17})
    for (int kk : {1, 5, 23})
      for (int n : {1, 4, 19}) {
        auto a = random_vec(static_cast<std::size_t>(m) * kk, rng);
        auto b = random_vec(static_cast<std::size_t>(kk) * n, rng);
        std::vector<real_t> out(static_cast<std::size_t>(m) * n);
        k::matmul_nn_serial(a.data(), b.data(), out.data(), m, kk, n, false);
        auto ref = naive_matmul(a, b, m, kk, n);
        for (std::size_t i = 0; i < out.size(); ++i)
          CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      }
}

TEST_CASE("parallel and serial kernel paths are bitwise identical") {
  Rng rng(7, 1);
  // Sizes straddle the parallel grain so both dispatch branches execute.
  for (int m : {4, 96})
    for (int kk : {8, 64})
      for (int n : {4, 80}) {
        auto a = random_vec(static_cast<std::size_t>(m) * kk, rng);
        auto b = random_vec(static_cast<std::size_t>(kk) * n, rng);
        auto bt = random_vec(static_cast<std::size_t>(n) * kk, rng);
        auto d = random_vec(static_cast<std::size_t>(kk), rng);
        auto x = random_vec(static_cast<std::size_t>(kk), rng);
        auto xm = random_vec(static_cast<std::size_t>(m), rng);

        std::vector<real_t> s1(static_cast<std::size_t>(m) * n), s2 = s1;
        k::matmul_nn_serial(a.data(), b.data(), s1.data(), m, kk, n, false);
        k::set_parallel(true);
        k::matmul_nn(a.data(), b.data(), s2.data(), m, kk, n, false);
        CHECK(std::memcmp(s1.data(), s2.data(), s1.size() * sizeof(real_t)) == 0);

        k::matmul_nt_serial(a.data(), bt.data(), s1.data(), m, kk, n, false);
        k::matmul_nt(a.data(), bt.data(), s2.data(), m, kk, n, false);
        CHECK(std::memcmp(s1.data(), s2.data(), s1.size() * sizeof(real_t)) == 0);

        auto bm = random_vec(static_cast<std::size_t>(m) * n, rng);
        std::vector<real_t> t1(static_cast<std::size_t>(kk) * n), t2 = t1;
        k::matmul_tn_serial(a.data(), bm.data(), t1.data(), m, kk, n, false);
        k::matmul_tn(a.data(), bm.data(), t2.data(), m, kk, n, false);
        CHECK(std::memcmp(t1.data(), t2.data(), t1.size() * sizeof(real_t)) == 0);

        std::vector<real_t> v1(static_cast<std::size_t>(m)), v2 = v1;
        k::matvec_serial(a.data(), x.data(), v1.data(), m, kk, false);
        k::matvec(a.data(), x.data(), v2.data(), m, kk, false);
        CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * sizeof(real_t)) == 0);

        std::vector<real_t> w1(static_cast<std::size_t>(kk)), w2 = w1;
        k::matvec_t_serial(a.data(), xm.data(), w1.data(), m, kk, false);
        k::matvec_t(a.data(), xm.data(), w2.data(), m, kk, false);
        CHECK(std::memcmp(w1.data(), w2.data(), w1.size() * sizeof(real_t)) == 0);

        k::sym_scores_serial(a.data(), bt.data(), d.data(), s1.data(), m, n, kk, false);
        k::sym_scores(a.data(), bt.data(), d.data(), s2.data(), m, n, kk, false);
        CHECK(std::memcmp(s1.data(), s2.data(), s1.size() * sizeof(real_t)) == 0);
      }
}

TEST_CASE("kernel accumulate mode adds on top of existing output") {
  Rng rng(3, 0);
  const int m = 5, kk = 7, n = 6;
  auto a = random_vec(static_cast<std::size_t>(m) * kk, rng);
  auto b = random_vec(static_cast<std::size_t>(kk) * n, rng);
  auto base = random_vec(static_cast<std::size_t>(m) * n, rng);
  auto out = base;
  k::matmul_nn_serial(a.data(), b.data(), out.data(), m, kk, n, true);
  auto prod = naive_matmul(a, b, m, kk, n);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(base[i] + prod[i]).epsilon(1e-12));
}

TEST_CASE("sym_scores of (P,Q) is the exact transpose of (Q,P)") {
  Rng rng(11, 2);
  const int m = 9, n = 7, kk = 13;
  auto p = random_vec(static_cast<std::size_t>(m) * kk, rng);
  auto q = random_vec(static_cast<std::size_t>(n) * kk, rng);
  auto d = random_vec(static_cast<std::size_t>(kk), rng);
  std::vector<real_t> s(static_cast<std::size_t>(m) * n), st(static_cast<std::size_t>(n) * m);
  k::sym_scores_serial(p.data(), q.data(), d.data(), s.data(), m, n, kk, false);
  k::sym_scores_serial(q.data(), p.data(), d.data(), st.data(), n, m, kk, false);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) CHECK(s[i * n + j] == st[j * m + i]);  // bitwise
}

TEST_CASE("apply_unary matches scalar evaluation on both paths") {
  Rng rng(5, 4);
  const long n = 50000;  // above the parallel grain
  auto x = random_vec(static_cast<std::size_t>(n), rng);
  std::vector<real_t> y1(static_cast<std::size_t>(n)), y2 = y1;
  for (auto f : {k::Unary::relu, k::Unary::tanh_fn, k::Unary::sigmoid}) {
    k::apply_unary_serial(f, x.data(), y1.data(), n);
    k::apply_unary(f, x.data(), y2.data(), n);
    CHECK(std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(real_t)) == 0);
  }
  CHECK(y1[0] == real_t(1) / (real_t(1) + std::exp(-x[0])));
}
