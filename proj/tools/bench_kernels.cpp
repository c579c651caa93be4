// Compares the serial reference kernels against the OpenMP variants on
// attention-sized workloads and prints per-kernel timings.

#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "fusion/kernels.hpp"
#include "fusion/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace fusion;
namespace k = fusion::kernels;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<real_t> random_vec(std::size_t n, Rng& rng) {
  std::vector<real_t> v(n);
  for (auto& x : v) x = static_cast<real_t>(rng.uniform(-1.0, 1.0));
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto stop = Clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

struct Case {
  std::string name;
  std::function<void()> serial;
  std::function<void()> parallel;
  std::function<bool()> identical;
  int reps;
};

}  // namespace

int main() {
#ifdef _OPENMP
  std::cout << "OpenMP enabled, max threads " << omp_get_max_threads() << "\n";
#else
  std::cout << "built without OpenMP: parallel column repeats the serial path\n";
#endif

  Rng rng(1, 0);
  // attention-shaped sizes: 120-word context, 1400-wide keys, k = 250
  const int m = 120, n = 16, dh = 1400, kk = 250;
  auto keys_a = random_vec(static_cast<std::size_t>(m) * dh, rng);
  auto keys_b = random_vec(static_cast<std::size_t>(n) * dh, rng);
  auto proj = random_vec(static_cast<std::size_t>(kk) * dh, rng);
  auto diag = random_vec(static_cast<std::size_t>(kk), rng);
  auto x = random_vec(static_cast<std::size_t>(dh), rng);

  std::vector<real_t> pa(static_cast<std::size_t>(m) * kk), pb(static_cast<std::size_t>(n) * kk);
  std::vector<real_t> scores(static_cast<std::size_t>(m) * n);
  std::vector<real_t> out_a = pa, out_b = scores, mv(static_cast<std::size_t>(dh));
  std::vector<real_t> relu_out(pa.size());

  std::vector<Case> cases;
  cases.push_back({"project keys  a*U^T [120x1400 x 250x1400]",
                   [&] { k::matmul_nt_serial(keys_a.data(), proj.data(), pa.data(), m, dh, kk, false); },
                   [&] { k::matmul_nt(keys_a.data(), proj.data(), out_a.data(), m, dh, kk, false); },
                   [&] { return std::memcmp(pa.data(), out_a.data(), pa.size() * sizeof(real_t)) == 0; },
                   20});
  cases.push_back({"pair scores   d-weighted [120x250 x 16x250]",
                   [&] {
                     k::matmul_nt_serial(keys_b.data(), proj.data(), pb.data(), n, dh, kk, false);
                     k::sym_scores_serial(pa.data(), pb.data(), diag.data(), scores.data(), m, n, kk, false);
                   },
                   [&] {
                     k::matmul_nt(keys_b.data(), proj.data(), pb.data(), n, dh, kk, false);
                     k::sym_scores(pa.data(), pb.data(), diag.data(), out_b.data(), m, n, kk, false);
                   },
                   [&] { return std::memcmp(scores.data(), out_b.data(), scores.size() * sizeof(real_t)) == 0; },
                   20});
  cases.push_back({"matvec        [120x1400]",
                   [&] { k::matvec_serial(keys_a.data(), x.data(), pa.data(), m, dh, false); },
                   [&] { k::matvec(keys_a.data(), x.data(), out_a.data(), m, dh, false); },
                   [&] { return std::memcmp(pa.data(), out_a.data(), static_cast<std::size_t>(m) * sizeof(real_t)) == 0; },
                   200});
  cases.push_back({"matvec_t      [120x1400 -> 1400]",
                   [&] { k::matvec_t_serial(keys_a.data(), pa.data(), mv.data(), m, dh, false); },
                   [&] { k::matvec_t(keys_a.data(), pa.data(), mv.data(), m, dh, false); },
                   [] { return true; },
                   200});
  cases.push_back({"relu apply    [120x250]",
                   [&] { k::apply_unary_serial(k::Unary::relu, pa.data(), relu_out.data(),
                                               static_cast<long>(pa.size())); },
                   [&] { k::apply_unary(k::Unary::relu, pa.data(), relu_out.data(),
                                        static_cast<long>(pa.size())); },
                   [] { return true; },
                   200});

  std::cout << std::left << std::setw(48) << "kernel" << std::right << std::setw(12)
            << "serial ms" << std::setw(12) << "openmp ms" << std::setw(10) << "speedup"
            << std::setw(10) << "bitwise" << "\n";
  std::cout << std::string(92, '-') << "\n";
  for (auto& c : cases) {
    k::set_parallel(false);
    const double serial = time_ms(c.serial, c.reps);
    k::set_parallel(true);
    const double parallel = time_ms(c.parallel, c.reps);
    const bool same = c.identical();
    std::cout << std::left << std::setw(48) << c.name << std::right << std::fixed
              << std::setprecision(3) << std::setw(12) << serial << std::setw(12) << parallel
              << std::setw(10) << std::setprecision(2) << serial / parallel << std::setw(10)
              << (same ? "yes" : "NO") << "\n";
    if (!same) return 1;
  }
  return 0;
}
