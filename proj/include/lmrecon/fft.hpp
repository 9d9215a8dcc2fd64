#pragma once

// Thin RAII layer over FFTW. Plan creation and destruction are serialized
// because the FFTW planner is not thread-safe; execution is not.

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <span>
#include <vector>

namespace lmr::fft {

namespace detail {
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanGuard {
  fftw_plan plan = nullptr;
  ~PlanGuard() {
    if (plan != nullptr) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};
}  // namespace detail

/// Forward DFT of a real sequence, X_k = sum_t x_t exp(-2 pi i k t / n),
/// for k = 0..n/2.
inline std::vector<std::complex<double>> forward_real(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> out(x.size() / 2 + 1);
  detail::PlanGuard g;
  {
    std::lock_guard lock(detail::planner_mutex());
    g.plan = fftw_plan_dft_r2c_1d(n, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                  FFTW_ESTIMATE);
  }
  fftw_execute(g.plan);
  return out;
}

/// Unnormalized forward complex DFT.
inline std::vector<std::complex<double>> forward(std::span<const std::complex<double>> x) {
  const int n = static_cast<int>(x.size());
  std::vector<std::complex<double>> in(x.begin(), x.end());
  std::vector<std::complex<double>> out(x.size());
  detail::PlanGuard g;
  {
    std::lock_guard lock(detail::planner_mutex());
    g.plan = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(in.data()),
                              reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
                              FFTW_ESTIMATE);
  }
  fftw_execute(g.plan);
  return out;
}

}  // namespace lmr::fft
