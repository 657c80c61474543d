#pragma once

#include <fftw3.h>

#include <complex>
#include <cstdint>
#include <map>
#include <mutex>
#include <vector>

#include "lensless/errors.hpp"

namespace lensless {
namespace fft {

// Real 2-D FFT helpers on top of FFTW. Plans are created once per (h, w,
// precision) with FFTW_ESTIMATE | FFTW_UNALIGNED -- measured planning would
// make transform results depend on runtime timing, and unaligned plans may be
// executed on any caller buffer. The inverse transform is unnormalized; the
// wrappers below fold the 1/N in.

template <typename T>
struct Traits;

template <>
struct Traits<float> {
  using plan = fftwf_plan;
  using cplx = fftwf_complex;
  static plan plan_r2c(int h, int w, float* in, cplx* out) {
    return fftwf_plan_dft_r2c_2d(h, w, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  static plan plan_c2r(int h, int w, cplx* in, float* out) {
    return fftwf_plan_dft_c2r_2d(h, w, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  static void exec_r2c(plan p, float* in, cplx* out) { fftwf_execute_dft_r2c(p, in, out); }
  static void exec_c2r(plan p, cplx* in, float* out) { fftwf_execute_dft_c2r(p, in, out); }
};

template <>
struct Traits<double> {
  using plan = fftw_plan;
  using cplx = fftw_complex;
  static plan plan_r2c(int h, int w, double* in, cplx* out) {
    return fftw_plan_dft_r2c_2d(h, w, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  static plan plan_c2r(int h, int w, cplx* in, double* out) {
    return fftw_plan_dft_c2r_2d(h, w, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  static void exec_r2c(plan p, double* in, cplx* out) { fftw_execute_dft_r2c(p, in, out); }
  static void exec_c2r(plan p, cplx* in, double* out) { fftw_execute_dft_c2r(p, in, out); }
};

template <typename T>
struct PlanPair {
  typename Traits<T>::plan fwd = nullptr;
  typename Traits<T>::plan inv = nullptr;
};

template <typename T>
inline PlanPair<T>& plans_for(std::uint32_t h, std::uint32_t w) {
  static std::map<std::pair<std::uint32_t, std::uint32_t>, PlanPair<T>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find({h, w});
  if (it != cache.end()) return it->second;

  std::vector<T> re(std::size_t(h) * w);
  std::vector<std::complex<T>> cx(std::size_t(h) * (w / 2 + 1));
  PlanPair<T> p;
  p.fwd = Traits<T>::plan_r2c(int(h), int(w), re.data(),
                              reinterpret_cast<typename Traits<T>::cplx*>(cx.data()));
  p.inv = Traits<T>::plan_c2r(int(h), int(w), reinterpret_cast<typename Traits<T>::cplx*>(cx.data()),
                              re.data());
  if (!p.fwd || !p.inv) throw Error("fft: plan creation failed");
  return cache.emplace(std::make_pair(h, w), p).first->second;
}

inline std::size_t spectrum_size(std::uint32_t h, std::uint32_t w) {
  return std::size_t(h) * (w / 2 + 1);
}

// out must hold spectrum_size(h, w) complex values; in is left untouched.
template <typename T>
void r2c(std::uint32_t h, std::uint32_t w, const T* in, std::complex<T>* out) {
  auto& p = plans_for<T>(h, w);
  Traits<T>::exec_r2c(p.fwd, const_cast<T*>(in), reinterpret_cast<typename Traits<T>::cplx*>(out));
}

// Unnormalized inverse; FFTW may scribble on `in`, so treat it as scratch.
template <typename T>
void c2r_unnormalized(std::uint32_t h, std::uint32_t w, std::complex<T>* in, T* out) {
  auto& p = plans_for<T>(h, w);
  Traits<T>::exec_c2r(p.inv, reinterpret_cast<typename Traits<T>::cplx*>(in), out);
}

}  // namespace fft
}  // namespace lensless
