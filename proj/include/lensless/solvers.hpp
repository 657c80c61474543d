#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lensless/optics.hpp"
#include "lensless/random.hpp"

namespace lensless {

enum class Regularizer { l1, tv };

template <typename T>
struct SolverConfig {
  std::uint32_t max_iters = 100;
  T lambda = T(0);
  T step_size = T(0);  // <= 0 selects the power-iteration estimate
  T tolerance = T(1e-6);
  T rho = T(1);  // splitting penalty weight; only the consensus solver reads it
  Regularizer regularizer = Regularizer::l1;
  bool nonneg = true;

  void validate() const {
    if (max_iters < 1) throw Error("solver config: max_iters must be >= 1");
    if (!(tolerance > T(0))) throw Error("solver config: tolerance must be positive");
    if (lambda < T(0)) throw NegativeThreshold("solver config: lambda must be nonnegative");
    if (!(rho > T(0))) throw Error("solver config: rho must be positive");
  }
};

struct SolveReport {
  std::uint32_t iterations_run = 0;
  std::vector<double> objective_trace;
  double final_data_fidelity = 0;  // mean squared measurement residual
  double final_primal_residual = 0;
  bool converged = false;
};

template <typename T>
void soft_threshold_inplace(Tensor<T>& x, T t) {
  if (t < T(0)) throw NegativeThreshold("soft_threshold: threshold must be nonnegative");
  for (T& v : x.v) v = v > t ? v - t : (v < -t ? v + t : T(0));
}

template <typename T>
ImageField<T> soft_threshold(ImageField<T> x, T t) {
  soft_threshold_inplace(x.data, t);
  return x;
}

// Gradient of 0.5 ||T(x, k) - b||^2 in x.
template <typename T>
ImageField<T> data_fidelity_grad(const ImageField<T>& x, const ImageField<T>& b,
                                 const ImageField<T>& kernel) {
  ImageField<T> residual = forward_T(x, kernel);
  if (!residual.data.same_shape(b.data))
    throw ShapeMismatch("data_fidelity_grad: measurement shape disagrees with the model output");
  for (std::size_t i = 0; i < residual.data.v.size(); ++i) residual.data.v[i] -= b.data.v[i];
  return adjoint_T(residual, kernel);
}

// Largest eigenvalue of T'T via power iteration on the padded domain.
template <typename T>
double power_iteration_lipschitz(const ConvOperator<T>& op, std::uint32_t iters = 50,
                                 std::uint64_t seed = 0) {
  const SensorGeometry& g = op.geom;
  Tensor<T> v = Tensor<T>::image(g.padded_height(), g.padded_width(), g.channels);
  auto rng = seeded_rng(seed);
  fill_uniform(v, rng, T(-1), T(1));
  double lambda = 0;
  for (std::uint32_t i = 0; i < iters; ++i) {
    Tensor<T> next = op.adjoint(op.forward(v));
    lambda = l2_norm(next);
    if (lambda == 0) return 0;  // kernel is identically zero
    const T inv = static_cast<T>(1.0 / lambda);
    for (T& x : next.v) x *= inv;
    v = std::move(next);
  }
  return lambda;
}

namespace detail {

// Circular forward differences along each axis.
template <typename T>
void finite_diffs(const Tensor<T>& x, Tensor<T>& dh, Tensor<T>& dv) {
  const std::uint32_t h = x.h(), w = x.w(), c = x.c();
  for (std::uint32_t r = 0; r < h; ++r)
    for (std::uint32_t col = 0; col < w; ++col)
      for (std::uint32_t ch = 0; ch < c; ++ch) {
        dh.at(r, col, ch) = x.at(r, (col + 1) % w, ch) - x.at(r, col, ch);
        dv.at(r, col, ch) = x.at((r + 1) % h, col, ch) - x.at(r, col, ch);
      }
}

// Adjoint of the stacked difference operator: D'(p, q) = backward diffs.
template <typename T>
void finite_diffs_adjoint(const Tensor<T>& dh, const Tensor<T>& dv, Tensor<T>& out) {
  const std::uint32_t h = out.h(), w = out.w(), c = out.c();
  for (std::uint32_t r = 0; r < h; ++r)
    for (std::uint32_t col = 0; col < w; ++col)
      for (std::uint32_t ch = 0; ch < c; ++ch)
        out.at(r, col, ch) = dh.at(r, (col + w - 1) % w, ch) - dh.at(r, col, ch) +
                             dv.at((r + h - 1) % h, col, ch) - dv.at(r, col, ch);
}

template <typename T>
double l1_mass(const Tensor<T>& x) {
  double s = 0;
  for (const T& v : x.v) s += std::abs(double(v));
  return s;
}

template <typename T>
double tv_mass(const Tensor<T>& x) {
  Tensor<T> dh(x.dims), dv(x.dims);
  finite_diffs(x, dh, dv);
  return l1_mass(dh) + l1_mass(dv);
}

// prox of tau * ||Dx||_1 at v, via projected gradient on the dual problem.
// ||D'p|| has spectral norm sqrt(8) for circular diffs, so step 1/8 is safe.
template <typename T>
Tensor<T> tv_prox(const Tensor<T>& v, T tau, std::uint32_t inner_iters = 50) {
  Tensor<T> ph(v.dims, T(0)), pv(v.dims, T(0));
  Tensor<T> x = v, div(v.dims), dh(v.dims), dvv(v.dims);
  for (std::uint32_t it = 0; it < inner_iters; ++it) {
    finite_diffs(x, dh, dvv);
    for (std::size_t i = 0; i < ph.v.size(); ++i) {
      ph.v[i] = std::clamp(ph.v[i] + T(0.125) * dh.v[i], -tau, tau);
      pv.v[i] = std::clamp(pv.v[i] + T(0.125) * dvv.v[i], -tau, tau);
    }
    finite_diffs_adjoint(ph, pv, div);
    for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] = v.v[i] - div.v[i];
  }
  return x;
}

template <typename T>
double regularizer_mass(const Tensor<T>& x, Regularizer reg) {
  return reg == Regularizer::l1 ? l1_mass(x) : tv_mass(x);
}

template <typename T>
void apply_prox(Tensor<T>& x, T tau, const SolverConfig<T>& cfg) {
  if (cfg.regularizer == Regularizer::l1) {
    if (tau > T(0)) soft_threshold_inplace(x, tau);
  } else if (tau > T(0)) {
    x = tv_prox(x, tau);
  }
  if (cfg.nonneg)
    for (T& v : x.v) v = std::max(v, T(0));
}

}  // namespace detail

// Accelerated proximal gradient descent on
//   0.5 ||T(x, k) - b||^2 + lambda * R(x),  optionally s.t. x >= 0,
// with adaptive momentum restart. Returns the best iterate seen; the
// reported trace is the running best objective, hence non-increasing.
template <typename T>
std::pair<ImageField<T>, SolveReport> fista_solve(const ImageField<T>& b, const Psf<T>& psf,
                                                  const SolverConfig<T>& cfg) {
  cfg.validate();
  require_domain(b, Domain::sensor, "fista measurement");
  ConvOperator<T> op(psf.kernel);
  if (b.h() != op.geom.height || b.w() != op.geom.width || b.c() != op.geom.channels)
    throw GeometryMismatch("fista: measurement does not match the kernel geometry");

  double step = double(cfg.step_size);
  if (step <= 0) {
    const double lip = power_iteration_lipschitz(op, 50);
    if (lip <= 0) throw DivergenceDetected("fista: operator norm estimate is zero");
    step = 1.0 / (lip * 1.02);
  }

  const std::uint32_t ph = op.geom.padded_height(), pw = op.geom.padded_width();
  Tensor<T> x(std::vector<std::uint32_t>{ph, pw, op.geom.channels}, T(0));
  Tensor<T> z = x;

  auto objective = [&](const Tensor<T>& cand) {
    Tensor<T> r = op.forward(cand);
    double s = 0;
    for (std::size_t i = 0; i < r.v.size(); ++i) {
      const double d = double(r.v[i]) - double(b.data.v[i]);
      s += d * d;
    }
    return 0.5 * s + double(cfg.lambda) * detail::regularizer_mass(cand, cfg.regularizer);
  };

  SolveReport report;
  const double obj0 = objective(x);
  double best_obj = obj0, prev_obj = obj0;
  Tensor<T> best_x = x;
  double t = 1;

  for (std::uint32_t it = 0; it < cfg.max_iters; ++it) {
    Tensor<T> r = op.forward(z);
    for (std::size_t i = 0; i < r.v.size(); ++i) r.v[i] -= b.data.v[i];
    Tensor<T> grad = op.adjoint(r);

    Tensor<T> cand = z;
    for (std::size_t i = 0; i < cand.v.size(); ++i) cand.v[i] -= static_cast<T>(step) * grad.v[i];
    detail::apply_prox(cand, static_cast<T>(double(cfg.lambda) * step), cfg);

    const double obj = objective(cand);
    if (!std::isfinite(obj) || obj > 1e3 * std::max(obj0, 1e-12))
      throw DivergenceDetected("fista: objective exploded at iteration " + std::to_string(it));

    if (obj > prev_obj) t = 1;  // adaptive restart: kill the momentum
    const double t_next = 0.5 * (1 + std::sqrt(1 + 4 * t * t));
    const T beta = static_cast<T>((t - 1) / t_next);
    for (std::size_t i = 0; i < z.v.size(); ++i)
      z.v[i] = cand.v[i] + beta * (cand.v[i] - x.v[i]);
    t = t_next;
    x = cand;

    if (obj < best_obj) {
      best_obj = obj;
      best_x = x;
    }
    report.objective_trace.push_back(best_obj);
    ++report.iterations_run;

    const bool settled = std::abs(obj - prev_obj) <= double(cfg.tolerance) * std::max(1.0, std::abs(prev_obj));
    prev_obj = obj;
    if (settled) {
      report.converged = true;
      break;
    }
  }

  {
    Tensor<T> r = op.forward(best_x);
    double s = 0;
    for (std::size_t i = 0; i < r.v.size(); ++i) {
      const double d = double(r.v[i]) - double(b.data.v[i]);
      s += d * d;
    }
    report.final_data_fidelity = s / double(r.v.size());
  }
  return {ImageField<T>(std::move(best_x), Domain::padded), report};
}

// Three-way split ADMM (penalty 1) on the same objective. The measurement
// split v carries the pre-crop convolution output so the x-update is a
// closed-form frequency-domain solve; u carries the regularized image (or its
// differences), w carries the nonnegativity clamp. Returns the final iterate.
template <typename T>
std::pair<ImageField<T>, SolveReport> admm_solve(const ImageField<T>& b, const Psf<T>& psf,
                                                 const SolverConfig<T>& cfg) {
  cfg.validate();
  require_domain(b, Domain::sensor, "admm measurement");
  ConvOperator<T> op(psf.kernel);
  const SensorGeometry& g = op.geom;
  if (b.h() != g.height || b.w() != g.width || b.c() != g.channels)
    throw GeometryMismatch("admm: measurement does not match the kernel geometry");

  const std::uint32_t ph = g.padded_height(), pw = g.padded_width(), c = g.channels;
  const std::size_t nbins = fft::spectrum_size(ph, pw);
  const bool tv = cfg.regularizer == Regularizer::tv;

  // Frequency response of the difference operators and the x-update denominator.
  std::vector<std::complex<T>> dh_hat(nbins), dv_hat(nbins);
  for (std::uint32_t kr = 0; kr < ph; ++kr)
    for (std::uint32_t kc = 0; kc <= pw / 2; ++kc) {
      const double wh = 2.0 * M_PI * double(kc) / double(pw);
      const double wv = 2.0 * M_PI * double(kr) / double(ph);
      dh_hat[kr * (pw / 2 + 1) + kc] = std::complex<T>(T(std::cos(wh) - 1), T(std::sin(wh)));
      dv_hat[kr * (pw / 2 + 1) + kc] = std::complex<T>(T(std::cos(wv) - 1), T(std::sin(wv)));
    }
  std::vector<T> denom(nbins * c);
  for (std::uint32_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < nbins; ++i) {
      const double k2 = std::norm(op.kernel_spectra[ch * nbins + i]);
      const double d2 = tv ? std::norm(dh_hat[i]) + std::norm(dv_hat[i]) : 1.0;
      denom[ch * nbins + i] = static_cast<T>(k2 + d2 + 1.0);
    }

  const std::vector<std::uint32_t> pdims{ph, pw, c};
  Tensor<T> x(pdims, T(0)), mx(pdims, T(0));
  Tensor<T> v(pdims, T(0)), av(pdims, T(0));
  Tensor<T> w(pdims, T(0)), aw(pdims, T(0));
  Tensor<T> u1(pdims, T(0)), au1(pdims, T(0));  // l1: image copy; tv: horizontal diffs
  Tensor<T> u2(pdims, T(0)), au2(pdims, T(0));  // tv only: vertical diffs
  Tensor<T> d1(pdims, T(0)), d2(pdims, T(0));   // Dx
  Tensor<T> pb = detail::pad2(b.data);          // b placed in the crop window

  auto spectra_of_diff = [&](const Tensor<T>& a, const Tensor<T>& bT) {
    Tensor<T> tmp(pdims);
    for (std::size_t i = 0; i < tmp.v.size(); ++i) tmp.v[i] = a.v[i] - bT.v[i];
    return detail::spectra(tmp);
  };

  const std::uint32_t r0 = g.crop_row(), c0 = g.crop_col();
  auto in_window = [&](std::uint32_t r, std::uint32_t col) {
    return r >= r0 && r < r0 + g.height && col >= c0 && col < c0 + g.width;
  };

  SolveReport report;
  double obj0 = 0, prev_obj = 0;
  for (std::uint32_t it = 0; it < cfg.max_iters; ++it) {
    // x-update: quadratic solve in the frequency domain.
    auto vs = spectra_of_diff(v, av);
    auto ws = spectra_of_diff(w, aw);
    auto u1s = spectra_of_diff(u1, au1);
    std::vector<std::complex<T>> xs(nbins * c);
    for (std::uint32_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < nbins; ++i) {
        const std::size_t j = ch * nbins + i;
        std::complex<T> acc = std::conj(op.kernel_spectra[j]) * vs[j] + ws[j];
        if (tv) acc += std::conj(dh_hat[i]) * u1s[j];
        else acc += u1s[j];
        if (tv) {
          // vertical diffs handled below once u2 spectra exist
        }
        xs[j] = acc;
      }
    if (tv) {
      auto u2s = spectra_of_diff(u2, au2);
      for (std::uint32_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < nbins; ++i) {
          const std::size_t j = ch * nbins + i;
          xs[j] += std::conj(dv_hat[i]) * u2s[j];
        }
    }
    std::vector<std::complex<T>> mxs(nbins * c);
    for (std::size_t j = 0; j < xs.size(); ++j) xs[j] /= denom[j];
    for (std::uint32_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < nbins; ++i)
        mxs[ch * nbins + i] = xs[ch * nbins + i] * op.kernel_spectra[ch * nbins + i];
    x = detail::inverse_spectra(xs, ph, pw, c);   // consumes xs
    mx = detail::inverse_spectra(mxs, ph, pw, c);

    if (tv) detail::finite_diffs(x, d1, d2);
    else d1 = x;

    // v-update: the quadratic data term and the penalty term balance at
    // weight 1 : rho inside the crop window.
    for (std::uint32_t r = 0; r < ph; ++r)
      for (std::uint32_t col = 0; col < pw; ++col)
        for (std::uint32_t ch = 0; ch < c; ++ch) {
          const T vt = mx.at(r, col, ch) + av.at(r, col, ch);
          v.at(r, col, ch) = in_window(r, col)
                                 ? (pb.at(r, col, ch) + cfg.rho * vt) / (T(1) + cfg.rho)
                                 : vt;
        }

    // u-update: shrinkage at the penalty-scaled threshold.
    for (std::size_t i = 0; i < u1.v.size(); ++i) u1.v[i] = d1.v[i] + au1.v[i];
    soft_threshold_inplace(u1, cfg.lambda / cfg.rho);
    if (tv) {
      for (std::size_t i = 0; i < u2.v.size(); ++i) u2.v[i] = d2.v[i] + au2.v[i];
      soft_threshold_inplace(u2, cfg.lambda / cfg.rho);
    }

    // w-update: clamp (or pass through when unconstrained).
    for (std::size_t i = 0; i < w.v.size(); ++i) {
      const T wt = x.v[i] + aw.v[i];
      w.v[i] = cfg.nonneg ? std::max(wt, T(0)) : wt;
    }

    // dual ascent and primal residual.
    double res2 = 0;
    std::size_t res_n = 0;
    for (std::size_t i = 0; i < x.v.size(); ++i) {
      const T rv = mx.v[i] - v.v[i];
      av.v[i] += rv;
      const T ru = d1.v[i] - u1.v[i];
      au1.v[i] += ru;
      const T rw = x.v[i] - w.v[i];
      aw.v[i] += rw;
      res2 += double(rv) * rv + double(ru) * ru + double(rw) * rw;
      res_n += 3;
    }
    if (tv)
      for (std::size_t i = 0; i < x.v.size(); ++i) {
        const T ru = d2.v[i] - u2.v[i];
        au2.v[i] += ru;
        res2 += double(ru) * ru;
        ++res_n;
      }
    report.final_primal_residual = std::sqrt(res2 / double(res_n));

    // true objective at the current iterate
    double data = 0;
    for (std::uint32_t r = 0; r < g.height; ++r)
      for (std::uint32_t col = 0; col < g.width; ++col)
        for (std::uint32_t ch = 0; ch < c; ++ch) {
          const double d = double(mx.at(r0 + r, c0 + col, ch)) - double(b.at(r, col, ch));
          data += d * d;
        }
    double obj = 0.5 * data;
    if (cfg.lambda > T(0)) {
      obj += double(cfg.lambda) *
             (tv ? detail::l1_mass(d1) + detail::l1_mass(d2) : detail::l1_mass(x));
    }
    if (it == 0) obj0 = std::max(obj, 1e-12);
    if (!std::isfinite(obj) || obj > 1e3 * obj0)
      throw DivergenceDetected("admm: objective exploded at iteration " + std::to_string(it));
    report.objective_trace.push_back(obj);
    ++report.iterations_run;

    const bool settled = it > 0 && std::abs(obj - prev_obj) <=
                                       double(cfg.tolerance) * std::max(1.0, std::abs(prev_obj)) &&
                         report.final_primal_residual < double(cfg.tolerance) * 10;
    prev_obj = obj;
    if (settled) {
      report.converged = true;
      break;
    }
  }

  {
    double s = 0;
    for (std::uint32_t r = 0; r < g.height; ++r)
      for (std::uint32_t col = 0; col < g.width; ++col)
        for (std::uint32_t ch = 0; ch < c; ++ch) {
          const double d = double(mx.at(r0 + r, c0 + col, ch)) - double(b.at(r, col, ch));
          s += d * d;
        }
    report.final_data_fidelity = s / double(std::size_t(g.height) * g.width * c);
  }
  return {ImageField<T>(std::move(x), Domain::padded), report};
}

}  // namespace lensless
