#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lensless/fft.hpp"
#include "lensless/image_field.hpp"

namespace lensless {

namespace detail {

// Zero-pad an H x W x C plane into the center of a 2H x 2W x C plane. The
// crop window starts at (H/2, W/2), so crop(pad(x)) == x exactly.
template <typename T>
Tensor<T> pad2(const Tensor<T>& s) {
  const std::uint32_t h = s.h(), w = s.w(), c = s.c();
  Tensor<T> out = Tensor<T>::image(2 * h, 2 * w, c);
  const std::uint32_t r0 = h / 2, c0 = w / 2;
  for (std::uint32_t r = 0; r < h; ++r) {
    const T* src = &s.at(r, 0, 0);
    T* dst = &out.at(r0 + r, c0, 0);
    std::copy(src, src + std::size_t(w) * c, dst);
  }
  return out;
}

template <typename T>
Tensor<T> crop_center(const Tensor<T>& p) {
  const std::uint32_t h = p.h() / 2, w = p.w() / 2, c = p.c();
  Tensor<T> out = Tensor<T>::image(h, w, c);
  const std::uint32_t r0 = h / 2, c0 = w / 2;
  for (std::uint32_t r = 0; r < h; ++r) {
    const T* src = &p.at(r0 + r, c0, 0);
    std::copy(src, src + std::size_t(w) * c, &out.at(r, 0, 0));
  }
  return out;
}

// Embed a sensor-sized kernel into the padded plane with the kernel's center
// pixel (H/2, W/2) at the circular origin. With this origin convention a
// centered delta kernel makes the forward model an exact crop and the adjoint
// an exact pad.
template <typename T>
Tensor<T> embed_kernel(const Tensor<T>& k) {
  const std::uint32_t h = k.h(), w = k.w(), c = k.c();
  const std::uint32_t ph = 2 * h, pw = 2 * w;
  Tensor<T> out = Tensor<T>::image(ph, pw, c);
  for (std::uint32_t r = 0; r < h; ++r) {
    const std::uint32_t rr = (r + h + h / 2) % ph;
    for (std::uint32_t col = 0; col < w; ++col) {
      const std::uint32_t cc = (col + w + w / 2) % pw;
      for (std::uint32_t ch = 0; ch < c; ++ch) out.at(rr, cc, ch) = k.at(r, col, ch);
    }
  }
  return out;
}

// Adjoint of embed_kernel: gather the embedded positions back to H x W x C.
template <typename T>
Tensor<T> unembed_kernel(const Tensor<T>& g, std::uint32_t h, std::uint32_t w) {
  const std::uint32_t ph = g.h(), pw = g.w(), c = g.c();
  Tensor<T> out = Tensor<T>::image(h, w, c);
  for (std::uint32_t r = 0; r < h; ++r) {
    const std::uint32_t rr = (r + h + h / 2) % ph;
    for (std::uint32_t col = 0; col < w; ++col) {
      const std::uint32_t cc = (col + w + w / 2) % pw;
      for (std::uint32_t ch = 0; ch < c; ++ch) out.at(r, col, ch) = g.at(rr, cc, ch);
    }
  }
  return out;
}

// Per-channel half spectra, channel-major: [ch * spectrum_size + bin].
template <typename T>
std::vector<std::complex<T>> spectra(const Tensor<T>& t) {
  const std::uint32_t h = t.h(), w = t.w(), c = t.c();
  const std::size_t n = fft::spectrum_size(h, w);
  std::vector<std::complex<T>> out(n * c);
  std::vector<T> plane(std::size_t(h) * w);
  for (std::uint32_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = t.v[i * c + ch];
    fft::r2c(h, w, plane.data(), out.data() + ch * n);
  }
  return out;
}

// Inverse of `spectra`, including the 1/(h*w) normalization. The spectrum
// argument is consumed as scratch.
template <typename T>
Tensor<T> inverse_spectra(std::vector<std::complex<T>>& s, std::uint32_t h, std::uint32_t w,
                          std::uint32_t c) {
  const std::size_t n = fft::spectrum_size(h, w);
  Tensor<T> out = Tensor<T>::image(h, w, c);
  std::vector<T> plane(std::size_t(h) * w);
  const T norm = T(1) / (T(h) * T(w));
  for (std::uint32_t ch = 0; ch < c; ++ch) {
    fft::c2r_unnormalized(h, w, s.data() + ch * n, plane.data());
    for (std::size_t i = 0; i < plane.size(); ++i) out.v[i * c + ch] = plane[i] * norm;
  }
  return out;
}

template <typename T>
std::vector<std::complex<T>> mul_spectra(const std::vector<std::complex<T>>& a,
                                         const std::vector<std::complex<T>>& b) {
  std::vector<std::complex<T>> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
std::vector<std::complex<T>> mul_conj_spectra(const std::vector<std::complex<T>>& a,
                                              const std::vector<std::complex<T>>& b) {
  std::vector<std::complex<T>> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * std::conj(b[i]);
  return out;
}

// Circular convolution / correlation of same-shape planes, origin at [0,0].
template <typename T>
Tensor<T> circ_conv(const Tensor<T>& a, const Tensor<T>& k) {
  auto prod = mul_spectra(spectra(a), spectra(k));
  return inverse_spectra(prod, a.h(), a.w(), a.c());
}

template <typename T>
Tensor<T> circ_corr(const Tensor<T>& a, const Tensor<T>& k) {
  auto prod = mul_conj_spectra(spectra(a), spectra(k));
  return inverse_spectra(prod, a.h(), a.w(), a.c());
}

}  // namespace detail

// Precomputed pad/crop window for a geometry.
struct CropPadPlan {
  SensorGeometry geometry;
  std::uint32_t row0, col0;

  explicit CropPadPlan(SensorGeometry g) : geometry(g), row0(g.crop_row()), col0(g.crop_col()) {
    g.validate();
  }

  template <typename T>
  Tensor<T> pad(const Tensor<T>& s) const {
    return detail::pad2(s);
  }
  template <typename T>
  Tensor<T> crop(const Tensor<T>& p) const {
    return detail::crop_center(p);
  }
};

template <typename T>
ImageField<T> pad(const ImageField<T>& x) {
  require_domain(x, Domain::sensor, "pad");
  return ImageField<T>(detail::pad2(x.data), Domain::padded);
}

template <typename T>
ImageField<T> crop(const ImageField<T>& x) {
  require_domain(x, Domain::padded, "crop");
  if (x.h() % 2 != 0 || x.w() % 2 != 0) throw ShapeMismatch("crop: padded dims must be even");
  return ImageField<T>(detail::crop_center(x.data), Domain::sensor);
}

// Per-channel circular convolution of two same-shape fields, origin [0,0].
template <typename T>
ImageField<T> circular_convolve(const ImageField<T>& image, const ImageField<T>& kernel) {
  if (!image.data.same_shape(kernel.data))
    throw ShapeMismatch("circular_convolve: image " + shape_string(image.data) + " vs kernel " +
                        shape_string(kernel.data));
  if (image.domain != kernel.domain)
    throw DomainMismatch("circular_convolve: operands live in different domains");
  ImageField<T> out(detail::circ_conv(image.data, kernel.data), image.domain);
  require_finite(out, "circular_convolve");
  return out;
}

// Per-channel circular cross-correlation (convolution with the kernel
// spectrum conjugated): the adjoint of circular_convolve in its first slot.
template <typename T>
ImageField<T> circular_correlate(const ImageField<T>& image, const ImageField<T>& kernel) {
  if (!image.data.same_shape(kernel.data))
    throw ShapeMismatch("circular_correlate: image " + shape_string(image.data) + " vs kernel " +
                        shape_string(kernel.data));
  if (image.domain != kernel.domain)
    throw DomainMismatch("circular_correlate: operands live in different domains");
  ImageField<T> out(detail::circ_corr(image.data, kernel.data), image.domain);
  require_finite(out, "circular_correlate");
  return out;
}

namespace detail {

template <typename T>
void check_kernel_against(const Tensor<T>& x, const Tensor<T>& k, bool x_is_padded,
                          const char* what) {
  const std::uint32_t kh = k.h(), kw = k.w();
  const std::uint32_t xh = x_is_padded ? x.h() / 2 : x.h();
  const std::uint32_t xw = x_is_padded ? x.w() / 2 : x.w();
  if (kh != xh || kw != xw || k.c() != x.c())
    throw ShapeMismatch(std::string(what) + ": kernel " + shape_string(k) +
                        " does not match field " + shape_string(x));
}

}  // namespace detail

// Measurement model: convolve the padded scene with the sensor-sized kernel
// (kernel center at the circular origin), keep the central sensor window.
template <typename T>
ImageField<T> forward_T(const ImageField<T>& x, const ImageField<T>& kernel) {
  require_domain(x, Domain::padded, "forward_T");
  require_domain(kernel, Domain::sensor, "forward_T kernel");
  detail::check_kernel_against(x.data, kernel.data, true, "forward_T");
  Tensor<T> conv = detail::circ_conv(x.data, detail::embed_kernel(kernel.data));
  ImageField<T> out(detail::crop_center(conv), Domain::sensor);
  require_finite(out, "forward_T");
  return out;
}

// Exact adjoint of forward_T: zero-pad the sensor image, then circularly
// correlate with the same embedded kernel.
template <typename T>
ImageField<T> adjoint_T(const ImageField<T>& y, const ImageField<T>& kernel) {
  require_domain(y, Domain::sensor, "adjoint_T");
  require_domain(kernel, Domain::sensor, "adjoint_T kernel");
  detail::check_kernel_against(y.data, kernel.data, false, "adjoint_T");
  Tensor<T> padded = detail::pad2(y.data);
  ImageField<T> out(detail::circ_corr(padded, detail::embed_kernel(kernel.data)), Domain::padded);
  require_finite(out, "adjoint_T");
  return out;
}

// A point-spread function: sensor-domain, finite, unit sum.
template <typename T>
struct Psf {
  ImageField<T> kernel;

  explicit Psf(ImageField<T> k) : kernel(std::move(k)) {
    require_domain(kernel, Domain::sensor, "psf");
    require_finite(kernel, "psf");
    const double s = lensless::sum(kernel.data);
    if (std::abs(s - 1.0) > 1e-5)
      throw ShapeMismatch("psf: kernel sum " + std::to_string(s) + " is not 1 within 1e-5");
  }
};

// Scales a nonnegative kernel to unit sum.
template <typename T>
Psf<T> normalize_psf(ImageField<T> k) {
  require_finite(k, "normalize_psf");
  const double s = sum(k.data);
  if (!(s > 1e-12)) throw AllZeroCapture("normalize_psf: kernel sum is not positive");
  const T inv = static_cast<T>(1.0 / s);
  for (T& x : k.data.v) x *= inv;
  return Psf<T>(std::move(k));
}

// Repeated applications of one fixed kernel: spectra are computed once.
template <typename T>
struct ConvOperator {
  SensorGeometry geom;
  std::vector<std::complex<T>> kernel_spectra;  // of the embedded kernel

  explicit ConvOperator(const ImageField<T>& kernel_sensor) {
    require_domain(kernel_sensor, Domain::sensor, "conv operator kernel");
    geom = {kernel_sensor.h(), kernel_sensor.w(), kernel_sensor.c()};
    geom.validate();
    kernel_spectra = detail::spectra(detail::embed_kernel(kernel_sensor.data));
  }

  Tensor<T> forward(const Tensor<T>& x_padded) const {
    auto prod = detail::mul_spectra(detail::spectra(x_padded), kernel_spectra);
    auto conv = detail::inverse_spectra(prod, x_padded.h(), x_padded.w(), x_padded.c());
    return detail::crop_center(conv);
  }

  Tensor<T> adjoint(const Tensor<T>& y_sensor) const {
    Tensor<T> padded = detail::pad2(y_sensor);
    auto prod = detail::mul_conj_spectra(detail::spectra(padded), kernel_spectra);
    return detail::inverse_spectra(prod, padded.h(), padded.w(), padded.c());
  }
};

}  // namespace lensless
