#pragma once

#include <cstdint>
#include <utility>

#include "lensless/errors.hpp"
#include "lensless/geometry.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

// A rank-3 image (H x W x C, C in {1,3}) tagged with the domain it lives in.
template <typename T = float>
struct ImageField {
  Tensor<T> data;
  Domain domain = Domain::sensor;

  ImageField() = default;
  ImageField(Tensor<T> t, Domain d) : data(std::move(t)), domain(d) { check_shape(); }
  ImageField(std::uint32_t h, std::uint32_t w, std::uint32_t c, Domain d, T fill = T(0))
      : data(Tensor<T>::image(h, w, c, fill)), domain(d) {
    check_shape();
  }

  std::uint32_t h() const { return data.dims[0]; }
  std::uint32_t w() const { return data.dims[1]; }
  std::uint32_t c() const { return data.dims[2]; }
  T& at(std::uint32_t r, std::uint32_t col, std::uint32_t ch) { return data.at(r, col, ch); }
  const T& at(std::uint32_t r, std::uint32_t col, std::uint32_t ch) const {
    return data.at(r, col, ch);
  }

  void check_shape() const {
    if (data.rank() != 3) throw ShapeMismatch("image field must be rank 3, got " + shape_string(data));
    if (data.dims[2] != 1 && data.dims[2] != 3)
      throw ShapeMismatch("image field channels must be 1 or 3, got " + std::to_string(data.dims[2]));
    if (data.size() == 0) throw ZeroSizedField("image field has a zero-sized dimension");
  }
};

template <typename T>
void require_domain(const ImageField<T>& f, Domain d, const char* what) {
  if (f.domain != d)
    throw DomainMismatch(std::string(what) + ": expected " + domain_name(d) + "-domain field, got " +
                         domain_name(f.domain));
}

template <typename T>
void require_finite(const ImageField<T>& f, const char* what) {
  if (!all_finite(f.data)) throw NonFiniteData(std::string(what) + ": field contains non-finite values");
}

// Checks an H x W x C sensor-domain field against a geometry.
template <typename T>
void require_sensor_shape(const ImageField<T>& f, const SensorGeometry& g, const char* what) {
  require_domain(f, Domain::sensor, what);
  if (f.h() != g.height || f.w() != g.width || f.c() != g.channels)
    throw GeometryMismatch(std::string(what) + ": field " + shape_string(f.data) +
                           " does not match sensor geometry");
}

// Checks a 2H x 2W x C padded-domain field against a geometry.
template <typename T>
void require_padded_shape(const ImageField<T>& f, const SensorGeometry& g, const char* what) {
  require_domain(f, Domain::padded, what);
  if (f.h() != g.padded_height() || f.w() != g.padded_width() || f.c() != g.channels)
    throw GeometryMismatch(std::string(what) + ": field " + shape_string(f.data) +
                           " does not match padded geometry");
}

}  // namespace lensless
