#pragma once

#include <cstdint>
#include <string>

#include "lensless/errors.hpp"

namespace lensless {

// Where a field lives. Sensor-domain fields are H x W; padded-domain fields
// are exactly 2H x 2W so that circular convolution of a padded scene with a
// sensor-sized kernel is linear over the crop window.
enum class Domain { sensor, padded };

inline const char* domain_name(Domain d) { return d == Domain::sensor ? "sensor" : "padded"; }

struct SensorGeometry {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 3;

  void validate() const {
    if (height < 8 || width < 8)
      throw GeometryMismatch("sensor geometry: height and width must be >= 8, got " +
                             std::to_string(height) + "x" + std::to_string(width));
    if (height % 2 != 0 || width % 2 != 0)
      throw GeometryMismatch("sensor geometry: height and width must be even");
    if (channels != 1 && channels != 3)
      throw GeometryMismatch("sensor geometry: channels must be 1 or 3");
  }

  std::uint32_t padded_height() const { return 2 * height; }
  std::uint32_t padded_width() const { return 2 * width; }

  // Top-left corner of the centered crop window inside the padded plane.
  std::uint32_t crop_row() const { return height / 2; }
  std::uint32_t crop_col() const { return width / 2; }

  bool operator==(const SensorGeometry&) const = default;

  std::string describe() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
  }
};

}  // namespace lensless
