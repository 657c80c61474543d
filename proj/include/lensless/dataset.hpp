#pragma once

#include <string>
#include <vector>

#include "lensless/image_field.hpp"

namespace lensless {

// One measurement/ground-truth pair. Both live at sensor size; the
// measurement is what the camera recorded, the ground truth is the scene
// restricted to the crop window.
template <typename T>
struct Example {
  std::string id;
  ImageField<T> measurement;
  ImageField<T> ground_truth;
};

template <typename T>
struct Dataset {
  std::vector<Example<T>> train, test;

  void check_geometry(const SensorGeometry& g) const {
    for (const auto* split : {&train, &test})
      for (const Example<T>& e : *split) {
        require_sensor_shape(e.measurement, g, "dataset measurement");
        require_sensor_shape(e.ground_truth, g, "dataset ground truth");
      }
  }
};

}  // namespace lensless
