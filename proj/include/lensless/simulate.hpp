#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lensless/dataset.hpp"
#include "lensless/optics.hpp"
#include "lensless/png_io.hpp"
#include "lensless/random.hpp"
#include "lensless/tensor_file.hpp"

namespace lensless {

enum class PsfKind { caustic, two_zone };

inline PsfKind parse_psf_kind(const std::string& s) {
  if (s == "caustic") return PsfKind::caustic;
  if (s == "two_zone") return PsfKind::two_zone;
  throw Error("psf kind: expected caustic or two_zone, got '" + s + "'");
}

namespace detail {

// Circular 3x3 box blur, applied in place.
template <typename T>
void box_blur_pass(Tensor<T>& t) {
  const std::uint32_t h = t.h(), w = t.w(), c = t.c();
  Tensor<T> out = t;
  for (std::uint32_t r = 0; r < h; ++r)
    for (std::uint32_t col = 0; col < w; ++col)
      for (std::uint32_t ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc)
            s += t.v[(std::size_t((r + h + dr) % h) * w + ((col + w + dc) % w)) * c + ch];
        out.v[(std::size_t(r) * w + col) * c + ch] = static_cast<T>(s / 9.0);
      }
  t = std::move(out);
}

}  // namespace detail

// Band-limited positive random kernel: correlated noise, soft-thresholded at
// its 75th percentile, unit sum. A quarter of the sensor stays lit, and the
// pass count and cut keep the autocorrelation sidelobes a factor of three
// under the peak so the kernel stays invertible in practice.
template <typename T>
Psf<T> synth_caustic_psf(const SensorGeometry& g, std::uint64_t seed) {
  g.validate();
  ImageField<T> k(g.height, g.width, g.channels, Domain::sensor);
  std::mt19937 rng = seeded_rng(derive_seed(seed, 0xca05));
  fill_uniform(k.data, rng, T(0), T(1));
  for (std::uint32_t p = 0; p < 2; ++p) detail::box_blur_pass(k.data);

  std::vector<T> sorted = k.data.v;
  std::sort(sorted.begin(), sorted.end());
  const T cut = sorted[static_cast<std::size_t>(0.75 * static_cast<double>(sorted.size() - 1))];
  for (T& v : k.data.v) v = v > cut ? v - cut : T(0);
  return normalize_psf(std::move(k));
}

// A field-varying camera stand-in: the scene's central zone is blurred by one
// kernel, the periphery by another.
template <typename T>
struct TwoZonePsf {
  Psf<T> center;
  Psf<T> periphery;
};

template <typename T>
TwoZonePsf<T> synth_two_zone_psf(const SensorGeometry& g, std::uint64_t seed) {
  return {synth_caustic_psf<T>(g, derive_seed(seed, 1)),
          synth_caustic_psf<T>(g, derive_seed(seed, 2))};
}

// Scene-side zone split: 1 inside the central disc (radius 0.5·min(H, W)
// around the padded center), 0 outside.
template <typename T>
ImageField<T> zone_mask(const SensorGeometry& g) {
  g.validate();
  const std::uint32_t h = g.padded_height(), w = g.padded_width();
  ImageField<T> mask(h, w, g.channels, Domain::padded);
  const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
  const double radius = 0.5 * std::min(g.height, g.width);
  for (std::uint32_t r = 0; r < h; ++r)
    for (std::uint32_t c = 0; c < w; ++c) {
      const T inside = std::hypot(r - cy, c - cx) <= radius ? T(1) : T(0);
      for (std::uint32_t ch = 0; ch < g.channels; ++ch) mask.at(r, c, ch) = inside;
    }
  return mask;
}

// One kernel for the whole field: the caustic itself, or the equal blend of
// the two zone kernels when the camera is field-varying.
template <typename T>
Psf<T> synth_psf(const SensorGeometry& g, std::uint64_t seed, PsfKind kind) {
  if (kind == PsfKind::caustic) return synth_caustic_psf<T>(g, seed);
  TwoZonePsf<T> tz = synth_two_zone_psf<T>(g, seed);
  ImageField<T> blend = tz.center.kernel;
  for (std::size_t i = 0; i < blend.data.v.size(); ++i)
    blend.data.v[i] = static_cast<T>(0.5) * (blend.data.v[i] + tz.periphery.kernel.data.v[i]);
  return normalize_psf(std::move(blend));
}

// Smooth random scene in [0,1] at padded size, content restricted to the
// crop window so the measurement model sees a finite scene.
template <typename T>
ImageField<T> synth_scene(const SensorGeometry& g, std::mt19937& rng) {
  g.validate();
  ImageField<T> sensor(g.height, g.width, g.channels, Domain::sensor);
  fill_uniform(sensor.data, rng, T(0), T(1));
  for (int p = 0; p < 2; ++p) detail::box_blur_pass(sensor.data);
  T lo = sensor.data.v[0], hi = sensor.data.v[0];
  for (T v : sensor.data.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const T span = hi - lo;
  for (T& v : sensor.data.v) v = span > T(0) ? (v - lo) / span : T(0);
  return pad(sensor);
}

// Measurement model with sensor noise: forward-project, add Gaussian noise,
// clamp negatives. Zero sigma bypasses the noise draw entirely, so it equals
// the noiseless forward model bitwise.
template <typename T>
ImageField<T> simulate_capture(const ImageField<T>& scene, const Psf<T>& psf, double noise_sigma,
                               std::mt19937& rng) {
  ImageField<T> b = forward_T(scene, psf.kernel);
  if (noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (T& v : b.data.v) {
      v += static_cast<T>(noise(rng));
      if (v < T(0)) v = T(0);
    }
  }
  return b;
}

// Field-varying capture: each zone of the scene is blurred by its own kernel
// and the sensor sees the sum.
template <typename T>
ImageField<T> simulate_capture_two_zone(const ImageField<T>& scene, const TwoZonePsf<T>& psf,
                                        double noise_sigma, std::mt19937& rng) {
  require_domain(scene, Domain::padded, "two-zone capture");
  const SensorGeometry g{scene.h() / 2, scene.w() / 2, scene.c()};
  const ImageField<T> mask = zone_mask<T>(g);
  ImageField<T> inner = scene, outer = scene;
  for (std::size_t i = 0; i < scene.data.v.size(); ++i) {
    inner.data.v[i] = scene.data.v[i] * mask.data.v[i];
    outer.data.v[i] = scene.data.v[i] * (T(1) - mask.data.v[i]);
  }
  ImageField<T> a = forward_T(inner, psf.center.kernel);
  ImageField<T> b = forward_T(outer, psf.periphery.kernel);
  for (std::size_t i = 0; i < a.data.v.size(); ++i) a.data.v[i] += b.data.v[i];
  if (noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (T& v : a.data.v) {
      v += static_cast<T>(noise(rng));
      if (v < T(0)) v = T(0);
    }
  }
  return a;
}

enum class Split { train, test };

template <typename T>
struct DatasetRecord {
  ImageField<T> measurement;
  ImageField<T> ground_truth;
  std::string source_id;
  Split split = Split::train;
};

template <typename T>
struct BuildResult {
  std::vector<DatasetRecord<T>> records;
  std::uint32_t unreadable_skipped = 0;
};

namespace detail {

// Aspect-preserving bilinear resize onto a zero background, centered.
template <typename T>
ImageField<T> letterbox(const ImageField<T>& src, std::uint32_t out_h, std::uint32_t out_w,
                        Domain domain) {
  const double scale =
      std::min(static_cast<double>(out_h) / src.h(), static_cast<double>(out_w) / src.w());
  const std::uint32_t fit_h =
      std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::floor(src.h() * scale)));
  const std::uint32_t fit_w =
      std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::floor(src.w() * scale)));
  const std::uint32_t off_r = (out_h - fit_h) / 2, off_c = (out_w - fit_w) / 2;

  ImageField<T> out(out_h, out_w, src.c(), domain);
  for (std::uint32_t r = 0; r < fit_h; ++r)
    for (std::uint32_t c = 0; c < fit_w; ++c) {
      // Map the output pixel center back into source coordinates.
      const double sy = (r + 0.5) * src.h() / static_cast<double>(fit_h) - 0.5;
      const double sx = (c + 0.5) * src.w() / static_cast<double>(fit_w) - 0.5;
      const double fy = std::floor(sy), fx = std::floor(sx);
      const double ay = sy - fy, ax = sx - fx;
      auto at = [&](double yy, double xx, std::uint32_t ch) -> double {
        const std::int64_t y = std::clamp<std::int64_t>(static_cast<std::int64_t>(yy), 0,
                                                        static_cast<std::int64_t>(src.h()) - 1);
        const std::int64_t x = std::clamp<std::int64_t>(static_cast<std::int64_t>(xx), 0,
                                                        static_cast<std::int64_t>(src.w()) - 1);
        return static_cast<double>(
            src.at(static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x), ch));
      };
      for (std::uint32_t ch = 0; ch < src.c(); ++ch) {
        const double v = (1 - ay) * ((1 - ax) * at(fy, fx, ch) + ax * at(fy, fx + 1, ch)) +
                         ay * ((1 - ax) * at(fy + 1, fx, ch) + ax * at(fy + 1, fx + 1, ch));
        out.at(r + off_r, c + off_c, ch) = static_cast<T>(v);
      }
    }
  return out;
}

template <typename T>
ImageField<T> match_channels(ImageField<T> img, std::uint32_t channels) {
  if (img.c() == channels) return img;
  ImageField<T> out(img.h(), img.w(), channels, img.domain);
  if (channels == 1) {
    for (std::uint32_t r = 0; r < img.h(); ++r)
      for (std::uint32_t c = 0; c < img.w(); ++c) {
        double s = 0;
        for (std::uint32_t ch = 0; ch < img.c(); ++ch) s += img.at(r, c, ch);
        out.at(r, c, 0) = static_cast<T>(s / img.c());
      }
  } else {
    for (std::uint32_t r = 0; r < img.h(); ++r)
      for (std::uint32_t c = 0; c < img.w(); ++c)
        for (std::uint32_t ch = 0; ch < channels; ++ch)
          out.at(r, c, ch) = img.at(r, c, img.c() == 1 ? 0 : ch % img.c());
  }
  return out;
}

inline std::uint64_t fnv1a_file(const std::filesystem::path& path, std::uint64_t hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("checksum: cannot open " + path.string());
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  return hash;
}

}  // namespace detail

// Builds measurement/ground-truth pairs from a directory of images: letterbox
// each source onto the padded canvas, simulate the capture, crop the central
// window as ground truth, and split by a seeded shuffle. Per-record noise is
// seeded independently, so any record regenerates on its own.
template <typename T>
BuildResult<T> build_dataset(const std::string& image_dir, const Psf<T>& psf,
                             const SensorGeometry& g, double noise_sigma, double split_ratio,
                             std::uint64_t seed) {
  g.validate();
  require_sensor_shape(psf.kernel, g, "dataset psf");
  if (!(split_ratio >= 0.0 && split_ratio <= 1.0))
    throw Error("dataset: split ratio must lie in [0,1]");

  std::vector<std::filesystem::path> sources;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(image_dir, ec)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") sources.push_back(entry.path());
  }
  if (ec) throw IoFailure("dataset: cannot list " + image_dir + ": " + ec.message());
  std::sort(sources.begin(), sources.end());
  if (sources.empty()) throw EmptyDirectory("dataset: no importable images in " + image_dir);

  BuildResult<T> out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    ImageField<float> raw8;
    try {
      raw8 = import_image_8bit(sources[i]);
    } catch (const UnreadableImage&) {
      ++out.unreadable_skipped;
      continue;
    } catch (const UnsupportedBitDepth&) {
      ++out.unreadable_skipped;
      continue;
    }
    ImageField<T> img(cast_tensor<T>(raw8.data), Domain::sensor);
    img = detail::match_channels(std::move(img), g.channels);
    ImageField<T> scene =
        detail::letterbox(img, g.padded_height(), g.padded_width(), Domain::padded);

    std::mt19937 rng = seeded_rng(derive_seed(seed, i));
    DatasetRecord<T> rec;
    rec.measurement = simulate_capture(scene, psf, noise_sigma, rng);
    for (T& v : rec.measurement.data.v) v = std::clamp(v, T(0), T(1.5));
    rec.ground_truth = crop(scene);
    rec.source_id = sources[i].filename().string();
    out.records.push_back(std::move(rec));
  }
  if (out.records.empty())
    throw EmptyDirectory("dataset: every candidate image in " + image_dir + " was unreadable");

  std::vector<std::size_t> order(out.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937 rng = seeded_rng(derive_seed(seed, 0x53504c49));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = static_cast<std::size_t>(
      std::llround(split_ratio * static_cast<double>(out.records.size())));
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    out.records[order[pos]].split = pos < n_train ? Split::train : Split::test;
  return out;
}

// Directory layout: records/{train,test}/NNNNN_{meas,gt}.ltsr plus a manifest
// line per record: id, split, source path, checksum of both tensor files.
template <typename T>
void write_dataset(const std::string& dir, const std::vector<DatasetRecord<T>>& records) {
  namespace fs = std::filesystem;
  if (records.empty()) throw EmptyDataset("dataset write: no records");
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "records" / "train", ec);
  fs::create_directories(fs::path(dir) / "records" / "test", ec);
  if (ec) throw IoFailure("dataset write: cannot create " + dir + ": " + ec.message());

  std::ofstream manifest(fs::path(dir) / "manifest.txt", std::ios::trunc);
  if (!manifest) throw IoFailure("dataset write: cannot open manifest in " + dir);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord<T>& rec = records[i];
    char id[8];
    std::snprintf(id, sizeof id, "%05zu", i);
    const char* split = rec.split == Split::train ? "train" : "test";
    const fs::path base = fs::path(dir) / "records" / split;
    const fs::path meas = base / (std::string(id) + "_meas.ltsr");
    const fs::path gt = base / (std::string(id) + "_gt.ltsr");
    write_tensor_file(cast_tensor<float>(rec.measurement.data), meas);
    write_tensor_file(cast_tensor<float>(rec.ground_truth.data), gt);
    const std::uint64_t checksum =
        detail::fnv1a_file(gt, detail::fnv1a_file(meas, 0xcbf29ce484222325ull));
    manifest << id << " " << split << " " << rec.source_id << " " << std::hex << checksum
             << std::dec << "\n";
  }
  if (!manifest) throw IoFailure("dataset write: manifest write failed in " + dir);
}

template <typename T>
Dataset<T> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw IoFailure("dataset load: cannot open manifest in " + dir);

  Dataset<T> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, split, source, checksum;
    if (!(row >> id >> split >> source >> checksum) ||
        (split != "train" && split != "test"))
      throw MalformedHeader("dataset load: bad manifest line '" + line + "'");
    const fs::path base = fs::path(dir) / "records" / split;
    Example<T> ex;
    ex.id = id;
    ex.measurement = ImageField<T>(
        cast_tensor<T>(read_tensor_file(base / (id + "_meas.ltsr"))), Domain::sensor);
    ex.ground_truth =
        ImageField<T>(cast_tensor<T>(read_tensor_file(base / (id + "_gt.ltsr"))), Domain::sensor);
    (split == "train" ? out.train : out.test).push_back(std::move(ex));
  }
  if (out.train.empty() && out.test.empty())
    throw EmptyDataset("dataset load: manifest lists no records in " + dir);
  return out;
}

}  // namespace lensless
