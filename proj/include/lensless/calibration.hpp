#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lensless/errors.hpp"
#include "lensless/optics.hpp"
#include "lensless/random.hpp"

namespace lensless {

// Recovers the blur kernel from a point-source capture: subtract the dark
// frame, clamp negatives, remove the 1st-percentile residual background, and
// scale to unit sum.
template <typename T>
Psf<T> extract_psf(const ImageField<T>& capture, const ImageField<T>& dark) {
  require_domain(capture, Domain::sensor, "psf extraction capture");
  require_domain(dark, Domain::sensor, "psf extraction dark frame");
  if (capture.data.dims != dark.data.dims)
    throw GeometryMismatch("psf extraction: capture is " + shape_string(capture.data) +
                           ", dark frame is " + shape_string(dark.data));
  require_finite(capture, "psf extraction capture");
  require_finite(dark, "psf extraction dark frame");

  ImageField<T> diff = capture;
  for (std::size_t i = 0; i < diff.data.v.size(); ++i) {
    const T v = capture.data.v[i] - dark.data.v[i];
    diff.data.v[i] = v > T(0) ? v : T(0);
  }

  std::vector<T> sorted = diff.data.v;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t q = static_cast<std::size_t>(
      0.01 * static_cast<double>(sorted.size() - 1));
  const T background = sorted[q];
  for (T& v : diff.data.v) {
    v -= background;
    if (v < T(0)) v = T(0);
  }

  const double total = sum(diff.data);
  if (!(total > 1e-9))
    throw AllZeroCapture("psf extraction: no signal above the background");
  return normalize_psf(std::move(diff));
}

struct Point2 {
  double x = 0;
  double y = 0;
};

// Projective plane transform, stored row-major with the bottom-right element
// scaled to 1.
struct Homography {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return Homography{}; }

  void normalize() {
    if (std::abs(m[8]) < 1e-12)
      throw SingularHomography("homography: bottom-right element is numerically zero");
    for (double& v : m) v /= m[8];
    m[8] = 1.0;
  }

  Point2 apply(const Point2& p) const {
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    if (std::abs(w) < 1e-12)
      throw SingularHomography("homography: point maps to the line at infinity");
    return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
  }

  Homography inverse() const {
    Eigen::Matrix3d a;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) a(r, c) = m[r * 3 + c];
    if (std::abs(a.determinant()) <= 1e-12)
      throw SingularHomography("homography: matrix is not invertible");
    Eigen::Matrix3d inv = a.inverse();
    Homography out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out.m[r * 3 + c] = inv(r, c);
    out.normalize();
    return out;
  }
};

namespace detail {

// Similarity transform taking the points to centroid zero, mean distance √2.
struct PointNormalizer {
  double cx = 0, cy = 0, scale = 1;

  static PointNormalizer fit(const std::vector<Point2>& pts) {
    PointNormalizer n;
    for (const Point2& p : pts) {
      n.cx += p.x;
      n.cy += p.y;
    }
    n.cx /= static_cast<double>(pts.size());
    n.cy /= static_cast<double>(pts.size());
    double mean_dist = 0;
    for (const Point2& p : pts) mean_dist += std::hypot(p.x - n.cx, p.y - n.cy);
    mean_dist /= static_cast<double>(pts.size());
    n.scale = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
    return n;
  }

  Point2 operator()(const Point2& p) const { return {(p.x - cx) * scale, (p.y - cy) * scale}; }

  // Matrix form and its inverse, for denormalizing the estimate.
  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d t;
    t << scale, 0, -scale * cx, 0, scale, -scale * cy, 0, 0, 1;
    return t;
  }
};

inline Homography dlt_homography(const std::vector<Point2>& src,
                                 const std::vector<Point2>& dst) {
  const std::size_t n = src.size();
  const PointNormalizer ns = PointNormalizer::fit(src);
  const PointNormalizer nd = PointNormalizer::fit(dst);

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 s = ns(src[i]);
    const Point2 d = nd(dst[i]);
    a.row(2 * i) << -s.x, -s.y, -1, 0, 0, 0, d.x * s.x, d.x * s.y, d.x;
    a.row(2 * i + 1) << 0, 0, 0, -s.x, -s.y, -1, d.y * s.x, d.y * s.y, d.y;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // Eight independent constraints pin the eight degrees of freedom; a
  // vanishing eighth singular value means the configuration does not.
  if (sv(7) <= 1e-10 * sv(0))
    throw DegenerateConfiguration("homography: correspondences are rank-deficient");

  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d denorm = nd.matrix().inverse() * hn * ns.matrix();

  Homography out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.m[r * 3 + c] = denorm(r, c);
  out.normalize();
  return out;
}

inline double reprojection_error(const Homography& h, const Point2& s, const Point2& d) {
  const double w = h.m[6] * s.x + h.m[7] * s.y + h.m[8];
  if (std::abs(w) < 1e-12) return std::numeric_limits<double>::infinity();
  const double px = (h.m[0] * s.x + h.m[1] * s.y + h.m[2]) / w;
  const double py = (h.m[3] * s.x + h.m[4] * s.y + h.m[5]) / w;
  return std::hypot(px - d.x, py - d.y);
}

}  // namespace detail

// Direct linear transform on normalized coordinates. With use_ransac, 1000
// minimal-sample trials at a 2 px inlier threshold choose a consensus set,
// then the final fit reruns on every inlier.
inline Homography estimate_homography(const std::vector<Point2>& src,
                                      const std::vector<Point2>& dst,
                                      bool use_ransac = false) {
  if (src.size() != dst.size())
    throw CountMismatch("homography: " + std::to_string(src.size()) + " source vs " +
                        std::to_string(dst.size()) + " destination points");
  if (src.size() < 4)
    throw TooFewPoints("homography: needs at least 4 correspondences, got " +
                       std::to_string(src.size()));

  if (!use_ransac) return detail::dlt_homography(src, dst);

  constexpr int kTrials = 1000;
  constexpr double kInlierPx = 2.0;
  std::mt19937 rng = seeded_rng(0x52414e53);
  std::uniform_int_distribution<std::size_t> pick(0, src.size() - 1);

  std::vector<std::size_t> best_inliers;
  for (int trial = 0; trial < kTrials; ++trial) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4;) {
      const std::size_t cand = pick(rng);
      bool dup = false;
      for (int j = 0; j < k; ++j) dup |= idx[j] == cand;
      if (!dup) idx[k++] = cand;
    }
    std::vector<Point2> ms, md;
    for (std::size_t i : idx) {
      ms.push_back(src[i]);
      md.push_back(dst[i]);
    }
    Homography h;
    try {
      h = detail::dlt_homography(ms, md);
    } catch (const DegenerateConfiguration&) {
      continue;
    } catch (const SingularHomography&) {
      continue;
    }
    std::vector<std::size_t> inliers;
    for (std::size_t i = 0; i < src.size(); ++i)
      if (detail::reprojection_error(h, src[i], dst[i]) <= kInlierPx) inliers.push_back(i);
    if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
  }

  if (best_inliers.size() < 4)
    throw DegenerateConfiguration("homography: consensus search found no 4-point agreement");
  std::vector<Point2> fs, fd;
  for (std::size_t i : best_inliers) {
    fs.push_back(src[i]);
    fd.push_back(dst[i]);
  }
  return detail::dlt_homography(fs, fd);
}

// Inverse-mapping warp with bilinear interpolation; samples outside the
// source are zero. Pixel (r, c) is the point (x = c, y = r).
template <typename T>
ImageField<T> warp_image(const ImageField<T>& img, const Homography& h) {
  const Homography inv = h.inverse();
  const std::uint32_t height = img.h(), width = img.w(), channels = img.c();
  ImageField<T> out(height, width, channels, img.domain);

  for (std::uint32_t r = 0; r < height; ++r)
    for (std::uint32_t c = 0; c < width; ++c) {
      const Point2 s = inv.apply({static_cast<double>(c), static_cast<double>(r)});
      const double fx = std::floor(s.x), fy = std::floor(s.y);
      const double ax = s.x - fx, ay = s.y - fy;
      const std::int64_t x0 = static_cast<std::int64_t>(fx);
      const std::int64_t y0 = static_cast<std::int64_t>(fy);
      auto sample = [&](std::int64_t yy, std::int64_t xx, std::uint32_t ch) -> double {
        if (yy < 0 || yy >= static_cast<std::int64_t>(height) || xx < 0 ||
            xx >= static_cast<std::int64_t>(width))
          return 0.0;
        return static_cast<double>(
            img.at(static_cast<std::uint32_t>(yy), static_cast<std::uint32_t>(xx), ch));
      };
      for (std::uint32_t ch = 0; ch < channels; ++ch) {
        const double v = (1 - ay) * ((1 - ax) * sample(y0, x0, ch) + ax * sample(y0, x0 + 1, ch)) +
                         ay * ((1 - ax) * sample(y0 + 1, x0, ch) + ax * sample(y0 + 1, x0 + 1, ch));
        out.at(r, c, ch) = static_cast<T>(v);
      }
    }
  return out;
}

// Text interchange used by the command-line tools: points as "x y" lines,
// homographies as nine numbers row-major.

inline std::vector<Point2> read_point_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("points: cannot open " + path);
  std::vector<Point2> pts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    Point2 p;
    if (!(row >> p.x >> p.y))
      throw MalformedHeader("points: expected 'x y' in " + path + ", got '" + line + "'");
    pts.push_back(p);
  }
  return pts;
}

inline void write_homography(const std::string& path, const Homography& h) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("homography: cannot open " + path + " for writing");
  out.precision(17);
  for (int r = 0; r < 3; ++r)
    out << h.m[r * 3] << " " << h.m[r * 3 + 1] << " " << h.m[r * 3 + 2] << "\n";
  if (!out) throw IoFailure("homography: write to " + path + " failed");
}

inline Homography read_homography(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("homography: cannot open " + path);
  Homography h;
  for (double& v : h.m)
    if (!(in >> v)) throw MalformedHeader("homography: " + path + " does not hold 9 numbers");
  h.normalize();
  return h;
}

}  // namespace lensless
