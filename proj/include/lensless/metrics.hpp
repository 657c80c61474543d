#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lensless/image_field.hpp"
#include "lensless/tensor_file.hpp"

namespace lensless {

template <typename T>
double mean_squared_error(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw ShapeMismatch("mse: " + shape_string(a) + " vs " + shape_string(b));
  double s = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = double(a.v[i]) - double(b.v[i]);
    s += d * d;
  }
  return s / double(a.v.size());
}

// Peak signal-to-noise ratio in dB. Identical inputs report the 100 dB
// sentinel; everything else is capped there too.
template <typename T>
double psnr(const ImageField<T>& pred, const ImageField<T>& target, double peak = 1.0) {
  const double mse = mean_squared_error(pred.data, target.data);
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(peak * peak / mse));
}

namespace detail {

inline const std::vector<double>& ssim_window() {
  // 11 x 11 Gaussian, sigma 1.5, normalized to unit sum.
  static const std::vector<double> w = [] {
    std::vector<double> g(121);
    double total = 0;
    for (int r = 0; r < 11; ++r)
      for (int c = 0; c < 11; ++c) {
        const double dr = r - 5, dc = c - 5;
        g[r * 11 + c] = std::exp(-(dr * dr + dc * dc) / (2 * 1.5 * 1.5));
        total += g[r * 11 + c];
      }
    for (double& x : g) x /= total;
    return g;
  }();
  return w;
}

template <typename T>
std::vector<double> to_gray(const ImageField<T>& f) {
  std::vector<double> g(std::size_t(f.h()) * f.w());
  if (f.c() == 1) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = double(f.data.v[i]);
  } else {
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = (double(f.data.v[3 * i]) + double(f.data.v[3 * i + 1]) +
              double(f.data.v[3 * i + 2])) /
             3.0;
  }
  return g;
}

}  // namespace detail

// Mean structural similarity over all fully-interior 11 x 11 windows, on the
// luminance (channel mean) plane, with the usual stabilizers for unit range.
template <typename T>
double ssim(const ImageField<T>& pred, const ImageField<T>& target) {
  if (!pred.data.same_shape(target.data))
    throw ShapeMismatch("ssim: " + shape_string(pred.data) + " vs " + shape_string(target.data));
  const std::uint32_t h = pred.h(), w = pred.w();
  if (h < 11 || w < 11)
    throw ImageTooSmall("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                        " is smaller than the 11x11 window");

  const auto x = detail::to_gray(pred);
  const auto y = detail::to_gray(target);
  const auto& win = detail::ssim_window();
  constexpr double c1 = 0.01 * 0.01;  // (k1 * range)^2, range = 1
  constexpr double c2 = 0.03 * 0.03;

  double acc = 0;
  std::size_t count = 0;
  for (std::uint32_t r = 0; r + 11 <= h; ++r)
    for (std::uint32_t c = 0; c + 11 <= w; ++c) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int dr = 0; dr < 11; ++dr)
        for (int dc = 0; dc < 11; ++dc) {
          const double wt = win[dr * 11 + dc];
          const double xv = x[std::size_t(r + dr) * w + (c + dc)];
          const double yv = y[std::size_t(r + dr) * w + (c + dc)];
          mx += wt * xv;
          my += wt * yv;
          mxx += wt * xv * xv;
          myy += wt * yv * yv;
          mxy += wt * xv * yv;
        }
      const double vx = mxx - mx * mx;
      const double vy = myy - my * my;
      const double cov = mxy - mx * my;
      const double num = (2 * mx * my + c1) * (2 * cov + c2);
      const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      acc += num / den;
      ++count;
    }
  return acc / double(count);
}

struct PairMetrics {
  std::string id;
  double psnr_db = 0;
  double ssim_value = 0;
};

struct MetricReport {
  std::vector<PairMetrics> pairs;
  double mean_psnr_db = 0;
  double mean_ssim = 0;
};

namespace detail {

inline std::map<std::string, std::filesystem::path> index_tensor_dir(
    const std::filesystem::path& dir, const char* what) {
  if (!std::filesystem::is_directory(dir))
    throw IoFailure(std::string(what) + ": not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ltsr") continue;
    const std::string stem = entry.path().stem().string();
    std::string id;
    for (char ch : stem) {
      if (ch < '0' || ch > '9') break;
      id += ch;
    }
    if (id.empty()) continue;
    if (!out.emplace(id, entry.path()).second)
      throw MissingPair(std::string(what) + ": duplicate index " + id + " in " + dir.string());
  }
  return out;
}

}  // namespace detail

// Pairs reconstructions with ground truths by their integer filename prefix
// and reports per-pair and mean quality.
inline MetricReport evaluate_run(const std::filesystem::path& recon_dir,
                                 const std::filesystem::path& gt_dir) {
  auto recon = detail::index_tensor_dir(recon_dir, "evaluate recon");
  auto gt = detail::index_tensor_dir(gt_dir, "evaluate gt");
  if (recon.size() != gt.size())
    throw CountMismatch("evaluate: " + std::to_string(recon.size()) + " reconstructions vs " +
                        std::to_string(gt.size()) + " ground truths");
  if (recon.empty()) throw CountMismatch("evaluate: no tensor files found");

  MetricReport report;
  for (const auto& [id, rpath] : recon) {
    auto it = gt.find(id);
    if (it == gt.end()) throw MissingPair("evaluate: no ground truth for index " + id);
    ImageField<float> r = read_image(rpath, Domain::sensor);
    ImageField<float> g = read_image(it->second, Domain::sensor);
    report.pairs.push_back({id, psnr(r, g), ssim(r, g)});
  }
  for (const auto& p : report.pairs) {
    report.mean_psnr_db += p.psnr_db;
    report.mean_ssim += p.ssim_value;
  }
  report.mean_psnr_db /= double(report.pairs.size());
  report.mean_ssim /= double(report.pairs.size());
  return report;
}

inline std::string report_table(const MetricReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "id" << std::right << std::setw(10) << "psnr_db"
     << std::setw(10) << "ssim" << "\n";
  os << std::string(32, '-') << "\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& p : r.pairs)
    os << std::left << std::setw(12) << p.id << std::right << std::setw(10) << p.psnr_db
       << std::setw(10) << p.ssim_value << "\n";
  os << std::string(32, '-') << "\n";
  os << std::left << std::setw(12) << "mean" << std::right << std::setw(10) << r.mean_psnr_db
     << std::setw(10) << r.mean_ssim << "\n";
  return os.str();
}

inline void write_report_csv(const MetricReport& r, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoFailure("report: cannot open " + path.string());
  f << "id,psnr_db,ssim\n" << std::setprecision(10);
  for (const auto& p : r.pairs) f << p.id << "," << p.psnr_db << "," << p.ssim_value << "\n";
  f << "mean," << r.mean_psnr_db << "," << r.mean_ssim << "\n";
  if (!f) throw IoFailure("report: short write to " + path.string());
}

}  // namespace lensless
