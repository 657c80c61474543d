// Command-line surface: simulate, calibrate, reconstruct, train, evaluate.
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lensless/calibration.hpp"
#include "lensless/checkpoint.hpp"
#include "lensless/metrics.hpp"
#include "lensless/png_io.hpp"
#include "lensless/simulate.hpp"
#include "lensless/solvers.hpp"
#include "lensless/train.hpp"

namespace {

using namespace lensless;

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kDataError = 3;
constexpr int kNumericalError = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// "HxW" -> (height, width).
SensorGeometry parse_geometry(const std::string& s, std::uint32_t channels) {
  const std::size_t x = s.find_first_of("xX");
  if (x == std::string::npos || x == 0 || x + 1 >= s.size())
    throw UsageError("--geometry expects HxW, got '" + s + "'");
  try {
    const long h = std::stol(s.substr(0, x));
    const long w = std::stol(s.substr(x + 1));
    if (h < 1 || w < 1) throw UsageError("--geometry dimensions must be positive");
    return {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w), channels};
  } catch (const std::logic_error&) {
    throw UsageError("--geometry expects HxW, got '" + s + "'");
  }
}

bool is_png(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png";
}

// Images travel as 8-bit PNG or as raw tensor files, chosen by extension.
ImageField<float> load_field(const std::filesystem::path& path) {
  if (is_png(path)) return import_image_8bit(path);
  return ImageField<float>(read_tensor_file(path), Domain::sensor);
}

void store_field(const ImageField<float>& img, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  if (is_png(path))
    export_image_8bit(img, path);
  else
    write_tensor_file(img.data, path);
}

// Stored kernels are renormalized on load: 32-bit storage rounds the sum.
Psf<float> load_psf_file(const std::filesystem::path& path) {
  return normalize_psf(load_field(path));
}

int cmd_simulate(const std::string& images, const std::string& out, const std::string& geometry,
                 const std::string& psf_arg, double noise, double split, std::uint64_t seed) {
  const SensorGeometry g = parse_geometry(geometry, 3);
  const bool synthetic = psf_arg == "caustic" || psf_arg == "two_zone";
  const Psf<float> psf = synthetic ? synth_psf<float>(g, seed, parse_psf_kind(psf_arg))
                                   : load_psf_file(psf_arg);
  if (psf.kernel.h() != g.height || psf.kernel.w() != g.width)
    throw GeometryMismatch("simulate: kernel file is " + shape_string(psf.kernel.data) +
                           ", --geometry wants " + geometry);
  const SensorGeometry data_g{g.height, g.width, psf.kernel.c()};

  const BuildResult<float> built = build_dataset(images, psf, data_g, noise, split, seed);
  std::filesystem::create_directories(out);
  write_dataset(out, built.records);
  write_tensor_file(psf.kernel.data, std::filesystem::path(out) / "psf.ltsr");

  std::size_t train = 0;
  for (const auto& r : built.records) train += r.split == Split::train;
  std::cout << "records=" << built.records.size() << " train=" << train
            << " test=" << built.records.size() - train
            << " skipped=" << built.unreadable_skipped << "\n";
  std::cout << "psf=" << (std::filesystem::path(out) / "psf.ltsr").string() << "\n";
  return kOk;
}

int cmd_extract_psf(const std::string& capture, const std::string& dark, const std::string& out) {
  const Psf<float> psf = extract_psf(load_field(capture), load_field(dark));
  store_field(psf.kernel, out);
  std::cout << "psf=" << out << "\n";
  return kOk;
}

int cmd_homography(const std::string& src, const std::string& dst, const std::string& out,
                   bool ransac) {
  const Homography h = estimate_homography(read_point_list(src), read_point_list(dst), ransac);
  write_homography(out, h);
  std::cout << "homography=" << out << "\n";
  return kOk;
}

int cmd_reconstruct(const std::string& method, const std::string& measurement,
                    const std::string& psf_path, const std::string& checkpoint, double lambda,
                    double rho, std::uint32_t iters, const std::string& out) {
  const ImageField<float> b = load_field(measurement);

  ImageField<float> recon(1, 1, 1, Domain::sensor);
  if (method == "lpd") {
    if (checkpoint.empty()) throw UsageError("--checkpoint is required with --method lpd");
    const ModelParams<float> model = load_checkpoint<float>(checkpoint);
    recon = lpd_reconstruct(model, b);
  } else {
    const Psf<float> psf = load_psf_file(psf_path);
    SolverConfig<float> cfg;
    cfg.max_iters = iters;
    cfg.lambda = static_cast<float>(lambda);
    const auto solved = method == "fista" ? fista_solve(b, psf, cfg) : admm_solve(b, psf, cfg);
    recon = crop(solved.first);
    std::cout << "iterations=" << solved.second.iterations_run
              << " data_fidelity=" << solved.second.final_data_fidelity << "\n";
  }
  store_field(recon, out);
  std::cout << "reconstruction=" << out << "\n";
  return kOk;
}

int cmd_train(const std::string& dataset, const std::string& psf_path, const std::string& variant,
              std::uint32_t kernels, std::uint32_t unroll, bool use_unet, std::uint32_t epochs,
              double lr, std::uint64_t seed, const std::string& out) {
  const Dataset<float> data = load_dataset<float>(dataset);
  if (data.train.empty()) throw EmptyDataset("train: dataset has no training split");
  const ImageField<float>& first = data.train.front().measurement;

  LpdConfig cfg;
  cfg.geometry = {first.h(), first.w(), first.c()};
  cfg.n_kernels = kernels;
  cfg.variant = parse_variant(variant);
  cfg.unroll_iters = unroll;
  cfg.use_unet = use_unet;
  cfg.validate();
  data.check_geometry(cfg.geometry);

  const Psf<float> psf = load_psf_file(psf_path);
  ModelParams<float> model = lpd_init(psf, cfg, seed);

  TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = lr;
  tc.seed = seed;
  tc.checkpoint_dir = out;
  const FitResult<float> result = fit(std::move(model), data, tc);

  std::filesystem::create_directories(out);
  write_train_log_csv(result.log, (std::filesystem::path(out) / "train_log.csv").string());
  double best_val = -1e30;
  for (const auto& e : result.log.epochs) best_val = std::max(best_val, e.val_psnr);
  std::cout << "steps=" << result.log.steps.size() << " best_val_psnr_db=" << best_val << "\n";
  std::cout << "checkpoint=" << (std::filesystem::path(out) / "best").string() << "\n";
  return kOk;
}

int cmd_evaluate(const std::string& recon, const std::string& gt, const std::string& report_path) {
  const MetricReport report = evaluate_run(recon, gt);
  std::cout << report_table(report);
  write_report_csv(report, report_path);
  std::cout << "report=" << report_path << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lensless imaging toolkit: simulation, calibration, reconstruction, training,"
               " evaluation"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Render a synthetic measurement dataset");
  std::string sim_images, sim_out, sim_geometry, sim_psf;
  double sim_noise = 0.0, sim_split = 0.9;
  std::uint64_t sim_seed = 0;
  sim->add_option("--images", sim_images, "Directory of source PNG images")->required();
  sim->add_option("--out", sim_out, "Output dataset directory")->required();
  sim->add_option("--geometry", sim_geometry, "Sensor size as HxW")->required();
  sim->add_option("--psf", sim_psf, "caustic, two_zone, or a kernel file")->required();
  sim->add_option("--noise", sim_noise, "Gaussian noise sigma");
  sim->add_option("--split", sim_split, "Train fraction")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--seed", sim_seed, "Seed for synthesis, noise, and split");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Recover the kernel or the geometric registration");
  cal->require_subcommand(1);
  auto* cal_psf = cal->add_subcommand("extract-psf", "Kernel from a point-source capture");
  std::string cp_capture, cp_dark, cp_out;
  cal_psf->add_option("--capture", cp_capture, "Point-source capture (PNG or tensor)")->required();
  cal_psf->add_option("--dark", cp_dark, "Dark frame (PNG or tensor)")->required();
  cal_psf->add_option("--out", cp_out, "Output kernel file")->required();
  auto* cal_h = cal->add_subcommand("homography", "Plane transform from point matches");
  std::string ch_src, ch_dst, ch_out;
  bool ch_ransac = false;
  cal_h->add_option("--src-points", ch_src, "Source points, 'x y' per line")->required();
  cal_h->add_option("--dst-points", ch_dst, "Destination points, 'x y' per line")->required();
  cal_h->add_option("--out", ch_out, "Output transform file")->required();
  cal_h->add_flag("--ransac", ch_ransac, "Robust consensus fit");

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "Recover a scene from one measurement");
  std::string rc_method, rc_measurement, rc_psf, rc_checkpoint, rc_out;
  double rc_lambda = 1e-6;
  std::uint32_t rc_iters = 500;
  rec->add_option("--method", rc_method, "fista, admm, or lpd")
      ->required()
      ->check(CLI::IsMember({"fista", "admm", "lpd"}));
  rec->add_option("--measurement", rc_measurement, "Measurement (PNG or tensor)")->required();
  rec->add_option("--psf", rc_psf, "Kernel file (fista/admm)");
  rec->add_option("--checkpoint", rc_checkpoint, "Model checkpoint directory (lpd)");
  rec->add_option("--lambda", rc_lambda, "Sparsity weight (fista/admm)");
  rec->add_option("--iters", rc_iters, "Iteration budget (fista/admm)");
  rec->add_option("--out", rc_out, "Output image (PNG or tensor)")->required();

  // train
  auto* trn = app.add_subcommand("train", "Fit an unrolled model on a simulated dataset");
  std::string tr_dataset, tr_psf, tr_variant = "per_channel", tr_out;
  std::uint32_t tr_kernels = 1, tr_unroll = 10, tr_epochs = 1;
  bool tr_unet = false;
  double tr_lr = 1e-4;
  std::uint64_t tr_seed = 0;
  trn->add_option("--dataset", tr_dataset, "Dataset directory from simulate")->required();
  trn->add_option("--psf", tr_psf, "Kernel file for initialization")->required();
  trn->add_option("--variant", tr_variant, "per_channel or mixed")
      ->check(CLI::IsMember({"per_channel", "mixed"}));
  trn->add_option("--kernels", tr_kernels, "Learned kernel count")->check(CLI::PositiveNumber);
  trn->add_option("--unroll", tr_unroll, "Unrolled iteration count")->check(CLI::PositiveNumber);
  trn->add_flag("--unet", tr_unet, "Append the residual denoiser");
  trn->add_option("--epochs", tr_epochs, "Training epochs")->check(CLI::PositiveNumber);
  trn->add_option("--lr", tr_lr, "Learning rate");
  trn->add_option("--seed", tr_seed, "Init and shuffle seed");
  trn->add_option("--out", tr_out, "Output directory for checkpoints and the log")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score reconstructions against ground truth");
  std::string ev_recon, ev_gt, ev_report;
  ev->add_option("--recon", ev_recon, "Directory of reconstructed tensors")->required();
  ev->add_option("--gt", ev_gt, "Directory of ground-truth tensors")->required();
  ev->add_option("--report", ev_report, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(sim_images, sim_out, sim_geometry, sim_psf, sim_noise, sim_split,
                          sim_seed);
    if (cal_psf->parsed()) return cmd_extract_psf(cp_capture, cp_dark, cp_out);
    if (cal_h->parsed()) return cmd_homography(ch_src, ch_dst, ch_out, ch_ransac);
    if (rec->parsed())
      return cmd_reconstruct(rc_method, rc_measurement, rc_psf, rc_checkpoint, rc_lambda,
                             rc_iters, rc_out);
    if (trn->parsed())
      return cmd_train(tr_dataset, tr_psf, tr_variant, tr_kernels, tr_unroll, tr_unet, tr_epochs,
                       tr_lr, tr_seed, tr_out);
    if (ev->parsed()) return cmd_evaluate(ev_recon, ev_gt, ev_report);
    std::cerr << "error: no subcommand\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NonFiniteData& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const NonFiniteActivation& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const NonFiniteGradient& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const DivergenceDetected& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const SingularHomography& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const DegenerateConfiguration& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
}
