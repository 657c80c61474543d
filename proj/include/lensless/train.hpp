#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "lensless/checkpoint.hpp"
#include "lensless/dataset.hpp"
#include "lensless/lpd.hpp"
#include "lensless/metrics.hpp"
#include "lensless/random.hpp"

namespace lensless {

// Mean squared difference between two images of identical shape.
template <typename T>
double mse_loss(const ImageField<T>& pred, const ImageField<T>& target) {
  if (pred.data.dims != target.data.dims)
    throw ShapeMismatch("loss: prediction is " + shape_string(pred.data) + ", target is " +
                        shape_string(target.data));
  return mean_squared_error(pred.data, target.data);
}

// Adaptive moment estimation with bias correction. Moments are kept in
// binary64 regardless of the parameter type.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m, v;
};

template <typename T>
void optimizer_step(ModelParams<T>& model, AdamState& state, double lr) {
  if (!(lr > 0)) throw Error("optimizer: learning rate must be positive");
  std::vector<ParamTensor<T>*> params = model.param_list();
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->value.v.size(), 0.0);
      state.v[i].assign(params[i]->value.v.size(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw CountMismatch("optimizer: state tracks " + std::to_string(state.m.size()) +
                        " tensors, model has " + std::to_string(params.size()));

  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamTensor<T>& p = *params[i];
    if (state.m[i].size() != p.value.v.size())
      throw ShapeMismatch("optimizer: state for " + p.name + " holds " +
                          std::to_string(state.m[i].size()) + " moments, parameter has " +
                          std::to_string(p.value.v.size()) + " elements");
    for (std::size_t j = 0; j < p.value.v.size(); ++j) {
      const double g = static_cast<double>(p.grad.v[j]);
      if (!std::isfinite(g))
        throw NonFiniteGradient("optimizer: non-finite gradient in " + p.name);
      double& m = state.m[i][j];
      double& v = state.v[i][j];
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g * g;
      const double update = lr * (m / c1) / (std::sqrt(v / c2) + state.eps);
      p.value.v[j] = static_cast<T>(static_cast<double>(p.value.v[j]) - update);
    }
  }
}

struct TrainConfig {
  std::uint32_t epochs = 1;
  std::uint32_t batch_size = 4;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  std::uint32_t checkpoint_every = 0;  // steps between checkpoints; 0 writes only at the end
  // Batch items always reduce in ascending dataset order, so runs repeat
  // bitwise either way; the flag records the caller's intent.
  bool deterministic = true;
  double stop_at_train_psnr = 0;  // stop once windowed train PSNR reaches this; 0 disables
  std::string checkpoint_dir;     // empty disables checkpointing

  void validate() const {
    if (epochs < 1) throw Error("train config: epochs must be at least 1");
    if (batch_size < 1) throw Error("train config: batch_size must be at least 1");
    if (!(learning_rate > 0)) throw Error("train config: learning_rate must be positive");
  }
};

struct StepRecord {
  std::uint64_t step = 0;  // 1-based, monotone
  std::uint32_t epoch = 0;
  double loss = 0;
  double step_ms = 0;
};

struct EpochRecord {
  std::uint32_t epoch = 0;
  double val_psnr = 0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

inline void write_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("train log: cannot open " + path);
  out << "step,epoch,loss,step_ms,val_psnr\n";
  out.precision(17);
  std::size_t next_epoch_row = 0;
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    const StepRecord& s = log.steps[i];
    const bool epoch_ends = (i + 1 == log.steps.size()) || (log.steps[i + 1].epoch != s.epoch);
    out << s.step << "," << s.epoch << "," << s.loss << "," << s.step_ms << ",";
    if (epoch_ends && next_epoch_row < log.epochs.size() &&
        log.epochs[next_epoch_row].epoch == s.epoch) {
      out << log.epochs[next_epoch_row].val_psnr;
      ++next_epoch_row;
    }
    out << "\n";
  }
  if (!out) throw IoFailure("train log: write to " + path + " failed");
}

template <typename T>
struct FitResult {
  ModelParams<T> model;
  TrainLog log;
};

namespace detail {

template <typename T>
double mean_validation_psnr(const ModelParams<T>& model,
                            const std::vector<const Example<T>*>& val) {
  double sum = 0;
  for (const Example<T>* ex : val)
    sum += psnr(lpd_reconstruct(model, ex->measurement), ex->ground_truth);
  return sum / static_cast<double>(val.size());
}

}  // namespace detail

// Minimizes the mean squared reconstruction error over the training split.
// Shuffles per epoch with a seeded generator, accumulates batch gradients in
// ascending dataset order (so full-batch results are independent of the
// shuffle), evaluates validation PSNR each epoch, and returns the parameters
// from the best validation epoch. A non-finite loss or gradient aborts after
// saving the best parameters seen so far.
template <typename T>
FitResult<T> fit(ModelParams<T> model, const Dataset<T>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.empty()) throw EmptyDataset("fit: training split is empty");
  data.check_geometry(model.config.geometry);

  // Validation examples: explicit test split when present, otherwise a seeded
  // one-in-ten carve-out from the training split.
  std::vector<const Example<T>*> train_ptrs, val_ptrs;
  if (!data.test.empty()) {
    for (const Example<T>& ex : data.train) train_ptrs.push_back(&ex);
    for (const Example<T>& ex : data.test) val_ptrs.push_back(&ex);
  } else {
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937 rng = seeded_rng(derive_seed(cfg.seed, 0x76616c));
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_val = std::max<std::size_t>(1, data.train.size() / 10);
    if (n_val >= data.train.size()) n_val = data.train.size() - 1;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i < n_val)
        val_ptrs.push_back(&data.train[order[i]]);
      else
        train_ptrs.push_back(&data.train[order[i]]);
    }
    std::sort(train_ptrs.begin(), train_ptrs.end());
    if (val_ptrs.empty()) val_ptrs.push_back(train_ptrs.front());
  }

  AdamState opt;
  TrainLog log;
  ModelParams<T> best = model;
  double best_psnr = -std::numeric_limits<double>::infinity();
  bool have_val = false;
  std::uint64_t step = 0;

  auto save_dir = [&](const ModelParams<T>& m, const char* leaf) {
    if (!cfg.checkpoint_dir.empty()) save_checkpoint(cfg.checkpoint_dir + "/" + leaf, m);
  };

  const std::size_t steps_per_epoch =
      (train_ptrs.size() + cfg.batch_size - 1) / cfg.batch_size;
  bool stop = false;

  try {
    for (std::uint32_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
      std::vector<std::size_t> order(train_ptrs.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937 rng = seeded_rng(derive_seed(cfg.seed, epoch));
      std::shuffle(order.begin(), order.end(), rng);

      for (std::size_t at = 0; at < order.size() && !stop; at += cfg.batch_size) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> batch(
            order.begin() + static_cast<std::ptrdiff_t>(at),
            order.begin() +
                static_cast<std::ptrdiff_t>(std::min(at + cfg.batch_size, order.size())));
        // Ascending dataset order keeps the gradient reduction independent of
        // the shuffle within a batch.
        std::sort(batch.begin(), batch.end());

        model.zero_grads();
        double loss_sum = 0;
        for (std::size_t idx : batch) {
          const Example<T>& ex = *train_ptrs[idx];
          Tape<T> tape;
          LpdNodes g = lpd_build(tape, model, ex.measurement.data, true);
          const int loss = tape.mse(g.output, tape.constant(ex.ground_truth.data));
          const double value = static_cast<double>(tape.value(loss).v[0]);
          if (!std::isfinite(value)) throw NonFiniteLoss("fit: loss is not finite");
          loss_sum += value;
          tape.backward(loss);
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (ParamTensor<T>* p : model.param_list())
          for (T& g : p->grad.v) g = static_cast<T>(static_cast<double>(g) * inv);
        optimizer_step(model, opt, cfg.learning_rate);

        const auto t1 = std::chrono::steady_clock::now();
        step += 1;
        StepRecord rec;
        rec.step = step;
        rec.epoch = epoch;
        rec.loss = loss_sum * inv;
        rec.step_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        log.steps.push_back(rec);

        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
          save_dir(model, "latest");

        if (cfg.stop_at_train_psnr > 0 && log.steps.size() >= steps_per_epoch) {
          double mean_mse = 0;
          for (std::size_t i = log.steps.size() - steps_per_epoch; i < log.steps.size(); ++i)
            mean_mse += log.steps[i].loss;
          mean_mse /= static_cast<double>(steps_per_epoch);
          if (mean_mse > 0 && -10.0 * std::log10(mean_mse) >= cfg.stop_at_train_psnr)
            stop = true;
        }
      }

      EpochRecord er;
      er.epoch = epoch;
      er.val_psnr = detail::mean_validation_psnr(model, val_ptrs);
      log.epochs.push_back(er);
      if (er.val_psnr > best_psnr) {
        best_psnr = er.val_psnr;
        best = model;
        have_val = true;
        save_dir(best, "best");
      }
    }
  } catch (const NonFiniteLoss&) {
    if (have_val) save_dir(best, "best");
    throw;
  } catch (const NonFiniteActivation& e) {
    if (have_val) save_dir(best, "best");
    throw NonFiniteLoss(std::string("fit: aborted: ") + e.what());
  } catch (const NonFiniteGradient& e) {
    if (have_val) save_dir(best, "best");
    throw NonFiniteLoss(std::string("fit: aborted: ") + e.what());
  }

  save_dir(model, "latest");
  FitResult<T> out;
  out.model = have_val ? std::move(best) : std::move(model);
  out.log = std::move(log);
  return out;
}

}  // namespace lensless
