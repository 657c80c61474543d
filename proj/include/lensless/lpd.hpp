#pragma once

#include <array>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lensless/autodiff.hpp"
#include "lensless/optics.hpp"
#include "lensless/random.hpp"

namespace lensless {

// Unrolled primal-dual reconstruction network. Primal banks live in the
// padded domain, dual banks in the sensor domain; each bank carries its own
// learnable measurement kernel, and every unrolled iteration has its own
// two-layer update network.

enum class LpdVariant { per_channel, mixed };

inline const char* variant_name(LpdVariant v) {
  return v == LpdVariant::per_channel ? "per_channel" : "mixed";
}

inline LpdVariant parse_variant(const std::string& s) {
  if (s == "per_channel") return LpdVariant::per_channel;
  if (s == "mixed") return LpdVariant::mixed;
  throw Error("unknown variant '" + s + "' (expected per_channel or mixed)");
}

// Update networks stay small on purpose; the kernels carry most parameters.
inline constexpr std::uint32_t kUpdateNetHidden = 24;
inline constexpr std::uint32_t kUpdateNetConv = 3;
inline constexpr std::uint32_t kUnetConv = 5;
inline constexpr std::array<std::uint32_t, 3> kUnetWidths{32, 64, 128};
template <typename T>
inline constexpr T kLeakySlope = T(0.2);

struct LpdConfig {
  SensorGeometry geometry;
  std::uint32_t n_kernels = 1;
  LpdVariant variant = LpdVariant::per_channel;
  std::uint32_t unroll_iters = 10;
  bool use_unet = false;

  void validate() const {
    geometry.validate();
    if (n_kernels < 1) throw Error("config: n_kernels must be at least 1");
    if (unroll_iters < 1) throw Error("config: unroll_iters must be at least 1");
    if (variant == LpdVariant::mixed && geometry.channels != 3)
      throw GeometryMismatch("config: mixed variant requires 3-channel geometry");
  }

  // mixed splits every RGB pair into three single-channel feature banks
  std::uint32_t bank_count() const {
    return variant == LpdVariant::mixed ? 3 * n_kernels : n_kernels;
  }
  std::uint32_t bank_channels() const {
    return variant == LpdVariant::mixed ? 1 : geometry.channels;
  }
  std::uint32_t dual_net_in() const {
    return 2 * bank_count() * bank_channels() + geometry.channels;
  }
  std::uint32_t primal_net_in() const { return 2 * bank_count() * bank_channels(); }
  std::uint32_t net_out() const { return bank_count() * bank_channels(); }
};

template <typename T>
struct ConvLayer {
  ParamTensor<T> w;  // kh x kw x cin x cout
  ParamTensor<T> b;  // cout
};

template <typename T>
struct UpdateNet {
  ConvLayer<T> l1, l2;
};

template <typename T>
struct UnetParams {
  // encoder, bottom, decoder, then the linear residual-correction head
  ConvLayer<T> e1a, e1b, e2a, e2b, e3a, e3b, d2a, d2b, d1a, d1b, head;

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (ConvLayer<T>* l : {&e1a, &e1b, &e2a, &e2b, &e3a, &e3b, &d2a, &d2b, &d1a, &d1b, &head})
      fn(*l);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const ConvLayer<T>* l :
         {&e1a, &e1b, &e2a, &e2b, &e3a, &e3b, &d2a, &d2b, &d1a, &d1b, &head})
      fn(*l);
  }
};

template <typename T>
struct ModelParams {
  LpdConfig config;
  std::vector<ParamTensor<T>> kernels;
  std::vector<UpdateNet<T>> dual_nets, primal_nets;
  std::optional<UnetParams<T>> unet;

  // Stable traversal order; checkpoint manifests and optimizer state rely on it.
  template <typename Fn>
  void for_each_param(Fn&& fn) {
    for (auto& k : kernels) fn(k);
    for (std::size_t i = 0; i < dual_nets.size(); ++i) {
      for (ConvLayer<T>* l : {&dual_nets[i].l1, &dual_nets[i].l2}) {
        fn(l->w);
        fn(l->b);
      }
      for (ConvLayer<T>* l : {&primal_nets[i].l1, &primal_nets[i].l2}) {
        fn(l->w);
        fn(l->b);
      }
    }
    if (unet)
      unet->for_each([&](ConvLayer<T>& l) {
        fn(l.w);
        fn(l.b);
      });
  }

  std::vector<ParamTensor<T>*> param_list() {
    std::vector<ParamTensor<T>*> out;
    for_each_param([&](ParamTensor<T>& p) { out.push_back(&p); });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    const_cast<ModelParams*>(this)->for_each_param(
        [&](ParamTensor<T>& p) { n += p.value.size(); });
    return n;
  }

  std::size_t kernel_parameter_count() const {
    std::size_t n = 0;
    for (const auto& k : kernels) n += k.value.size();
    return n;
  }

  void zero_grads() {
    for_each_param([](ParamTensor<T>& p) { p.zero_grad(); });
  }
};

namespace detail {

inline std::string index_name(const char* prefix, std::uint32_t i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02u%s", prefix, i, suffix);
  return buf;
}

template <typename T>
ConvLayer<T> make_conv_layer(const std::string& name, std::uint32_t kk, std::uint32_t cin,
                             std::uint32_t cout, std::mt19937& rng, bool zero_init = false) {
  Tensor<T> w({kk, kk, cin, cout});
  if (!zero_init) {
    const T bound = T(1.0 / std::sqrt(double(kk) * kk * cin));
    fill_uniform(w, rng, -bound, bound);
  }
  ConvLayer<T> layer;
  layer.w = ParamTensor<T>(name + "_w", std::move(w));
  layer.b = ParamTensor<T>(name + "_b", Tensor<T>({cout}, T(0)));
  return layer;
}

template <typename T>
UnetParams<T> make_unet(std::uint32_t channels, std::mt19937& rng) {
  const auto [w1, w2, w3] = std::tuple(kUnetWidths[0], kUnetWidths[1], kUnetWidths[2]);
  UnetParams<T> u;
  u.e1a = make_conv_layer<T>("unet_e1a", kUnetConv, channels, w1, rng);
  u.e1b = make_conv_layer<T>("unet_e1b", kUnetConv, w1, w1, rng);
  u.e2a = make_conv_layer<T>("unet_e2a", kUnetConv, w1, w2, rng);
  u.e2b = make_conv_layer<T>("unet_e2b", kUnetConv, w2, w2, rng);
  u.e3a = make_conv_layer<T>("unet_e3a", kUnetConv, w2, w3, rng);
  u.e3b = make_conv_layer<T>("unet_e3b", kUnetConv, w3, w3, rng);
  u.d2a = make_conv_layer<T>("unet_d2a", kUnetConv, w3 + w2, w2, rng);
  u.d2b = make_conv_layer<T>("unet_d2b", kUnetConv, w2, w2, rng);
  u.d1a = make_conv_layer<T>("unet_d1a", kUnetConv, w2 + w1, w1, rng);
  u.d1b = make_conv_layer<T>("unet_d1b", kUnetConv, w1, w1, rng);
  // zero head: the network is the identity until training moves it
  u.head = make_conv_layer<T>("unet_head", kUnetConv, w1, channels, rng, true);
  return u;
}

}  // namespace detail

// Kernels start as exact copies of the measured blur; networks start small
// and random, biases zero. Same seed, same parameters.
template <typename T>
ModelParams<T> lpd_init(const Psf<T>& psf, const LpdConfig& cfg, std::uint64_t seed = 0) {
  cfg.validate();
  const Tensor<T>& p = psf.kernel.data;
  if (p.h() != cfg.geometry.height || p.w() != cfg.geometry.width ||
      p.c() != cfg.geometry.channels)
    throw GeometryMismatch("init: kernel source is " + shape_string(p) +
                           ", geometry wants " + cfg.geometry.describe());

  ModelParams<T> m;
  m.config = cfg;
  if (cfg.variant == LpdVariant::per_channel) {
    for (std::uint32_t j = 0; j < cfg.n_kernels; ++j)
      m.kernels.emplace_back(detail::index_name("kernel", j, ""), p);
  } else {
    for (std::uint32_t j = 0; j < cfg.n_kernels; ++j)
      for (std::uint32_t c = 0; c < 3; ++c) {
        Tensor<T> plane = Tensor<T>::image(p.h(), p.w(), 1);
        for (std::uint32_t r = 0; r < p.h(); ++r)
          for (std::uint32_t col = 0; col < p.w(); ++col) plane.at(r, col, 0) = p.at(r, col, c);
        m.kernels.emplace_back(detail::index_name("kernel", 3 * j + c, ""), std::move(plane));
      }
  }

  auto rng = seeded_rng(seed);
  const std::uint32_t hidden = kUpdateNetHidden;
  for (std::uint32_t i = 0; i < cfg.unroll_iters; ++i) {
    UpdateNet<T> d;
    d.l1 = detail::make_conv_layer<T>(detail::index_name("dual", i, "_l1"), kUpdateNetConv,
                                      cfg.dual_net_in(), hidden, rng);
    d.l2 = detail::make_conv_layer<T>(detail::index_name("dual", i, "_l2"), kUpdateNetConv,
                                      hidden, cfg.net_out(), rng);
    m.dual_nets.push_back(std::move(d));
    UpdateNet<T> q;
    q.l1 = detail::make_conv_layer<T>(detail::index_name("primal", i, "_l1"), kUpdateNetConv,
                                      cfg.primal_net_in(), hidden, rng);
    q.l2 = detail::make_conv_layer<T>(detail::index_name("primal", i, "_l2"), kUpdateNetConv,
                                      hidden, cfg.net_out(), rng);
    m.primal_nets.push_back(std::move(q));
  }
  if (cfg.use_unet) m.unet = detail::make_unet<T>(cfg.geometry.channels, rng);
  return m;
}

namespace detail {

// Node-id bundles so the same graph code serves training (parameter nodes)
// and inference (constant nodes).
using LayerIds = std::pair<int, int>;

template <typename T>
struct ParamBinder {
  Tape<T>& tape;
  bool with_parameters;

  // with_parameters callers must pass a genuinely mutable ModelParams
  int bind(const ParamTensor<T>& p) {
    return with_parameters ? tape.parameter(const_cast<ParamTensor<T>&>(p))
                           : tape.constant(p.value);
  }
  LayerIds bind(const ConvLayer<T>& l) { return {bind(l.w), bind(l.b)}; }
};

template <typename T>
int two_layer_net(Tape<T>& t, int in, LayerIds l1, LayerIds l2) {
  int h = t.leaky_relu(t.conv2d(in, l1.first, l1.second), kLeakySlope<T>);
  return t.conv2d(h, l2.first, l2.second);
}

// y_i <- y_{i-1} + net([y_{i-1}, T(x_{i-1}), b])
template <typename T>
std::vector<int> dual_step(Tape<T>& t, const std::vector<int>& dual,
                           const std::vector<int>& primal, const std::vector<int>& kernels,
                           int b_node, LayerIds l1, LayerIds l2, std::uint32_t bc) {
  std::vector<int> cat = dual;
  for (std::size_t j = 0; j < primal.size(); ++j)
    cat.push_back(t.circ_conv(primal[j], kernels[j]));
  cat.push_back(b_node);
  const int out = two_layer_net(t, t.concat(cat), l1, l2);
  std::vector<int> next(dual.size());
  for (std::size_t j = 0; j < dual.size(); ++j)
    next[j] = t.add(dual[j], t.slice(out, std::uint32_t(j) * bc, bc));
  return next;
}

// x_i <- x_{i-1} + net([x_{i-1}, adjoint_T(y_i)])
template <typename T>
std::vector<int> primal_step(Tape<T>& t, const std::vector<int>& primal,
                             const std::vector<int>& dual, const std::vector<int>& kernels,
                             LayerIds l1, LayerIds l2, std::uint32_t bc) {
  std::vector<int> cat = primal;
  for (std::size_t j = 0; j < dual.size(); ++j)
    cat.push_back(t.circ_corr(dual[j], kernels[j]));
  const int out = two_layer_net(t, t.concat(cat), l1, l2);
  std::vector<int> next(primal.size());
  for (std::size_t j = 0; j < primal.size(); ++j)
    next[j] = t.add(primal[j], t.slice(out, std::uint32_t(j) * bc, bc));
  return next;
}

// Bank j starts at the back-projection of the measurement through kernel j;
// mixed banks back-project their own color plane.
template <typename T>
std::vector<int> initial_primal(Tape<T>& t, const LpdConfig& cfg,
                                const std::vector<int>& kernels, int b_node) {
  std::vector<int> primal(kernels.size());
  if (cfg.variant == LpdVariant::per_channel) {
    for (std::size_t j = 0; j < kernels.size(); ++j) primal[j] = t.circ_corr(b_node, kernels[j]);
  } else {
    std::array<int, 3> plane{};
    for (std::uint32_t c = 0; c < 3; ++c) plane[c] = t.slice(b_node, c, 1);
    for (std::size_t j = 0; j < kernels.size(); ++j)
      primal[j] = t.circ_corr(plane[j % 3], kernels[j]);
  }
  return primal;
}

// The estimate is the first bank group; mixed reassembles three planes as RGB.
template <typename T>
int assemble_estimate(Tape<T>& t, const LpdConfig& cfg, const std::vector<int>& primal) {
  if (cfg.variant == LpdVariant::per_channel) return primal[0];
  return t.concat({primal[0], primal[1], primal[2]});
}

template <typename T>
int unet_graph(Tape<T>& t, const std::array<LayerIds, 11>& L, int x) {
  const T s = kLeakySlope<T>;
  auto cl = [&](int in, int li) { return t.conv2d(in, L[li].first, L[li].second); };
  int e1 = t.leaky_relu(cl(t.leaky_relu(cl(x, 0), s), 1), s);
  int e2 = t.leaky_relu(cl(t.leaky_relu(cl(t.avg_pool2(e1), 2), s), 3), s);
  int m = t.leaky_relu(cl(t.leaky_relu(cl(t.avg_pool2(e2), 4), s), 5), s);
  int d2 = t.leaky_relu(cl(t.leaky_relu(cl(t.concat({t.upsample2(m), e2}), 6), s), 7), s);
  int d1 = t.leaky_relu(cl(t.leaky_relu(cl(t.concat({t.upsample2(d2), e1}), 8), s), 9), s);
  return t.add(x, cl(d1, 10));
}

template <typename T>
std::array<LayerIds, 11> bind_unet(ParamBinder<T>& bind, const UnetParams<T>& u) {
  return {bind.bind(u.e1a), bind.bind(u.e1b), bind.bind(u.e2a), bind.bind(u.e2b),
          bind.bind(u.e3a), bind.bind(u.e3b), bind.bind(u.d2a), bind.bind(u.d2b),
          bind.bind(u.d1a), bind.bind(u.d1b), bind.bind(u.head)};
}

}  // namespace detail

// Graph handles for one measurement: the padded estimate, the sensor-sized
// output (cropped, denoised when configured), and per-iteration estimates.
struct LpdNodes {
  std::vector<int> kernels;
  std::vector<int> primal, dual;
  std::vector<int> estimate_per_iter;
  int b = -1;
  int estimate_padded = -1;
  int output = -1;
};

template <typename T>
LpdNodes lpd_build(Tape<T>& tape, const ModelParams<T>& params, const Tensor<T>& b,
                   bool with_parameters) {
  const LpdConfig& cfg = params.config;
  cfg.validate();
  if (b.h() != cfg.geometry.height || b.w() != cfg.geometry.width ||
      b.c() != cfg.geometry.channels)
    throw ShapeMismatch("build: measurement is " + shape_string(b) + ", geometry wants " +
                        cfg.geometry.describe());
  if (params.kernels.size() != cfg.bank_count() ||
      params.dual_nets.size() != cfg.unroll_iters ||
      params.primal_nets.size() != cfg.unroll_iters || (cfg.use_unet && !params.unet))
    throw ShapeMismatch("build: parameter layout does not match the config");

  detail::ParamBinder<T> bind{tape, with_parameters};
  LpdNodes g;
  for (const auto& k : params.kernels) g.kernels.push_back(bind.bind(k));
  g.b = tape.constant(b);

  g.primal = detail::initial_primal(tape, cfg, g.kernels, g.b);
  const Tensor<T> zero_dual =
      Tensor<T>::image(cfg.geometry.height, cfg.geometry.width, cfg.bank_channels());
  g.dual.resize(cfg.bank_count());
  for (auto& id : g.dual) id = tape.constant(zero_dual);

  const std::uint32_t bc = cfg.bank_channels();
  for (std::uint32_t i = 0; i < cfg.unroll_iters; ++i) {
    g.dual = detail::dual_step(tape, g.dual, g.primal, g.kernels, g.b,
                               bind.bind(params.dual_nets[i].l1),
                               bind.bind(params.dual_nets[i].l2), bc);
    g.primal = detail::primal_step(tape, g.primal, g.dual, g.kernels,
                                   bind.bind(params.primal_nets[i].l1),
                                   bind.bind(params.primal_nets[i].l2), bc);
    g.estimate_per_iter.push_back(detail::assemble_estimate(tape, cfg, g.primal));
  }
  g.estimate_padded = g.estimate_per_iter.back();

  g.output = tape.crop(g.estimate_padded);
  if (cfg.use_unet) {
    if (cfg.geometry.height % 4 || cfg.geometry.width % 4)
      throw ShapeMismatch("build: denoiser needs sensor dims divisible by 4");
    auto ids = detail::bind_unet(bind, *params.unet);
    g.output = detail::unet_graph(tape, ids, g.output);
  }
  return g;
}

// Per-iteration padded estimates, for inspecting how the unroll progresses.
template <typename T>
struct LpdTrace {
  std::vector<Tensor<T>> estimate_per_iter;
};

// Runs the unrolled iterations and returns the padded-domain estimate.
template <typename T>
ImageField<T> lpd_forward(const ModelParams<T>& params, const ImageField<T>& b,
                          LpdTrace<T>* trace = nullptr) {
  require_domain(b, Domain::sensor, "reconstruction");
  Tape<T> tape;
  LpdNodes g = lpd_build(tape, params, b.data, false);
  if (trace) {
    trace->estimate_per_iter.clear();
    for (int id : g.estimate_per_iter) trace->estimate_per_iter.push_back(tape.value(id));
  }
  return ImageField<T>(tape.value(g.estimate_padded), Domain::padded);
}

// Crops the estimate to sensor size and applies the denoiser when configured.
template <typename T>
ImageField<T> lpd_reconstruct(const ModelParams<T>& params, const ImageField<T>& b) {
  require_domain(b, Domain::sensor, "reconstruction");
  Tape<T> tape;
  LpdNodes g = lpd_build(tape, params, b.data, false);
  return ImageField<T>(tape.value(g.output), Domain::sensor);
}

// Step-by-step view of the same computation; useful for probing single
// updates. Values match lpd_forward bitwise because both run the same graph.
template <typename T>
struct LpdState {
  std::vector<Tensor<T>> primal;  // padded-domain banks
  std::vector<Tensor<T>> dual;    // sensor-domain banks
  std::uint32_t iteration = 0;
  bool dual_fresh = false;
};

template <typename T>
LpdState<T> lpd_initial_state(const ModelParams<T>& params, const ImageField<T>& b) {
  require_domain(b, Domain::sensor, "reconstruction");
  Tape<T> tape;
  detail::ParamBinder<T> bind{tape, false};
  std::vector<int> kernels;
  for (const auto& k : params.kernels) kernels.push_back(bind.bind(k));
  const int b_node = tape.constant(b.data);
  LpdState<T> s;
  for (int id : detail::initial_primal(tape, params.config, kernels, b_node))
    s.primal.push_back(tape.value(id));
  s.dual.assign(params.config.bank_count(),
                Tensor<T>::image(params.config.geometry.height, params.config.geometry.width,
                                 params.config.bank_channels()));
  return s;
}

// Applies iteration i's dual update (1-based).
template <typename T>
void dual_update(LpdState<T>& s, const ModelParams<T>& params, const ImageField<T>& b,
                 std::uint32_t i) {
  if (i < 1 || i > params.config.unroll_iters || s.iteration != i - 1 || s.dual_fresh)
    throw Error("dual update: expected iteration " + std::to_string(s.iteration + 1));
  Tape<T> tape;
  detail::ParamBinder<T> bind{tape, false};
  std::vector<int> kernels, primal, dual;
  for (const auto& k : params.kernels) kernels.push_back(bind.bind(k));
  for (const auto& t : s.primal) primal.push_back(tape.constant(t));
  for (const auto& t : s.dual) dual.push_back(tape.constant(t));
  const int b_node = tape.constant(b.data);
  std::vector<int> next = detail::dual_step(
      tape, dual, primal, kernels, b_node, bind.bind(params.dual_nets[i - 1].l1),
      bind.bind(params.dual_nets[i - 1].l2), params.config.bank_channels());
  for (std::size_t j = 0; j < next.size(); ++j) s.dual[j] = tape.value(next[j]);
  s.dual_fresh = true;
}

// Applies iteration i's primal update; requires the matching dual update.
template <typename T>
void primal_update(LpdState<T>& s, const ModelParams<T>& params, std::uint32_t i) {
  if (i < 1 || i > params.config.unroll_iters || s.iteration != i - 1 || !s.dual_fresh)
    throw Error("primal update: dual update " + std::to_string(s.iteration + 1) +
                " must run first");
  Tape<T> tape;
  detail::ParamBinder<T> bind{tape, false};
  std::vector<int> kernels, primal, dual;
  for (const auto& k : params.kernels) kernels.push_back(bind.bind(k));
  for (const auto& t : s.primal) primal.push_back(tape.constant(t));
  for (const auto& t : s.dual) dual.push_back(tape.constant(t));
  std::vector<int> next = detail::primal_step(
      tape, primal, dual, kernels, bind.bind(params.primal_nets[i - 1].l1),
      bind.bind(params.primal_nets[i - 1].l2), params.config.bank_channels());
  for (std::size_t j = 0; j < next.size(); ++j) s.primal[j] = tape.value(next[j]);
  s.iteration = i;
  s.dual_fresh = false;
}

// Standalone denoiser pass: residual encoder/decoder on a sensor-sized image.
template <typename T>
Tensor<T> unet_forward(const UnetParams<T>& unet, const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeMismatch("denoiser: expects an image, got " + shape_string(x));
  if (x.h() % 4 || x.w() % 4)
    throw ShapeMismatch("denoiser: dims must be divisible by 4, got " + shape_string(x));
  Tape<T> tape;
  detail::ParamBinder<T> bind{tape, false};
  auto ids = detail::bind_unet(bind, unet);
  return tape.value(detail::unet_graph(tape, ids, tape.constant(x)));
}

template <typename T>
std::size_t unet_parameter_count(const UnetParams<T>& unet) {
  std::size_t n = 0;
  unet.for_each([&](const ConvLayer<T>& l) { n += l.w.value.size() + l.b.value.size(); });
  return n;
}

}  // namespace lensless
