#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "lensless/lpd.hpp"
#include "lensless/tensor_file.hpp"

namespace lensless {

// A checkpoint directory holds one tensor file per parameter, a manifest
// listing name, file, and dims, and the model config as key=value lines.

inline void write_model_config(const std::string& path, const LpdConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("config: cannot open " + path + " for writing");
  out << "height=" << cfg.geometry.height << "\n"
      << "width=" << cfg.geometry.width << "\n"
      << "channels=" << cfg.geometry.channels << "\n"
      << "n_kernels=" << cfg.n_kernels << "\n"
      << "variant=" << variant_name(cfg.variant) << "\n"
      << "unroll_iters=" << cfg.unroll_iters << "\n"
      << "use_unet=" << (cfg.use_unet ? 1 : 0) << "\n";
  if (!out) throw IoFailure("config: write to " + path + " failed");
}

inline LpdConfig read_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw MalformedHeader("config: expected key=value, got '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw MalformedHeader(std::string("config: missing key ") + key);
    return it->second;
  };
  auto num = [&](const char* key) -> std::uint32_t {
    const std::string& s = need(key);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &used);
    } catch (const std::exception&) {
      throw MalformedHeader(std::string("config: ") + key + " is not a number: '" + s + "'");
    }
    if (used != s.size() || v > 0xffffffffu)
      throw MalformedHeader(std::string("config: ") + key + " is not a number: '" + s + "'");
    return static_cast<std::uint32_t>(v);
  };
  LpdConfig cfg;
  cfg.geometry = SensorGeometry{num("height"), num("width"), num("channels")};
  cfg.n_kernels = num("n_kernels");
  cfg.variant = parse_variant(need("variant"));
  cfg.unroll_iters = num("unroll_iters");
  cfg.use_unet = num("use_unet") != 0;
  cfg.validate();
  return cfg;
}

namespace detail {

// Zero-valued parameters in the exact layout lpd_init produces; loading a
// checkpoint fills them in.
template <typename T>
ModelParams<T> lpd_skeleton(const LpdConfig& cfg) {
  cfg.validate();
  ModelParams<T> m;
  m.config = cfg;
  const Tensor<T> zero_kernel =
      Tensor<T>::image(cfg.geometry.height, cfg.geometry.width, cfg.bank_channels());
  for (std::uint32_t j = 0; j < cfg.bank_count(); ++j)
    m.kernels.emplace_back(index_name("kernel", j, ""), zero_kernel);
  std::mt19937 unused = seeded_rng(0);
  for (std::uint32_t i = 0; i < cfg.unroll_iters; ++i) {
    UpdateNet<T> d;
    d.l1 = make_conv_layer<T>(index_name("dual", i, "_l1"), kUpdateNetConv, cfg.dual_net_in(),
                              kUpdateNetHidden, unused, true);
    d.l2 = make_conv_layer<T>(index_name("dual", i, "_l2"), kUpdateNetConv, kUpdateNetHidden,
                              cfg.net_out(), unused, true);
    m.dual_nets.push_back(std::move(d));
    UpdateNet<T> q;
    q.l1 = make_conv_layer<T>(index_name("primal", i, "_l1"), kUpdateNetConv,
                              cfg.primal_net_in(), kUpdateNetHidden, unused, true);
    q.l2 = make_conv_layer<T>(index_name("primal", i, "_l2"), kUpdateNetConv, kUpdateNetHidden,
                              cfg.net_out(), unused, true);
    m.primal_nets.push_back(std::move(q));
  }
  if (cfg.use_unet) {
    m.unet = make_unet<T>(cfg.geometry.channels, unused);
    m.unet->for_each([](ConvLayer<T>& l) {
      std::fill(l.w.value.v.begin(), l.w.value.v.end(), T(0));
    });
  }
  return m;
}

inline std::string dims_token(const std::vector<std::uint32_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(dims[i]);
  }
  return s;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& dir, const ModelParams<T>& model) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("checkpoint: cannot create " + dir + ": " + ec.message());

  write_model_config(dir + "/config.txt", model.config);
  std::ofstream manifest(dir + "/manifest.txt", std::ios::trunc);
  if (!manifest) throw IoFailure("checkpoint: cannot open manifest in " + dir);
  const_cast<ModelParams<T>&>(model).for_each_param([&](ParamTensor<T>& p) {
    const std::string file = p.name + ".ltsr";
    write_tensor_file(cast_tensor<float>(p.value), dir + "/" + file);
    manifest << p.name << " " << file << " " << detail::dims_token(p.value.dims) << "\n";
  });
  if (!manifest) throw IoFailure("checkpoint: manifest write failed in " + dir);
}

template <typename T>
ModelParams<T> load_checkpoint(const std::string& dir) {
  LpdConfig cfg = read_model_config(dir + "/config.txt");
  ModelParams<T> m = detail::lpd_skeleton<T>(cfg);

  std::ifstream manifest(dir + "/manifest.txt");
  if (!manifest) throw IoFailure("checkpoint: cannot open manifest in " + dir);
  std::map<std::string, std::string> files;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string name, file, dims;
    if (!(row >> name >> file >> dims))
      throw MalformedHeader("checkpoint: bad manifest line '" + line + "'");
    if (!files.emplace(name, file).second)
      throw MalformedHeader("checkpoint: duplicate manifest entry " + name);
  }

  std::size_t used = 0;
  m.for_each_param([&](ParamTensor<T>& p) {
    auto it = files.find(p.name);
    if (it == files.end()) throw MissingPair("checkpoint: no tensor for parameter " + p.name);
    Tensor<T> v = cast_tensor<T>(read_tensor_file(dir + "/" + it->second));
    if (v.dims != p.value.dims)
      throw ShapeMismatch("checkpoint: " + p.name + " is " + shape_string(v) + ", expected " +
                          shape_string(p.value));
    p.value = std::move(v);
    ++used;
  });
  if (used != files.size())
    throw CountMismatch("checkpoint: manifest lists " + std::to_string(files.size()) +
                        " tensors, model needs " + std::to_string(used));
  return m;
}

}  // namespace lensless
