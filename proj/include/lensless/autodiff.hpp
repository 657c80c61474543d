#pragma once

#include <Eigen/Core>

#include <complex>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lensless/optics.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

// A leaf holding trainable values. Gradients accumulate additively: running
// backward twice without zeroing doubles them.
template <typename T>
struct ParamTensor {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  ParamTensor() = default;
  ParamTensor(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.dims, T(0)) {}

  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), T(0)); }
};

enum class OpKind {
  constant,
  parameter,
  conv2d,       // small spatial conv, same zero padding, odd kernel
  circ_conv,    // measurement model: padded scene (x) kernel -> sensor
  circ_corr,    // its adjoint: sensor image (x) kernel -> padded
  crop,
  pad,
  concat,
  slice,
  add,
  scale,
  leaky_relu,
  avg_pool2,
  upsample2,
  weighted_sum,
  mse,
};

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
// the graph is acyclic by construction; backward walks ids in reverse.
template <typename T>
class Tape {
 public:
  using NodeId = int;

  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor<T> value;
    ParamTensor<T>* param = nullptr;
    std::uint32_t a0 = 0, a1 = 0;  // op-specific (slice range)
    T alpha = T(0);                // scale factor / leaky slope
    Tensor<T> aux;                 // weighted_sum weights
    std::shared_ptr<const std::vector<std::complex<T>>> x_spec, k_spec;
  };

  NodeId constant(Tensor<T> v) { return push(OpKind::constant, {}, std::move(v)); }

  NodeId parameter(ParamTensor<T>& p) {
    NodeId id = push(OpKind::parameter, {}, p.value);
    nodes_[id].param = &p;
    return id;
  }

  // x: h x w x cin, w: kh x kw x cin x cout (kh, kw odd), b: cout.
  NodeId conv2d(NodeId x, NodeId w, NodeId b) {
    const Tensor<T>& xv = at(x).value;
    const Tensor<T>& wv = at(w).value;
    const Tensor<T>& bv = at(b).value;
    if (xv.rank() != 3 || wv.rank() != 4 || bv.rank() != 1)
      throw ShapeMismatch("conv2d: expects image, 4-d weight, 1-d bias");
    if (wv.dims[0] % 2 == 0 || wv.dims[1] % 2 == 0)
      throw ShapeMismatch("conv2d: kernel dims must be odd");
    if (wv.dims[2] != xv.dims[2] || wv.dims[3] != bv.dims[0])
      throw ShapeMismatch("conv2d: channel counts disagree");
    Tensor<T> out = conv2d_forward(xv, wv, bv);
    return push(OpKind::conv2d, {x, w, b}, std::move(out));
  }

  // Measurement model as a differentiable op: padded scene, sensor kernel.
  NodeId circ_conv(NodeId x, NodeId kernel) {
    const Tensor<T>& xv = at(x).value;
    const Tensor<T>& kv = at(kernel).value;
    detail::check_kernel_against(xv, kv, true, "tape circ_conv");
    auto ks = kernel_spectra(kernel);
    auto xs = std::make_shared<const std::vector<std::complex<T>>>(detail::spectra(xv));
    auto prod = detail::mul_spectra(*xs, *ks);
    Tensor<T> conv = detail::inverse_spectra(prod, xv.h(), xv.w(), xv.c());
    NodeId id = push(OpKind::circ_conv, {x, kernel}, detail::crop_center(conv));
    nodes_[id].x_spec = std::move(xs);
    nodes_[id].k_spec = std::move(ks);
    return id;
  }

  // Adjoint of the measurement model: sensor image, sensor kernel -> padded.
  NodeId circ_corr(NodeId y, NodeId kernel) {
    const Tensor<T>& yv = at(y).value;
    const Tensor<T>& kv = at(kernel).value;
    detail::check_kernel_against(yv, kv, false, "tape circ_corr");
    auto ks = kernel_spectra(kernel);
    Tensor<T> padded = detail::pad2(yv);
    auto ys = std::make_shared<const std::vector<std::complex<T>>>(detail::spectra(padded));
    auto prod = detail::mul_conj_spectra(*ys, *ks);
    Tensor<T> out = detail::inverse_spectra(prod, padded.h(), padded.w(), padded.c());
    NodeId id = push(OpKind::circ_corr, {y, kernel}, std::move(out));
    nodes_[id].x_spec = std::move(ys);
    nodes_[id].k_spec = std::move(ks);
    return id;
  }

  NodeId crop(NodeId x) {
    const Tensor<T>& xv = at(x).value;
    if (xv.h() % 2 || xv.w() % 2) throw ShapeMismatch("tape crop: dims must be even");
    return push(OpKind::crop, {x}, detail::crop_center(xv));
  }

  NodeId pad(NodeId x) { return push(OpKind::pad, {x}, detail::pad2(at(x).value)); }

  NodeId concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat: no inputs");
    const Tensor<T>& first = at(parts[0]).value;
    std::uint32_t channels = 0;
    for (NodeId p : parts) {
      const Tensor<T>& v = at(p).value;
      if (v.h() != first.h() || v.w() != first.w())
        throw ShapeMismatch("concat: spatial dims disagree");
      channels += v.c();
    }
    Tensor<T> out = Tensor<T>::image(first.h(), first.w(), channels);
    std::uint32_t ch0 = 0;
    for (NodeId p : parts) {
      const Tensor<T>& v = at(p).value;
      for (std::uint32_t r = 0; r < v.h(); ++r)
        for (std::uint32_t col = 0; col < v.w(); ++col)
          for (std::uint32_t ch = 0; ch < v.c(); ++ch)
            out.at(r, col, ch0 + ch) = v.at(r, col, ch);
      ch0 += v.c();
    }
    return push(OpKind::concat, parts, std::move(out));
  }

  NodeId slice(NodeId x, std::uint32_t ch_from, std::uint32_t ch_count) {
    const Tensor<T>& xv = at(x).value;
    if (ch_from + ch_count > xv.c()) throw ShapeMismatch("slice: channel range out of bounds");
    Tensor<T> out = Tensor<T>::image(xv.h(), xv.w(), ch_count);
    for (std::uint32_t r = 0; r < xv.h(); ++r)
      for (std::uint32_t col = 0; col < xv.w(); ++col)
        for (std::uint32_t ch = 0; ch < ch_count; ++ch)
          out.at(r, col, ch) = xv.at(r, col, ch_from + ch);
    NodeId id = push(OpKind::slice, {x}, std::move(out));
    nodes_[id].a0 = ch_from;
    nodes_[id].a1 = ch_count;
    return id;
  }

  NodeId add(NodeId a, NodeId b) {
    const Tensor<T>& av = at(a).value;
    const Tensor<T>& bv = at(b).value;
    if (!av.same_shape(bv)) throw ShapeMismatch("add: shapes disagree");
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv.v[i];
    return push(OpKind::add, {a, b}, std::move(out));
  }

  NodeId scale(NodeId x, T alpha) {
    Tensor<T> out = at(x).value;
    for (T& v : out.v) v *= alpha;
    NodeId id = push(OpKind::scale, {x}, std::move(out));
    nodes_[id].alpha = alpha;
    return id;
  }

  NodeId leaky_relu(NodeId x, T slope = T(0.2)) {
    Tensor<T> out = at(x).value;
    for (T& v : out.v) v = v >= T(0) ? v : slope * v;
    NodeId id = push(OpKind::leaky_relu, {x}, std::move(out));
    nodes_[id].alpha = slope;
    return id;
  }

  NodeId avg_pool2(NodeId x) {
    const Tensor<T>& xv = at(x).value;
    if (xv.h() % 2 || xv.w() % 2) throw ShapeMismatch("avg_pool2: dims must be even");
    Tensor<T> out = Tensor<T>::image(xv.h() / 2, xv.w() / 2, xv.c());
    for (std::uint32_t r = 0; r < out.h(); ++r)
      for (std::uint32_t col = 0; col < out.w(); ++col)
        for (std::uint32_t ch = 0; ch < out.c(); ++ch)
          out.at(r, col, ch) =
              (xv.at(2 * r, 2 * col, ch) + xv.at(2 * r, 2 * col + 1, ch) +
               xv.at(2 * r + 1, 2 * col, ch) + xv.at(2 * r + 1, 2 * col + 1, ch)) /
              T(4);
    return push(OpKind::avg_pool2, {x}, std::move(out));
  }

  NodeId upsample2(NodeId x) {
    const Tensor<T>& xv = at(x).value;
    Tensor<T> out = Tensor<T>::image(xv.h() * 2, xv.w() * 2, xv.c());
    for (std::uint32_t r = 0; r < xv.h(); ++r)
      for (std::uint32_t col = 0; col < xv.w(); ++col)
        for (std::uint32_t ch = 0; ch < xv.c(); ++ch) {
          const T v = xv.at(r, col, ch);
          out.at(2 * r, 2 * col, ch) = v;
          out.at(2 * r, 2 * col + 1, ch) = v;
          out.at(2 * r + 1, 2 * col, ch) = v;
          out.at(2 * r + 1, 2 * col + 1, ch) = v;
        }
    return push(OpKind::upsample2, {x}, std::move(out));
  }

  // Scalar projection <x, weights>; used to probe linear ops in tests.
  NodeId weighted_sum(NodeId x, Tensor<T> weights) {
    const Tensor<T>& xv = at(x).value;
    if (!xv.same_shape(weights)) throw ShapeMismatch("weighted_sum: weight shape disagrees");
    double s = 0;
    for (std::size_t i = 0; i < xv.v.size(); ++i)
      s += double(xv.v[i]) * double(weights.v[i]);
    Tensor<T> out({1});
    out.v[0] = static_cast<T>(s);
    NodeId id = push(OpKind::weighted_sum, {x}, std::move(out));
    nodes_[id].aux = std::move(weights);
    return id;
  }

  NodeId mse(NodeId a, NodeId b) {
    const Tensor<T>& av = at(a).value;
    const Tensor<T>& bv = at(b).value;
    if (!av.same_shape(bv)) throw ShapeMismatch("mse: shapes disagree");
    double s = 0;
    for (std::size_t i = 0; i < av.v.size(); ++i) {
      const double d = double(av.v[i]) - double(bv.v[i]);
      s += d * d;
    }
    Tensor<T> out({1});
    out.v[0] = static_cast<T>(s / double(av.v.size()));
    return push(OpKind::mse, {a, b}, std::move(out));
  }

  const Tensor<T>& value(NodeId id) const { return at(id).value; }
  std::size_t node_count() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Gradients land in each parameter's
  // grad tensor, added to whatever is already there.
  void backward(NodeId loss) {
    const Node& ln = at(loss);
    if (ln.value.size() != 1) throw NonScalarLoss("backward: loss is " + shape_string(ln.value));
    std::vector<Tensor<T>> grads(nodes_.size());
    grads[loss] = Tensor<T>({1}, T(1));
    for (NodeId id = loss; id >= 0; --id) {
      if (grads[id].size() == 0) continue;
      propagate(id, grads);
      if (nodes_[id].kind == OpKind::parameter) {
        if (!all_finite(grads[id]))
          throw NonFiniteGradient("backward: gradient of " + nodes_[id].param->name +
                                  " is not finite");
        ParamTensor<T>& p = *nodes_[id].param;
        if (!p.grad.same_shape(grads[id])) p.grad = Tensor<T>(grads[id].dims, T(0));
        for (std::size_t i = 0; i < p.grad.v.size(); ++i) p.grad.v[i] += grads[id].v[i];
      }
      grads[id] = Tensor<T>();  // free as soon as it has been consumed
    }
  }

 private:
  std::vector<Node> nodes_;
  std::map<NodeId, std::shared_ptr<const std::vector<std::complex<T>>>> kernel_spectra_memo_;

  const Node& at(NodeId id) const {
    if (id < 0 || id >= (int)nodes_.size()) throw GraphCycle("tape: node id out of range");
    return nodes_[id];
  }

  NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor<T> value) {
    const NodeId id = static_cast<NodeId>(nodes_.size());
    for (NodeId in : inputs)
      if (in < 0 || in >= id) throw GraphCycle("tape: op input must precede the op");
    if (!all_finite(value))
      throw NonFiniteActivation("tape: op produced non-finite values");
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return id;
  }

  // Embedded-kernel spectra are fixed for the tape's lifetime, so compute
  // them once per kernel node even if ten iterations reference it.
  std::shared_ptr<const std::vector<std::complex<T>>> kernel_spectra(NodeId kernel) {
    auto it = kernel_spectra_memo_.find(kernel);
    if (it != kernel_spectra_memo_.end()) return it->second;
    auto s = std::make_shared<const std::vector<std::complex<T>>>(
        detail::spectra(detail::embed_kernel(at(kernel).value)));
    kernel_spectra_memo_.emplace(kernel, s);
    return s;
  }

  using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  static void im2col(const Tensor<T>& x, std::uint32_t kh, std::uint32_t kw, MatRM& col) {
    const std::uint32_t h = x.h(), w = x.w(), cin = x.c();
    const int ph = int(kh) / 2, pw = int(kw) / 2;
    col.setZero(std::size_t(h) * w, std::size_t(kh) * kw * cin);
    for (std::uint32_t r = 0; r < h; ++r)
      for (std::uint32_t c = 0; c < w; ++c) {
        const std::size_t row = std::size_t(r) * w + c;
        for (std::uint32_t dy = 0; dy < kh; ++dy) {
          const int sr = int(r) + int(dy) - ph;
          if (sr < 0 || sr >= int(h)) continue;
          for (std::uint32_t dx = 0; dx < kw; ++dx) {
            const int sc = int(c) + int(dx) - pw;
            if (sc < 0 || sc >= int(w)) continue;
            const T* src = &x.at(std::uint32_t(sr), std::uint32_t(sc), 0);
            T* dst = col.row(row).data() + (std::size_t(dy) * kw + dx) * cin;
            std::copy(src, src + cin, dst);
          }
        }
      }
  }

  static Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const std::uint32_t h = x.h(), wd = x.w();
    const std::uint32_t kh = w.dims[0], kw = w.dims[1], cin = w.dims[2], cout = w.dims[3];
    MatRM col;
    im2col(x, kh, kw, col);
    Eigen::Map<const MatRM> wm(w.v.data(), std::size_t(kh) * kw * cin, cout);
    Tensor<T> out = Tensor<T>::image(h, wd, cout);
    Eigen::Map<MatRM> om(out.v.data(), std::size_t(h) * wd, cout);
    om.noalias() = col * wm;
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bm(b.v.data(), cout);
    om.rowwise() += bm;
    return out;
  }

  static void accumulate(Tensor<T>& slot, const std::vector<std::uint32_t>& dims,
                         const T* src, std::size_t n) {
    if (slot.size() == 0) slot = Tensor<T>(dims, T(0));
    for (std::size_t i = 0; i < n; ++i) slot.v[i] += src[i];
  }

  Tensor<T>& grad_slot(std::vector<Tensor<T>>& grads, NodeId id) {
    if (grads[id].size() == 0) grads[id] = Tensor<T>(nodes_[id].value.dims, T(0));
    return grads[id];
  }

  void propagate(NodeId id, std::vector<Tensor<T>>& grads) {
    Node& n = nodes_[id];
    const Tensor<T>& g = grads[id];
    switch (n.kind) {
      case OpKind::constant:
      case OpKind::parameter:
        break;

      case OpKind::conv2d: {
        const Tensor<T>& x = nodes_[n.inputs[0]].value;
        const Tensor<T>& w = nodes_[n.inputs[1]].value;
        const std::uint32_t kh = w.dims[0], kw = w.dims[1], cin = w.dims[2], cout = w.dims[3];
        const std::uint32_t h = x.h(), wd = x.w();
        MatRM col;
        im2col(x, kh, kw, col);  // rebuilt instead of stored
        Eigen::Map<const MatRM> gm(g.v.data(), std::size_t(h) * wd, cout);

        // Fixed-order reduction: a vectorized column sum reassociates with the
        // buffer's alignment, which breaks bitwise run-to-run repeats.
        Tensor<T>& gb = grad_slot(grads, n.inputs[2]);
        for (std::size_t row = 0; row < std::size_t(h) * wd; ++row)
          for (std::uint32_t ch = 0; ch < cout; ++ch)
            gb.v[ch] += g.v[row * cout + ch];

        Tensor<T>& gw = grad_slot(grads, n.inputs[1]);
        Eigen::Map<MatRM> gwm(gw.v.data(), std::size_t(kh) * kw * cin, cout);
        gwm.noalias() += col.transpose() * gm;

        Eigen::Map<const MatRM> wm(w.v.data(), std::size_t(kh) * kw * cin, cout);
        MatRM gcol = gm * wm.transpose();
        Tensor<T>& gx = grad_slot(grads, n.inputs[0]);
        const int ph = int(kh) / 2, pw = int(kw) / 2;
        for (std::uint32_t r = 0; r < h; ++r)
          for (std::uint32_t c = 0; c < wd; ++c) {
            const std::size_t row = std::size_t(r) * wd + c;
            for (std::uint32_t dy = 0; dy < kh; ++dy) {
              const int sr = int(r) + int(dy) - ph;
              if (sr < 0 || sr >= int(h)) continue;
              for (std::uint32_t dx = 0; dx < kw; ++dx) {
                const int sc = int(c) + int(dx) - pw;
                if (sc < 0 || sc >= int(wd)) continue;
                const T* src = gcol.row(row).data() + (std::size_t(dy) * kw + dx) * cin;
                T* dst = &gx.at(std::uint32_t(sr), std::uint32_t(sc), 0);
                for (std::uint32_t ch = 0; ch < cin; ++ch) dst[ch] += src[ch];
              }
            }
          }
        break;
      }

      case OpKind::circ_conv: {
        // out = crop(x (*) K~). grad_x = corr(pad(g), K~); grad_K~ = corr(pad(g), x).
        const Tensor<T>& x = nodes_[n.inputs[0]].value;
        const Tensor<T>& k = nodes_[n.inputs[1]].value;
        Tensor<T> gp = detail::pad2(g);
        auto gs = detail::spectra(gp);
        auto px = detail::mul_conj_spectra(gs, *n.k_spec);
        Tensor<T> gx = detail::inverse_spectra(px, gp.h(), gp.w(), gp.c());
        accumulate(grads[n.inputs[0]], x.dims, gx.v.data(), gx.v.size());

        auto pk = detail::mul_conj_spectra(gs, *n.x_spec);
        Tensor<T> gkemb = detail::inverse_spectra(pk, gp.h(), gp.w(), gp.c());
        Tensor<T> gk = detail::unembed_kernel(gkemb, k.h(), k.w());
        accumulate(grads[n.inputs[1]], k.dims, gk.v.data(), gk.v.size());
        break;
      }

      case OpKind::circ_corr: {
        // out = corr(pad(y), K~). grad_y = crop(g (*) K~); grad_K~ = corr(pad(y), g).
        const Tensor<T>& y = nodes_[n.inputs[0]].value;
        const Tensor<T>& k = nodes_[n.inputs[1]].value;
        auto gs = detail::spectra(g);
        auto py = detail::mul_spectra(gs, *n.k_spec);
        Tensor<T> gy_full = detail::inverse_spectra(py, g.h(), g.w(), g.c());
        Tensor<T> gy = detail::crop_center(gy_full);
        accumulate(grads[n.inputs[0]], y.dims, gy.v.data(), gy.v.size());

        auto pk = detail::mul_conj_spectra(*n.x_spec, gs);
        Tensor<T> gkemb = detail::inverse_spectra(pk, g.h(), g.w(), g.c());
        Tensor<T> gk = detail::unembed_kernel(gkemb, k.h(), k.w());
        accumulate(grads[n.inputs[1]], k.dims, gk.v.data(), gk.v.size());
        break;
      }

      case OpKind::crop: {
        Tensor<T> gp = detail::pad2(g);
        accumulate(grads[n.inputs[0]], gp.dims, gp.v.data(), gp.v.size());
        break;
      }

      case OpKind::pad: {
        Tensor<T> gc = detail::crop_center(g);
        accumulate(grads[n.inputs[0]], gc.dims, gc.v.data(), gc.v.size());
        break;
      }

      case OpKind::concat: {
        std::uint32_t ch0 = 0;
        for (NodeId in : n.inputs) {
          const Tensor<T>& v = nodes_[in].value;
          Tensor<T>& gi = grad_slot(grads, in);
          for (std::uint32_t r = 0; r < v.h(); ++r)
            for (std::uint32_t col = 0; col < v.w(); ++col)
              for (std::uint32_t ch = 0; ch < v.c(); ++ch)
                gi.at(r, col, ch) += g.at(r, col, ch0 + ch);
          ch0 += v.c();
        }
        break;
      }

      case OpKind::slice: {
        Tensor<T>& gi = grad_slot(grads, n.inputs[0]);
        for (std::uint32_t r = 0; r < g.h(); ++r)
          for (std::uint32_t col = 0; col < g.w(); ++col)
            for (std::uint32_t ch = 0; ch < g.c(); ++ch)
              gi.at(r, col, n.a0 + ch) += g.at(r, col, ch);
        break;
      }

      case OpKind::add:
        accumulate(grads[n.inputs[0]], g.dims, g.v.data(), g.v.size());
        accumulate(grads[n.inputs[1]], g.dims, g.v.data(), g.v.size());
        break;

      case OpKind::scale: {
        Tensor<T>& gi = grad_slot(grads, n.inputs[0]);
        for (std::size_t i = 0; i < g.v.size(); ++i) gi.v[i] += n.alpha * g.v[i];
        break;
      }

      case OpKind::leaky_relu: {
        const Tensor<T>& x = nodes_[n.inputs[0]].value;
        Tensor<T>& gi = grad_slot(grads, n.inputs[0]);
        for (std::size_t i = 0; i < g.v.size(); ++i)
          gi.v[i] += (x.v[i] >= T(0) ? T(1) : n.alpha) * g.v[i];
        break;
      }

      case OpKind::avg_pool2: {
        Tensor<T>& gi = grad_slot(grads, n.inputs[0]);
        for (std::uint32_t r = 0; r < g.h(); ++r)
          for (std::uint32_t col = 0; col < g.w(); ++col)
            for (std::uint32_t ch = 0; ch < g.c(); ++ch) {
              const T q = g.at(r, col, ch) / T(4);
              gi.at(2 * r, 2 * col, ch) += q;
              gi.at(2 * r, 2 * col + 1, ch) += q;
              gi.at(2 * r + 1, 2 * col, ch) += q;
              gi.at(2 * r + 1, 2 * col + 1, ch) += q;
            }
        break;
      }

      case OpKind::upsample2: {
        Tensor<T>& gi = grad_slot(grads, n.inputs[0]);
        for (std::uint32_t r = 0; r < gi.h(); ++r)
          for (std::uint32_t col = 0; col < gi.w(); ++col)
            for (std::uint32_t ch = 0; ch < gi.c(); ++ch)
              gi.at(r, col, ch) += g.at(2 * r, 2 * col, ch) + g.at(2 * r, 2 * col + 1, ch) +
                                   g.at(2 * r + 1, 2 * col, ch) + g.at(2 * r + 1, 2 * col + 1, ch);
        break;
      }

      case OpKind::weighted_sum: {
        Tensor<T>& gi = grad_slot(grads, n.inputs[0]);
        const T s = g.v[0];
        for (std::size_t i = 0; i < gi.v.size(); ++i) gi.v[i] += s * n.aux.v[i];
        break;
      }

      case OpKind::mse: {
        const Tensor<T>& a = nodes_[n.inputs[0]].value;
        const Tensor<T>& b = nodes_[n.inputs[1]].value;
        const T s = g.v[0] * T(2) / T(double(a.v.size()));
        Tensor<T>& ga = grad_slot(grads, n.inputs[0]);
        Tensor<T>& gb = grad_slot(grads, n.inputs[1]);
        for (std::size_t i = 0; i < a.v.size(); ++i) {
          const T d = a.v[i] - b.v[i];
          ga.v[i] += s * d;
          gb.v[i] -= s * d;
        }
        break;
      }
    }
  }
};

}  // namespace lensless
