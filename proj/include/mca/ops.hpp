#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "mca/tensor.hpp"

namespace mca {

namespace detail {

inline bool on_grad_path(const Node& n) {
  return n.requires_grad || static_cast<bool>(n.backward_fn);
}

inline void accumulate(Node& dst, const std::vector<real>& g) {
  auto& gd = dst.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) gd[i] += g[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

struct ConvGeom {
  std::size_t n, cin, h, w;      // input
  std::size_t cout, kh, kw;      // kernel
  std::size_t stride, pad;
  std::size_t oh, ow;            // output
};

inline ConvGeom conv_geometry(const Shape& in, const Shape& weight,
                              std::size_t stride, std::size_t pad) {
  MCA_CHECK(in.size() == 4, "conv2d: input must be NxCxHxW, got ",
            shape_str(in));
  MCA_CHECK(weight.size() == 4, "conv2d: weight must be OxCxKhxKw, got ",
            shape_str(weight));
  MCA_CHECK(in[1] == weight[1], "conv2d: input channels ", in[1],
            " do not match kernel channels ", weight[1], " (input ",
            shape_str(in), ", weight ", shape_str(weight), ")");
  ConvGeom g;
  g.n = in[0]; g.cin = in[1]; g.h = in[2]; g.w = in[3];
  g.cout = weight[0]; g.kh = weight[2]; g.kw = weight[3];
  g.stride = stride; g.pad = pad;
  MCA_CHECK(g.h + 2 * pad >= g.kh && g.w + 2 * pad >= g.kw,
            "conv2d: kernel ", g.kh, "x", g.kw, " larger than padded input ",
            shape_str(in));
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

inline Tensor conv2d(const Tensor& input, const Tensor& weight,
                     const Tensor& bias, std::size_t stride = 1,
                     std::size_t pad = 0) {
  ConvGeom g = conv_geometry(input.shape(), weight.shape(), stride, pad);
  MCA_CHECK(bias.shape() == Shape{g.cout}, "conv2d: bias shape ",
            shape_str(bias.shape()), " does not match ", g.cout,
            " output channels");

  const auto& x = input.data();
  const auto& wv = weight.data();
  const auto& bv = bias.data();
  std::vector<real> out(g.n * g.cout * g.oh * g.ow);

  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.cout; ++o) {
      real* op = &out[((n * g.cout + o) * g.oh) * g.ow];
      std::fill(op, op + g.oh * g.ow, bv[o]);
      for (std::size_t c = 0; c < g.cin; ++c) {
        const real* xp = &x[((n * g.cin + c) * g.h) * g.w];
        const real* wp = &wv[((o * g.cin + c) * g.kh) * g.kw];
        for (std::size_t kh = 0; kh < g.kh; ++kh) {
          for (std::size_t kw = 0; kw < g.kw; ++kw) {
            real wk = wp[kh * g.kw + kw];
            if (wk == real(0)) continue;
            for (std::size_t oh = 0; oh < g.oh; ++oh) {
              std::ptrdiff_t ih = std::ptrdiff_t(oh * g.stride + kh) -
                                  std::ptrdiff_t(g.pad);
              if (ih < 0 || ih >= std::ptrdiff_t(g.h)) continue;
              real* orow = op + oh * g.ow;
              const real* xrow = xp + std::size_t(ih) * g.w;
              for (std::size_t ow = 0; ow < g.ow; ++ow) {
                std::ptrdiff_t iw = std::ptrdiff_t(ow * g.stride + kw) -
                                    std::ptrdiff_t(g.pad);
                if (iw < 0 || iw >= std::ptrdiff_t(g.w)) continue;
                orow[ow] += wk * xrow[iw];
              }
            }
          }
        }
      }
    }
  }

  auto xi = input.node_ptr();
  auto wi = weight.node_ptr();
  auto bi = bias.node_ptr();
  auto bwd = [g, xi, wi, bi](detail::Node& outn) {
    const auto& go = outn.grad;
    const auto& x = xi->data;
    const auto& wv = wi->data;
    if (detail::on_grad_path(*bi)) {
      auto& gb = bi->ensure_grad();
      for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t o = 0; o < g.cout; ++o) {
          const real* gp = &go[((n * g.cout + o) * g.oh) * g.ow];
          real acc = 0;
          for (std::size_t i = 0; i < g.oh * g.ow; ++i) acc += gp[i];
          gb[o] += acc;
        }
    }
    const bool need_w = detail::on_grad_path(*wi);
    const bool need_x = detail::on_grad_path(*xi);
    if (!need_w && !need_x) return;
    if (need_w) wi->ensure_grad();
    if (need_x) xi->ensure_grad();
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t o = 0; o < g.cout; ++o) {
        const real* gp = &go[((n * g.cout + o) * g.oh) * g.ow];
        for (std::size_t c = 0; c < g.cin; ++c) {
          const real* xp = &x[((n * g.cin + c) * g.h) * g.w];
          const real* wp = &wv[((o * g.cin + c) * g.kh) * g.kw];
          real* gxp = need_x ? &xi->grad[((n * g.cin + c) * g.h) * g.w] : nullptr;
          real* gwp = need_w ? &wi->grad[((o * g.cin + c) * g.kh) * g.kw] : nullptr;
          for (std::size_t kh = 0; kh < g.kh; ++kh) {
            for (std::size_t kw = 0; kw < g.kw; ++kw) {
              real wk = wp[kh * g.kw + kw];
              real gw_acc = 0;
              for (std::size_t oh = 0; oh < g.oh; ++oh) {
                std::ptrdiff_t ih = std::ptrdiff_t(oh * g.stride + kh) -
                                    std::ptrdiff_t(g.pad);
                if (ih < 0 || ih >= std::ptrdiff_t(g.h)) continue;
                const real* grow = gp + oh * g.ow;
                const real* xrow = xp + std::size_t(ih) * g.w;
                real* gxrow = need_x ? gxp + std::size_t(ih) * g.w : nullptr;
                for (std::size_t ow = 0; ow < g.ow; ++ow) {
                  std::ptrdiff_t iw = std::ptrdiff_t(ow * g.stride + kw) -
                                      std::ptrdiff_t(g.pad);
                  if (iw < 0 || iw >= std::ptrdiff_t(g.w)) continue;
                  real gv = grow[ow];
                  if (need_w) gw_acc += gv * xrow[iw];
                  if (need_x) gxrow[iw] += gv * wk;
                }
              }
              if (need_w) gwp[kh * g.kw + kw] += gw_acc;
            }
          }
        }
      }
    }
  };
  return detail::make_result({g.n, g.cout, g.oh, g.ow}, std::move(out),
                             "conv2d", {input, weight, bias}, bwd);
}

// ---------------------------------------------------------------------------
// Pooling / upsampling

inline Tensor maxpool2x2(const Tensor& input) {
  const Shape& s = input.shape();
  MCA_CHECK(s.size() == 4, "maxpool2x2: input must be NxCxHxW, got ",
            shape_str(s));
  MCA_CHECK(s[2] % 2 == 0 && s[3] % 2 == 0,
            "maxpool2x2: odd spatial extent ", shape_str(s));
  std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  std::size_t oh = h / 2, ow = w / 2;
  const auto& x = input.data();
  std::vector<real> out(n * c * oh * ow);
  // Argmax per window; ties go to the first element in row-major order.
  std::vector<std::uint32_t> argmax(out.size());
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const real* xp = &x[nc * h * w];
    real* op = &out[nc * oh * ow];
    std::uint32_t* ap = &argmax[nc * oh * ow];
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t base = (2 * i) * w + 2 * j;
        std::size_t idx[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = idx[0];
        for (int k = 1; k < 4; ++k)
          if (xp[idx[k]] > xp[best]) best = idx[k];
        op[i * ow + j] = xp[best];
        ap[i * ow + j] = std::uint32_t(best);
      }
    }
  }
  auto xi = input.node_ptr();
  auto bwd = [xi, argmax = std::move(argmax), n, c, h, w, oh,
              ow](detail::Node& outn) {
    if (!detail::on_grad_path(*xi)) return;
    auto& gx = xi->ensure_grad();
    const auto& go = outn.grad;
    for (std::size_t nc = 0; nc < n * c; ++nc) {
      real* gxp = &gx[nc * h * w];
      const real* gop = &go[nc * oh * ow];
      const std::uint32_t* ap = &argmax[nc * oh * ow];
      for (std::size_t i = 0; i < oh * ow; ++i) gxp[ap[i]] += gop[i];
    }
  };
  return detail::make_result({n, c, oh, ow}, std::move(out), "maxpool2x2",
                             {input}, bwd);
}

inline Tensor upsample_nearest_2x(const Tensor& input) {
  const Shape& s = input.shape();
  MCA_CHECK(s.size() == 4, "upsample_nearest_2x: input must be NxCxHxW, got ",
            shape_str(s));
  std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  const auto& x = input.data();
  std::vector<real> out(n * c * 4 * h * w);
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const real* xp = &x[nc * h * w];
    real* op = &out[nc * 4 * h * w];
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        real v = xp[i * w + j];
        std::size_t o0 = (2 * i) * (2 * w) + 2 * j;
        op[o0] = v;
        op[o0 + 1] = v;
        op[o0 + 2 * w] = v;
        op[o0 + 2 * w + 1] = v;
      }
  }
  auto xi = input.node_ptr();
  auto bwd = [xi, n, c, h, w](detail::Node& outn) {
    if (!detail::on_grad_path(*xi)) return;
    auto& gx = xi->ensure_grad();
    const auto& go = outn.grad;
    for (std::size_t nc = 0; nc < n * c; ++nc) {
      real* gxp = &gx[nc * h * w];
      const real* gop = &go[nc * 4 * h * w];
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          std::size_t o0 = (2 * i) * (2 * w) + 2 * j;
          gxp[i * w + j] +=
              gop[o0] + gop[o0 + 1] + gop[o0 + 2 * w] + gop[o0 + 2 * w + 1];
        }
    }
  };
  return detail::make_result({n, c, 2 * h, 2 * w}, std::move(out),
                             "upsample_nearest_2x", {input}, bwd);
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor relu(const Tensor& input) {
  const auto& x = input.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] > real(0) ? x[i] : real(0);
  auto xi = input.node_ptr();
  auto bwd = [xi](detail::Node& outn) {
    if (!detail::on_grad_path(*xi)) return;
    auto& gx = xi->ensure_grad();
    // Subgradient at 0 is taken as 0.
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xi->data[i] > real(0)) gx[i] += outn.grad[i];
  };
  return detail::make_result(input.shape(), std::move(out), "relu", {input},
                             bwd);
}

inline Tensor sigmoid(const Tensor& input) {
  const auto& x = input.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = real(1) / (real(1) + std::exp(-x[i]));
  auto xi = input.node_ptr();
  auto bwd = [xi](detail::Node& outn) {
    if (!detail::on_grad_path(*xi)) return;
    auto& gx = xi->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      real y = outn.data[i];
      gx[i] += outn.grad[i] * y * (real(1) - y);
    }
  };
  return detail::make_result(input.shape(), std::move(out), "sigmoid", {input},
                             bwd);
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  MCA_CHECK(a.shape() == b.shape(), "add: shape mismatch ",
            shape_str(a.shape()), " vs ", shape_str(b.shape()));
  std::vector<real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.data()[i] + b.data()[i];
  auto ai = a.node_ptr();
  auto bi = b.node_ptr();
  auto bwd = [ai, bi](detail::Node& outn) {
    if (detail::on_grad_path(*ai)) detail::accumulate(*ai, outn.grad);
    if (detail::on_grad_path(*bi)) detail::accumulate(*bi, outn.grad);
  };
  return detail::make_result(a.shape(), std::move(out), "add", {a, b}, bwd);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  MCA_CHECK(a.shape() == b.shape(), "mul: shape mismatch ",
            shape_str(a.shape()), " vs ", shape_str(b.shape()));
  std::vector<real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.data()[i] * b.data()[i];
  auto ai = a.node_ptr();
  auto bi = b.node_ptr();
  auto bwd = [ai, bi](detail::Node& outn) {
    if (detail::on_grad_path(*ai)) {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += outn.grad[i] * bi->data[i];
    }
    if (detail::on_grad_path(*bi)) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += outn.grad[i] * ai->data[i];
    }
  };
  return detail::make_result(a.shape(), std::move(out), "mul", {a, b}, bwd);
}

inline Tensor scale(const Tensor& a, real k) {
  std::vector<real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * k;
  auto ai = a.node_ptr();
  auto bwd = [ai, k](detail::Node& outn) {
    if (!detail::on_grad_path(*ai)) return;
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += outn.grad[i] * k;
  };
  return detail::make_result(a.shape(), std::move(out), "scale", {a}, bwd);
}

// Channel-wise Hadamard product: every channel of `features` is scaled
// elementwise by the single-channel spatial `map`.
inline Tensor hadamard_broadcast(const Tensor& features, const Tensor& map) {
  const Shape& fs = features.shape();
  const Shape& ms = map.shape();
  MCA_CHECK(fs.size() == 4 && ms.size() == 4 && ms[1] == 1,
            "hadamard_broadcast: features NxCxHxW and map Nx1xHxW expected, "
            "got ", shape_str(fs), " and ", shape_str(ms));
  MCA_CHECK(fs[0] == ms[0] && fs[2] == ms[2] && fs[3] == ms[3],
            "hadamard_broadcast: spatial size mismatch ", shape_str(fs),
            " vs ", shape_str(ms));
  std::size_t n = fs[0], c = fs[1], hw = fs[2] * fs[3];
  std::vector<real> out(features.numel());
  for (std::size_t b = 0; b < n; ++b) {
    const real* mp = &map.data()[b * hw];
    for (std::size_t ch = 0; ch < c; ++ch) {
      const real* fp = &features.data()[(b * c + ch) * hw];
      real* op = &out[(b * c + ch) * hw];
      for (std::size_t i = 0; i < hw; ++i) op[i] = fp[i] * mp[i];
    }
  }
  auto fi = features.node_ptr();
  auto mi = map.node_ptr();
  auto bwd = [fi, mi, n, c, hw](detail::Node& outn) {
    if (detail::on_grad_path(*fi)) {
      auto& gf = fi->ensure_grad();
      for (std::size_t b = 0; b < n; ++b) {
        const real* mp = &mi->data[b * hw];
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t off = (b * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i)
            gf[off + i] += outn.grad[off + i] * mp[i];
        }
      }
    }
    if (detail::on_grad_path(*mi)) {
      auto& gm = mi->ensure_grad();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t off = (b * c + ch) * hw;
          const real* fp = &fi->data[off];
          for (std::size_t i = 0; i < hw; ++i)
            gm[b * hw + i] += outn.grad[off + i] * fp[i];
        }
      }
    }
  };
  return detail::make_result(fs, std::move(out), "hadamard_broadcast",
                             {features, map}, bwd);
}

// ---------------------------------------------------------------------------
// Reductions and losses

inline Tensor sum(const Tensor& a) {
  real acc = 0;
  for (real v : a.data()) acc += v;
  auto ai = a.node_ptr();
  auto bwd = [ai](detail::Node& outn) {
    if (!detail::on_grad_path(*ai)) return;
    auto& g = ai->ensure_grad();
    for (real& v : g) v += outn.grad[0];
  };
  return detail::make_result({1}, {acc}, "sum", {a}, bwd);
}

// Sum of squared differences over parts and locations, averaged over the
// batch dimension so the learning rate is batch-size independent.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  MCA_CHECK(pred.shape() == target.shape(), "mse_loss: shape mismatch ",
            shape_str(pred.shape()), " vs ", shape_str(target.shape()));
  MCA_CHECK(!pred.shape().empty(), "mse_loss: empty tensor");
  real inv_n = real(1) / real(pred.shape()[0]);
  real acc = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    real d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  acc *= inv_n;
  auto pi = pred.node_ptr();
  auto ti = target.node_ptr();
  auto bwd = [pi, ti, inv_n](detail::Node& outn) {
    real g0 = outn.grad[0];
    if (detail::on_grad_path(*pi)) {
      auto& g = pi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += g0 * real(2) * inv_n * (pi->data[i] - ti->data[i]);
    }
    if (detail::on_grad_path(*ti)) {
      auto& g = ti->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] -= g0 * real(2) * inv_n * (pi->data[i] - ti->data[i]);
    }
  };
  return detail::make_result({1}, {acc}, "mse_loss", {pred, target}, bwd);
}

// Softmax over all spatial locations per batch item (input Nx1xHxW),
// computed with max subtraction.
inline Tensor spatial_softmax(const Tensor& s) {
  const Shape& sh = s.shape();
  MCA_CHECK(sh.size() == 4 && sh[1] == 1,
            "spatial_softmax: Nx1xHxW expected, got ", shape_str(sh));
  std::size_t n = sh[0], hw = sh[2] * sh[3];
  std::vector<real> out(s.numel());
  for (std::size_t b = 0; b < n; ++b) {
    const real* sp = &s.data()[b * hw];
    real* op = &out[b * hw];
    real m = *std::max_element(sp, sp + hw);
    real z = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      op[i] = std::exp(sp[i] - m);
      z += op[i];
    }
    for (std::size_t i = 0; i < hw; ++i) op[i] /= z;
  }
  auto si = s.node_ptr();
  auto bwd = [si, n, hw](detail::Node& outn) {
    if (!detail::on_grad_path(*si)) return;
    auto& gs = si->ensure_grad();
    for (std::size_t b = 0; b < n; ++b) {
      const real* y = &outn.data[b * hw];
      const real* gy = &outn.grad[b * hw];
      real dot = 0;
      for (std::size_t i = 0; i < hw; ++i) dot += gy[i] * y[i];
      for (std::size_t i = 0; i < hw; ++i)
        gs[b * hw + i] += y[i] * (gy[i] - dot);
    }
  };
  return detail::make_result(sh, std::move(out), "spatial_softmax", {s}, bwd);
}

}  // namespace mca
