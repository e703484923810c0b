#pragma once

#include <cmath>
#include <vector>

#include "mca/ops.hpp"

namespace mca {

// Per-channel batch normalization over NxCxHxW. Training mode uses batch
// statistics and updates the running buffers in place; eval mode reads the
// running buffers. Epsilon guards zero-variance channels.
inline Tensor batchnorm2d(const Tensor& input, const Tensor& gamma,
                          const Tensor& beta, std::vector<real>& running_mean,
                          std::vector<real>& running_var, bool training,
                          real momentum = real(0.1), real eps = real(1e-5)) {
  const Shape& s = input.shape();
  MCA_CHECK(s.size() == 4, "batchnorm2d: input must be NxCxHxW, got ",
            shape_str(s));
  std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  MCA_CHECK(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
            "batchnorm2d: affine parameters must have shape [", c, "]");
  MCA_CHECK(running_mean.size() == c && running_var.size() == c,
            "batchnorm2d: running stats size mismatch");
  std::size_t m = n * h * w;
  if (training)
    MCA_CHECK(m >= 2, "batchnorm2d: need N*H*W >= 2 in training mode, got ", m);

  const auto& x = input.data();
  std::vector<real> mean(c), invstd(c);
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      real acc = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const real* xp = &x[(b * c + ch) * h * w];
        for (std::size_t i = 0; i < h * w; ++i) acc += xp[i];
      }
      real mu = acc / real(m);
      real vacc = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const real* xp = &x[(b * c + ch) * h * w];
        for (std::size_t i = 0; i < h * w; ++i) {
          real d = xp[i] - mu;
          vacc += d * d;
        }
      }
      real var = vacc / real(m);
      mean[ch] = mu;
      invstd[ch] = real(1) / std::sqrt(var + eps);
      running_mean[ch] = (real(1) - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] = (real(1) - momentum) * running_var[ch] + momentum * var;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      invstd[ch] = real(1) / std::sqrt(running_var[ch] + eps);
    }
  }

  std::vector<real> out(x.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::size_t off = (b * c + ch) * h * w;
      real g = gamma.at(ch), bt = beta.at(ch);
      real mu = mean[ch], is = invstd[ch];
      for (std::size_t i = 0; i < h * w; ++i)
        out[off + i] = g * (x[off + i] - mu) * is + bt;
    }

  auto xi = input.node_ptr();
  auto gi = gamma.node_ptr();
  auto bi = beta.node_ptr();
  auto bwd = [xi, gi, bi, mean = std::move(mean), invstd = std::move(invstd),
              training, n, c, h, w](detail::Node& outn) {
    std::size_t m = n * h * w;
    const auto& go = outn.grad;
    const auto& x = xi->data;
    for (std::size_t ch = 0; ch < c; ++ch) {
      real mu = mean[ch], is = invstd[ch], g = gi->data[ch];
      real sum_gy = 0, sum_gy_xhat = 0;
      for (std::size_t b = 0; b < n; ++b) {
        std::size_t off = (b * c + ch) * h * w;
        for (std::size_t i = 0; i < h * w; ++i) {
          real xhat = (x[off + i] - mu) * is;
          sum_gy += go[off + i];
          sum_gy_xhat += go[off + i] * xhat;
        }
      }
      if (detail::on_grad_path(*gi)) gi->ensure_grad()[ch] += sum_gy_xhat;
      if (detail::on_grad_path(*bi)) bi->ensure_grad()[ch] += sum_gy;
      if (detail::on_grad_path(*xi)) {
        auto& gx = xi->ensure_grad();
        if (training) {
          for (std::size_t b = 0; b < n; ++b) {
            std::size_t off = (b * c + ch) * h * w;
            for (std::size_t i = 0; i < h * w; ++i) {
              real xhat = (x[off + i] - mu) * is;
              gx[off + i] += g * is / real(m) *
                             (real(m) * go[off + i] - sum_gy -
                              xhat * sum_gy_xhat);
            }
          }
        } else {
          for (std::size_t b = 0; b < n; ++b) {
            std::size_t off = (b * c + ch) * h * w;
            for (std::size_t i = 0; i < h * w; ++i)
              gx[off + i] += go[off + i] * g * is;
          }
        }
      }
    }
  };
  return detail::make_result(s, std::move(out), "batchnorm2d",
                             {input, gamma, beta}, bwd);
}

}  // namespace mca
