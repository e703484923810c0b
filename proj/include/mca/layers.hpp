#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mca/batchnorm.hpp"
#include "mca/ops.hpp"

namespace mca {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

// Convolution layer holding its weight (OxCxKhxKw) and bias (O).
struct Conv2d {
  Tensor weight, bias;
  std::size_t stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k,
         std::mt19937_64& rng, std::size_t stride_ = 1, std::size_t pad_ = 0)
      : stride(stride_), pad(pad_) {
    weight = Tensor::randn_fanin({out_ch, in_ch, k, k}, in_ch * k * k, rng);
    bias = Tensor::zeros({out_ch}, true);
  }

  Tensor forward(const Tensor& x) const {
    return conv2d(x, weight, bias, stride, pad);
  }

  void collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

struct BatchNorm2d {
  Tensor gamma, beta;
  // Running stats live alongside the learnable parameters and are part of
  // the checkpoint.
  Tensor running_mean, running_var;
  real momentum = real(0.1);
  real eps = real(1e-5);
  bool training = true;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels) {
    gamma = Tensor::filled({channels}, real(1), true);
    beta = Tensor::zeros({channels}, true);
    running_mean = Tensor::zeros({channels});
    running_var = Tensor::filled({channels}, real(1));
  }

  Tensor forward(const Tensor& x) {
    return batchnorm2d(x, gamma, beta, running_mean.data(),
                       running_var.data(), training, momentum, eps);
  }

  void collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
    out.push_back({prefix + ".running_mean", running_mean});
    out.push_back({prefix + ".running_var", running_var});
  }
};

// conv -> BN -> ReLU, the unit every block here is assembled from.
struct ConvBnRelu {
  Conv2d conv;
  BatchNorm2d bn;
  bool relu_after = true;

  ConvBnRelu() = default;
  ConvBnRelu(std::size_t in_ch, std::size_t out_ch, std::size_t k,
             std::mt19937_64& rng, std::size_t stride = 1, std::size_t pad = 0,
             bool relu_after_ = true)
      : conv(in_ch, out_ch, k, rng, stride, pad),
        bn(out_ch),
        relu_after(relu_after_) {}

  Tensor forward(const Tensor& x) {
    Tensor y = bn.forward(conv.forward(x));
    return relu_after ? relu(y) : y;
  }

  void set_training(bool t) { bn.training = t; }

  void collect(const std::string& prefix, ParamList& out) {
    conv.collect(prefix + ".conv", out);
    bn.collect(prefix + ".bn", out);
  }
};

inline ParamList trainable_only(const ParamList& params) {
  ParamList out;
  for (const auto& p : params)
    if (p.tensor.requires_grad()) out.push_back(p);
  return out;
}

inline std::size_t total_param_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params)
    if (p.tensor.requires_grad()) n += p.tensor.numel();
  return n;
}

}  // namespace mca
