#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mca/layers.hpp"

namespace mca {

enum class AttentionMode { Softmax, Crf };

// Single-channel spatial attention map tied to the resolution it was
// generated from. Softmax maps sum to 1 per batch item; CRF maps are
// sigmoid outputs, strictly inside (0,1). A fused multi-resolution map is
// a raw sum of per-resolution maps and may exceed 1.
struct AttentionMap {
  Tensor values;  // Nx1xHxW
  AttentionMode mode = AttentionMode::Crf;
  std::size_t source_resolution = 0;
  bool fused = false;
};

struct CRFSettings {
  std::size_t kernel_extent = 3;  // spatial correlation kernel, odd
  std::size_t steps = 3;          // mean-field recursion steps after the init
  // Re-add the unary term every step (the mean-field update with the unary
  // potential kept inside the sigmoid) instead of the pure recursive
  // convolution form.
  bool include_unary_each_step = false;

  void validate() const {
    MCA_CHECK(steps >= 1, "CRF settings: steps must be >= 1");
    MCA_CHECK(kernel_extent % 2 == 1, "CRF settings: kernel extent must be "
              "odd, got ", kernel_extent);
  }
};

// 1x1 channel-mixing convolution producing the summarized feature map s.
// The activation g is the identity so the unary term can go negative and
// sigmoid attention can fall below 0.5.
struct Summarizer {
  Conv2d conv;

  Summarizer() = default;
  Summarizer(std::size_t in_ch, std::mt19937_64& rng)
      : conv(in_ch, 1, 1, rng) {}

  Tensor forward(const Tensor& f) const { return conv.forward(f); }

  void collect(const std::string& prefix, ParamList& out) {
    conv.collect(prefix, out);
  }
};

inline AttentionMap softmax_attention(const Tensor& s) {
  AttentionMap map;
  map.values = spatial_softmax(s);
  map.mode = AttentionMode::Softmax;
  map.source_resolution = s.dim(2);
  return map;
}

// Mean-field CRF attention. The spatial kernel is shared across steps:
//   unary = W^k * s
//   Phi_0 = sigmoid(unary)
//   Phi_t = sigmoid(W^k * Phi_{t-1})            (recursive form)
//   Phi_t = sigmoid(unary + W^k * Phi_{t-1})    (unary-inclusive form)
// Differentiable through every step.
inline AttentionMap crf_attention(const Tensor& s, const CRFSettings& settings,
                                  const Conv2d& kernel) {
  settings.validate();
  MCA_CHECK(kernel.weight.dim(2) == settings.kernel_extent,
            "crf_attention: kernel tensor extent ", kernel.weight.dim(2),
            " does not match settings extent ", settings.kernel_extent);
  std::size_t pad = settings.kernel_extent / 2;
  auto convolve = [&](const Tensor& t) {
    return conv2d(t, kernel.weight, kernel.bias, 1, pad);
  };
  Tensor unary = convolve(s);
  Tensor phi = sigmoid(unary);
  for (std::size_t t = 1; t <= settings.steps; ++t) {
    Tensor pre = convolve(phi);
    if (settings.include_unary_each_step) pre = add(pre, unary);
    phi = sigmoid(pre);
  }
  AttentionMap map;
  map.values = phi;
  map.mode = AttentionMode::Crf;
  map.source_resolution = s.dim(2);
  return map;
}

// Reweights features by the attention map, channel-wise.
inline Tensor apply_attention(const Tensor& f, const AttentionMap& map) {
  return hadamard_broadcast(f, map.values);
}

// Attention generator for one resolution: summarize then normalize, with
// either the spatial softmax or the CRF recursion.
struct AttentionHead {
  Summarizer summarize;
  Conv2d crf_kernel;
  CRFSettings crf;
  AttentionMode mode = AttentionMode::Crf;

  AttentionHead() = default;
  AttentionHead(std::size_t in_ch, AttentionMode mode_,
                const CRFSettings& crf_, std::mt19937_64& rng)
      : summarize(in_ch, rng),
        crf_kernel(1, 1, crf_.kernel_extent, rng, 1, crf_.kernel_extent / 2),
        crf(crf_),
        mode(mode_) {}

  AttentionMap forward(const Tensor& f) const {
    Tensor s = summarize.forward(f);
    return mode == AttentionMode::Softmax ? softmax_attention(s)
                                          : crf_attention(s, crf, crf_kernel);
  }

  void collect(const std::string& prefix, ParamList& out) {
    summarize.collect(prefix + ".summarize", out);
    if (mode == AttentionMode::Crf)
      crf_kernel.collect(prefix + ".crf_kernel", out);
  }
};

struct MultiResolutionResult {
  AttentionMap fused;       // raw sum over resolutions, not renormalized
  Tensor refined;           // h1_att = f * fused
  std::vector<AttentionMap> per_resolution;
};

// One attention head per rung of the hourglass feature ladder. Maps are
// generated at their native resolution, upsampled to the top resolution by
// repeated 2x nearest steps, and summed without renormalization.
struct MultiResolutionAttention {
  std::vector<AttentionHead> heads;  // lowest resolution first
  std::vector<std::size_t> resolutions;

  MultiResolutionAttention() = default;
  MultiResolutionAttention(const std::vector<std::size_t>& resolutions_,
                           std::size_t channels, AttentionMode mode,
                           const CRFSettings& crf, std::mt19937_64& rng)
      : resolutions(resolutions_) {
    MCA_CHECK(!resolutions.empty(), "multi-resolution attention: empty ladder");
    for (std::size_t i = 1; i < resolutions.size(); ++i)
      MCA_CHECK(resolutions[i] == 2 * resolutions[i - 1],
                "multi-resolution attention: ladder must double, got ",
                resolutions[i - 1], " -> ", resolutions[i]);
    for (std::size_t i = 0; i < resolutions.size(); ++i)
      heads.emplace_back(channels, mode, crf, rng);
  }

  MultiResolutionResult forward(
      const std::vector<std::pair<std::size_t, Tensor>>& ladder,
      const Tensor& top_features) const {
    MCA_CHECK(ladder.size() == heads.size(),
              "multi-resolution attention: ladder has ", ladder.size(),
              " rungs, expected ", heads.size());
    std::size_t top = resolutions.back();
    MultiResolutionResult out;
    Tensor fused;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      MCA_CHECK(ladder[i].first == resolutions[i],
                "multi-resolution attention: rung ", i, " has resolution ",
                ladder[i].first, ", expected ", resolutions[i]);
      AttentionMap map = heads[i].forward(ladder[i].second);
      out.per_resolution.push_back(map);
      Tensor up = map.values;
      for (std::size_t r = resolutions[i]; r < top; r *= 2)
        up = upsample_nearest_2x(up);
      fused = fused.defined() ? add(fused, up) : up;
    }
    out.fused.values = fused;
    out.fused.mode = heads.front().mode;
    out.fused.source_resolution = top;
    out.fused.fused = ladder.size() > 1;
    out.refined = hadamard_broadcast(top_features, fused);
    return out;
  }

  void collect(const std::string& prefix, ParamList& out) {
    for (std::size_t i = 0; i < heads.size(); ++i)
      heads[i].collect(prefix + ".r" + std::to_string(resolutions[i]), out);
  }
};

// Second-pass holistic refinement: a fresh attention map generated from the
// already-reweighted feature, applied on top of it.
struct RefineAttention {
  AttentionHead head;

  RefineAttention() = default;
  RefineAttention(std::size_t channels, AttentionMode mode,
                  const CRFSettings& crf, std::mt19937_64& rng)
      : head(channels, mode, crf, rng) {}

  std::pair<AttentionMap, Tensor> forward(const Tensor& h1_att) const {
    AttentionMap refined_map = head.forward(h1_att);
    return {refined_map, apply_attention(h1_att, refined_map)};
  }

  void collect(const std::string& prefix, ParamList& out) {
    head.collect(prefix, out);
  }
};

struct PartAttentionResult {
  std::vector<AttentionMap> part_maps;   // Phi_p
  std::vector<Tensor> part_features;     // h_p_att
  Tensor heatmaps;                       // NxPxHxW, stacked over parts
};

// Per-part attention: each body part owns its summarizer, CRF kernel, and
// 1x1 classifier; nothing is shared across parts.
struct PartAttentionBank {
  std::vector<AttentionHead> heads;
  std::vector<Conv2d> classifiers;

  PartAttentionBank() = default;
  PartAttentionBank(std::size_t parts, std::size_t channels,
                    AttentionMode mode, const CRFSettings& crf,
                    std::mt19937_64& rng) {
    for (std::size_t p = 0; p < parts; ++p) {
      heads.emplace_back(channels, mode, crf, rng);
      classifiers.emplace_back(channels, 1, 1, rng);
    }
  }

  std::size_t parts() const { return heads.size(); }

  PartAttentionResult forward(const Tensor& h1_att) const {
    PartAttentionResult out;
    std::vector<Tensor> maps;
    for (std::size_t p = 0; p < parts(); ++p) {
      AttentionMap phi = heads[p].forward(h1_att);
      Tensor hp = apply_attention(h1_att, phi);
      Tensor yp = classifiers[p].forward(hp);  // Nx1xHxW
      out.part_maps.push_back(phi);
      out.part_features.push_back(hp);
      maps.push_back(yp);
    }
    out.heatmaps = concat_channels(maps);
    return out;
  }

  void collect(const std::string& prefix, ParamList& out) {
    for (std::size_t p = 0; p < parts(); ++p) {
      std::string pp = prefix + ".part" + std::to_string(p);
      heads[p].collect(pp + ".att", out);
      classifiers[p].collect(pp + ".cls", out);
    }
  }

 private:
  static Tensor concat_channels(const std::vector<Tensor>& maps) {
    std::size_t n = maps[0].dim(0), h = maps[0].dim(2), w = maps[0].dim(3);
    std::size_t p = maps.size();
    std::vector<real> out(n * p * h * w);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < p; ++c) {
        const auto& src = maps[c].data();
        std::copy(src.begin() + std::ptrdiff_t(b * h * w),
                  src.begin() + std::ptrdiff_t((b + 1) * h * w),
                  out.begin() + std::ptrdiff_t((b * p + c) * h * w));
      }
    std::vector<Tensor> inputs = maps;
    auto bwd = [maps, n, p, h, w](detail::Node& outn) {
      for (std::size_t c = 0; c < p; ++c) {
        auto* node = maps[c].node();
        if (!detail::on_grad_path(*node)) continue;
        auto& g = node->ensure_grad();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t i = 0; i < h * w; ++i)
            g[b * h * w + i] += outn.grad[(b * p + c) * h * w + i];
      }
    };
    std::vector<real> data = out;
    return detail::make_result({n, p, h, w}, std::move(data),
                               "concat_channels", inputs, bwd);
  }
};

}  // namespace mca
