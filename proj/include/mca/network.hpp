#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mca/checkpoint.hpp"
#include "mca/config.hpp"
#include "mca/optim.hpp"

namespace mca {

struct StackOutput {
  Tensor heatmaps;  // NxPxhxw, present for every stack
  std::optional<AttentionMap> holistic_map;   // fused or single-resolution
  std::optional<AttentionMap> refined_map;    // second-pass holistic map
  std::vector<AttentionMap> part_maps;        // per part, when active
};

// Image feature stem: two stride halvings take the input down to heatmap
// resolution.
struct Stem {
  ConvBnRelu entry;       // 3x3 stride 2
  ResidualUnit widen;     // half channels -> full channels
  ResidualUnit settle;

  Stem() = default;
  Stem(std::size_t channels, std::mt19937_64& rng)
      : entry(3, std::max<std::size_t>(1, channels / 2), 3, rng, 2, 1),
        widen(std::max<std::size_t>(1, channels / 2), channels, rng),
        settle(channels, channels, rng) {}

  Tensor forward(const Tensor& images) {
    Tensor x = entry.forward(images);
    x = widen.forward(x);
    x = maxpool2x2(x);
    return settle.forward(x);
  }

  void set_training(bool t) {
    entry.set_training(t);
    widen.set_training(t);
    settle.set_training(t);
  }

  void collect(const std::string& prefix, ParamList& out) {
    entry.collect(prefix + ".entry", out);
    widen.collect(prefix + ".widen", out);
    settle.collect(prefix + ".settle", out);
  }
};

// One hourglass stack plus its attention stage and heatmap head.
struct Stack {
  Hourglass hourglass;
  ConvBnRelu post;                  // 1x1 after the hourglass
  bool use_attention = false;       // MS
  bool use_multi_resolution = false;
  bool is_part_stack = false;
  AttentionHead single_attention;   // MS without MR
  MultiResolutionAttention mra;     // MS with MR
  RefineAttention refine;           // holistic stacks
  PartAttentionBank bank;           // part stacks
  Conv2d classifier;                // shared 1x1 head, holistic stacks
  // inter-stack wiring
  bool has_forwarding = false;
  Conv2d remap_features, remap_heatmaps;

  void set_training(bool t) {
    hourglass.set_training(t);
    post.set_training(t);
  }
};

struct TrainMetrics {
  real total_loss = 0;
  std::vector<real> per_stack_loss;
  real grad_norm = 0;
};

class Network {
 public:
  explicit Network(const NetworkConfig& config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    std::size_t ch = config_.channels;
    auto ladder = config_.resolution_ladder();
    stem_ = Stem(ch, rng);
    BlockKind skip_kind = config_.hru ? BlockKind::HRU : BlockKind::Residual;
    std::size_t part_start = config_.effective_part_start();
    for (std::size_t s = 0; s < config_.stacks; ++s) {
      Stack st;
      st.hourglass = Hourglass(config_.hourglass_depth, ch, skip_kind, rng);
      st.post = ConvBnRelu(ch, ch, 1, rng);
      st.use_attention = config_.multi_semantics;
      st.use_multi_resolution = config_.multi_resolution;
      st.is_part_stack = config_.multi_semantics && (s + 1 >= part_start);
      if (st.use_attention) {
        if (st.use_multi_resolution)
          st.mra = MultiResolutionAttention(ladder, ch, config_.attention_mode,
                                            config_.crf, rng);
        else
          st.single_attention =
              AttentionHead(ch, config_.attention_mode, config_.crf, rng);
        if (st.is_part_stack)
          st.bank = PartAttentionBank(config_.parts, ch,
                                      config_.attention_mode, config_.crf, rng);
        else
          st.refine = RefineAttention(ch, config_.attention_mode, config_.crf,
                                      rng);
      }
      if (!st.is_part_stack) st.classifier = Conv2d(ch, config_.parts, 1, rng);
      st.has_forwarding = s + 1 < config_.stacks;
      if (st.has_forwarding) {
        st.remap_features = Conv2d(ch, ch, 1, rng);
        st.remap_heatmaps = Conv2d(config_.parts, ch, 1, rng);
      }
      stacks_.push_back(std::move(st));
    }
    rebuild_params();
  }

  const NetworkConfig& config() const { return config_; }

  void set_training(bool t) {
    training_ = t;
    stem_.set_training(t);
    for (auto& s : stacks_) s.set_training(t);
  }
  bool training() const { return training_; }

  ParamList& parameters() { return params_; }
  std::size_t parameter_count() const { return total_param_count(params_); }

  std::vector<StackOutput> forward(const Tensor& images) {
    const Shape& s = images.shape();
    MCA_CHECK(s.size() == 4 && s[1] == 3 && s[2] == config_.input_size &&
                  s[3] == config_.input_size,
              "forward: expected Nx3x", config_.input_size, "x",
              config_.input_size, " images, got ", shape_str(s));
    Tensor x = stem_.forward(images);
    std::vector<StackOutput> outputs;
    for (auto& st : stacks_) {
      StackOutput out;
      HourglassOutput hg = st.hourglass.forward(x);
      Tensor f = st.post.forward(hg.top);
      Tensor features_next = f;
      if (!st.use_attention) {
        out.heatmaps = st.classifier.forward(f);
      } else {
        Tensor h1;
        if (st.use_multi_resolution) {
          auto mr = st.mra.forward(hg.ladder, f);
          out.holistic_map = mr.fused;
          h1 = mr.refined;
        } else {
          AttentionMap phi = st.single_attention.forward(f);
          out.holistic_map = phi;
          h1 = apply_attention(f, phi);
        }
        if (st.is_part_stack) {
          auto part = st.bank.forward(h1);
          out.part_maps = part.part_maps;
          out.heatmaps = part.heatmaps;
          features_next = h1;
        } else {
          auto [phi2, h2] = st.refine.forward(h1);
          out.refined_map = phi2;
          out.heatmaps = st.classifier.forward(h2);
          features_next = h2;
        }
      }
      if (st.has_forwarding)
        x = add(add(x, st.remap_features.forward(features_next)),
                st.remap_heatmaps.forward(out.heatmaps));
      outputs.push_back(std::move(out));
    }
    return outputs;
  }

  // Intermediate supervision: every stack is scored against the same target.
  Tensor total_loss(const std::vector<StackOutput>& outputs,
                    const Tensor& target) const {
    MCA_CHECK(outputs.size() == config_.stacks, "total_loss: expected ",
              config_.stacks, " stack outputs, got ", outputs.size());
    Tensor loss;
    for (const auto& out : outputs) {
      MCA_CHECK(out.heatmaps.defined(), "total_loss: a stack is missing its "
                "heatmaps");
      Tensor l = mse_loss(out.heatmaps, target);
      loss = loss.defined() ? add(loss, l) : l;
    }
    return loss;
  }

  TrainMetrics train_step(const Tensor& images, const Tensor& target,
                          RMSprop& optimizer) {
    MCA_CHECK(training_, "train_step requires training mode");
    optimizer.zero_grad(params_);
    auto outputs = forward(images);
    TrainMetrics m;
    Tensor loss;
    for (const auto& out : outputs) {
      Tensor l = mse_loss(out.heatmaps, target);
      m.per_stack_loss.push_back(l.item());
      loss = loss.defined() ? add(loss, l) : l;
    }
    m.total_loss = loss.item();
    MCA_CHECK(std::isfinite(m.total_loss), "train_step: non-finite loss");
    loss.backward();
    m.grad_norm = grad_norm(params_);
    optimizer.step(params_);
    return m;
  }

  void save(const std::string& path) const {
    save_checkpoint(path, params_, config_.echo());
  }

  // Loads a checkpoint saved from the same architecture.
  void load(const std::string& path) { load_checkpoint(path, params_); }

 private:
  void rebuild_params() {
    params_.clear();
    stem_.collect("stem", params_);
    for (std::size_t s = 0; s < stacks_.size(); ++s) {
      auto& st = stacks_[s];
      std::string p = "stack" + std::to_string(s);
      st.hourglass.collect(p + ".hg", params_);
      st.post.collect(p + ".post", params_);
      if (st.use_attention) {
        if (st.use_multi_resolution)
          st.mra.collect(p + ".mra", params_);
        else
          st.single_attention.collect(p + ".att", params_);
        if (st.is_part_stack)
          st.bank.collect(p + ".partbank", params_);
        else
          st.refine.collect(p + ".refine", params_);
      }
      if (!st.is_part_stack) st.classifier.collect(p + ".cls", params_);
      if (st.has_forwarding) {
        st.remap_features.collect(p + ".remap_f", params_);
        st.remap_heatmaps.collect(p + ".remap_y", params_);
      }
    }
  }

  NetworkConfig config_;
  Stem stem_;
  std::vector<Stack> stacks_;
  ParamList params_;
  bool training_ = true;
};

}  // namespace mca
