#pragma once

#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "mca/layers.hpp"

namespace mca {

// Bottleneck residual unit: x + F(x) with
//   F = conv1x1 -> BN -> ReLU -> conv3x3 -> BN -> ReLU -> conv1x1 -> BN.
// The final conv is followed by BN only and the sum has no activation, so
// the identity path stays purely additive. When in and out channel counts
// differ, a 1x1 projection replaces the identity branch.
struct ResidualUnit {
  std::size_t in_channels = 0, out_channels = 0, mid_channels = 0;
  ConvBnRelu reduce, spatial;
  ConvBnRelu expand;          // relu_after = false
  bool has_projection = false;
  Conv2d projection;

  ResidualUnit() = default;
  ResidualUnit(std::size_t in_ch, std::size_t out_ch, std::mt19937_64& rng,
               std::size_t mid_ch = 0)
      : in_channels(in_ch),
        out_channels(out_ch),
        mid_channels(mid_ch ? mid_ch : std::max<std::size_t>(1, out_ch / 2)),
        reduce(in_ch, mid_channels, 1, rng),
        spatial(mid_channels, mid_channels, 3, rng, 1, 1),
        expand(mid_channels, out_ch, 1, rng, 1, 0, false),
        has_projection(in_ch != out_ch) {
    if (has_projection) projection = Conv2d(in_ch, out_ch, 1, rng);
  }

  Tensor residual_branch(const Tensor& x) {
    return expand.forward(spatial.forward(reduce.forward(x)));
  }

  Tensor forward(const Tensor& x) {
    MCA_CHECK(x.shape().size() == 4 && x.dim(1) == in_channels,
              "residual unit expects ", in_channels, " channels, got ",
              shape_str(x.shape()));
    Tensor identity = has_projection ? projection.forward(x) : x;
    return add(identity, residual_branch(x));
  }

  void set_training(bool t) {
    reduce.set_training(t);
    spatial.set_training(t);
    expand.set_training(t);
  }

  void collect(const std::string& prefix, ParamList& out) {
    reduce.collect(prefix + ".reduce", out);
    spatial.collect(prefix + ".spatial", out);
    expand.collect(prefix + ".expand", out);
    if (has_projection) projection.collect(prefix + ".proj", out);
  }
};

// Hourglass residual unit: three branches summed.
//   (A) identity
//   (B) the bottleneck residual branch above
//   (C) maxpool2x2 -> conv3x3 -> BN -> ReLU -> conv3x3 -> BN -> upsample2x
// Branch C halves the working resolution, which triples the effective
// receptive field relative to branch B (3x3 vs 10x10 on the input grid).
struct HourglassResidualUnit {
  ResidualUnit body;
  ConvBnRelu pooled1;
  ConvBnRelu pooled2;  // relu_after = false, matching branch B's last conv

  HourglassResidualUnit() = default;
  HourglassResidualUnit(std::size_t in_ch, std::size_t out_ch,
                        std::mt19937_64& rng)
      : body(in_ch, out_ch, rng),
        pooled1(in_ch, out_ch, 3, rng, 1, 1),
        pooled2(out_ch, out_ch, 3, rng, 1, 1, false) {}

  Tensor pooled_branch(const Tensor& x) {
    Tensor low = maxpool2x2(x);
    return upsample_nearest_2x(pooled2.forward(pooled1.forward(low)));
  }

  Tensor forward(const Tensor& x) {
    MCA_CHECK(x.shape().size() == 4, "HRU expects NxCxHxW input");
    MCA_CHECK(x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0,
              "HRU requires even spatial extent, got ", shape_str(x.shape()));
    return add(body.forward(x), pooled_branch(x));
  }

  void set_training(bool t) {
    body.set_training(t);
    pooled1.set_training(t);
    pooled2.set_training(t);
  }

  void collect(const std::string& prefix, ParamList& out) {
    body.collect(prefix + ".body", out);
    pooled1.collect(prefix + ".pooled1", out);
    pooled2.collect(prefix + ".pooled2", out);
  }
};

enum class BlockKind { Residual, HRU };

// One block slot in the hourglass: either a plain residual unit or an HRU.
struct Block {
  BlockKind kind = BlockKind::Residual;
  ResidualUnit res;
  HourglassResidualUnit hru;

  Block() = default;
  Block(BlockKind k, std::size_t in_ch, std::size_t out_ch,
        std::mt19937_64& rng)
      : kind(k) {
    if (kind == BlockKind::HRU)
      hru = HourglassResidualUnit(in_ch, out_ch, rng);
    else
      res = ResidualUnit(in_ch, out_ch, rng);
  }

  Tensor forward(const Tensor& x) {
    return kind == BlockKind::HRU ? hru.forward(x) : res.forward(x);
  }
  void set_training(bool t) {
    if (kind == BlockKind::HRU) hru.set_training(t); else res.set_training(t);
  }
  void collect(const std::string& prefix, ParamList& out) {
    if (kind == BlockKind::HRU) hru.collect(prefix, out);
    else res.collect(prefix, out);
  }
};

struct HourglassOutput {
  Tensor top;  // same spatial extent as the input
  // Per-resolution features, lowest resolution first; the last entry is the
  // top output. Entry .first is the spatial extent.
  std::vector<std::pair<std::size_t, Tensor>> ladder;
};

// Recursive encoder-decoder: at each level one block on the skip path, one
// on the down path after pooling, one on the up path; the bottom holds a
// single bottleneck block. The skip-path block kind is the one the nested
// variant swaps to HRUs.
struct Hourglass {
  std::size_t depth = 0, channels = 0;
  std::vector<Block> skip_blocks, down_blocks, up_blocks;
  Block bottleneck;

  Hourglass() = default;
  Hourglass(std::size_t depth_, std::size_t channels_, BlockKind skip_kind,
            std::mt19937_64& rng)
      : depth(depth_), channels(channels_) {
    MCA_CHECK(depth >= 1, "hourglass depth must be >= 1");
    for (std::size_t i = 0; i < depth; ++i) {
      skip_blocks.emplace_back(skip_kind, channels, channels, rng);
      down_blocks.emplace_back(BlockKind::Residual, channels, channels, rng);
      up_blocks.emplace_back(BlockKind::Residual, channels, channels, rng);
    }
    bottleneck = Block(BlockKind::Residual, channels, channels, rng);
  }

  HourglassOutput forward(const Tensor& x) {
    MCA_CHECK(x.shape().size() == 4 && x.dim(1) == channels,
              "hourglass expects ", channels, " channels, got ",
              shape_str(x.shape()));
    std::size_t div = std::size_t(1) << depth;
    MCA_CHECK(x.dim(2) % div == 0 && x.dim(3) % div == 0,
              "hourglass depth ", depth, " requires spatial extent divisible "
              "by ", div, ", got ", shape_str(x.shape()));
    HourglassOutput out;
    out.top = recurse(x, depth, out.ladder);
    return out;
  }

  void set_training(bool t) {
    for (auto& b : skip_blocks) b.set_training(t);
    for (auto& b : down_blocks) b.set_training(t);
    for (auto& b : up_blocks) b.set_training(t);
    bottleneck.set_training(t);
  }

  void collect(const std::string& prefix, ParamList& out) {
    for (std::size_t i = 0; i < depth; ++i) {
      std::string lvl = prefix + ".level" + std::to_string(i);
      skip_blocks[i].collect(lvl + ".skip", out);
      down_blocks[i].collect(lvl + ".down", out);
      up_blocks[i].collect(lvl + ".up", out);
    }
    bottleneck.collect(prefix + ".bottleneck", out);
  }

 private:
  Tensor recurse(const Tensor& x, std::size_t level,
                 std::vector<std::pair<std::size_t, Tensor>>& ladder) {
    std::size_t i = level - 1;
    Tensor skip = skip_blocks[i].forward(x);
    Tensor low = down_blocks[i].forward(maxpool2x2(x));
    Tensor mid;
    if (level > 1) {
      mid = recurse(low, level - 1, ladder);
    } else {
      mid = bottleneck.forward(low);
      ladder.emplace_back(mid.dim(2), mid);
    }
    Tensor up = up_blocks[i].forward(mid);
    Tensor combined = add(skip, upsample_nearest_2x(up));
    ladder.emplace_back(combined.dim(2), combined);
    return combined;
  }
};

}  // namespace mca
