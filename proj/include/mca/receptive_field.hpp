#pragma once

#include <vector>

#include "mca/common.hpp"

namespace mca {

// Affine footprint of one output unit on the input grid.
struct ReceptiveField {
  std::size_t size_h = 1, size_w = 1;
  double stride = 1.0;  // input pixels per output step; fractional after upsampling
};

struct LayerDesc {
  std::size_t kernel_h = 1, kernel_w = 1;
  double stride = 1.0;  // 0.5 for a 2x upsampling layer
};

inline LayerDesc conv_layer(std::size_t k, std::size_t stride = 1) {
  return {k, k, double(stride)};
}
inline LayerDesc pool_layer(std::size_t k = 2, std::size_t stride = 2) {
  return {k, k, double(stride)};
}
inline LayerDesc upsample_layer() { return {1, 1, 0.5}; }

// Composition rule: each layer with kernel k grows the receptive field by
// (k - 1) times the cumulative stride, then multiplies the cumulative
// stride by its own.
inline ReceptiveField receptive_field_of(const std::vector<LayerDesc>& layers) {
  ReceptiveField rf;
  for (const auto& l : layers) {
    rf.size_h += std::size_t(double(l.kernel_h - 1) * rf.stride);
    rf.size_w += std::size_t(double(l.kernel_w - 1) * rf.stride);
    rf.stride *= l.stride;
  }
  return rf;
}

// The two HRU branch stacks, for receptive-field comparison.
inline std::vector<LayerDesc> residual_branch_layers() {
  return {conv_layer(1), conv_layer(3), conv_layer(1)};
}
inline std::vector<LayerDesc> pooled_branch_layers(std::size_t k = 3) {
  return {pool_layer(), conv_layer(k), conv_layer(k), upsample_layer()};
}

}  // namespace mca
