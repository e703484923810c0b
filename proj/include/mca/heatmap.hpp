#pragma once

#include <cmath>

#include "mca/annotation.hpp"
#include "mca/tensor.hpp"

namespace mca {

// Ground-truth score maps: one channel per part, a peak-1 Gaussian centered
// at the rounded keypoint in heatmap coordinates (image coordinates divided
// by `stride`). Invisible parts get an all-zero channel.
inline Tensor render_gt_heatmaps(const PoseAnnotation& ann,
                                 std::size_t heatmap_size, double sigma,
                                 double stride = 4.0) {
  MCA_CHECK(sigma > 0, "render_gt_heatmaps: sigma must be positive");
  std::size_t parts = ann.keypoints.size();
  std::vector<real> data(parts * heatmap_size * heatmap_size, real(0));
  for (std::size_t p = 0; p < parts; ++p) {
    const auto& kp = ann.keypoints[p];
    if (!kp.visible) continue;
    double cx = std::round(kp.x / stride);
    double cy = std::round(kp.y / stride);
    if (cx < 0 || cy < 0 || cx >= double(heatmap_size) ||
        cy >= double(heatmap_size))
      continue;
    real* ch = &data[p * heatmap_size * heatmap_size];
    for (std::size_t y = 0; y < heatmap_size; ++y)
      for (std::size_t x = 0; x < heatmap_size; ++x) {
        double d2 = (double(x) - cx) * (double(x) - cx) +
                    (double(y) - cy) * (double(y) - cy);
        ch[y * heatmap_size + x] = real(std::exp(-d2 / (2 * sigma * sigma)));
      }
  }
  return Tensor::from_data({1, parts, heatmap_size, heatmap_size},
                           std::move(data));
}

}  // namespace mca
