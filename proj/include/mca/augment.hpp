#pragma once

#include <array>
#include <cmath>
#include <random>

#include "mca/annotation.hpp"
#include "mca/image.hpp"

namespace mca {

// 2x3 affine map: output = A * input + t.
struct Affine {
  double a = 1, b = 0, tx = 0;
  double c = 0, d = 1, ty = 0;

  static Affine identity() { return {}; }

  static Affine translation(double dx, double dy) {
    Affine m;
    m.tx = dx;
    m.ty = dy;
    return m;
  }

  static Affine rotation(double radians) {
    Affine m;
    m.a = std::cos(radians);
    m.b = -std::sin(radians);
    m.c = std::sin(radians);
    m.d = std::cos(radians);
    return m;
  }

  static Affine scaling(double sx, double sy) {
    Affine m;
    m.a = sx;
    m.d = sy;
    return m;
  }

  // this after other: apply(other) first, then this.
  Affine compose(const Affine& other) const {
    Affine m;
    m.a = a * other.a + b * other.c;
    m.b = a * other.b + b * other.d;
    m.c = c * other.a + d * other.c;
    m.d = c * other.b + d * other.d;
    m.tx = a * other.tx + b * other.ty + tx;
    m.ty = c * other.tx + d * other.ty + ty;
    return m;
  }

  Affine inverse() const {
    double det = a * d - b * c;
    MCA_CHECK(std::abs(det) > 1e-12, "affine: singular transform");
    Affine m;
    m.a = d / det;
    m.b = -b / det;
    m.c = -c / det;
    m.d = a / det;
    m.tx = -(m.a * tx + m.b * ty);
    m.ty = -(m.c * tx + m.d * ty);
    return m;
  }

  std::array<double, 2> apply(double x, double y) const {
    return {a * x + b * y + tx, c * x + d * y + ty};
  }
};

// Resamples `src` through the inverse of `map` with bilinear interpolation
// and zero fill, into an output of the given size.
inline Image warp_image(const Image& src, const Affine& map, std::size_t out_h,
                        std::size_t out_w) {
  Affine inv = map.inverse();
  Image out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      auto [sx, sy] = inv.apply(double(x), double(y));
      for (std::size_t c = 0; c < 3; ++c)
        out.at(c, y, x) = src.sample(c, sy, sx);
    }
  return out;
}

// Transforms keypoints by the same affine map applied to pixels; points
// leaving the frame become invisible rather than clamped.
inline void warp_annotation(PoseAnnotation& ann, const Affine& map,
                            std::size_t out_h, std::size_t out_w) {
  for (auto& kp : ann.keypoints) {
    auto [x, y] = map.apply(kp.x, kp.y);
    kp.x = x;
    kp.y = y;
    if (kp.visible &&
        (x < 0 || x >= double(out_w) || y < 0 || y >= double(out_h)))
      kp.visible = false;
  }
  auto [cx, cy] = map.apply(ann.center_x, ann.center_y);
  ann.center_x = cx;
  ann.center_y = cy;
}

struct AugmentParams {
  double rotation_deg = 30;       // uniform in +-rotation_deg
  double scale_min = 0.75, scale_max = 1.25;
  double flip_probability = 0.5;
  double color_jitter = 0.2;      // per-channel factor in [1-a, 1+a]

  void validate() const {
    MCA_CHECK(rotation_deg >= 0 && scale_min > 0 && scale_max >= scale_min &&
                  flip_probability >= 0 && flip_probability <= 1 &&
                  color_jitter >= 0 && color_jitter < 1,
              "augment: invalid parameter ranges");
  }
};

// Horizontal flip about the image midline; swaps the left-right part pairs.
inline void flip_sample(Image& img, PoseAnnotation& ann) {
  std::size_t w = img.width;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < w / 2; ++x)
        std::swap(img.at(c, y, x), img.at(c, y, w - 1 - x));
  for (auto& kp : ann.keypoints) kp.x = double(w - 1) - kp.x;
  ann.center_x = double(w - 1) - ann.center_x;
  for (auto [a, b] : ann.lr_pairs)
    std::swap(ann.keypoints[a], ann.keypoints[b]);
}

// Rotation and rescaling about the person center, optional flip, and
// multiplicative per-channel color jitter. The identity draw (rotation 0,
// scale 1, no flip, zero jitter) returns the input bit-exactly.
inline void augment(Image& img, PoseAnnotation& ann,
                    const AugmentParams& params, std::mt19937_64& rng) {
  params.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double rot = (2 * unit(rng) - 1) * params.rotation_deg * 3.14159265358979323846 / 180.0;
  double s = params.scale_min + (params.scale_max - params.scale_min) * unit(rng);
  bool flip = unit(rng) < params.flip_probability;
  double jitter[3];
  for (double& j : jitter)
    j = 1 + (2 * unit(rng) - 1) * params.color_jitter;

  if (rot != 0 || s != 1) {
    Affine about_center =
        Affine::translation(ann.center_x, ann.center_y)
            .compose(Affine::rotation(rot))
            .compose(Affine::scaling(s, s))
            .compose(Affine::translation(-ann.center_x, -ann.center_y));
    img = warp_image(img, about_center, img.height, img.width);
    warp_annotation(ann, about_center, img.height, img.width);
  }
  if (flip) flip_sample(img, ann);
  if (params.color_jitter > 0) {
    for (std::size_t c = 0; c < 3; ++c) {
      real* ch = &img.data[c * img.height * img.width];
      for (std::size_t i = 0; i < img.height * img.width; ++i)
        ch[i] = real(std::clamp(double(ch[i]) * jitter[c], 0.0, 1.0));
    }
  }
}

// Crops the person window (side = scale * image extent, centered on the
// person) and warps it to a square output. Keypoints follow the same map;
// heatmap coordinates are output coordinates divided by four.
inline void crop_warp(Image& img, PoseAnnotation& ann, std::size_t out_size) {
  MCA_CHECK(ann.scale > 1e-6, "crop_warp: degenerate person scale ",
            ann.scale);
  double window = ann.scale * double(std::max(img.height, img.width));
  double zoom = double(out_size) / window;
  Affine map = Affine::scaling(zoom, zoom).compose(Affine::translation(
      window / 2 - ann.center_x, window / 2 - ann.center_y));
  Image out = warp_image(img, map, out_size, out_size);
  warp_annotation(ann, map, out_size, out_size);
  ann.scale = 1.0;
  img = std::move(out);
}

}  // namespace mca
