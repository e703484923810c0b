#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mca/annotation.hpp"
#include "mca/image.hpp"

namespace mca {

// Synthetic stick-figure generator: the stand-in for real pose datasets at
// desk scale. Four parts: head, neck, left wrist, right wrist. Each joint
// carries a part-colored marker disc so annotations are exact by
// construction and re-detectable by template matching.
struct SynthSpec {
  std::uint64_t seed = 7;
  std::size_t image_size = 64;
  double limb_min = 10, limb_max = 18;       // torso/arm length range, px
  double angle_range = 0.5;                   // radians around the rest pose
  double clutter_density = 0.5;               // expected clutter strokes / 10
  double distractor_probability = 0.2;

  void validate() const {
    MCA_CHECK(image_size >= 16, "synth: image size too small");
    MCA_CHECK(limb_max > limb_min && limb_min > 0,
              "synth: degenerate limb length range");
    MCA_CHECK(angle_range > 0, "synth: degenerate angle range");
  }
};

namespace synth_detail {

constexpr std::size_t kParts = 4;
constexpr std::size_t kHead = 0, kNeck = 1, kLeftWrist = 2, kRightWrist = 3;
constexpr double kMarkerRadius = 2.0;

inline const double (&part_colors())[kParts][3] {
  static const double colors[kParts][3] = {
      {1.0, 0.25, 0.25},   // head: red
      {0.25, 1.0, 0.25},   // neck: green
      {0.3, 0.45, 1.0},    // left wrist: blue
      {1.0, 0.95, 0.3},    // right wrist: yellow
  };
  return colors;
}

inline void blend(Image& img, std::size_t y, std::size_t x, double coverage,
                  const double* rgb) {
  for (std::size_t c = 0; c < 3; ++c) {
    real& px = img.at(c, y, x);
    px = real(std::clamp((1 - coverage) * px + coverage * rgb[c], 0.0, 1.0));
  }
}

// Anti-aliased line segment with round caps; coverage from the distance to
// the segment.
inline void draw_segment(Image& img, double x0, double y0, double x1,
                         double y1, double half_width, const double* rgb) {
  double lo_x = std::min(x0, x1) - half_width - 1;
  double hi_x = std::max(x0, x1) + half_width + 1;
  double lo_y = std::min(y0, y1) - half_width - 1;
  double hi_y = std::max(y0, y1) + half_width + 1;
  long ix0 = std::max(0L, long(std::floor(lo_x)));
  long ix1 = std::min(long(img.width) - 1, long(std::ceil(hi_x)));
  long iy0 = std::max(0L, long(std::floor(lo_y)));
  long iy1 = std::min(long(img.height) - 1, long(std::ceil(hi_y)));
  double dx = x1 - x0, dy = y1 - y0;
  double len2 = dx * dx + dy * dy;
  for (long y = iy0; y <= iy1; ++y)
    for (long x = ix0; x <= ix1; ++x) {
      double t = len2 > 0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      double px = x0 + t * dx - x, py = y0 + t * dy - y;
      double dist = std::sqrt(px * px + py * py);
      double cov = std::clamp(half_width + 0.5 - dist, 0.0, 1.0);
      if (cov > 0) blend(img, std::size_t(y), std::size_t(x), cov, rgb);
    }
}

inline void draw_disc(Image& img, double cx, double cy, double radius,
                      const double* rgb) {
  long x0 = std::max(0L, long(std::floor(cx - radius - 1)));
  long x1 = std::min(long(img.width) - 1, long(std::ceil(cx + radius + 1)));
  long y0 = std::max(0L, long(std::floor(cy - radius - 1)));
  long y1 = std::min(long(img.height) - 1, long(std::ceil(cy + radius + 1)));
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      double dist = std::hypot(x - cx, y - cy);
      double cov = std::clamp(radius + 0.5 - dist, 0.0, 1.0);
      if (cov > 0) blend(img, std::size_t(y), std::size_t(x), cov, rgb);
    }
}

}  // namespace synth_detail

struct SynthSample {
  Image image;
  PoseAnnotation annotation;
};

inline SynthSample synth_sample(const SynthSpec& spec, std::size_t index) {
  using namespace synth_detail;
  spec.validate();
  std::mt19937_64 rng(spec.seed ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * unit(rng);
  };

  double sz = double(spec.image_size);
  Image img(spec.image_size, spec.image_size, real(0.05));
  // mildly noisy dark background; constant when clutter is disabled
  if (spec.clutter_density > 0)
    for (real& v : img.data) v = real(uniform(0.02, 0.10));

  // background clutter: faint gray strokes
  const double gray[3] = {0.45, 0.45, 0.45};
  int strokes = int(std::floor(spec.clutter_density * 10 + 1e-9));
  for (int i = 0; i < strokes; ++i) {
    double x0 = uniform(0, sz - 1), y0 = uniform(0, sz - 1);
    double ang = uniform(0, 2 * 3.14159265358979323846);
    double len = uniform(4, sz / 3);
    draw_segment(img, x0, y0, x0 + len * std::cos(ang),
                 y0 + len * std::sin(ang), 0.7, gray);
  }

  // figure geometry: pelvis -> neck torso, head above, two arms
  double torso = uniform(spec.limb_min, spec.limb_max);
  double arm = uniform(spec.limb_min * 0.8, spec.limb_max * 0.9);
  double head_off = torso * 0.35;
  double margin = torso + arm + head_off + 4;
  double px = uniform(std::min(margin, sz / 2 - 1),
                      std::max(sz - margin, sz / 2 + 1));
  double py = uniform(std::min(margin, sz / 2 - 1),
                      std::max(sz - margin, sz / 2 + 1));
  double torso_ang = -3.14159265358979323846 / 2 +
                     uniform(-spec.angle_range * 0.4, spec.angle_range * 0.4);
  double nx = px + torso * std::cos(torso_ang);
  double ny = py + torso * std::sin(torso_ang);
  double hx = nx + head_off * std::cos(torso_ang);
  double hy = ny + head_off * std::sin(torso_ang);
  double la = torso_ang + 3.14159265358979323846 / 2 +
              uniform(-spec.angle_range, spec.angle_range);
  double ra = torso_ang - 3.14159265358979323846 / 2 +
              uniform(-spec.angle_range, spec.angle_range);
  double lx = nx + arm * std::cos(la), ly = ny + arm * std::sin(la);
  double rx = nx + arm * std::cos(ra), ry = ny + arm * std::sin(ra);

  const double body[3] = {0.85, 0.85, 0.85};
  draw_segment(img, px, py, nx, ny, 1.2, body);
  draw_segment(img, nx, ny, lx, ly, 1.0, body);
  draw_segment(img, nx, ny, rx, ry, 1.0, body);
  draw_disc(img, hx, hy, head_off * 0.7, body);

  if (unit(rng) < spec.distractor_probability) {
    double dx0 = uniform(0, sz - 1), dy0 = uniform(0, sz - 1);
    double ang = uniform(0, 2 * 3.14159265358979323846);
    double len = uniform(spec.limb_min, spec.limb_max);
    draw_segment(img, dx0, dy0, dx0 + len * std::cos(ang),
                 dy0 + len * std::sin(ang), 1.0, body);
  }

  // part markers on top, one distinct color per joint
  double kx[kParts] = {hx, nx, lx, rx};
  double ky[kParts] = {hy, ny, ly, ry};
  for (std::size_t p = 0; p < kParts; ++p)
    draw_disc(img, kx[p], ky[p], kMarkerRadius, part_colors()[p]);

  PoseAnnotation ann;
  ann.id = "synth" + std::to_string(index);
  for (std::size_t p = 0; p < kParts; ++p) {
    Keypoint kp;
    kp.x = kx[p];
    kp.y = ky[p];
    kp.visible = kp.x >= 0 && kp.x < sz && kp.y >= 0 && kp.y < sz;
    ann.keypoints.push_back(kp);
  }
  ann.lr_pairs = {{kLeftWrist, kRightWrist}};
  double min_x = *std::min_element(kx, kx + kParts);
  double max_x = *std::max_element(kx, kx + kParts);
  double min_y = *std::min_element(ky, ky + kParts);
  double max_y = *std::max_element(ky, ky + kParts);
  ann.center_x = (min_x + max_x) / 2;
  ann.center_y = (min_y + max_y) / 2;
  ann.scale =
      std::clamp((std::max(max_x - min_x, max_y - min_y) + 2 * margin * 0.3) /
                     sz, 0.25, 1.0);
  return {std::move(img), std::move(ann)};
}

inline std::vector<SynthSample> synth_generate(const SynthSpec& spec,
                                               std::size_t count) {
  MCA_CHECK(count > 0, "synth_generate: count must be positive");
  std::vector<SynthSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_sample(spec, i));
  return out;
}

namespace synth_detail {

// Template-matching re-detection of a part marker: correlation of the part
// color against the image in a window around the whole frame; returns the
// best-scoring pixel. Test oracle for rendering self-consistency.
inline std::pair<double, double> redetect_marker(const Image& img,
                                                 std::size_t part) {
  const double* rgb = part_colors()[part];
  double best = -1;
  std::pair<double, double> at{0, 0};
  long r = long(kMarkerRadius);
  for (long y = 0; y < long(img.height); ++y)
    for (long x = 0; x < long(img.width); ++x) {
      double score = 0;
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) {
          long yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= long(img.height) || xx < 0 ||
              xx >= long(img.width))
            continue;
          if (double(dx * dx + dy * dy) > kMarkerRadius * kMarkerRadius)
            continue;
          for (std::size_t c = 0; c < 3; ++c) {
            double v = img.at(c, std::size_t(yy), std::size_t(xx));
            score += v * (2 * rgb[c] - 1);  // reward the color, punish others
          }
        }
      if (score > best) {
        best = score;
        at = {double(x), double(y)};
      }
    }
  return at;
}

}  // namespace synth_detail

}  // namespace mca
