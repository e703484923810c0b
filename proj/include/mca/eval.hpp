#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "mca/annotation.hpp"
#include "mca/augment.hpp"
#include "mca/image.hpp"
#include "mca/network.hpp"

namespace mca {

struct Prediction {
  std::vector<Keypoint> keypoints;   // input-image pixels
  std::vector<double> confidence;    // peak heatmap value per part
};

// Argmax decode with the quarter-pixel shift toward the larger of the two
// axis neighbors, then scaled to input coordinates. Ties break to the
// smallest row-major index.
inline std::vector<Prediction> decode_heatmaps(const Tensor& heatmaps,
                                               double stride = 4.0) {
  const Shape& s = heatmaps.shape();
  MCA_CHECK(s.size() == 4, "decode: heatmaps must be NxPxHxW");
  std::size_t n = s[0], p = s[1], h = s[2], w = s[3];
  std::vector<Prediction> out(n);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t part = 0; part < p; ++part) {
      const real* ch = &heatmaps.data()[(b * p + part) * h * w];
      std::size_t best = 0;
      for (std::size_t i = 1; i < h * w; ++i)
        if (ch[i] > ch[best]) best = i;
      double by = double(best / w), bx = double(best % w);
      std::size_t iy = best / w, ix = best % w;
      if (ix > 0 && ix + 1 < w) {
        double diff = ch[iy * w + ix + 1] - ch[iy * w + ix - 1];
        if (diff > 0) bx += 0.25;
        else if (diff < 0) bx -= 0.25;
      }
      if (iy > 0 && iy + 1 < h) {
        double diff = ch[(iy + 1) * w + ix] - ch[(iy - 1) * w + ix];
        if (diff > 0) by += 0.25;
        else if (diff < 0) by -= 0.25;
      }
      Keypoint kp;
      kp.x = bx * stride;
      kp.y = by * stride;
      kp.visible = true;
      out[b].keypoints.push_back(kp);
      out[b].confidence.push_back(double(ch[best]));
    }
  }
  return out;
}

enum class NormalizerKind { TorsoDiagonal, HeadSegment };

// Per-figure size normalizer. The synthetic skeleton has no hip joints, so
// the torso diagonal is realized as the keypoint bounding-box diagonal;
// the head segment is the head-to-neck distance.
inline double figure_normalizer(const PoseAnnotation& ann,
                                NormalizerKind kind) {
  if (kind == NormalizerKind::HeadSegment) {
    MCA_CHECK(ann.keypoints.size() >= 2, "pckh: need head and neck parts");
    return std::hypot(ann.keypoints[0].x - ann.keypoints[1].x,
                      ann.keypoints[0].y - ann.keypoints[1].y);
  }
  double min_x = 1e30, max_x = -1e30, min_y = 1e30, max_y = -1e30;
  bool any = false;
  for (const auto& kp : ann.keypoints) {
    if (!kp.visible) continue;
    any = true;
    min_x = std::min(min_x, kp.x);
    max_x = std::max(max_x, kp.x);
    min_y = std::min(min_y, kp.y);
    max_y = std::max(max_y, kp.y);
  }
  return any ? std::hypot(max_x - min_x, max_y - min_y) : 0.0;
}

struct MetricReport {
  std::vector<double> per_part_rate;  // correctness rate per part
  double mean = 0;
  double threshold = 0;
  std::string normalizer_kind;
  std::size_t figures_evaluated = 0, figures_skipped = 0;

  std::string to_csv(const std::vector<std::string>& part_names) const {
    std::ostringstream os;
    os << "part,rate\n";
    for (std::size_t p = 0; p < per_part_rate.size(); ++p) {
      std::string name = p < part_names.size() ? part_names[p]
                                               : "part" + std::to_string(p);
      os << name << "," << per_part_rate[p] << "\n";
    }
    os << "mean," << mean << "\n";
    return os.str();
  }
};

// Percentage of correct keypoints: a keypoint counts as correct when its
// distance to ground truth is at most threshold times the figure
// normalizer. Invisible parts are excluded; figures with a degenerate
// normalizer are skipped with a warning.
inline MetricReport keypoint_metric(const std::vector<Prediction>& preds,
                                    const std::vector<PoseAnnotation>& gts,
                                    double threshold, NormalizerKind kind) {
  MCA_CHECK(!gts.empty(), "metric: empty evaluation set");
  MCA_CHECK(preds.size() == gts.size(), "metric: ", preds.size(),
            " predictions vs ", gts.size(), " annotations");
  std::size_t parts = gts[0].keypoints.size();
  std::vector<double> correct(parts, 0), total(parts, 0);
  MetricReport report;
  report.threshold = threshold;
  report.normalizer_kind =
      kind == NormalizerKind::HeadSegment ? "head" : "torso";
  for (std::size_t i = 0; i < gts.size(); ++i) {
    double norm = figure_normalizer(gts[i], kind);
    if (norm <= 1e-9) {
      std::cerr << "metric: skipping figure " << gts[i].id
                << " with degenerate normalizer\n";
      ++report.figures_skipped;
      continue;
    }
    ++report.figures_evaluated;
    MCA_CHECK(preds[i].keypoints.size() == parts,
              "metric: prediction part count mismatch for figure ",
              gts[i].id);
    for (std::size_t p = 0; p < parts; ++p) {
      if (!gts[i].keypoints[p].visible) continue;
      total[p] += 1;
      double d = std::hypot(preds[i].keypoints[p].x - gts[i].keypoints[p].x,
                            preds[i].keypoints[p].y - gts[i].keypoints[p].y);
      if (d <= threshold * norm) correct[p] += 1;
    }
  }
  MCA_CHECK(report.figures_evaluated > 0,
            "metric: no figure had a usable normalizer");
  double mean_acc = 0;
  std::size_t mean_n = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    double rate = total[p] > 0 ? correct[p] / total[p] : 0.0;
    report.per_part_rate.push_back(rate);
    if (total[p] > 0) {
      mean_acc += rate;
      ++mean_n;
    }
  }
  report.mean = mean_n ? mean_acc / double(mean_n) : 0.0;
  return report;
}

inline MetricReport pck(const std::vector<Prediction>& preds,
                        const std::vector<PoseAnnotation>& gts,
                        double threshold = 0.2) {
  return keypoint_metric(preds, gts, threshold, NormalizerKind::TorsoDiagonal);
}

inline MetricReport pckh(const std::vector<Prediction>& preds,
                         const std::vector<PoseAnnotation>& gts,
                         double threshold = 0.5) {
  return keypoint_metric(preds, gts, threshold, NormalizerKind::HeadSegment);
}

namespace detail {

// Bilinear resize of every channel of an NxCxHxW tensor (no gradient;
// evaluation path only).
inline Tensor resize_bilinear(const Tensor& t, std::size_t out_h,
                              std::size_t out_w) {
  const Shape& s = t.shape();
  std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  std::vector<real> out(n * c * out_h * out_w);
  double sy = double(h) / double(out_h), sx = double(w) / double(out_w);
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const real* src = &t.data()[nc * h * w];
    real* dst = &out[nc * out_h * out_w];
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        double fy = (double(y) + 0.5) * sy - 0.5;
        double fx = (double(x) + 0.5) * sx - 0.5;
        double cy = std::clamp(fy, 0.0, double(h - 1));
        double cx = std::clamp(fx, 0.0, double(w - 1));
        std::size_t y0 = std::size_t(cy), x0 = std::size_t(cx);
        std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        double dy = cy - double(y0), dx = cx - double(x0);
        dst[y * out_w + x] = real(
            (1 - dy) * ((1 - dx) * src[y0 * w + x0] + dx * src[y0 * w + x1]) +
            dy * ((1 - dx) * src[y1 * w + x0] + dx * src[y1 * w + x1]));
      }
  }
  return Tensor::from_data({n, c, out_h, out_w}, std::move(out));
}

inline Tensor flip_heatmaps_back(const Tensor& t,
                                 const std::vector<std::pair<std::size_t,
                                                             std::size_t>>&
                                     lr_pairs) {
  const Shape& s = t.shape();
  std::size_t n = s[0], p = s[1], h = s[2], w = s[3];
  std::vector<std::size_t> channel_map(p);
  for (std::size_t i = 0; i < p; ++i) channel_map[i] = i;
  for (auto [a, b] : lr_pairs) std::swap(channel_map[a], channel_map[b]);
  std::vector<real> out(t.numel());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < p; ++c) {
      const real* src = &t.data()[(b * p + channel_map[c]) * h * w];
      real* dst = &out[(b * p + c) * h * w];
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          dst[y * w + x] = src[y * w + (w - 1 - x)];
    }
  return Tensor::from_data(s, std::move(out));
}

}  // namespace detail

// Runs the final stack's heatmaps for one image.
inline Tensor predict_heatmaps(Network& net, const Image& image) {
  auto outputs = net.forward(image.to_tensor());
  return outputs.back().heatmaps;
}

// Test-time augmentation: forward passes over a scale pyramid and an
// optional flipped copy, heatmaps mapped back to the reference resolution
// and averaged before a single decode.
inline Prediction tta_predict(Network& net, const Image& image,
                              const std::vector<double>& scales, bool flip,
                              const std::vector<std::pair<std::size_t,
                                                          std::size_t>>&
                                  lr_pairs) {
  MCA_CHECK(!scales.empty(), "tta: scale list must be nonempty");
  std::size_t input = net.config().input_size;
  std::size_t hm = net.config().heatmap_size();
  MCA_CHECK(image.height == input && image.width == input,
            "tta: image must be ", input, "x", input);
  Tensor accum;
  std::size_t passes = 0;
  auto add_pass = [&](const Tensor& heatmaps) {
    Tensor at_ref = (heatmaps.dim(2) == hm)
                        ? heatmaps
                        : detail::resize_bilinear(heatmaps, hm, hm);
    accum = accum.defined() ? add(accum, at_ref) : at_ref;
    ++passes;
  };
  // undoes the centered zoom on the heatmaps by the inverse warp at
  // heatmap scale
  auto unzoom = [&](const Tensor& heatmaps, double s) -> Tensor {
    if (s == 1.0) return heatmaps;
    double chm = double(hm - 1) / 2;
    const Shape& sh = heatmaps.shape();
    std::vector<real> out(heatmaps.numel());
    Affine m = Affine::translation(chm, chm)
                   .compose(Affine::scaling(1.0 / s, 1.0 / s))
                   .compose(Affine::translation(-chm, -chm));
    Affine inv = m.inverse();
    for (std::size_t c = 0; c < sh[1]; ++c) {
      const real* src = &heatmaps.data()[c * hm * hm];
      for (std::size_t y = 0; y < hm; ++y)
        for (std::size_t x = 0; x < hm; ++x) {
          auto [fx, fy] = inv.apply(double(x), double(y));
          long x0 = long(std::floor(fx)), y0 = long(std::floor(fy));
          double dx = fx - double(x0), dy = fy - double(y0);
          auto tap = [&](long yy, long xx) -> double {
            if (yy < 0 || yy >= long(hm) || xx < 0 || xx >= long(hm))
              return 0.0;
            return src[std::size_t(yy) * hm + std::size_t(xx)];
          };
          out[c * hm * hm + y * hm + x] = real(
              (1 - dy) * ((1 - dx) * tap(y0, x0) + dx * tap(y0, x0 + 1)) +
              dy * ((1 - dx) * tap(y0 + 1, x0) + dx * tap(y0 + 1, x0 + 1)));
        }
    }
    return Tensor::from_data(sh, std::move(out));
  };
  for (double s : scales) {
    MCA_CHECK(s > 0, "tta: scale must be positive, got ", s);
    Image scaled = image;
    if (s != 1.0) {
      double cx = double(input - 1) / 2;
      Affine m = Affine::translation(cx, cx)
                     .compose(Affine::scaling(s, s))
                     .compose(Affine::translation(-cx, -cx));
      scaled = warp_image(image, m, input, input);
    }
    add_pass(unzoom(predict_heatmaps(net, scaled), s));
    if (flip) {
      Image mirrored = scaled;
      PoseAnnotation dummy;
      dummy.lr_pairs = {};
      flip_sample(mirrored, dummy);
      Tensor fh = predict_heatmaps(net, mirrored);
      add_pass(unzoom(detail::flip_heatmaps_back(fh, lr_pairs), s));
    }
  }
  Tensor averaged = scale(accum, real(1) / real(passes));
  return decode_heatmaps(averaged)[0];
}

}  // namespace mca
