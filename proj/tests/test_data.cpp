#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <random>

#include "mca/augment.hpp"
#include "mca/heatmap.hpp"
#include "mca/synth.hpp"

using namespace mca;

TEST_CASE("synth generation is deterministic under the seed") {
  SynthSpec spec;
  spec.seed = 7;
  auto a = synth_generate(spec, 8);
  auto b = synth_generate(spec, 8);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    REQUIRE(a[i].image.data == b[i].image.data);
    REQUIRE(a[i].annotation.id == b[i].annotation.id);
    for (std::size_t p = 0; p < 4; ++p) {
      REQUIRE(a[i].annotation.keypoints[p].x == b[i].annotation.keypoints[p].x);
      REQUIRE(a[i].annotation.keypoints[p].y == b[i].annotation.keypoints[p].y);
    }
  }
  REQUIRE_THROWS_AS(synth_generate(spec, 0), Error);
}

TEST_CASE("clutter density zero gives a constant background") {
  SynthSpec spec;
  spec.clutter_density = 0;
  spec.distractor_probability = 0;
  auto sample = synth_sample(spec, 3);
  // corners are far from the centered figure
  const auto& img = sample.image;
  REQUIRE(img.at(0, 0, 0) == real(0.05));
  REQUIRE(img.at(1, 0, img.width - 1) == real(0.05));
  REQUIRE(img.at(2, img.height - 1, 0) == real(0.05));
}

TEST_CASE("annotations are consistent and inside bounds") {
  SynthSpec spec;
  for (std::size_t i = 0; i < 20; ++i) {
    auto s = synth_sample(spec, i);
    s.annotation.check(s.image.height, s.image.width);
    REQUIRE(s.annotation.keypoints.size() == 4);
    REQUIRE(s.annotation.lr_pairs.size() == 1);
  }
}

TEST_CASE("markers are re-detected by template matching within 1 px") {
  SynthSpec spec;
  spec.clutter_density = 0;
  spec.distractor_probability = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    auto s = synth_sample(spec, i);
    for (std::size_t p = 0; p < 4; ++p) {
      if (!s.annotation.keypoints[p].visible) continue;
      auto [x, y] = synth_detail::redetect_marker(s.image, p);
      REQUIRE(std::abs(x - s.annotation.keypoints[p].x) <= 1.0);
      REQUIRE(std::abs(y - s.annotation.keypoints[p].y) <= 1.0);
    }
  }
}

TEST_CASE("ground-truth heatmaps peak at the rounded keypoint") {
  PoseAnnotation ann;
  ann.id = "t";
  ann.keypoints = {{20, 28, true}, {33, 12, true}, {5, 5, false}};
  Tensor hm = render_gt_heatmaps(ann, 16, 1.0);
  REQUIRE(hm.shape() == Shape{1, 3, 16, 16});

  // peak value 1 at the rounded keypoint pixel
  REQUIRE(hm.at(0 * 256 + 7 * 16 + 5) == 1.0);  // (20,28)/4 = (5,7)
  REQUIRE(hm.at(1 * 256 + 3 * 16 + 8) == 1.0);  // (33,12)/4 -> (8,3)

  // value at distance sigma
  REQUIRE_THAT(hm.at(0 * 256 + 7 * 16 + 6),
               Catch::Matchers::WithinAbs(std::exp(-0.5), 1e-12));

  // invisible part gives an all-zero channel
  for (std::size_t i = 0; i < 256; ++i) REQUIRE(hm.at(2 * 256 + i) == 0.0);

  // argmax equals the rounded keypoint for all visible parts
  for (std::size_t p = 0; p < 2; ++p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 256; ++i)
      if (hm.at(p * 256 + i) > hm.at(p * 256 + best)) best = i;
    double kx = std::round(ann.keypoints[p].x / 4);
    double ky = std::round(ann.keypoints[p].y / 4);
    REQUIRE(double(best % 16) == kx);
    REQUIRE(double(best / 16) == ky);
  }

  REQUIRE_THROWS_AS(render_gt_heatmaps(ann, 16, 0.0), Error);
}

TEST_CASE("augment identity draw is bit-exact") {
  SynthSpec spec;
  auto s = synth_sample(spec, 0);
  AugmentParams params;
  params.rotation_deg = 0;
  params.scale_min = params.scale_max = 1.0;
  params.flip_probability = 0;
  params.color_jitter = 0;
  Image img = s.image;
  PoseAnnotation ann = s.annotation;
  std::mt19937_64 rng(1);
  augment(img, ann, params, rng);
  REQUIRE(img.data == s.image.data);
  for (std::size_t p = 0; p < 4; ++p) {
    REQUIRE(ann.keypoints[p].x == s.annotation.keypoints[p].x);
    REQUIRE(ann.keypoints[p].y == s.annotation.keypoints[p].y);
  }
}

TEST_CASE("flip is an involution on annotations") {
  SynthSpec spec;
  auto s = synth_sample(spec, 1);
  Image img = s.image;
  PoseAnnotation ann = s.annotation;
  flip_sample(img, ann);
  // one flip swapped the wrist pair
  REQUIRE(ann.keypoints[2].y == s.annotation.keypoints[3].y);
  flip_sample(img, ann);
  REQUIRE(img.data == s.image.data);
  for (std::size_t p = 0; p < 4; ++p) {
    // x goes through (w-1)-x twice, exact only up to rounding
    REQUIRE_THAT(ann.keypoints[p].x, Catch::Matchers::WithinAbs(
                                         s.annotation.keypoints[p].x, 1e-12));
    REQUIRE(ann.keypoints[p].y == s.annotation.keypoints[p].y);
    REQUIRE(ann.keypoints[p].visible == s.annotation.keypoints[p].visible);
  }
}

TEST_CASE("rotation forward and back restores keypoints") {
  SynthSpec spec;
  auto s = synth_sample(spec, 2);
  double rad = 30.0 * 3.14159265358979323846 / 180.0;
  auto about_center = [&](double r) {
    return Affine::translation(s.annotation.center_x, s.annotation.center_y)
        .compose(Affine::rotation(r))
        .compose(Affine::translation(-s.annotation.center_x,
                                     -s.annotation.center_y));
  };
  PoseAnnotation ann = s.annotation;
  warp_annotation(ann, about_center(rad), s.image.height, s.image.width);
  warp_annotation(ann, about_center(-rad), s.image.height, s.image.width);
  for (std::size_t p = 0; p < 4; ++p) {
    REQUIRE_THAT(ann.keypoints[p].x, Catch::Matchers::WithinAbs(
                                         s.annotation.keypoints[p].x, 1e-9));
    REQUIRE_THAT(ann.keypoints[p].y, Catch::Matchers::WithinAbs(
                                         s.annotation.keypoints[p].y, 1e-9));
  }
}

TEST_CASE("keypoints pushed out of frame become invisible") {
  PoseAnnotation ann;
  ann.id = "edge";
  ann.keypoints = {{2, 2, true}};
  ann.center_x = 32;
  ann.center_y = 32;
  warp_annotation(ann, Affine::translation(-10, 0), 64, 64);
  REQUIRE_FALSE(ann.keypoints[0].visible);
}

TEST_CASE("augmentation moves painted markers with the keypoints") {
  // track a marker pixel through the warp: the warped keypoint must land on
  // the same colored blob, within a pixel
  SynthSpec spec;
  spec.clutter_density = 0;
  spec.distractor_probability = 0;
  auto s = synth_sample(spec, 4);
  AugmentParams params;
  params.rotation_deg = 25;
  params.scale_min = 0.9;
  params.scale_max = 0.9;
  params.flip_probability = 0;
  params.color_jitter = 0;
  Image img = s.image;
  PoseAnnotation ann = s.annotation;
  std::mt19937_64 rng(77);
  augment(img, ann, params, rng);
  for (std::size_t p = 0; p < 4; ++p) {
    if (!ann.keypoints[p].visible) continue;
    auto [x, y] = synth_detail::redetect_marker(img, p);
    REQUIRE(std::hypot(x - ann.keypoints[p].x, y - ann.keypoints[p].y) <= 1.5);
  }
}

TEST_CASE("crop_warp maps the person center to the output center") {
  SynthSpec spec;
  auto s = synth_sample(spec, 5);
  Image img = s.image;
  PoseAnnotation ann = s.annotation;
  // keypoint placed exactly at the person center
  ann.keypoints[0].x = ann.center_x;
  ann.keypoints[0].y = ann.center_y;
  crop_warp(img, ann, 64);
  REQUIRE(img.height == 64);
  REQUIRE_THAT(ann.keypoints[0].x, Catch::Matchers::WithinAbs(32.0, 1e-9));
  REQUIRE_THAT(ann.keypoints[0].y, Catch::Matchers::WithinAbs(32.0, 1e-9));

  // degenerate scale rejected
  PoseAnnotation bad = s.annotation;
  bad.scale = 0;
  Image img2 = s.image;
  REQUIRE_THROWS_AS(crop_warp(img2, bad, 64), Error);
}

TEST_CASE("crop_warp at unit scale centered is a pure resize") {
  SynthSpec spec;
  auto s = synth_sample(spec, 6);
  Image img = s.image;
  PoseAnnotation ann = s.annotation;
  ann.center_x = double(img.width) / 2;
  ann.center_y = double(img.height) / 2;
  ann.scale = 1.0;
  double kx = ann.keypoints[1].x, ky = ann.keypoints[1].y;
  crop_warp(img, ann, 2 * s.image.width);
  REQUIRE_THAT(ann.keypoints[1].x, Catch::Matchers::WithinAbs(2 * kx, 1e-9));
  REQUIRE_THAT(ann.keypoints[1].y, Catch::Matchers::WithinAbs(2 * ky, 1e-9));
}

TEST_CASE("image-to-heatmap coordinate round trip stays within half a pixel") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> pos(0.0, 63.0);
  for (int i = 0; i < 200; ++i) {
    double x = pos(rng);
    double hx = std::round(x / 4.0);   // heatmap-space coordinate
    double back = hx * 4.0;            // decoded back to image space
    REQUIRE(std::abs(back - x) / 4.0 <= 0.5);  // half a heatmap pixel
  }
}

TEST_CASE("annotation save/load round trip") {
  SynthSpec spec;
  auto data = synth_generate(spec, 5);
  std::vector<PoseAnnotation> anns;
  for (auto& s : data) anns.push_back(s.annotation);
  std::string path = "anns_test.txt";
  save_annotations(anns, path);
  auto loaded = load_annotations(path);
  REQUIRE(loaded.size() == anns.size());
  for (std::size_t i = 0; i < anns.size(); ++i) {
    REQUIRE(loaded[i].id == anns[i].id);
    REQUIRE(loaded[i].center_x == anns[i].center_x);
    REQUIRE(loaded[i].scale == anns[i].scale);
    REQUIRE(loaded[i].lr_pairs == anns[i].lr_pairs);
    for (std::size_t p = 0; p < 4; ++p) {
      REQUIRE(loaded[i].keypoints[p].x == anns[i].keypoints[p].x);
      REQUIRE(loaded[i].keypoints[p].y == anns[i].keypoints[p].y);
      REQUIRE(loaded[i].keypoints[p].visible == anns[i].keypoints[p].visible);
    }
  }
  std::remove(path.c_str());

  // empty dataset round trips
  save_annotations({}, path);
  REQUIRE(load_annotations(path).empty());
  std::remove(path.c_str());
}

TEST_CASE("hand-written annotation fixture parses to expected values") {
  std::string path = "fixture_test.txt";
  {
    std::ofstream os(path);
    os << "mca-annotations v1\n"
       << "parts 2\n"
       << "pair 0 1\n"
       << "record fig1 center 10.5 20.25 scale 0.75 kp 1 2 1 kp 3.5 4.5 0\n";
  }
  auto anns = load_annotations(path);
  REQUIRE(anns.size() == 1);
  REQUIRE(anns[0].id == "fig1");
  REQUIRE(anns[0].center_x == 10.5);
  REQUIRE(anns[0].center_y == 20.25);
  REQUIRE(anns[0].scale == 0.75);
  REQUIRE(anns[0].keypoints[0].x == 1.0);
  REQUIRE(anns[0].keypoints[1].x == 3.5);
  REQUIRE_FALSE(anns[0].keypoints[1].visible);
  std::remove(path.c_str());

  // malformed file gives a line diagnostic
  {
    std::ofstream os(path);
    os << "mca-annotations v1\nparts 2\nrecord broken center oops\n";
  }
  REQUIRE_THROWS_WITH(load_annotations(path),
                      Catch::Matchers::ContainsSubstring(":3:"));
  std::remove(path.c_str());
}

TEST_CASE("ppm round trip within quantization") {
  SynthSpec spec;
  auto s = synth_sample(spec, 7);
  std::string path = "img_test.ppm";
  save_ppm(path, s.image);
  Image back = load_ppm(path);
  REQUIRE(back.height == s.image.height);
  for (std::size_t i = 0; i < back.data.size(); ++i)
    REQUIRE(std::abs(back.data[i] - s.image.data[i]) <= real(0.5 / 255 + 1e-6));
  std::remove(path.c_str());
}
