#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mca/common.hpp"

namespace mca {

struct Keypoint {
  double x = 0, y = 0;
  bool visible = true;
};

struct PoseAnnotation {
  std::string id;
  std::vector<Keypoint> keypoints;
  double center_x = 0, center_y = 0;
  // Crop window side length relative to the image extent: 1.0 means the
  // whole image.
  double scale = 1.0;
  // Symmetric involution over part indices, e.g. {2,3} for a wrist pair.
  std::vector<std::pair<std::size_t, std::size_t>> lr_pairs;

  void check(std::size_t img_h, std::size_t img_w) const {
    for (std::size_t p = 0; p < keypoints.size(); ++p) {
      const auto& kp = keypoints[p];
      MCA_CHECK(!kp.visible ||
                    (kp.x >= 0 && kp.x < double(img_w) && kp.y >= 0 &&
                     kp.y < double(img_h)),
                "annotation ", id, ": visible keypoint ", p,
                " outside image bounds");
    }
    for (auto [a, b] : lr_pairs) {
      MCA_CHECK(a < keypoints.size() && b < keypoints.size() && a != b,
                "annotation ", id, ": bad left-right pair ", a, "<->", b);
    }
  }
};

// Annotation text format, one token stream per record:
//   mca-annotations v1
//   parts <P>
//   pair <a> <b>          (zero or more)
//   record <id> center <cx> <cy> scale <s> kp <x> <y> <v>  (P triples)
inline void save_annotations(const std::vector<PoseAnnotation>& anns,
                             const std::string& path) {
  std::ofstream os(path);
  MCA_CHECK(bool(os), "cannot open ", path, " for writing");
  os << "mca-annotations v1\n";
  std::size_t parts = anns.empty() ? 0 : anns[0].keypoints.size();
  os << "parts " << parts << "\n";
  if (!anns.empty())
    for (auto [a, b] : anns[0].lr_pairs) os << "pair " << a << " " << b << "\n";
  os.precision(17);
  for (const auto& ann : anns) {
    MCA_CHECK(ann.keypoints.size() == parts, "annotation ", ann.id,
              " has ", ann.keypoints.size(), " keypoints, expected ", parts);
    os << "record " << ann.id << " center " << ann.center_x << " "
       << ann.center_y << " scale " << ann.scale;
    for (const auto& kp : ann.keypoints)
      os << " kp " << kp.x << " " << kp.y << " " << int(kp.visible);
    os << "\n";
  }
  MCA_CHECK(bool(os), "write failed for ", path);
}

inline std::vector<PoseAnnotation> load_annotations(const std::string& path) {
  std::ifstream is(path);
  MCA_CHECK(bool(is), "cannot open ", path);
  std::string line;
  std::size_t lineno = 0;
  auto bad = [&](const std::string& why) {
    fail(path, ":", lineno, ": ", why);
  };

  std::getline(is, line);
  ++lineno;
  if (line != "mca-annotations v1") bad("missing or unsupported header");

  std::size_t parts = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<PoseAnnotation> anns;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "parts") {
      if (!(ls >> parts)) bad("malformed parts line");
    } else if (tag == "pair") {
      std::size_t a, b;
      if (!(ls >> a >> b)) bad("malformed pair line");
      pairs.emplace_back(a, b);
    } else if (tag == "record") {
      PoseAnnotation ann;
      ann.lr_pairs = pairs;
      std::string kw;
      if (!(ls >> ann.id >> kw) || kw != "center") bad("expected 'center'");
      if (!(ls >> ann.center_x >> ann.center_y)) bad("malformed center");
      if (!(ls >> kw) || kw != "scale") bad("expected 'scale'");
      if (!(ls >> ann.scale)) bad("malformed scale");
      for (std::size_t p = 0; p < parts; ++p) {
        Keypoint kp;
        int vis;
        if (!(ls >> kw) || kw != "kp") bad("expected 'kp'");
        if (!(ls >> kp.x >> kp.y >> vis)) bad("malformed keypoint triple");
        kp.visible = vis != 0;
        ann.keypoints.push_back(kp);
      }
      anns.push_back(std::move(ann));
    } else {
      bad("unknown tag '" + tag + "'");
    }
  }
  return anns;
}

}  // namespace mca
