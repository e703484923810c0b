#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "mca/common.hpp"
#include "mca/tensor.hpp"

namespace mca {

// RGB raster in CHW order, values in [0,1].
struct Image {
  std::size_t height = 0, width = 0;
  std::vector<real> data;  // 3 * height * width

  Image() = default;
  Image(std::size_t h, std::size_t w, real fill = 0)
      : height(h), width(w), data(3 * h * w, fill) {}

  real& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  real at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }

  // Bilinear sample with zero fill outside bounds.
  real sample(std::size_t c, double y, double x) const {
    double fy = std::floor(y), fx = std::floor(x);
    long iy = long(fy), ix = long(fx);
    double dy = y - fy, dx = x - fx;
    auto tap = [&](long yy, long xx) -> double {
      if (yy < 0 || yy >= long(height) || xx < 0 || xx >= long(width))
        return 0.0;
      return at(c, std::size_t(yy), std::size_t(xx));
    };
    return real((1 - dy) * ((1 - dx) * tap(iy, ix) + dx * tap(iy, ix + 1)) +
                dy * ((1 - dx) * tap(iy + 1, ix) + dx * tap(iy + 1, ix + 1)));
  }

  Tensor to_tensor() const {
    return Tensor::from_data({1, 3, height, width}, data);
  }
};

// Stacks images of identical size into an Nx3xHxW batch tensor.
inline Tensor batch_tensor(const std::vector<Image>& images) {
  MCA_CHECK(!images.empty(), "batch_tensor: empty image list");
  std::size_t h = images[0].height, w = images[0].width;
  std::vector<real> data;
  data.reserve(images.size() * 3 * h * w);
  for (const auto& img : images) {
    MCA_CHECK(img.height == h && img.width == w,
              "batch_tensor: mixed image sizes");
    data.insert(data.end(), img.data.begin(), img.data.end());
  }
  return Tensor::from_data({images.size(), 3, h, w}, std::move(data));
}

inline unsigned char quantize8(real v) {
  double c = std::clamp(double(v), 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

// Binary portable pixmap (P6), 8-bit.
inline void save_ppm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  MCA_CHECK(bool(os), "cannot open ", path, " for writing");
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        unsigned char b = quantize8(img.at(c, y, x));
        os.write(reinterpret_cast<const char*>(&b), 1);
      }
  MCA_CHECK(bool(os), "write failed for ", path);
}

inline Image load_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  MCA_CHECK(bool(is), "cannot open ", path);
  std::string magic;
  is >> magic;
  MCA_CHECK(magic == "P6", path, ": not a binary pixmap (P6)");
  std::size_t w, h, maxv;
  is >> w >> h >> maxv;
  MCA_CHECK(maxv == 255, path, ": only 8-bit pixmaps supported");
  is.get();  // single whitespace after the header
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        char b;
        is.read(&b, 1);
        img.at(c, y, x) = real(static_cast<unsigned char>(b)) / real(255);
      }
  MCA_CHECK(bool(is), path, ": truncated pixmap");
  return img;
}

// Single-channel map exported as an 8-bit portable graymap with the min/max
// scaling recorded in a sidecar text file, so the stored bytes can be mapped
// back to the original value range.
inline void save_pgm_scaled(const std::string& path,
                            const std::vector<real>& values, std::size_t h,
                            std::size_t w) {
  MCA_CHECK(values.size() == h * w, "save_pgm_scaled: size mismatch");
  real lo = values[0], hi = values[0];
  for (real v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  real span = hi - lo;
  std::ofstream os(path, std::ios::binary);
  MCA_CHECK(bool(os), "cannot open ", path, " for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  for (real v : values) {
    unsigned char b =
        span > 0 ? quantize8((v - lo) / span) : (unsigned char)(0);
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
  std::ofstream side(path + ".scale");
  side << "min " << double(lo) << "\nmax " << double(hi) << "\n";
}

}  // namespace mca
