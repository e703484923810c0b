#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mca/layers.hpp"

// Checkpoint file layout (all integers little-endian):
//   magic   "MCAC"                          4 bytes
//   version u32                             (currently 1)
//   config  u64 length + that many bytes    (config echo, key=value lines)
//   count   u64                             number of parameters
//   per parameter:
//     name  u64 length + that many bytes
//     ndims u32, then ndims u64 extents
//     data  numel little-endian IEEE-754 64-bit floats
// Save/load round-trips are bit-exact at double precision.

namespace mca {

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  MCA_CHECK(bool(is), "checkpoint: unexpected end of file");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_le<std::uint64_t>(os, bits);
}

inline double read_f64(std::istream& is) {
  std::uint64_t bits = read_le<std::uint64_t>(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParamList& params,
                            const std::string& config_echo) {
  std::ofstream os(path, std::ios::binary);
  MCA_CHECK(bool(os), "checkpoint: cannot open ", path, " for writing");
  os.write("MCAC", 4);
  detail::write_le<std::uint32_t>(os, 1);
  detail::write_le<std::uint64_t>(os, config_echo.size());
  os.write(config_echo.data(), std::streamsize(config_echo.size()));
  detail::write_le<std::uint64_t>(os, params.size());
  for (const auto& p : params) {
    detail::write_le<std::uint64_t>(os, p.name.size());
    os.write(p.name.data(), std::streamsize(p.name.size()));
    detail::write_le<std::uint32_t>(os, std::uint32_t(p.tensor.shape().size()));
    for (std::size_t d : p.tensor.shape())
      detail::write_le<std::uint64_t>(os, d);
    for (real v : p.tensor.data()) detail::write_f64(os, double(v));
  }
  MCA_CHECK(bool(os), "checkpoint: write failed for ", path);
}

// Reads only the stored config echo, so the model can be rebuilt before the
// parameters are loaded.
inline std::string read_checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  MCA_CHECK(bool(is), "checkpoint: cannot open ", path);
  char magic[4];
  is.read(magic, 4);
  MCA_CHECK(bool(is) && std::memcmp(magic, "MCAC", 4) == 0,
            "checkpoint: bad magic in ", path);
  std::uint32_t version = detail::read_le<std::uint32_t>(is);
  MCA_CHECK(version == 1, "checkpoint: unsupported version ", version);
  std::uint64_t cfg_len = detail::read_le<std::uint64_t>(is);
  std::string config(cfg_len, '\0');
  is.read(config.data(), std::streamsize(cfg_len));
  MCA_CHECK(bool(is), "checkpoint: truncated file ", path);
  return config;
}

// Loads parameter values into an existing parameter list by name. Every
// checkpoint entry must match an existing parameter with the same shape.
// Returns the stored config echo.
inline std::string load_checkpoint(const std::string& path,
                                   ParamList& params) {
  std::ifstream is(path, std::ios::binary);
  MCA_CHECK(bool(is), "checkpoint: cannot open ", path);
  char magic[4];
  is.read(magic, 4);
  MCA_CHECK(bool(is) && std::memcmp(magic, "MCAC", 4) == 0,
            "checkpoint: bad magic in ", path);
  std::uint32_t version = detail::read_le<std::uint32_t>(is);
  MCA_CHECK(version == 1, "checkpoint: unsupported version ", version);
  std::uint64_t cfg_len = detail::read_le<std::uint64_t>(is);
  std::string config(cfg_len, '\0');
  is.read(config.data(), std::streamsize(cfg_len));

  std::unordered_map<std::string, Tensor> by_name;
  for (auto& p : params) by_name.emplace(p.name, p.tensor);

  std::uint64_t count = detail::read_le<std::uint64_t>(is);
  MCA_CHECK(count == params.size(), "checkpoint: has ", count,
            " parameters, model has ", params.size());
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t name_len = detail::read_le<std::uint64_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), std::streamsize(name_len));
    std::uint32_t ndims = detail::read_le<std::uint32_t>(is);
    Shape shape(ndims);
    for (auto& d : shape) d = detail::read_le<std::uint64_t>(is);
    auto it = by_name.find(name);
    MCA_CHECK(it != by_name.end(), "checkpoint: unknown parameter '", name,
              "'");
    MCA_CHECK(it->second.shape() == shape, "checkpoint: parameter '", name,
              "' has shape ", shape_str(shape), ", model expects ",
              shape_str(it->second.shape()));
    auto& data = it->second.data();
    for (auto& v : data) v = real(detail::read_f64(is));
  }
  MCA_CHECK(bool(is), "checkpoint: truncated file ", path);
  return config;
}

}  // namespace mca
