#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mca/attention.hpp"
#include "mca/blocks.hpp"

namespace mca {

// Full model configuration. The five ablation variants are spelled out of
// the toggles: multi_semantics (per-stack attention), HRU skip blocks,
// multi_resolution fusion, and hierarchical part attention.
struct NetworkConfig {
  std::size_t stacks = 2;
  std::size_t parts = 4;
  std::size_t input_size = 64;   // heatmaps are input_size / 4
  std::size_t channels = 32;
  std::size_t hourglass_depth = 2;
  bool multi_semantics = true;   // MS: attention after every stack
  bool hru = true;               // HRU skip blocks inside the hourglasses
  bool multi_resolution = true;  // MR: fuse attention over the ladder
  bool part_attention = true;    // HP: part stacks after part_start
  // First 1-based stack index using part attention; stacks+1 means never.
  // 0 requests the default split ceil(S/2)+1.
  std::size_t part_start = 0;
  AttentionMode attention_mode = AttentionMode::Crf;
  CRFSettings crf;
  std::uint64_t seed = 1234;

  std::size_t heatmap_size() const { return input_size / 4; }

  std::size_t effective_part_start() const {
    if (!part_attention) return stacks + 1;
    return part_start ? part_start : (stacks + 1) / 2 + 1;
  }

  std::vector<std::size_t> resolution_ladder() const {
    std::vector<std::size_t> ladder;
    std::size_t r = heatmap_size() >> hourglass_depth;
    for (std::size_t i = 0; i <= hourglass_depth; ++i, r *= 2)
      ladder.push_back(r);
    return ladder;
  }

  std::vector<std::string> validation_errors() const {
    std::vector<std::string> errs;
    if (stacks < 1) errs.push_back("stacks must be >= 1");
    if (parts < 1) errs.push_back("parts must be >= 1");
    if (input_size % 4 != 0) errs.push_back("input size must be divisible by 4");
    if (heatmap_size() % (std::size_t(1) << hourglass_depth) != 0 ||
        (heatmap_size() >> hourglass_depth) == 0)
      errs.push_back("heatmap size must be divisible by 2^depth");
    if (part_attention && !multi_semantics)
      errs.push_back("part attention (HP) requires multi-semantics (MS)");
    if (multi_resolution && !multi_semantics)
      errs.push_back("multi-resolution (MR) requires multi-semantics (MS)");
    if (part_start > stacks + 1)
      errs.push_back("part_start must be <= stacks + 1");
    if (crf.kernel_extent % 2 == 0 || crf.steps < 1)
      errs.push_back("CRF settings invalid (even kernel or zero steps)");
    return errs;
  }

  void validate() const {
    auto errs = validation_errors();
    if (errs.empty()) return;
    std::ostringstream os;
    os << "invalid network config:";
    for (const auto& e : errs) os << "\n  - " << e;
    throw Error(os.str());
  }

  std::string echo() const {
    std::ostringstream os;
    os << "stacks=" << stacks << "\n"
       << "parts=" << parts << "\n"
       << "input_size=" << input_size << "\n"
       << "channels=" << channels << "\n"
       << "hourglass_depth=" << hourglass_depth << "\n"
       << "multi_semantics=" << int(multi_semantics) << "\n"
       << "hru=" << int(hru) << "\n"
       << "multi_resolution=" << int(multi_resolution) << "\n"
       << "part_attention=" << int(part_attention) << "\n"
       << "part_start=" << part_start << "\n"
       << "attention_mode="
       << (attention_mode == AttentionMode::Crf ? "crf" : "softmax") << "\n"
       << "crf_kernel=" << crf.kernel_extent << "\n"
       << "crf_steps=" << crf.steps << "\n"
       << "crf_unary_each_step=" << int(crf.include_unary_each_step) << "\n"
       << "seed=" << seed << "\n";
    return os.str();
  }

  static NetworkConfig from_echo(const std::string& text) {
    NetworkConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(0, eq), val = line.substr(eq + 1);
      cfg.apply(key, val);
    }
    return cfg;
  }

  void apply(const std::string& key, const std::string& val) {
    auto to_u = [&] { return std::stoull(val); };
    if (key == "stacks") stacks = to_u();
    else if (key == "parts") parts = to_u();
    else if (key == "input_size") input_size = to_u();
    else if (key == "channels") channels = to_u();
    else if (key == "hourglass_depth") hourglass_depth = to_u();
    else if (key == "multi_semantics") multi_semantics = to_u() != 0;
    else if (key == "hru") hru = to_u() != 0;
    else if (key == "multi_resolution") multi_resolution = to_u() != 0;
    else if (key == "part_attention") part_attention = to_u() != 0;
    else if (key == "part_start") part_start = to_u();
    else if (key == "attention_mode")
      attention_mode = (val == "softmax") ? AttentionMode::Softmax
                                          : AttentionMode::Crf;
    else if (key == "crf_kernel") crf.kernel_extent = to_u();
    else if (key == "crf_steps") crf.steps = to_u();
    else if (key == "crf_unary_each_step")
      crf.include_unary_each_step = to_u() != 0;
    else if (key == "seed") seed = to_u();
    else fail("unknown config key '", key, "'");
  }

  // Applies an ablation variant by name: BL, BL+MS, BL+MS+HRU,
  // BL+MS+HRU+MR, BL+MS+HRU+MR+HP.
  void apply_variant(const std::string& name) {
    multi_semantics = hru = multi_resolution = part_attention = false;
    if (name == "BL") return;
    multi_semantics = true;
    if (name == "BL+MS") return;
    hru = true;
    if (name == "BL+MS+HRU") return;
    multi_resolution = true;
    if (name == "BL+MS+HRU+MR") return;
    part_attention = true;
    MCA_CHECK(name == "BL+MS+HRU+MR+HP", "unknown ablation variant '", name,
              "'; expected BL, BL+MS, BL+MS+HRU, BL+MS+HRU+MR or "
              "BL+MS+HRU+MR+HP");
  }
};

inline const std::vector<std::string>& ablation_variant_names() {
  static const std::vector<std::string> names = {
      "BL", "BL+MS", "BL+MS+HRU", "BL+MS+HRU+MR", "BL+MS+HRU+MR+HP"};
  return names;
}

// The five cumulative ablation variants derived from a base config.
inline std::vector<NetworkConfig> ablation_matrix(const NetworkConfig& base) {
  base.validate();
  std::vector<NetworkConfig> out;
  for (const auto& name : ablation_variant_names()) {
    NetworkConfig cfg = base;
    cfg.apply_variant(name);
    cfg.validate();
    out.push_back(cfg);
  }
  return out;
}

}  // namespace mca
