#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <random>

#include "mca/gradcheck.hpp"
#include "mca/network.hpp"
#include "oracles.hpp"

using namespace mca;

namespace {

Tensor rand_images(std::size_t n, std::size_t size, std::mt19937_64& rng) {
  auto v = oracle::random_vector(n * 3 * size * size, rng, 0.0, 1.0);
  return Tensor::from_data({n, 3, size, size}, {v.begin(), v.end()});
}

Tensor rand_heatmaps(std::size_t n, std::size_t p, std::size_t size,
                     std::mt19937_64& rng) {
  auto v = oracle::random_vector(n * p * size * size, rng, 0.0, 1.0);
  return Tensor::from_data({n, p, size, size}, {v.begin(), v.end()});
}

NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.stacks = 1;
  cfg.parts = 4;
  cfg.input_size = 64;
  cfg.channels = 8;
  cfg.hourglass_depth = 2;
  cfg.multi_resolution = false;
  cfg.part_attention = false;
  cfg.hru = false;
  return cfg;
}

}  // namespace

TEST_CASE("config validation lists violations") {
  NetworkConfig cfg;
  cfg.stacks = 0;
  cfg.input_size = 30;
  cfg.multi_semantics = false;  // HP+MR left on: dependency violations
  auto errs = cfg.validation_errors();
  REQUIRE(errs.size() >= 3);
  REQUIRE_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("single holistic stack emits the contracted shape") {
  NetworkConfig cfg = small_config();
  Network net(cfg);
  net.set_training(false);
  std::mt19937_64 rng(1);
  auto out = net.forward(rand_images(1, 64, rng));
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].heatmaps.shape() == Shape{1, 4, 16, 16});
  REQUIRE(out[0].holistic_map.has_value());
  REQUIRE(out[0].refined_map.has_value());
  REQUIRE(out[0].part_maps.empty());
}

TEST_CASE("part start splits holistic and part stacks") {
  NetworkConfig cfg = small_config();
  cfg.stacks = 2;
  cfg.part_attention = true;
  cfg.part_start = 2;
  Network net(cfg);
  net.set_training(false);
  std::mt19937_64 rng(2);
  auto out = net.forward(rand_images(1, 64, rng));
  REQUIRE(out.size() == 2);
  REQUIRE(out[0].part_maps.empty());
  REQUIRE(out[0].refined_map.has_value());
  REQUIRE(out[1].part_maps.size() == 4);
  REQUIRE_FALSE(out[1].refined_map.has_value());
  for (const auto& o : out)
    REQUIRE(o.heatmaps.shape() == Shape{1, 4, 16, 16});
}

TEST_CASE("default part start mirrors the half split") {
  NetworkConfig cfg;
  cfg.stacks = 8;
  REQUIRE(cfg.effective_part_start() == 5);  // stacks 5..8 part-attentive
  cfg.stacks = 2;
  REQUIRE(cfg.effective_part_start() == 2);
  cfg.part_attention = false;
  REQUIRE(cfg.effective_part_start() == 3);  // never
}

TEST_CASE("baseline with all toggles off runs without attention") {
  NetworkConfig cfg = small_config();
  cfg.multi_semantics = false;
  Network net(cfg);
  net.set_training(false);
  std::mt19937_64 rng(3);
  auto out = net.forward(rand_images(2, 64, rng));
  REQUIRE(out[0].heatmaps.shape() == Shape{2, 4, 16, 16});
  REQUIRE_FALSE(out[0].holistic_map.has_value());
}

TEST_CASE("zeroed attention parameters still give finite heatmaps") {
  NetworkConfig cfg = small_config();
  Network net(cfg);
  net.set_training(false);
  for (auto& p : net.parameters())
    if (p.name.find(".att.") != std::string::npos ||
        p.name.find(".refine.") != std::string::npos)
      std::fill(p.tensor.data().begin(), p.tensor.data().end(), real(0));
  std::mt19937_64 rng(4);
  auto out = net.forward(rand_images(1, 64, rng));
  for (std::size_t i = 0; i < out[0].heatmaps.numel(); ++i)
    REQUIRE(std::isfinite(out[0].heatmaps.at(i)));
  // attention map collapsed to the sigmoid(0) plateau
  for (std::size_t i = 0; i < out[0].holistic_map->values.numel(); ++i)
    REQUIRE(out[0].holistic_map->values.at(i) == 0.5);
}

TEST_CASE("duplicate batch items give identical outputs in eval mode") {
  NetworkConfig cfg = small_config();
  Network net(cfg);
  net.set_training(false);
  std::mt19937_64 rng(5);
  Tensor one = rand_images(1, 64, rng);
  std::vector<real> dup(one.data());
  dup.insert(dup.end(), one.data().begin(), one.data().end());
  Tensor two = Tensor::from_data({2, 3, 64, 64}, std::move(dup));
  auto out = net.forward(two);
  std::size_t half = out[0].heatmaps.numel() / 2;
  for (std::size_t i = 0; i < half; ++i)
    REQUIRE(out[0].heatmaps.at(i) == out[0].heatmaps.at(half + i));
}

TEST_CASE("total_loss is additive over stacks") {
  NetworkConfig cfg = small_config();
  cfg.stacks = 3;
  cfg.part_attention = false;
  Network net(cfg);
  net.set_training(false);
  std::mt19937_64 rng(6);
  auto out = net.forward(rand_images(1, 64, rng));
  Tensor target = rand_heatmaps(1, 4, 16, rng);

  // exact target prediction gives zero loss
  std::vector<StackOutput> perfect(3);
  for (auto& o : perfect)
    o.heatmaps = Tensor::from_data(target.shape(), target.data());
  REQUIRE(net.total_loss(perfect, target).item() == 0.0);

  // additivity against a scalar oracle
  double expect = 0;
  for (const auto& o : out) {
    double acc = 0;
    for (std::size_t i = 0; i < o.heatmaps.numel(); ++i) {
      double d = o.heatmaps.at(i) - target.at(i);
      acc += d * d;
    }
    expect += acc;  // batch size 1
  }
  REQUIRE_THAT(net.total_loss(out, target).item(),
               Catch::Matchers::WithinAbs(expect, 1e-9));

  // equal stacks: S * v
  std::vector<StackOutput> equal(3);
  for (auto& o : equal)
    o.heatmaps = Tensor::from_data(out[0].heatmaps.shape(),
                                   out[0].heatmaps.data());
  REQUIRE_THAT(net.total_loss(equal, target).item(),
               Catch::Matchers::WithinAbs(
                   3.0 * mse_loss(out[0].heatmaps, target).item(), 1e-9));
}

TEST_CASE("ablation matrix produces the five variants") {
  NetworkConfig base = small_config();
  base.stacks = 2;
  auto variants = ablation_matrix(base);
  REQUIRE(variants.size() == 5);
  REQUIRE_FALSE(variants[0].multi_semantics);
  REQUIRE_FALSE(variants[0].hru);
  REQUIRE(variants[4].multi_semantics);
  REQUIRE(variants[4].hru);
  REQUIRE(variants[4].multi_resolution);
  REQUIRE(variants[4].part_attention);
  for (auto& v : variants) REQUIRE(v.validation_errors().empty());
}

TEST_CASE("parameter count strictly increases along the ablation ladder") {
  NetworkConfig base = small_config();
  base.stacks = 2;
  auto variants = ablation_matrix(base);
  std::size_t prev = 0;
  for (const auto& v : variants) {
    Network net(v);
    std::size_t count = net.parameter_count();
    REQUIRE(count > prev);
    prev = count;
  }
}

TEST_CASE("train_step is deterministic and lr=0 freezes parameters") {
  NetworkConfig cfg = small_config();
  cfg.input_size = 32;
  cfg.hourglass_depth = 1;
  std::mt19937_64 rng(7);
  Tensor images = rand_images(2, 32, rng);
  Tensor target = rand_heatmaps(2, 4, 8, rng);

  auto run = [&](real lr, int steps) {
    Network net(cfg);
    net.set_training(true);
    RMSprop opt(lr);
    std::vector<real> losses;
    for (int i = 0; i < steps; ++i)
      losses.push_back(net.train_step(images, target, opt).total_loss);
    return losses;
  };
  auto a = run(2.5e-4, 4);
  auto b = run(2.5e-4, 4);
  REQUIRE(a == b);  // bit-identical loss sequences under the same seed

  auto frozen = run(0.0, 3);
  REQUIRE(frozen[0] == frozen[1]);
  REQUIRE(frozen[1] == frozen[2]);
}

TEST_CASE("intermediate supervision reaches stack-1 parameters directly") {
  NetworkConfig cfg = small_config();
  cfg.stacks = 2;
  cfg.input_size = 32;
  cfg.hourglass_depth = 1;
  Network net(cfg);
  net.set_training(true);
  std::mt19937_64 rng(8);
  Tensor images = rand_images(1, 32, rng);
  Tensor target = rand_heatmaps(1, 4, 8, rng);

  for (auto& p : net.parameters()) p.tensor.zero_grad();
  auto outputs = net.forward(images);
  // supervise only stack 1, dropping later stacks entirely
  mse_loss(outputs[0].heatmaps, target).backward();
  bool any = false;
  for (auto& p : net.parameters()) {
    if (p.name.rfind("stack0.", 0) != 0 || !p.tensor.requires_grad()) continue;
    if (!p.tensor.has_grad()) continue;
    for (real g : p.tensor.grad())
      if (g != 0) { any = true; break; }
  }
  REQUIRE(any);
}

TEST_CASE("full network gradient check on a 20-parameter sample") {
  NetworkConfig cfg = small_config();
  cfg.input_size = 32;
  cfg.hourglass_depth = 1;
  Network net(cfg);
  net.set_training(true);
  std::mt19937_64 rng(9);
  Tensor images = rand_images(1, 32, rng);
  Tensor target = rand_heatmaps(1, 4, 8, rng);

  auto loss_fn = [&] { return net.total_loss(net.forward(images), target); };
  for (auto& p : net.parameters()) p.tensor.zero_grad();
  loss_fn().backward();

  std::uniform_int_distribution<std::size_t> pickp(0, 1 << 30);
  auto& params = net.parameters();
  int checked = 0;
  while (checked < 20) {
    auto& p = params[pickp(rng) % params.size()];
    if (!p.tensor.requires_grad()) continue;
    std::size_t i = pickp(rng) % p.tensor.numel();
    double ad = p.tensor.has_grad() ? p.tensor.grad()[i] : 0.0;
    double fd =
        numeric_grad_at([&] { return loss_fn().item(); }, p.tensor, i, 1e-5);
    INFO(p.name << "[" << i << "] ad=" << ad << " fd=" << fd);
    REQUIRE(rel_error(ad, fd) < 1e-4);
    ++checked;
  }
}

TEST_CASE("checkpoint round trip restores forward bit-exactly") {
  NetworkConfig cfg = small_config();
  cfg.input_size = 32;
  cfg.hourglass_depth = 1;
  Network net(cfg);
  net.set_training(false);
  std::mt19937_64 rng(10);
  Tensor images = rand_images(1, 32, rng);
  auto before = net.forward(images)[0].heatmaps.data();

  std::string path = "net_ckpt_test.mca";
  net.save(path);
  NetworkConfig cfg2 = cfg;
  cfg2.seed = 999;  // different init, then overwritten by the checkpoint
  Network net2(cfg2);
  net2.set_training(false);
  net2.load(path);
  auto after = net2.forward(images)[0].heatmaps.data();
  REQUIRE(before == after);
  std::remove(path.c_str());
}
