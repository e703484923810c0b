#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mca/blocks.hpp"
#include "mca/gradcheck.hpp"
#include "mca/receptive_field.hpp"
#include "oracles.hpp"

using namespace mca;

namespace {

Tensor rand_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false) {
  auto v = oracle::random_vector(shape_numel(shape), rng);
  std::vector<real> d(v.begin(), v.end());
  return Tensor::from_data(std::move(shape), std::move(d), requires_grad);
}

void zero_conv(Conv2d& c) {
  std::fill(c.weight.data().begin(), c.weight.data().end(), real(0));
  std::fill(c.bias.data().begin(), c.bias.data().end(), real(0));
}

// Finite-difference check of `loss` against a sample of a block's
// parameters.
template <typename Fn>
void check_param_grads(Fn&& loss_fn, ParamList& params, std::mt19937_64& rng,
                       double tol = 1e-4, std::size_t samples_per_param = 2,
                       double step = 1e-5) {
  for (auto& p : params) p.tensor.zero_grad();
  Tensor loss = loss_fn();
  loss.backward();
  std::uniform_int_distribution<std::size_t> pick(0, 1 << 30);
  for (auto& p : params) {
    if (!p.tensor.requires_grad()) continue;
    for (std::size_t s = 0; s < samples_per_param; ++s) {
      std::size_t i = pick(rng) % p.tensor.numel();
      double ad = p.tensor.has_grad() ? p.tensor.grad()[i] : 0.0;
      double fd = numeric_grad_at([&] { return loss_fn().item(); }, p.tensor,
                                  i, step);
      INFO(p.name << "[" << i << "] ad=" << ad << " fd=" << fd);
      REQUIRE(rel_error(ad, fd) < tol);
    }
  }
}

}  // namespace

TEST_CASE("residual unit is the identity when F is zeroed") {
  std::mt19937_64 rng(1);
  ResidualUnit unit(4, 4, rng);
  zero_conv(unit.reduce.conv);
  zero_conv(unit.spatial.conv);
  zero_conv(unit.expand.conv);
  Tensor x = rand_tensor({2, 4, 6, 6}, rng);
  Tensor y = unit.forward(x);
  REQUIRE(y.data() == x.data());
}

TEST_CASE("residual unit output minus F(x) equals x") {
  std::mt19937_64 rng(2);
  ResidualUnit unit(4, 4, rng);
  Tensor x = rand_tensor({1, 4, 6, 6}, rng);
  Tensor y = unit.forward(x);
  // second forward of the branch alone reuses batch stats deterministically
  Tensor f = unit.residual_branch(x);
  for (std::size_t i = 0; i < x.numel(); ++i)
    REQUIRE_THAT(y.at(i) - f.at(i), Catch::Matchers::WithinAbs(x.at(i), 1e-12));
}

TEST_CASE("residual unit inserts a projection on channel change") {
  std::mt19937_64 rng(3);
  ResidualUnit narrow(3, 8, rng);
  REQUIRE(narrow.has_projection);
  Tensor x = rand_tensor({1, 3, 4, 4}, rng);
  REQUIRE(narrow.forward(x).shape() == Shape{1, 8, 4, 4});
  ResidualUnit same(4, 4, rng);
  REQUIRE_FALSE(same.has_projection);
}

TEST_CASE("residual unit passes a finite-difference gradient check") {
  std::mt19937_64 rng(4);
  ResidualUnit unit(3, 3, rng);
  Tensor x = rand_tensor({2, 3, 4, 4}, rng, true);
  ParamList params;
  unit.collect("unit", params);
  params.push_back({"x", x});
  auto loss_fn = [&] {
    Tensor y = unit.forward(x);
    return mse_loss(y, Tensor::zeros(y.shape()));
  };
  check_param_grads(loss_fn, params, rng);
}

TEST_CASE("HRU degenerates to the residual unit when branch C is zeroed") {
  std::mt19937_64 rng(5);
  HourglassResidualUnit hru(4, 4, rng);
  zero_conv(hru.pooled2.conv);
  std::mt19937_64 data_rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x = rand_tensor({1, 4, 6, 6}, data_rng);
    Tensor full = hru.forward(x);
    Tensor plain = hru.body.forward(x);
    REQUIRE(full.data() == plain.data());
  }
}

TEST_CASE("HRU with branches B and C zeroed is the identity") {
  std::mt19937_64 rng(6);
  HourglassResidualUnit hru(4, 4, rng);
  zero_conv(hru.body.reduce.conv);
  zero_conv(hru.body.spatial.conv);
  zero_conv(hru.body.expand.conv);
  zero_conv(hru.pooled2.conv);
  Tensor x = rand_tensor({1, 4, 4, 4}, rng);
  REQUIRE(hru.forward(x).data() == x.data());
}

TEST_CASE("HRU rejects odd spatial extents") {
  std::mt19937_64 rng(7);
  HourglassResidualUnit hru(2, 2, rng);
  REQUIRE_THROWS_WITH(hru.forward(Tensor::zeros({1, 2, 5, 4})),
                      Catch::Matchers::ContainsSubstring("HRU"));
}

TEST_CASE("HRU passes a finite-difference gradient check") {
  std::mt19937_64 rng(8);
  HourglassResidualUnit hru(2, 2, rng);
  Tensor x = rand_tensor({1, 2, 4, 4}, rng, true);
  ParamList params;
  hru.collect("hru", params);
  params.push_back({"x", x});
  auto loss_fn = [&] {
    Tensor y = hru.forward(x);
    return mse_loss(y, Tensor::zeros(y.shape()));
  };
  check_param_grads(loss_fn, params, rng);
}

TEST_CASE("hourglass ladder structure") {
  std::mt19937_64 rng(9);
  Hourglass hg1(1, 2, BlockKind::Residual, rng);
  auto out1 = hg1.forward(rand_tensor({1, 2, 8, 8}, rng));
  REQUIRE(out1.ladder.size() == 2);
  REQUIRE(out1.ladder[0].first == 4);
  REQUIRE(out1.ladder[1].first == 8);
  REQUIRE(out1.top.shape() == Shape{1, 2, 8, 8});

  Hourglass hg2(2, 3, BlockKind::Residual, rng);
  auto out2 = hg2.forward(rand_tensor({2, 3, 16, 16}, rng));
  REQUIRE(out2.ladder.size() == 3);
  std::vector<std::size_t> res = {4, 8, 16};
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(out2.ladder[i].first == res[i]);
    REQUIRE(out2.ladder[i].second.shape() ==
            Shape{2, 3, res[i], res[i]});
  }
  REQUIRE(out2.top.same_node(out2.ladder.back().second));
}

TEST_CASE("hourglass preserves spatial extent and rejects bad sizes") {
  std::mt19937_64 rng(10);
  for (std::size_t depth : {1u, 2u, 3u}) {
    Hourglass hg(depth, 2, BlockKind::Residual, rng);
    std::size_t sz = std::size_t(8) << (depth > 2 ? depth - 2 : 0);
    Tensor x = rand_tensor({1, 2, sz, sz}, rng);
    REQUIRE(hg.forward(x).top.shape() == x.shape());
  }
  Hourglass hg(2, 2, BlockKind::Residual, rng);
  REQUIRE_THROWS_WITH(hg.forward(Tensor::zeros({1, 2, 6, 6})),
                      Catch::Matchers::ContainsSubstring("divisible"));
}

TEST_CASE("hourglass with HRU skip blocks runs and differs structurally") {
  std::mt19937_64 rng(11);
  Hourglass plain(1, 2, BlockKind::Residual, rng);
  Hourglass nested(1, 2, BlockKind::HRU, rng);
  ParamList pp, np;
  plain.collect("hg", pp);
  nested.collect("hg", np);
  REQUIRE(total_param_count(np) > total_param_count(pp));
  Tensor x = rand_tensor({1, 2, 8, 8}, rng);
  REQUIRE(nested.forward(x).top.shape() == x.shape());
}

TEST_CASE("hourglass passes a finite-difference gradient check") {
  std::mt19937_64 rng(12);
  Hourglass hg(2, 4, BlockKind::Residual, rng);
  Tensor x = rand_tensor({1, 4, 8, 8}, rng, true);
  ParamList params;
  hg.collect("hg", params);
  params.push_back({"x", x});
  auto loss_fn = [&] {
    Tensor y = hg.forward(x).top;
    return mse_loss(y, Tensor::zeros(y.shape()));
  };
  check_param_grads(loss_fn, params, rng, 1e-4, 1);
}

TEST_CASE("receptive field of the HRU branches") {
  auto b = receptive_field_of(residual_branch_layers());
  REQUIRE(b.size_h == 3);
  REQUIRE(b.size_w == 3);
  auto c = receptive_field_of(pooled_branch_layers());
  REQUIRE(c.size_h == 10);
  REQUIRE(c.size_w == 10);
  auto single = receptive_field_of({conv_layer(3)});
  REQUIRE(single.size_h == 3);
}

TEST_CASE("pooled branch receptive field dominates for every kernel >= 2") {
  for (std::size_t k = 2; k <= 7; ++k) {
    auto b = receptive_field_of({conv_layer(1), conv_layer(k), conv_layer(1)});
    auto c = receptive_field_of(pooled_branch_layers(k));
    REQUIRE(c.size_h > b.size_h);
    REQUIRE(c.size_w > b.size_w);
  }
}
