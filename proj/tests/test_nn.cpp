// Unit tests for the dense-network substrate: forward pass, hand-derived
// gradients vs. finite differences, Adam, and checkpoint round-trips.
// Reference values were frozen from an independent scripted re-implementation
// of the same arithmetic.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "vip/errors.hpp"
#include "vip/nn.hpp"
#include "vip/rng.hpp"

using namespace vip;
using namespace vip::nn;

namespace {

MlpSpec spec_232() {
  return {{2, 3, 2}, Activation::Tanh, OutputActivation::Identity};
}

// Hand-picked parameter fixture for the [2,3,2] network.
ParamVector params_232() {
  ParamVector p;
  p.layout = spec_232().param_layout();
  p.values = {0.1, -0.2, 0.3, 0.4, -0.5, 0.6,  // W1 (3x2 row major)
              0.01, -0.02, 0.03,               // b1
              0.7, -0.8, 0.9, -1.0, 1.1, -1.2,  // W2 (2x3)
              0.05, -0.05};                    // b2
  return p;
}

ParamVector random_params(const MlpSpec& spec, std::uint64_t seed) {
  ParamVector p = init_params(spec, seed);
  // Glorot init already randomizes weights; jiggle biases too so gradient
  // tests exercise every coordinate.
  Rng rng(derive_seed(seed, "bias-jiggle"));
  for (auto& v : p.values)
    if (v == 0.0) v = rng.uniform(-0.3, 0.3);
  return p;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("forward: zero weights with identity output give a zero vector") {
  const MlpSpec spec{{4, 5, 3}, Activation::Tanh, OutputActivation::Identity};
  const ParamVector p = zero_params(spec);
  const auto out = mlp_forward(spec, p, {1.0, -2.0, 0.5, 3.0});
  REQUIRE(out.size() == 3);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("forward: identity weight matrix with zero bias is the identity map") {
  const MlpSpec spec{{3, 3}, Activation::Tanh, OutputActivation::Identity};
  ParamVector p = zero_params(spec);
  p.values[0] = p.values[4] = p.values[8] = 1.0;  // W diag
  const std::vector<double> x = {0.3, -1.7, 2.5};
  const auto out = mlp_forward(spec, p, x);
  REQUIRE(out.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("forward: [2,3,2] fixture matches the independent re-implementation") {
  const auto out = mlp_forward(spec_232(), params_232(), {1.0, -0.5});
  REQUIRE(out.size() == 2);
  CHECK(out[0] == doctest::Approx(-0.4512237708758781).epsilon(1e-14));
  CHECK(out[1] == doctest::Approx(0.6071615868229117).epsilon(1e-14));
}

TEST_CASE("forward: dimension mismatches throw") {
  CHECK_THROWS_AS(mlp_forward(spec_232(), params_232(), {1.0}),
                  DimensionMismatch);
  ParamVector short_params = params_232();
  short_params.values.pop_back();
  CHECK_THROWS_AS(mlp_forward(spec_232(), short_params, {1.0, -0.5}),
                  DimensionMismatch);
}

TEST_CASE("forward: l2-normalized output has unit norm; zero prenorm throws") {
  const MlpSpec spec{{4, 6, 3}, Activation::Tanh, OutputActivation::L2Normalize};
  const ParamVector p = random_params(spec, 11);
  const auto out = mlp_forward(spec, p, {0.2, -0.9, 0.4, 1.3});
  double n2 = 0.0;
  for (double v : out) n2 += v * v;
  CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(mlp_forward(spec, zero_params(spec), {0.2, -0.9, 0.4, 1.3}),
                  DegenerateNorm);
}

TEST_CASE("gradient: zero upstream yields zero gradients") {
  const auto g =
      mlp_gradient(spec_232(), params_232(), {1.0, -0.5}, {0.0, 0.0});
  for (double v : g.param_grad.values) CHECK(v == 0.0);
  for (double v : g.input_grad) CHECK(v == 0.0);
}

TEST_CASE("gradient: linear 1->1 network, d(wx)/dw = x and d(wx)/dx = w") {
  const MlpSpec spec{{1, 1}, Activation::Tanh, OutputActivation::Identity};
  ParamVector p = zero_params(spec);
  p.values[0] = 0.37;  // w; bias stays 0
  const auto g = mlp_gradient(spec, p, {2.5}, {1.0});
  CHECK(g.param_grad.values[0] == 2.5);   // dw
  CHECK(g.param_grad.values[1] == 1.0);   // db
  CHECK(g.input_grad[0] == 0.37);
}

TEST_CASE("gradient: random [3,4,2] network passes finite differences") {
  for (const auto out_act :
       {OutputActivation::Identity, OutputActivation::L2Normalize}) {
    const MlpSpec spec{{3, 4, 2}, Activation::Tanh, out_act};
    const std::vector<double> x = {0.4, -1.1, 0.7};
    const std::vector<double> upstream = {0.8, -0.3};
    for (std::uint64_t seed : {5ULL, 6ULL, 7ULL}) {
      const ParamVector p = random_params(spec, seed);
      const auto err = grad_check(
          [&](const ParamVector& q) {
            const auto out = mlp_forward(spec, q, x);
            double loss = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i)
              loss += out[i] * upstream[i];
            return std::make_pair(
                loss, mlp_gradient(spec, q, x, upstream).param_grad.values);
          },
          p, 1e-5);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("gradient: relu hidden activation also passes finite differences") {
  const MlpSpec spec{{3, 5, 2}, Activation::Relu, OutputActivation::Identity};
  const std::vector<double> x = {0.9, -0.2, 1.4};
  const std::vector<double> upstream = {-0.6, 1.2};
  const ParamVector p = random_params(spec, 21);
  const auto err = grad_check(
      [&](const ParamVector& q) {
        const auto out = mlp_forward(spec, q, x);
        return std::make_pair(
            out[0] * upstream[0] + out[1] * upstream[1],
            mlp_gradient(spec, q, x, upstream).param_grad.values);
      },
      p, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("adam: zero gradient leaves params unchanged and bumps step_count") {
  const MlpSpec spec{{2, 2}, Activation::Tanh, OutputActivation::Identity};
  ParamVector p = random_params(spec, 3);
  const std::vector<double> before = p.values;
  OptimState state = OptimState::fresh(p.size());
  adam_step(p, std::vector<double>(p.size(), 0.0), state);
  CHECK(state.step_count == 1);
  CHECK(p.values == before);
}

TEST_CASE("adam: bias-corrected first step moves by ~ -lr for unit gradient") {
  ParamVector p;
  p.layout = {{"w", {1}}};
  p.values = {0.0};
  AdamHyper hyper;
  hyper.learning_rate = 0.1;
  OptimState state = OptimState::fresh(1, hyper);
  adam_step(p, {1.0}, state);
  CHECK(p.values[0] == doctest::Approx(-0.09999999900000009).epsilon(1e-14));
}

TEST_CASE("adam: |update| is monotone non-increasing for a constant-sign "
          "gradient trace") {
  // With bias correction, a constant unit gradient gives m-hat = v-hat = 1 at
  // every step, so the update is exactly constant; a decaying same-sign
  // gradient makes it strictly shrink. Assert both behaviors of the
  // recurrence.
  ParamVector p;
  p.layout = {{"w", {1}}};
  p.values = {0.0};
  OptimState state = OptimState::fresh(1);
  double prev_update = 1e300;
  for (int i = 0; i < 20; ++i) {
    const double before = p.values[0];
    adam_step(p, {1.0}, state);
    const double update = std::fabs(p.values[0] - before);
    CHECK(update <= prev_update + 1e-15);
    prev_update = update;
  }

  ParamVector q;
  q.layout = {{"w", {1}}};
  q.values = {0.0};
  OptimState state2 = OptimState::fresh(1);
  double grad = 1.0;
  prev_update = 1e300;
  for (int i = 0; i < 20; ++i) {
    const double before = q.values[0];
    adam_step(q, {grad}, state2);
    const double update = std::fabs(q.values[0] - before);
    CHECK(update < prev_update);
    prev_update = update;
    grad *= 0.7;  // same sign, decaying magnitude
  }
}

TEST_CASE("adam: non-finite gradients are rejected") {
  ParamVector p;
  p.layout = {{"w", {1}}};
  p.values = {0.0};
  OptimState state = OptimState::fresh(1);
  CHECK_THROWS_AS(adam_step(p, {std::nan("")}, state), NonFiniteGradient);
  CHECK_THROWS_AS(adam_step(p, {1.0, 2.0}, state), DimensionMismatch);
}

TEST_CASE("grad_check: quadratic loss is exact up to rounding") {
  ParamVector p = random_params(
      {{3, 3}, Activation::Tanh, OutputActivation::Identity}, 9);
  const auto err = grad_check(
      [](const ParamVector& q) {
        double loss = 0.0;
        for (double v : q.values) loss += 0.5 * v * v;
        return std::make_pair(loss, q.values);
      },
      p, 1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("init_params: seeded, bounded, and reproducible") {
  const MlpSpec spec{{6, 8, 4}, Activation::Tanh, OutputActivation::Identity};
  const ParamVector a = init_params(spec, 123);
  const ParamVector b = init_params(spec, 123);
  const ParamVector c = init_params(spec, 124);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.all_finite());
  a.check_consistent();
  const double bound1 = std::sqrt(6.0 / (6 + 8));
  for (std::size_t i = 0; i < 6 * 8; ++i)
    CHECK(std::fabs(a.values[i]) <= bound1);
  for (std::size_t i = 6 * 8; i < 6 * 8 + 8; ++i)
    CHECK(a.values[i] == 0.0);  // biases
}

TEST_CASE("checkpoint: save/load round-trips values and layout exactly") {
  const ParamVector p = params_232();
  const std::string path = temp_path("nn_roundtrip.vipp");
  save_params(p, path);
  const ParamVector q = load_params(path);
  CHECK(q.values == p.values);
  REQUIRE(q.layout.size() == p.layout.size());
  for (std::size_t i = 0; i < p.layout.size(); ++i) {
    CHECK(q.layout[i].name == p.layout[i].name);
    CHECK(q.layout[i].shape == p.layout[i].shape);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: truncated and garbled files are rejected") {
  const ParamVector p = params_232();
  const std::string path = temp_path("nn_corrupt.vipp");
  save_params(p, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 9);
  CHECK_THROWS_AS(load_params(path), CorruptFile);

  std::ofstream os(path, std::ios::binary);
  os << "NOPE";
  os.close();
  CHECK_THROWS_AS(load_params(path), CorruptFile);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_params(path), IoError);
}
