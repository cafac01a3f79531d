// Embedding-conditioned behavior-cloning policy and closed-loop rollout.
// A fixed-variance Gaussian head reduces the negative log-likelihood to
// mean squared error on the predicted mean action.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vip/encoder.hpp"
#include "vip/hash.hpp"
#include "vip/library.hpp"
#include "vip/nn.hpp"
#include "vip/world.hpp"

namespace vip::policy {

inline constexpr int kStateWidth = world::kRobotFeatureWidth;
inline constexpr int kInputWidth = kStateWidth + encoder::kEmbeddingWidth;

nn::MlpSpec policy_spec();

struct BcSample {
  std::vector<double> state;      // kStateWidth
  std::array<double, 2> action;
  const std::vector<double>* embedding;  // source trajectory's embedding
};

struct BcResult {
  double loss;  // mean over batch and axes of squared error
  nn::ParamVector grads;
};

BcResult bc_loss(const nn::ParamVector& params,
                 const std::vector<BcSample>& batch);

struct PolicyConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double learning_rate = 3e-3;
  double lr_decay = 0.92;  // per-epoch multiplicative learning-rate decay
  double sigma = 1.0;      // fixed action variance, recorded in the sidecar
};

struct PolicyTrainResult {
  nn::ParamVector params;
  std::vector<std::pair<std::size_t, double>> loss_curve;  // epoch, mean MSE
};

// Minibatch BC over all (s_t, a_t, e_traj) triples; each state-action pair
// is conditioned on its own trajectory's library embedding. Every dataset
// trajectory must have a library entry.
PolicyTrainResult train_policy(const std::vector<world::Trajectory>& robot_dataset,
                               const library::EmbeddingLibrary& lib,
                               const PolicyConfig& config, std::uint64_t seed);

// Deterministic clamped mean action.
world::Action act(const nn::ParamVector& params, const world::WorldLayout& layout,
                  const world::WorldState& state, const encoder::Embedding& embedding);

world::Trajectory rollout(const world::WorldLayout& layout,
                          const world::WorldState& start_state,
                          const nn::ParamVector& params,
                          const encoder::Embedding& embedding,
                          int horizon = world::kHorizon);

// Checkpoint = ParamVector file plus a JSON sidecar
// {state_width, E, horizon, sigma, library_fingerprint}.
void save_policy(const nn::ParamVector& params, const PolicyConfig& config,
                 const Fingerprint& library_fingerprint, const std::string& path);
struct LoadedPolicy {
  nn::ParamVector params;
  Fingerprint library_fingerprint;
};
LoadedPolicy load_policy(const std::string& path);

}  // namespace vip::policy
