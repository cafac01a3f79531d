#include "vip/policy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "vip/errors.hpp"
#include "vip/rng.hpp"

namespace vip::policy {

using json = nlohmann::json;

nn::MlpSpec policy_spec() {
  return {{kInputWidth, 128, 128, 2},
          nn::Activation::Tanh,
          nn::OutputActivation::Identity};
}

namespace {

// The network regresses actions in units of kActionMax: its identity output
// is scaled by this constant before being interpreted as the mean action.
// Targets of order one condition the optimization much better than raw
// actions (|a| <= 0.05); the loss itself stays in raw action units.
constexpr double kActionScale = world::kActionMax;

std::vector<double> policy_input(const std::vector<double>& state,
                                 const std::vector<double>& embedding) {
  std::vector<double> in;
  in.reserve(state.size() + embedding.size());
  in.insert(in.end(), state.begin(), state.end());
  in.insert(in.end(), embedding.begin(), embedding.end());
  return in;
}

}  // namespace

BcResult bc_loss(const nn::ParamVector& params,
                 const std::vector<BcSample>& batch) {
  if (batch.empty()) throw EmptyBatch("bc_loss needs a nonempty batch");
  const nn::MlpSpec spec = policy_spec();
  if (params.size() != spec.param_count())
    throw DimensionMismatch("policy param count " +
                            std::to_string(params.size()) + " != expected " +
                            std::to_string(spec.param_count()));
  BcResult res;
  res.grads.layout = params.layout;
  res.grads.values.assign(params.values.size(), 0.0);
  res.loss = 0.0;

  // Fused forward/backward over the fixed [in, 128, 128, 2] tanh network.
  // Training visits every sample of a large dataset many times, so the
  // per-sample gradient is accumulated straight into the shared buffer with
  // reused workspace instead of materializing one parameter-sized gradient
  // per sample; the arithmetic matches mlp_gradient term for term.
  constexpr std::size_t kIn = kInputWidth;
  constexpr std::size_t kSt = kStateWidth;
  constexpr std::size_t kE = encoder::kEmbeddingWidth;
  constexpr std::size_t kH = 128;
  constexpr std::size_t kOut = 2;
  const double* W1 = params.values.data();
  const double* b1 = W1 + kH * kIn;
  const double* W2 = b1 + kH;
  const double* b2 = W2 + kH * kH;
  const double* W3 = b2 + kH;
  const double* b3 = W3 + kOut * kH;
  double* gW1 = res.grads.values.data();
  double* gb1 = gW1 + kH * kIn;
  double* gW2 = gb1 + kH;
  double* gb2 = gW2 + kH * kH;
  double* gW3 = gb2 + kH;
  double* gb3 = gW3 + kOut * kH;

  std::array<double, kIn> x;
  std::array<double, kH> a1, a2, dz1, dz2;
  const double inv = 1.0 / (2.0 * static_cast<double>(batch.size()));
  for (const auto& sample : batch) {
    if (sample.state.size() != kSt || sample.embedding->size() != kE)
      throw DimensionMismatch("bc sample feature widths");
    for (std::size_t j = 0; j < kSt; ++j) x[j] = sample.state[j];
    for (std::size_t j = 0; j < kE; ++j) x[kSt + j] = (*sample.embedding)[j];

    for (std::size_t i = 0; i < kH; ++i) {
      double s = b1[i];
      const double* row = W1 + i * kIn;
      for (std::size_t j = 0; j < kIn; ++j) s += row[j] * x[j];
      a1[i] = std::tanh(s);
    }
    for (std::size_t i = 0; i < kH; ++i) {
      double s = b2[i];
      const double* row = W2 + i * kH;
      for (std::size_t j = 0; j < kH; ++j) s += row[j] * a1[j];
      a2[i] = std::tanh(s);
    }
    double up[kOut];
    for (std::size_t i = 0; i < kOut; ++i) {
      double s = b3[i];
      const double* row = W3 + i * kH;
      for (std::size_t j = 0; j < kH; ++j) s += row[j] * a2[j];
      const double err = kActionScale * s - sample.action[i];
      res.loss += err * err * inv;
      up[i] = 2.0 * err * inv * kActionScale;
    }

    dz2.fill(0.0);
    for (std::size_t i = 0; i < kOut; ++i) {
      double* grow = gW3 + i * kH;
      const double* wrow = W3 + i * kH;
      const double d = up[i];
      for (std::size_t j = 0; j < kH; ++j) {
        grow[j] += d * a2[j];
        dz2[j] += wrow[j] * d;
      }
      gb3[i] += d;
    }
    for (std::size_t j = 0; j < kH; ++j) dz2[j] *= 1.0 - a2[j] * a2[j];

    dz1.fill(0.0);
    for (std::size_t i = 0; i < kH; ++i) {
      double* grow = gW2 + i * kH;
      const double* wrow = W2 + i * kH;
      const double d = dz2[i];
      for (std::size_t j = 0; j < kH; ++j) {
        grow[j] += d * a1[j];
        dz1[j] += wrow[j] * d;
      }
      gb2[i] += d;
    }
    for (std::size_t j = 0; j < kH; ++j) dz1[j] *= 1.0 - a1[j] * a1[j];

    for (std::size_t i = 0; i < kH; ++i) {
      double* grow = gW1 + i * kIn;
      const double d = dz1[i];
      for (std::size_t j = 0; j < kIn; ++j) grow[j] += d * x[j];
      gb1[i] += d;
    }
  }
  return res;
}

PolicyTrainResult train_policy(const std::vector<world::Trajectory>& robot_dataset,
                               const library::EmbeddingLibrary& lib,
                               const PolicyConfig& config, std::uint64_t seed) {
  // Library embeddings of same-layout trajectories are nearly collinear (the
  // backbone pools many layout-constant channels), so the per-trajectory
  // signal is a small residual around the library mean. Training consumes
  // centered, rescaled embeddings so that signal is unit scale; the affine
  // change of inputs is folded back into the first layer afterwards, so the
  // returned parameters act on raw embeddings exactly as trained.
  const std::size_t emb_width = encoder::kEmbeddingWidth;
  std::vector<double> emb_mean(emb_width, 0.0);
  if (lib.entries.empty()) throw EmptyBatch("empty embedding library");
  for (const auto& entry : lib.entries)
    for (std::size_t j = 0; j < emb_width; ++j)
      emb_mean[j] += entry.embedding.v[j];
  for (double& v : emb_mean) v /= static_cast<double>(lib.size());
  double resid_ms = 0.0;
  for (const auto& entry : lib.entries)
    for (std::size_t j = 0; j < emb_width; ++j) {
      const double r = entry.embedding.v[j] - emb_mean[j];
      resid_ms += r * r;
    }
  const double resid_rms = std::sqrt(resid_ms / static_cast<double>(lib.size()));
  const double emb_scale = resid_rms > 1e-9 ? 1.0 / resid_rms : 1.0;

  // Centered embeddings are looked up once per trajectory and shared by all
  // of its state-action pairs.
  std::unordered_map<std::uint64_t, std::size_t> entry_of;
  entry_of.reserve(lib.size());
  std::vector<std::vector<double>> centered(lib.size());
  for (std::size_t e = 0; e < lib.entries.size(); ++e) {
    entry_of[lib.entries[e].traj_id] = e;
    centered[e].resize(emb_width);
    for (std::size_t j = 0; j < emb_width; ++j)
      centered[e][j] =
          emb_scale * (lib.entries[e].embedding.v[j] - emb_mean[j]);
  }

  std::vector<BcSample> samples;
  for (const auto& traj : robot_dataset) {
    const world::TrajectoryView view = world::strip_label(traj);
    const auto it = entry_of.find(view.id);
    if (it == entry_of.end())
      throw MissingEmbedding("trajectory " + std::to_string(view.id) +
                             " has no library entry");
    for (std::size_t t = 0; t < view.actions->size(); ++t) {
      BcSample sample{world::robot_state_features(*view.layout,
                                                  (*view.states)[t]),
                      (*view.actions)[t].delta, &centered[it->second]};
      // Steps that move an object (drag phases) are the precision-critical
      // part of a trajectory but only a small fraction of its samples;
      // oversample them so closed-loop replays hold contact.
      const world::WorldState& a = (*view.states)[t];
      const world::WorldState& b = (*view.states)[t + 1];
      const bool contact_step = a.drawer_extent != b.drawer_extent ||
                                a.cup != b.cup ||
                                a.faucet_angle != b.faucet_angle;
      const int copies = contact_step ? 4 : 1;
      for (int c = 0; c < copies; ++c) samples.push_back(sample);
    }
  }
  if (samples.empty()) throw EmptyBatch("no training samples");

  const nn::MlpSpec spec = policy_spec();
  nn::ParamVector params = nn::init_params(spec, derive_seed(seed, "policy-init"));
  nn::AdamHyper hyper;
  hyper.learning_rate = config.learning_rate;
  nn::OptimState optim = nn::OptimState::fresh(params.size(), hyper);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  PolicyTrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    optim.hyper.learning_rate =
        config.learning_rate *
        std::pow(config.lr_decay, static_cast<double>(epoch));
    Rng rng(derive_seed(seed, "policy-epoch", epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<BcSample> batch;
      const std::size_t end = std::min(b + config.batch_size, order.size());
      batch.reserve(end - b);
      for (std::size_t i = b; i < end; ++i) batch.push_back(samples[order[i]]);
      BcResult res = bc_loss(params, batch);
      nn::adam_step(params, res.grads.values, optim);
      loss_sum += res.loss;
      ++batches;
    }
    result.loss_curve.emplace_back(epoch,
                                   loss_sum / static_cast<double>(batches));
  }
  // Fold the embedding centering/rescaling into the first layer: for raw
  // embedding e, W'·e + b' == W·(scale·(e − mean)) + b exactly, with
  // W' = scale·W on the embedding columns and b' = b − W'·mean.
  {
    constexpr std::size_t kH = 128;
    constexpr std::size_t kIn = kInputWidth;
    constexpr std::size_t kSt = kStateWidth;
    double* w1 = params.values.data();
    double* b1 = w1 + kH * kIn;
    for (std::size_t i = 0; i < kH; ++i) {
      double* row = w1 + i * kIn;
      double shift = 0.0;
      for (std::size_t j = 0; j < emb_width; ++j) {
        row[kSt + j] *= emb_scale;
        shift += row[kSt + j] * emb_mean[j];
      }
      b1[i] -= shift;
    }
  }
  result.params = std::move(params);
  return result;
}

world::Action act(const nn::ParamVector& params, const world::WorldLayout& layout,
                  const world::WorldState& state,
                  const encoder::Embedding& embedding) {
  const auto mu = nn::mlp_forward(
      policy_spec(), params,
      policy_input(world::robot_state_features(layout, state), embedding.v));
  auto clamp = [](double v) {
    return std::min(std::max(v, -world::kActionMax), world::kActionMax);
  };
  return {world::Vec2{clamp(kActionScale * mu[0]),
                      clamp(kActionScale * mu[1])}};
}

world::Trajectory rollout(const world::WorldLayout& layout,
                          const world::WorldState& start_state,
                          const nn::ParamVector& params,
                          const encoder::Embedding& embedding, int horizon) {
  world::Trajectory traj;
  traj.layout = layout;
  traj.domain = world::Domain::Robot;
  traj.states.push_back(start_state);
  world::WorldState s = start_state;
  for (int t = 0; t < horizon; ++t) {
    const world::Action a = act(params, layout, s, embedding);
    s = world::step(layout, s, a);
    traj.actions.push_back(a);
    traj.states.push_back(s);
  }
  return traj;
}

void save_policy(const nn::ParamVector& params, const PolicyConfig& config,
                 const Fingerprint& library_fingerprint,
                 const std::string& path) {
  nn::save_params(params, path);
  json sidecar{{"state_width", kStateWidth},
               {"E", encoder::kEmbeddingWidth},
               {"horizon", world::kHorizon},
               {"sigma", config.sigma},
               {"library_fingerprint", fingerprint_hex(library_fingerprint)}};
  std::ofstream os(path + ".json");
  if (!os) throw IoError("cannot open " + path + ".json for writing");
  os << sidecar.dump(2) << '\n';
}

LoadedPolicy load_policy(const std::string& path) {
  LoadedPolicy loaded;
  loaded.params = nn::load_params(path);
  std::ifstream is(path + ".json");
  if (!is) throw IoError("cannot open " + path + ".json");
  json sidecar = json::parse(is, nullptr, false);
  if (sidecar.is_discarded()) throw CorruptFile(path + ".json: bad JSON");
  const std::string hex = sidecar.at("library_fingerprint").get<std::string>();
  if (hex.size() != 64) throw CorruptFile(path + ".json: bad fingerprint");
  for (std::size_t i = 0; i < 32; ++i)
    loaded.library_fingerprint[i] = static_cast<std::uint8_t>(
        std::stoul(hex.substr(2 * i, 2), nullptr, 16));
  return loaded;
}

}  // namespace vip::policy
