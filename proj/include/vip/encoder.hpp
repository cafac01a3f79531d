// Video encoder: a frozen deterministic backbone over VideoFeatures plus a
// trainable projection head optimized with the Supervised Contrastive loss
// on demonstrator-domain data only. Cosine similarity between the resulting
// unit-norm embeddings is the cross-domain task similarity.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vip/hash.hpp"
#include "vip/nn.hpp"
#include "vip/rng.hpp"
#include "vip/world.hpp"

namespace vip::encoder {

inline constexpr int kReprWidth = 64;       // backbone output R
inline constexpr int kEmbeddingWidth = 32;  // projection output E

struct BackboneRepr {
  std::vector<double> v;  // width kReprWidth
};

struct Embedding {
  std::vector<double> v;  // width kEmbeddingWidth, unit norm
};

// Frozen backbone: per-channel pooled statistics (mean, first, mid, last,
// mean |frame delta|) concatenated, zero-padded to a width shared by both
// domains, then mixed by a fixed seeded orthonormal matrix. No parameters.
BackboneRepr backbone(const world::VideoFeatures& features);

// The backbone's pooling stage before mixing: five blocks of 18 channels
// (mean, first, mid, last, mean |frame delta|), zero-padded. Exposed so the
// pooled statistics can be verified directly.
inline constexpr int kStatBlockWidth = 18;
inline constexpr int kStatBlocks = 5;
std::vector<double> pooled_stats(const world::VideoFeatures& features);

nn::MlpSpec projection_spec();

Embedding project(const BackboneRepr& repr, const nn::ParamVector& params);

// Cosine similarity of unit vectors; throws NotNormalized if either norm
// deviates from 1 by more than 1e-4.
double similarity(const Embedding& a, const Embedding& b);

struct AugmentConfig {
  bool temporal_crop = true;    // keep a random 70-100% window, resubsample
  bool jitter = true;           // per-channel Gaussian, sigma = 0.02
  bool channel_scale = true;    // per-channel affine scale in [0.7, 1.4]
  bool channel_offset = true;   // per-channel shift in [-0.15, 0.15]
  bool frame_dropout = true;    // frame replaced by predecessor w.p. 0.1
  double jitter_sigma = 0.02;
};

world::VideoFeatures augment(const world::VideoFeatures& features, Rng& rng,
                             const AugmentConfig& cfg = {});

struct SupConConfig {
  double temperature = 0.1;
  std::size_t batch_pairs = 64;  // N; the multiview batch holds 2N views
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  AugmentConfig augment;
};

struct SupConBatch {
  std::vector<std::vector<double>> embeddings;  // 2N x E, unit-norm rows
  std::vector<int> labels;                      // 2N, paired views share labels
};

struct SupConResult {
  double loss;
  std::vector<std::vector<double>> grad;  // dloss/drow, 2N x E
};

// Eq.-of-record contrastive loss: anchors are all rows, positives are all
// other rows with the same label, logits are dot products / temperature,
// stabilized by per-row max subtraction.
SupConResult supcon_loss(const SupConBatch& batch, double temperature);

struct LabeledVideo {
  world::VideoFeatures features;
  world::TaskLabel label;
  world::Domain domain = world::Domain::Demonstrator;
};

struct LossCurvePoint {
  std::size_t epoch;
  double mean_loss;
  double intra_margin;  // mean intra-class cosine - mean inter-class cosine
};

struct TrainResult {
  nn::ParamVector params;
  std::vector<LossCurvePoint> curve;
};

// Trains the projection head on demonstrator-domain data only; any
// robot-domain sample throws RobotDataLeak.
TrainResult train_projection(const std::vector<LabeledVideo>& dataset,
                             const SupConConfig& config, std::uint64_t seed);

void write_loss_curve(const std::vector<LossCurvePoint>& curve,
                      const std::string& path);

Fingerprint params_fingerprint(const nn::ParamVector& params);

}  // namespace vip::encoder
