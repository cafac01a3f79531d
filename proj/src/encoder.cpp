#include "vip/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "vip/errors.hpp"

namespace vip::encoder {

namespace {

constexpr int kStatCount = 5;  // mean, first, mid, last, mean |delta|
constexpr int kMaxChannelWidth = world::kRobotFeatureWidth;  // 18
constexpr int kPaddedWidth = kStatCount * kMaxChannelWidth;  // 90

// Fixed orthonormal mixing matrix (kReprWidth x kPaddedWidth): Gaussian
// rows orthonormalized by modified Gram-Schmidt. Seeded once, constant.
const std::vector<std::vector<double>>& mixing_matrix() {
  static const std::vector<std::vector<double>> m = [] {
    Rng rng(0x1f0a2b3c4d5e6f70ULL);
    std::vector<std::vector<double>> rows(kReprWidth,
                                          std::vector<double>(kPaddedWidth));
    for (auto& row : rows)
      for (auto& v : row) v = rng.normal();
    for (int i = 0; i < kReprWidth; ++i) {
      for (int j = 0; j < i; ++j) {
        double d = 0.0;
        for (int c = 0; c < kPaddedWidth; ++c)
          d += rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] *
               rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
        for (int c = 0; c < kPaddedWidth; ++c)
          rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] -=
              d * rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
      }
      double n2 = 0.0;
      for (double v : rows[static_cast<std::size_t>(i)]) n2 += v * v;
      const double inv = 1.0 / std::sqrt(n2);
      for (double& v : rows[static_cast<std::size_t>(i)]) v *= inv;
    }
    return rows;
  }();
  return m;
}

}  // namespace

std::vector<double> pooled_stats(const world::VideoFeatures& features) {
  const auto& frames = features.frames;
  const std::size_t T = frames.size();
  const std::size_t F = frames.front().size();
  if (F > kMaxChannelWidth)
    throw DimensionMismatch("feature width exceeds backbone capacity");

  std::vector<double> padded(kPaddedWidth, 0.0);
  auto block = [&padded](int stat) { return padded.data() + stat * kMaxChannelWidth; };
  for (std::size_t c = 0; c < F; ++c) {
    double mean = 0.0, delta = 0.0;
    for (std::size_t t = 0; t < T; ++t) mean += frames[t][c];
    mean /= static_cast<double>(T);
    for (std::size_t t = 1; t < T; ++t)
      delta += std::fabs(frames[t][c] - frames[t - 1][c]);
    delta /= static_cast<double>(T - 1);
    block(0)[c] = mean;
    block(1)[c] = frames.front()[c];
    block(2)[c] = frames[T / 2][c];
    block(3)[c] = frames.back()[c];
    block(4)[c] = delta;
  }
  return padded;
}

BackboneRepr backbone(const world::VideoFeatures& features) {
  const std::vector<double> padded = pooled_stats(features);
  const auto& mix = mixing_matrix();
  BackboneRepr repr;
  repr.v.resize(kReprWidth);
  for (int i = 0; i < kReprWidth; ++i) {
    double s = 0.0;
    const auto& row = mix[static_cast<std::size_t>(i)];
    for (int c = 0; c < kPaddedWidth; ++c)
      s += row[static_cast<std::size_t>(c)] * padded[static_cast<std::size_t>(c)];
    repr.v[static_cast<std::size_t>(i)] = s;
  }
  return repr;
}

nn::MlpSpec projection_spec() {
  return {{kReprWidth, 64, kEmbeddingWidth},
          nn::Activation::Tanh,
          nn::OutputActivation::L2Normalize};
}

Embedding project(const BackboneRepr& repr, const nn::ParamVector& params) {
  return {nn::mlp_forward(projection_spec(), params, repr.v)};
}

double similarity(const Embedding& a, const Embedding& b) {
  if (a.v.size() != b.v.size())
    throw DimensionMismatch("embedding widths differ");
  double na = 0.0, nb = 0.0, d = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    na += a.v[i] * a.v[i];
    nb += b.v[i] * b.v[i];
    d += a.v[i] * b.v[i];
  }
  if (std::fabs(std::sqrt(na) - 1.0) > 1e-4 ||
      std::fabs(std::sqrt(nb) - 1.0) > 1e-4)
    throw NotNormalized("similarity() expects unit-norm embeddings");
  return d;
}

world::VideoFeatures augment(const world::VideoFeatures& features, Rng& rng,
                             const AugmentConfig& cfg) {
  const int T = world::kVideoFrames;
  world::VideoFeatures out = features;

  if (cfg.temporal_crop) {
    const double w = rng.uniform(0.7, 1.0);
    const double start = rng.uniform(0.0, 1.0 - w);
    world::VideoFeatures cropped;
    cropped.frames.reserve(static_cast<std::size_t>(T));
    for (int j = 0; j < T; ++j) {
      const double pos =
          (start + w * static_cast<double>(j) / (T - 1)) * (T - 1);
      const auto idx = static_cast<std::size_t>(std::llround(pos));
      cropped.frames.push_back(out.frames[std::min<std::size_t>(
          idx, out.frames.size() - 1)]);
    }
    out = std::move(cropped);
  }

  if (cfg.frame_dropout) {
    for (int j = 1; j < T; ++j)
      if (rng.bernoulli(0.1))
        out.frames[static_cast<std::size_t>(j)] =
            out.frames[static_cast<std::size_t>(j - 1)];
  }

  const std::size_t F = out.frames.front().size();
  if (cfg.channel_scale) {
    std::vector<double> scale(F);
    for (auto& s : scale) s = rng.uniform(0.7, 1.4);
    for (auto& frame : out.frames)
      for (std::size_t c = 0; c < F; ++c) frame[c] *= scale[c];
  }

  if (cfg.channel_offset) {
    std::vector<double> shift(F);
    for (auto& s : shift) s = rng.uniform(-0.15, 0.15);
    for (auto& frame : out.frames)
      for (std::size_t c = 0; c < F; ++c) frame[c] += shift[c];
  }

  if (cfg.jitter) {
    for (auto& frame : out.frames)
      for (auto& v : frame) v += cfg.jitter_sigma * rng.normal();
  }
  return out;
}

SupConResult supcon_loss(const SupConBatch& batch, double temperature) {
  const std::size_t n = batch.embeddings.size();
  if (n < 2 || n % 2 != 0 || batch.labels.size() != n)
    throw DimensionMismatch("supcon batch must hold 2N labeled rows");
  const std::size_t e = batch.embeddings.front().size();

  // Logit matrix z[i][j] = <e_i, e_j> / tau.
  std::vector<std::vector<double>> z(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < e; ++c)
        d += batch.embeddings[i][c] * batch.embeddings[j][c];
      z[i][j] = z[j][i] = d / temperature;
    }
  }

  double loss = 0.0;
  std::vector<std::vector<double>> grad(n, std::vector<double>(e, 0.0));
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pos = 0;
    double zmax = -1e300;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      zmax = std::max(zmax, z[i][a]);
      if (batch.labels[a] == batch.labels[i]) ++pos;
    }
    if (pos == 0)
      throw EmptyPositives("anchor " + std::to_string(i) + " has no positive");

    double denom = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      q[a] = std::exp(z[i][a] - zmax);
      denom += q[a];
    }
    const double log_denom = std::log(denom) + zmax;
    double mean_pos_logit = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      q[a] /= denom;  // softmax over A(i)
      if (batch.labels[a] == batch.labels[i]) mean_pos_logit += z[i][a];
    }
    mean_pos_logit /= static_cast<double>(pos);
    loss += log_denom - mean_pos_logit;

    // d(anchor i term)/dz[i][a] = q_ia - [a positive]/|P(i)|; the logit
    // couples rows i and a.
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      const double g =
          (q[a] - (batch.labels[a] == batch.labels[i]
                       ? 1.0 / static_cast<double>(pos)
                       : 0.0)) /
          temperature;
      for (std::size_t c = 0; c < e; ++c) {
        grad[i][c] += g * batch.embeddings[a][c];
        grad[a][c] += g * batch.embeddings[i][c];
      }
    }
  }
  if (!std::isfinite(loss)) throw NonFinite("supcon loss is not finite");
  return {loss, std::move(grad)};
}

namespace {

double probe_margin(const std::vector<const LabeledVideo*>& probe,
                    const nn::ParamVector& params) {
  std::vector<Embedding> embs;
  std::vector<int> labels;
  embs.reserve(probe.size());
  for (const auto* s : probe) {
    embs.push_back(project(backbone(s->features), params));
    labels.push_back(static_cast<int>(s->label));
  }
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < embs.size(); ++i) {
    for (std::size_t j = i + 1; j < embs.size(); ++j) {
      const double s = similarity(embs[i], embs[j]);
      if (labels[i] == labels[j]) {
        intra += s;
        ++n_intra;
      } else {
        inter += s;
        ++n_inter;
      }
    }
  }
  if (n_intra == 0 || n_inter == 0) return 0.0;
  return intra / static_cast<double>(n_intra) -
         inter / static_cast<double>(n_inter);
}

}  // namespace

TrainResult train_projection(const std::vector<LabeledVideo>& dataset,
                             const SupConConfig& config, std::uint64_t seed) {
  std::map<int, std::size_t> per_class;
  for (const auto& s : dataset) {
    if (s.domain != world::Domain::Demonstrator)
      throw RobotDataLeak("projection training received a robot-domain sample");
    ++per_class[static_cast<int>(s.label)];
  }
  std::size_t rich_classes = 0;
  for (const auto& [label, count] : per_class)
    if (count >= 2) ++rich_classes;
  if (rich_classes < 2)
    throw InsufficientClassData(
        "need >= 2 samples per class for >= 2 classes");

  const nn::MlpSpec spec = projection_spec();
  nn::ParamVector params = nn::init_params(spec, derive_seed(seed, "proj-init"));
  nn::AdamHyper hyper;
  hyper.learning_rate = config.learning_rate;
  nn::OptimState optim = nn::OptimState::fresh(params.size(), hyper);

  // Small fixed probe set for the per-epoch class-separation margin.
  std::vector<const LabeledVideo*> probe;
  std::map<int, std::size_t> probe_count;
  for (const auto& s : dataset)
    if (probe_count[static_cast<int>(s.label)]++ < 5) probe.push_back(&s);

  const std::size_t n_pairs = std::min(config.batch_pairs, dataset.size());
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "epoch-shuffle", epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b + n_pairs <= order.size(); b += n_pairs) {
      SupConBatch batch;
      batch.embeddings.reserve(2 * n_pairs);
      batch.labels.reserve(2 * n_pairs);
      std::vector<std::vector<double>> reprs;
      reprs.reserve(2 * n_pairs);
      for (std::size_t k = 0; k < n_pairs; ++k) {
        const std::size_t src = order[b + k];
        const auto& sample = dataset[src];
        for (std::uint64_t view = 0; view < 2; ++view) {
          Rng aug_rng(derive_seed(seed, "aug",
                                  (epoch << 32) ^ static_cast<std::uint64_t>(src),
                                  view));
          const auto feats = augment(sample.features, aug_rng, config.augment);
          BackboneRepr repr = backbone(feats);
          batch.embeddings.push_back(
              nn::mlp_forward(spec, params, repr.v));
          batch.labels.push_back(static_cast<int>(sample.label));
          reprs.push_back(std::move(repr.v));
        }
      }

      SupConResult res = supcon_loss(batch, config.temperature);
      loss_sum += res.loss / static_cast<double>(batch.embeddings.size());
      ++batches;

      std::vector<double> param_grad(params.size(), 0.0);
      for (std::size_t row = 0; row < reprs.size(); ++row) {
        const auto g =
            nn::mlp_gradient(spec, params, reprs[row], res.grad[row]);
        for (std::size_t i = 0; i < param_grad.size(); ++i)
          param_grad[i] += g.param_grad.values[i];
      }
      nn::adam_step(params, param_grad, optim);
    }

    result.curve.push_back({epoch,
                            batches > 0 ? loss_sum / static_cast<double>(batches)
                                        : 0.0,
                            probe_margin(probe, params)});
  }
  result.params = std::move(params);
  return result;
}

void write_loss_curve(const std::vector<LossCurvePoint>& curve,
                      const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "epoch,mean_loss,intra_margin\n";
  for (const auto& p : curve)
    os << p.epoch << ',' << p.mean_loss << ',' << p.intra_margin << '\n';
}

Fingerprint params_fingerprint(const nn::ParamVector& params) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(params.values.size() * sizeof(double) + 64);
  for (const auto& rec : params.layout) {
    bytes.insert(bytes.end(), rec.name.begin(), rec.name.end());
    for (auto d : rec.shape)
      for (int i = 0; i < 4; ++i)
        bytes.push_back(static_cast<std::uint8_t>(d >> (8 * i)));
  }
  for (double v : params.values) {
    std::uint8_t buf[sizeof(double)];
    std::memcpy(buf, &v, sizeof(double));
    bytes.insert(bytes.end(), buf, buf + sizeof(double));
  }
  return fingerprint_bytes(bytes);
}

}  // namespace vip::encoder
