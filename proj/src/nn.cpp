#include "vip/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "vip/errors.hpp"
#include "vip/rng.hpp"

namespace vip::nn {

namespace {

bool finite(double x) { return std::isfinite(x); }

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Tanh:
      return std::tanh(z);
    case Activation::Relu:
      return z > 0.0 ? z : 0.0;
  }
  return z;
}

double activate_deriv(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Relu:
      return z > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

constexpr double kNormFloor = 1e-12;

}  // namespace

void ParamVector::check_consistent() const {
  std::size_t n = 0;
  for (const auto& rec : layout) n += rec.size();
  if (n != values.size())
    throw DimensionMismatch("param vector length " +
                            std::to_string(values.size()) +
                            " != layout total " + std::to_string(n));
}

bool ParamVector::all_finite() const {
  for (double v : values)
    if (!finite(v)) return false;
  return true;
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < layer_widths.size(); ++l)
    n += layer_widths[l] * layer_widths[l - 1] + layer_widths[l];
  return n;
}

std::vector<LayoutRecord> MlpSpec::param_layout() const {
  if (layer_widths.size() < 2)
    throw DimensionMismatch("MlpSpec needs at least [input, output] widths");
  if (output_activation == OutputActivation::L2Normalize &&
      layer_widths.back() < 2)
    throw DimensionMismatch("l2_normalize output requires width >= 2");
  std::vector<LayoutRecord> layout;
  for (std::size_t l = 1; l < layer_widths.size(); ++l) {
    const auto out = static_cast<std::uint32_t>(layer_widths[l]);
    const auto in = static_cast<std::uint32_t>(layer_widths[l - 1]);
    layout.push_back({"W" + std::to_string(l), {out, in}});
    layout.push_back({"b" + std::to_string(l), {out}});
  }
  return layout;
}

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
  ParamVector p;
  p.layout = spec.param_layout();
  p.values.reserve(spec.param_count());
  Rng rng(derive_seed(seed, "mlp-init"));
  for (std::size_t l = 1; l < spec.layer_widths.size(); ++l) {
    const std::size_t out = spec.layer_widths[l];
    const std::size_t in = spec.layer_widths[l - 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < out * in; ++i)
      p.values.push_back(rng.uniform(-bound, bound));
    for (std::size_t i = 0; i < out; ++i) p.values.push_back(0.0);
  }
  return p;
}

ParamVector zero_params(const MlpSpec& spec) {
  ParamVector p;
  p.layout = spec.param_layout();
  p.values.assign(spec.param_count(), 0.0);
  return p;
}

namespace {

// Forward pass caching pre-activations and activations per layer.
struct ForwardTrace {
  std::vector<std::vector<double>> activations;  // [0] = input, per layer out
  std::vector<std::vector<double>> preacts;      // per layer (1..L)
  std::vector<double> prenorm;                   // output before l2 normalize
  std::vector<double> output;
};

ForwardTrace run_forward(const MlpSpec& spec, const ParamVector& params,
                         const std::vector<double>& input) {
  if (input.size() != spec.input_width())
    throw DimensionMismatch("input length " + std::to_string(input.size()) +
                            " != first layer width " +
                            std::to_string(spec.input_width()));
  if (params.size() != spec.param_count())
    throw DimensionMismatch("param count " + std::to_string(params.size()) +
                            " != spec param count " +
                            std::to_string(spec.param_count()));

  ForwardTrace tr;
  tr.activations.push_back(input);
  const double* w = params.values.data();
  const std::size_t layers = spec.layer_widths.size() - 1;
  for (std::size_t l = 1; l <= layers; ++l) {
    const std::size_t out = spec.layer_widths[l];
    const std::size_t in = spec.layer_widths[l - 1];
    const std::vector<double>& x = tr.activations.back();
    const double* bias = w + out * in;
    std::vector<double> z(out);
    for (std::size_t i = 0; i < out; ++i) {
      double s = bias[i];
      const double* row = w + i * in;
      for (std::size_t j = 0; j < in; ++j) s += row[j] * x[j];
      z[i] = s;
    }
    w += out * in + out;
    const bool last = (l == layers);
    std::vector<double> a(out);
    if (last) {
      a = z;
    } else {
      for (std::size_t i = 0; i < out; ++i)
        a[i] = activate(spec.activation, z[i]);
    }
    tr.preacts.push_back(std::move(z));
    tr.activations.push_back(std::move(a));
  }

  tr.prenorm = tr.activations.back();
  if (spec.output_activation == OutputActivation::L2Normalize) {
    double n2 = 0.0;
    for (double v : tr.prenorm) n2 += v * v;
    const double n = std::sqrt(n2);
    if (n < kNormFloor)
      throw DegenerateNorm("pre-normalization norm " + std::to_string(n));
    tr.output.resize(tr.prenorm.size());
    for (std::size_t i = 0; i < tr.prenorm.size(); ++i)
      tr.output[i] = tr.prenorm[i] / n;
  } else {
    tr.output = tr.prenorm;
  }
  return tr;
}

}  // namespace

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                const std::vector<double>& input) {
  return run_forward(spec, params, input).output;
}

MlpGradient mlp_gradient(const MlpSpec& spec, const ParamVector& params,
                         const std::vector<double>& input,
                         const std::vector<double>& upstream) {
  if (upstream.size() != spec.output_width())
    throw DimensionMismatch("upstream length " +
                            std::to_string(upstream.size()) +
                            " != output width " +
                            std::to_string(spec.output_width()));
  const ForwardTrace tr = run_forward(spec, params, input);

  // Backprop through output activation.
  std::vector<double> g(upstream);
  if (spec.output_activation == OutputActivation::L2Normalize) {
    double n2 = 0.0;
    for (double v : tr.prenorm) n2 += v * v;
    const double n = std::sqrt(n2);
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += tr.output[i] * g[i];
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = (g[i] - tr.output[i] * dot) / n;
  }

  MlpGradient res;
  res.param_grad.layout = params.layout;
  res.param_grad.values.assign(params.values.size(), 0.0);

  const std::size_t layers = spec.layer_widths.size() - 1;
  // Offsets of each layer's block in the flat vector.
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 1; l <= layers; ++l) {
    offsets[l - 1] = off;
    off += spec.layer_widths[l] * spec.layer_widths[l - 1] +
           spec.layer_widths[l];
  }

  for (std::size_t l = layers; l >= 1; --l) {
    const std::size_t out = spec.layer_widths[l];
    const std::size_t in = spec.layer_widths[l - 1];
    const bool last = (l == layers);
    std::vector<double> dz(out);
    const std::vector<double>& z = tr.preacts[l - 1];
    for (std::size_t i = 0; i < out; ++i)
      dz[i] = last ? g[i] : g[i] * activate_deriv(spec.activation, z[i]);

    const std::vector<double>& x = tr.activations[l - 1];
    double* gw = res.param_grad.values.data() + offsets[l - 1];
    double* gb = gw + out * in;
    const double* w = params.values.data() + offsets[l - 1];
    std::vector<double> gprev(in, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      double* grow = gw + i * in;
      const double* wrow = w + i * in;
      const double d = dz[i];
      for (std::size_t j = 0; j < in; ++j) {
        grow[j] += d * x[j];
        gprev[j] += wrow[j] * d;
      }
      gb[i] += d;
    }
    g = std::move(gprev);
  }
  res.input_grad = std::move(g);
  return res;
}

OptimState OptimState::fresh(std::size_t n, AdamHyper hyper) {
  OptimState s;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  s.step_count = 0;
  s.hyper = hyper;
  return s;
}

void adam_step(ParamVector& params, const std::vector<double>& grad,
               OptimState& state) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.first_moment.size() != n ||
      state.second_moment.size() != n)
    throw DimensionMismatch("adam_step length mismatch");
  for (double gv : grad)
    if (!finite(gv)) throw NonFiniteGradient("adam_step received NaN/Inf");

  const AdamHyper& h = state.hyper;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = h.beta1 * m + (1.0 - h.beta1) * grad[i];
    v = h.beta2 * v + (1.0 - h.beta2) * grad[i] * grad[i];
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    params.values[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon);
  }
}

double grad_check(const LossFn& loss_fn, const ParamVector& params, double h) {
  if (!(h > 0.0)) throw Error("grad_check: h must be positive");
  auto [loss, analytic] = loss_fn(params);
  if (!finite(loss)) throw NonFiniteLoss("grad_check: loss not finite");
  if (analytic.size() != params.size())
    throw DimensionMismatch("grad_check: gradient length mismatch");

  ParamVector probe = params;
  double max_err = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe.values[i];
    probe.values[i] = orig + h;
    const double lp = loss_fn(probe).first;
    probe.values[i] = orig - h;
    const double lm = loss_fn(probe).first;
    probe.values[i] = orig;
    if (!finite(lp) || !finite(lm))
      throw NonFiniteLoss("grad_check: perturbed loss not finite");
    const double numeric = (lp - lm) / (2.0 * h);
    const double denom =
        std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
    max_err = std::max(max_err, std::fabs(analytic[i] - numeric) / denom);
  }
  return max_err;
}

namespace {

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw CorruptFile("unexpected end of file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

constexpr std::uint16_t kParamFormatVersion = 1;

}  // namespace

void save_params(const ParamVector& params, const std::string& path) {
  params.check_consistent();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("VIPP", 4);
  write_le<std::uint16_t>(os, kParamFormatVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.layout.size()));
  for (const auto& rec : params.layout) {
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(rec.name.size()));
    os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(rec.shape.size()));
    for (auto d : rec.shape) write_le<std::uint32_t>(os, d);
  }
  for (double v : params.values) write_le<double>(os, v);
  if (!os) throw IoError("write failed for " + path);
}

ParamVector load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VIPP", 4) != 0)
    throw CorruptFile(path + ": bad magic");
  const auto version = read_le<std::uint16_t>(is);
  if (version != kParamFormatVersion)
    throw VersionMismatch(path + ": version " + std::to_string(version));
  const auto nrec = read_le<std::uint32_t>(is);
  ParamVector p;
  std::size_t total = 0;
  for (std::uint32_t r = 0; r < nrec; ++r) {
    const auto len = read_le<std::uint16_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw CorruptFile(path + ": truncated record name");
    const auto rank = read_le<std::uint8_t>(is);
    LayoutRecord rec;
    rec.name = std::move(name);
    for (std::uint8_t d = 0; d < rank; ++d)
      rec.shape.push_back(read_le<std::uint32_t>(is));
    total += rec.size();
    p.layout.push_back(std::move(rec));
  }
  p.values.resize(total);
  for (std::size_t i = 0; i < total; ++i) p.values[i] = read_le<double>(is);
  return p;
}

}  // namespace vip::nn
