// Minimal dense-network substrate: flat parameter vectors, MLP forward and
// hand-derived reverse-mode gradients, Adam, and a finite-difference
// gradient checker. Everything is 64-bit and seed-deterministic.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vip::nn {

struct LayoutRecord {
  std::string name;
  std::vector<std::uint32_t> shape;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

// Flat parameter container. Layers view slices of `values` as described by
// `layout`; total length must equal the sum of layout sizes.
struct ParamVector {
  std::vector<double> values;
  std::vector<LayoutRecord> layout;

  std::size_t size() const { return values.size(); }
  void check_consistent() const;  // throws DimensionMismatch
  bool all_finite() const;
};

enum class Activation { Tanh, Relu };
enum class OutputActivation { Identity, L2Normalize };

struct MlpSpec {
  std::vector<std::size_t> layer_widths;  // at least [input, output]
  Activation activation = Activation::Tanh;
  OutputActivation output_activation = OutputActivation::Identity;

  std::size_t input_width() const { return layer_widths.front(); }
  std::size_t output_width() const { return layer_widths.back(); }
  std::size_t param_count() const;
  std::vector<LayoutRecord> param_layout() const;
};

// Seeded Glorot-uniform weights, zero biases.
ParamVector init_params(const MlpSpec& spec, std::uint64_t seed);
ParamVector zero_params(const MlpSpec& spec);

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                const std::vector<double>& input);

struct MlpGradient {
  ParamVector param_grad;
  std::vector<double> input_grad;
};

// Gradients of <output, upstream> w.r.t. params and input, including the
// normalization Jacobian when output_activation == L2Normalize.
MlpGradient mlp_gradient(const MlpSpec& spec, const ParamVector& params,
                         const std::vector<double>& input,
                         const std::vector<double>& upstream);

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  AdamHyper hyper;

  static OptimState fresh(std::size_t n, AdamHyper hyper = {});
};

// In-place bias-corrected Adam update; increments step_count by exactly 1.
void adam_step(ParamVector& params, const std::vector<double>& grad,
               OptimState& state);

// loss_fn returns (loss, analytic gradient). Returns the max over
// coordinates of |analytic - central difference| / max(1, |analytic|, |numeric|).
using LossFn =
    std::function<std::pair<double, std::vector<double>>(const ParamVector&)>;
double grad_check(const LossFn& loss_fn, const ParamVector& params, double h);

// Checkpoint format: magic "VIPP", version u16, record count u32, records
// (name len u16, name bytes, rank u8, dims u32 each), values as LE f64.
void save_params(const ParamVector& params, const std::string& path);
ParamVector load_params(const std::string& path);

}  // namespace vip::nn
