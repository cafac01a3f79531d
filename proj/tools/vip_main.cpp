// Command-line front end for the pipeline stages.
//
// Subcommands: gen-data, train-encoder, build-library, train-policy,
// evaluate, ablate-k, run-all. Every stage reads and writes artifacts under
// --out; run-all chains all of them. Exit code 0 on success, nonzero with a
// stage-tagged diagnostic on stderr otherwise.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vip/errors.hpp"
#include "vip/harness.hpp"

namespace {

using namespace vip;

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::size_t> k;
  std::optional<double> k_fraction;
  std::optional<double> tau;
  std::optional<std::string> method;
  std::optional<int> variant;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--seed", flags.seed, "Base seed");
  cmd->add_option("--config", flags.config_path, "Flat key=value config file");
  cmd->add_option("--out", flags.out, "Artifact directory");
  cmd->add_option("--k", flags.k, "Retrieval k (overrides k-fraction)");
  cmd->add_option("--k-fraction", flags.k_fraction,
                  "Retrieval k as a fraction of the library size");
  cmd->add_option("--tau", flags.tau, "Contrastive temperature");
  cmd->add_option("--method", flags.method,
                  "vip|human-direct|repr-cosine|oracle|random");
  cmd->add_option("--variant", flags.variant, "Restrict to one variant");
}

harness::PipelineConfig resolve_config(const CommonFlags& flags) {
  harness::PipelineConfig cfg;
  if (!flags.config_path.empty()) cfg = harness::load_config(flags.config_path);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.out) cfg.out_dir = *flags.out;
  if (flags.k) {
    cfg.inference.k = *flags.k;
    cfg.inference.k_fraction = 0.0;
  }
  if (flags.k_fraction) {
    cfg.inference.k = 0;
    cfg.inference.k_fraction = *flags.k_fraction;
  }
  if (flags.tau) cfg.supcon.temperature = *flags.tau;
  if (flags.method) {
    const auto m = harness::method_from_name(*flags.method);
    if (!m) throw Error("unknown method '" + *flags.method + "'");
    cfg.methods = {*m};
  }
  return cfg;
}

int run_stage(const std::string& stage, const CommonFlags& flags) {
  const harness::PipelineConfig cfg = resolve_config(flags);

  if (stage == "run-all") {
    const harness::EvalReport report = harness::run_pipeline(cfg);
    std::cout << "run-all: " << report.episodes.size()
              << " episodes, audit "
              << (report.audit.clean() ? "clean" : "dirty") << ", report in "
              << cfg.out_dir << '\n';
    return 0;
  }
  if (stage == "gen-data") {
    harness::save_data(cfg, harness::generate_data(cfg));
    std::cout << "gen-data: datasets written to " << cfg.out_dir << '\n';
    return 0;
  }
  if (stage == "train-encoder") {
    const harness::PipelineData data = harness::load_data(cfg);
    for (std::uint64_t s : cfg.training_seeds) {
      harness::SeedArtifacts art;
      art.training_seed = s;
      encoder::TrainResult res = encoder::train_projection(
          data.demo, cfg.supcon, derive_seed(s, "encoder"));
      art.encoder_params = std::move(res.params);
      art.encoder_curve = std::move(res.curve);
      harness::save_artifacts(cfg, art);
      std::cout << "train-encoder: seed " << s << " final loss "
                << art.encoder_curve.back().mean_loss << '\n';
    }
    return 0;
  }
  if (stage == "build-library" || stage == "train-policy") {
    const harness::PipelineData data = harness::load_data(cfg);
    for (std::uint64_t s : cfg.training_seeds) {
      harness::PipelineConfig seed_cfg = cfg;
      seed_cfg.training_seeds = {s};
      harness::SeedArtifacts art =
          harness::load_artifacts(seed_cfg, /*need_policies=*/false,
                                  /*need_libraries=*/stage == "train-policy")
              .front();
      for (int v = 0; v < cfg.variants; ++v) {
        if (flags.variant && *flags.variant != v) continue;
        const auto& dataset = data.robot[static_cast<std::size_t>(v)];
        if (stage == "build-library") {
          art.libraries[static_cast<std::size_t>(v)] =
              library::build_library(dataset, art.encoder_params);
        } else {
          art.policies.resize(static_cast<std::size_t>(cfg.variants));
          art.policies[static_cast<std::size_t>(v)] =
              policy::train_policy(dataset,
                                   art.libraries[static_cast<std::size_t>(v)],
                                   cfg.policy,
                                   derive_seed(s, "policy",
                                               static_cast<std::uint64_t>(v)))
                  .params;
        }
      }
      harness::save_artifacts(cfg, art);
      std::cout << stage << ": seed " << s << " done\n";
    }
    return 0;
  }
  if (stage == "evaluate") {
    const harness::PipelineData data = harness::load_data(cfg);
    const auto artifacts = harness::load_artifacts(cfg);
    std::vector<harness::EvalReport> reports;
    for (harness::Method m : cfg.methods)
      reports.push_back(harness::evaluate(m, cfg, data, artifacts));
    const harness::EvalReport merged = harness::merge_reports(reports);
    harness::emit_report(merged, cfg, cfg.out_dir);
    for (harness::Method m : cfg.methods)
      std::cout << "evaluate: " << harness::method_name(m) << " mean "
                << merged.method_mean(m) << "%\n";
    return 0;
  }
  if (stage == "ablate-k") {
    const harness::PipelineData data = harness::load_data(cfg);
    const auto artifacts = harness::load_artifacts(cfg);
    const std::vector<double> fractions = {0.005, 0.01, 0.02, 0.05,
                                           0.1,   0.25, 0.5,  1.0};
    const auto rows = harness::ablate_k(cfg, data, artifacts, fractions);
    harness::write_ablation_csv(rows, cfg.out_dir + "/ablate_k.csv");
    for (const auto& r : rows)
      std::cout << "k=" << r.k_label << " (resolved " << r.resolved_k
                << "): " << r.mean << "% (" << r.std_dev << ")\n";
    return 0;
  }
  throw Error("unknown stage " + stage);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video-conditioned policy pipeline"};
  app.require_subcommand(1);

  const std::vector<std::string> stages = {
      "gen-data",  "train-encoder", "build-library", "train-policy",
      "evaluate",  "ablate-k",      "run-all"};
  std::vector<CommonFlags> flags(stages.size());
  for (std::size_t i = 0; i < stages.size(); ++i)
    add_common(app.add_subcommand(stages[i]), flags[i]);

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!app.get_subcommand(stages[i])->parsed()) continue;
    try {
      return run_stage(stages[i], flags[i]);
    } catch (const std::exception& ex) {
      std::cerr << "[" << stages[i] << "] error: " << ex.what() << '\n';
      return 1;
    }
  }
  return 1;
}
