// Pipeline orchestration and zero-shot evaluation: dataset generation,
// encoder/policy training across seeds, the retrieval baselines, the
// k-ablation sweep, and report emission.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vip/encoder.hpp"
#include "vip/library.hpp"
#include "vip/policy.hpp"
#include "vip/world.hpp"

namespace vip::harness {

enum class Method { Vip, HumanDirect, ReprCosine, Oracle, Random };
inline constexpr int kMethodCount = 5;
const char* method_name(Method m);
std::optional<Method> method_from_name(const std::string& name);

struct PipelineConfig {
  std::uint64_t seed = 3;  // base seed: datasets, layouts, eval episodes
  std::vector<std::uint64_t> training_seeds = {1, 2, 3, 4};
  std::size_t demo_per_class = 600;
  std::size_t robot_per_variant = 500;
  int variants = 4;
  std::size_t instructions_per_task = 3;
  encoder::SupConConfig supcon;
  library::InferenceConfig inference;
  policy::PolicyConfig policy;
  std::vector<Method> methods = {Method::Vip, Method::HumanDirect,
                                 Method::ReprCosine, Method::Oracle,
                                 Method::Random};
  std::string out_dir = "out";
  bool parallel_eval = true;
};

PipelineConfig load_config(const std::string& path);
void write_config(const PipelineConfig& config, const std::string& path);

// In-memory datasets shared by all training seeds.
struct PipelineData {
  std::vector<std::vector<world::Trajectory>> robot;  // per variant
  std::vector<encoder::LabeledVideo> demo;            // encoder training set
  std::vector<world::Trajectory> demo_trajs;          // sources of `demo`
  std::vector<std::uint64_t> demo_seeds;              // for the hygiene audit
};

PipelineData generate_data(const PipelineConfig& config);

// File-based stage plumbing (CLI subcommands). Datasets live under
// config.out_dir as robot_v{v}.jsonl / demo.jsonl; artifacts as
// encoder_s{S}.vipp, library_s{S}_v{v}.vipl, policy_s{S}_v{v}.vipp.
void save_data(const PipelineConfig& config, const PipelineData& data);
PipelineData load_data(const PipelineConfig& config);

// Everything produced by one training seed.
struct SeedArtifacts {
  std::uint64_t training_seed = 0;
  nn::ParamVector encoder_params;
  std::vector<encoder::LossCurvePoint> encoder_curve;
  std::vector<library::EmbeddingLibrary> libraries;  // per variant
  std::vector<nn::ParamVector> policies;             // per variant
};

SeedArtifacts train_seed(const PipelineConfig& config, const PipelineData& data,
                         std::uint64_t training_seed);

void save_artifacts(const PipelineConfig& config, const SeedArtifacts& art);
std::vector<SeedArtifacts> load_artifacts(const PipelineConfig& config,
                                          bool need_policies = true,
                                          bool need_libraries = true);

struct EpisodeRecord {
  Method method;
  int variant;
  world::TaskLabel task;
  std::size_t instruction;
  std::uint64_t training_seed;
  bool success;
  double wall_seconds;  // encode + retrieval + rollout
};

struct Audit {
  std::size_t encoder_robot_samples = 0;
  std::size_t hidden_label_reads_non_oracle = 0;
  std::size_t hidden_label_reads_oracle = 0;
  bool eval_seeds_disjoint = true;

  bool clean() const {
    return encoder_robot_samples == 0 &&
           hidden_label_reads_non_oracle == 0 && eval_seeds_disjoint;
  }
};

struct EvalReport {
  std::vector<EpisodeRecord> episodes;
  Audit audit;

  // Success-rate mean (in [0,100]) per (method, variant): per-seed mean
  // over the task x instruction grid, then mean/std across training seeds.
  struct Aggregate {
    double mean = 0.0;
    double std_dev = 0.0;
    std::size_t seeds = 0;
  };
  std::map<std::pair<int, int>, Aggregate> aggregates() const;  // (method, variant)
  double method_mean(Method m) const;
};

// Runs the task x instruction grid for one method across all variants and
// training seeds. Instruction videos come from seeds disjoint from the
// training demo seeds. Episodes run in parallel when configured; results
// are merged in episode-index order either way.
EvalReport evaluate(Method method, const PipelineConfig& config,
                    const PipelineData& data,
                    const std::vector<SeedArtifacts>& artifacts);

// Named entry points mirroring the protocol variants.
EvalReport evaluate_zero_shot(const PipelineConfig& config,
                              const PipelineData& data,
                              const std::vector<SeedArtifacts>& artifacts);
EvalReport baseline_human_direct(const PipelineConfig& config,
                                 const PipelineData& data,
                                 const std::vector<SeedArtifacts>& artifacts);
EvalReport baseline_repr_cosine(const PipelineConfig& config,
                                const PipelineData& data,
                                const std::vector<SeedArtifacts>& artifacts);
std::pair<EvalReport, EvalReport> baseline_oracle_and_random(
    const PipelineConfig& config, const PipelineData& data,
    const std::vector<SeedArtifacts>& artifacts);

struct AblationRow {
  std::string k_label;         // "1" or a fraction like "0.01"
  std::size_t resolved_k = 0;  // against the default library size
  double mean = 0.0;
  double std_dev = 0.0;
};

// Sweep k over {1} and the given library-size fractions for the ViP method.
std::vector<AblationRow> ablate_k(const PipelineConfig& config,
                                  const PipelineData& data,
                                  const std::vector<SeedArtifacts>& artifacts,
                                  const std::vector<double>& fractions);
void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& path);
std::vector<AblationRow> read_ablation_csv(const std::string& path);

// report.json (full grid + audit + config), summary.csv (method x variant,
// "mean (std)"), timing.csv (one row per episode).
void emit_report(const EvalReport& report, const PipelineConfig& config,
                 const std::string& dir);
EvalReport load_report(const std::string& path);

// End-to-end: gen-data, per-seed training, all configured methods,
// k-ablation, report emission. Artifacts are written under config.out_dir.
EvalReport run_pipeline(const PipelineConfig& config);

// Merge per-method reports into one (audits are combined).
EvalReport merge_reports(const std::vector<EvalReport>& reports);

}  // namespace vip::harness
