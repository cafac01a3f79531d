#include "vip/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "vip/errors.hpp"
#include "vip/rng.hpp"

namespace vip::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* method_name(Method m) {
  switch (m) {
    case Method::Vip: return "vip";
    case Method::HumanDirect: return "human-direct";
    case Method::ReprCosine: return "repr-cosine";
    case Method::Oracle: return "oracle";
    case Method::Random: return "random";
  }
  return "?";
}

std::optional<Method> method_from_name(const std::string& name) {
  for (int i = 0; i < kMethodCount; ++i) {
    const auto m = static_cast<Method>(i);
    if (name == method_name(m)) return m;
  }
  return std::nullopt;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) parts.push_back(item);
  return parts;
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  PipelineConfig cfg;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CorruptFile(path + ": expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "training_seeds") {
      cfg.training_seeds.clear();
      for (const auto& p : split(val, ','))
        cfg.training_seeds.push_back(std::stoull(p));
    } else if (key == "demo_per_class") cfg.demo_per_class = std::stoul(val);
    else if (key == "robot_per_variant") cfg.robot_per_variant = std::stoul(val);
    else if (key == "variants") cfg.variants = std::stoi(val);
    else if (key == "instructions_per_task")
      cfg.instructions_per_task = std::stoul(val);
    else if (key == "tau") cfg.supcon.temperature = std::stod(val);
    else if (key == "batch_pairs") cfg.supcon.batch_pairs = std::stoul(val);
    else if (key == "encoder_epochs") cfg.supcon.epochs = std::stoul(val);
    else if (key == "encoder_lr") cfg.supcon.learning_rate = std::stod(val);
    else if (key == "k") cfg.inference.k = std::stoul(val);
    else if (key == "k_fraction") cfg.inference.k_fraction = std::stod(val);
    else if (key == "renormalize_average")
      cfg.inference.renormalize_average = (val == "true" || val == "1");
    else if (key == "policy_epochs") cfg.policy.epochs = std::stoul(val);
    else if (key == "policy_batch") cfg.policy.batch_size = std::stoul(val);
    else if (key == "policy_lr") cfg.policy.learning_rate = std::stod(val);
    else if (key == "out_dir") cfg.out_dir = val;
    else if (key == "parallel_eval")
      cfg.parallel_eval = (val == "true" || val == "1");
    else if (key == "methods") {
      cfg.methods.clear();
      for (const auto& p : split(val, ',')) {
        const auto m = method_from_name(p);
        if (!m) throw CorruptFile(path + ": unknown method '" + p + "'");
        cfg.methods.push_back(*m);
      }
    } else {
      throw CorruptFile(path + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

void write_config(const PipelineConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "seed=" << cfg.seed << '\n';
  os << "training_seeds=";
  for (std::size_t i = 0; i < cfg.training_seeds.size(); ++i)
    os << (i ? "," : "") << cfg.training_seeds[i];
  os << '\n';
  os << "demo_per_class=" << cfg.demo_per_class << '\n';
  os << "robot_per_variant=" << cfg.robot_per_variant << '\n';
  os << "variants=" << cfg.variants << '\n';
  os << "instructions_per_task=" << cfg.instructions_per_task << '\n';
  os << "tau=" << cfg.supcon.temperature << '\n';
  os << "batch_pairs=" << cfg.supcon.batch_pairs << '\n';
  os << "encoder_epochs=" << cfg.supcon.epochs << '\n';
  os << "encoder_lr=" << cfg.supcon.learning_rate << '\n';
  os << "k=" << cfg.inference.k << '\n';
  os << "k_fraction=" << cfg.inference.k_fraction << '\n';
  os << "renormalize_average="
     << (cfg.inference.renormalize_average ? "true" : "false") << '\n';
  os << "policy_epochs=" << cfg.policy.epochs << '\n';
  os << "policy_batch=" << cfg.policy.batch_size << '\n';
  os << "policy_lr=" << cfg.policy.learning_rate << '\n';
  os << "out_dir=" << cfg.out_dir << '\n';
  os << "parallel_eval=" << (cfg.parallel_eval ? "true" : "false") << '\n';
  os << "methods=";
  for (std::size_t i = 0; i < cfg.methods.size(); ++i)
    os << (i ? "," : "") << method_name(cfg.methods[i]);
  os << '\n';
}

namespace {

// 40 distinct demonstrator-side layouts, disjoint from robot variant ids.
constexpr int kDemoLayoutPool = 40;
constexpr int kDemoLayoutBase = 1000;
constexpr int kEvalLayoutBase = 2000;

std::uint64_t robot_traj_id(int variant, std::size_t i) {
  return static_cast<std::uint64_t>(variant) * 1000000ULL + i;
}

}  // namespace

PipelineData generate_data(const PipelineConfig& config) {
  PipelineData data;
  data.robot.resize(static_cast<std::size_t>(config.variants));
  for (int v = 0; v < config.variants; ++v) {
    const world::WorldLayout layout = world::make_layout(config.seed, v);
    auto& bucket = data.robot[static_cast<std::size_t>(v)];
    bucket.reserve(config.robot_per_variant);
    for (std::size_t i = 0; i < config.robot_per_variant; ++i) {
      world::Trajectory traj = world::gen_random_robot_trajectory(
          layout, derive_seed(config.seed, "robot", static_cast<std::uint64_t>(v), i));
      traj.id = robot_traj_id(v, i);
      bucket.push_back(std::move(traj));
    }
  }

  const std::uint64_t demo_layout_seed = derive_seed(config.seed, "demo-layout");
  for (int t = 0; t < world::kTaskCount; ++t) {
    const auto task = static_cast<world::TaskLabel>(t);
    for (std::size_t i = 0; i < config.demo_per_class; ++i) {
      const std::uint64_t demo_seed =
          derive_seed(config.seed, "demo", static_cast<std::uint64_t>(t), i);
      const world::WorldLayout layout = world::make_layout(
          demo_layout_seed,
          kDemoLayoutBase + static_cast<int>(i) % kDemoLayoutPool);
      auto [traj, feats] = world::gen_demonstrator_video(task, layout, demo_seed);
      data.demo.push_back({std::move(feats), task, world::Domain::Demonstrator});
      data.demo_trajs.push_back(std::move(traj));
      data.demo_seeds.push_back(demo_seed);
    }
  }
  return data;
}

void save_data(const PipelineConfig& config, const PipelineData& data) {
  fs::create_directories(config.out_dir);
  for (int v = 0; v < config.variants; ++v)
    world::save_trajectories(
        data.robot[static_cast<std::size_t>(v)],
        (fs::path(config.out_dir) / ("robot_v" + std::to_string(v) + ".jsonl"))
            .string());
  world::save_trajectories(data.demo_trajs,
                           (fs::path(config.out_dir) / "demo.jsonl").string());
}

PipelineData load_data(const PipelineConfig& config) {
  PipelineData data;
  for (int v = 0; v < config.variants; ++v)
    data.robot.push_back(world::load_trajectories(
        (fs::path(config.out_dir) / ("robot_v" + std::to_string(v) + ".jsonl"))
            .string()));
  data.demo_trajs = world::load_trajectories(
      (fs::path(config.out_dir) / "demo.jsonl").string());
  for (const auto& traj : data.demo_trajs) {
    if (traj.domain != world::Domain::Demonstrator || !traj.hidden_label)
      throw WrongDomain("demo.jsonl must hold labeled demonstrator trajectories");
    data.demo.push_back({world::render_features(traj, world::Domain::Demonstrator),
                         *traj.hidden_label, world::Domain::Demonstrator});
  }
  // Demo seeds are a pure function of the base seed; reconstruct them for
  // the hygiene audit.
  for (int t = 0; t < world::kTaskCount; ++t)
    for (std::size_t i = 0; i < config.demo_per_class; ++i)
      data.demo_seeds.push_back(
          derive_seed(config.seed, "demo", static_cast<std::uint64_t>(t), i));
  return data;
}

void save_artifacts(const PipelineConfig& config, const SeedArtifacts& art) {
  fs::create_directories(config.out_dir);
  const std::string tag = "_s" + std::to_string(art.training_seed);
  nn::save_params(
      art.encoder_params,
      (fs::path(config.out_dir) / ("encoder" + tag + ".vipp")).string());
  if (!art.encoder_curve.empty())
    encoder::write_loss_curve(
        art.encoder_curve,
        (fs::path(config.out_dir) / ("loss_curve" + tag + ".csv")).string());
  for (int v = 0; v < config.variants; ++v) {
    const std::string vtag = tag + "_v" + std::to_string(v);
    const auto idx = static_cast<std::size_t>(v);
    if (idx < art.libraries.size() && !art.libraries[idx].entries.empty())
      library::save_library(
          art.libraries[idx],
          (fs::path(config.out_dir) / ("library" + vtag + ".vipl")).string());
    if (idx < art.policies.size() && !art.policies[idx].values.empty())
      policy::save_policy(
          art.policies[idx], config.policy,
          library::library_fingerprint(art.libraries[idx]),
          (fs::path(config.out_dir) / ("policy" + vtag + ".vipp")).string());
  }
}

std::vector<SeedArtifacts> load_artifacts(const PipelineConfig& config,
                                          bool need_policies,
                                          bool need_libraries) {
  std::vector<SeedArtifacts> artifacts;
  for (std::uint64_t s : config.training_seeds) {
    SeedArtifacts art;
    art.training_seed = s;
    const std::string tag = "_s" + std::to_string(s);
    art.encoder_params = nn::load_params(
        (fs::path(config.out_dir) / ("encoder" + tag + ".vipp")).string());
    art.libraries.resize(static_cast<std::size_t>(config.variants));
    for (int v = 0; need_libraries && v < config.variants; ++v) {
      const std::string vtag = tag + "_v" + std::to_string(v);
      art.libraries[static_cast<std::size_t>(v)] = library::load_library(
          (fs::path(config.out_dir) / ("library" + vtag + ".vipl")).string());
      if (need_policies) {
        policy::LoadedPolicy pol = policy::load_policy(
            (fs::path(config.out_dir) / ("policy" + vtag + ".vipp")).string());
        if (pol.library_fingerprint !=
            library::library_fingerprint(art.libraries[static_cast<std::size_t>(v)]))
          throw FingerprintMismatch("policy" + vtag +
                                    " was trained against a different library");
        art.policies.push_back(std::move(pol.params));
      }
    }
    artifacts.push_back(std::move(art));
  }
  return artifacts;
}

SeedArtifacts train_seed(const PipelineConfig& config, const PipelineData& data,
                         std::uint64_t training_seed) {
  SeedArtifacts art;
  art.training_seed = training_seed;
  encoder::TrainResult enc = encoder::train_projection(
      data.demo, config.supcon, derive_seed(training_seed, "encoder"));
  art.encoder_params = std::move(enc.params);
  art.encoder_curve = std::move(enc.curve);
  for (int v = 0; v < config.variants; ++v) {
    const auto& dataset = data.robot[static_cast<std::size_t>(v)];
    art.libraries.push_back(
        library::build_library(dataset, art.encoder_params));
    art.policies.push_back(
        policy::train_policy(dataset, art.libraries.back(), config.policy,
                             derive_seed(training_seed, "policy",
                                         static_cast<std::uint64_t>(v)))
            .params);
  }
  return art;
}

namespace {

std::vector<double> normalized(std::vector<double> v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double n = std::sqrt(n2);
  if (n > 1e-12)
    for (double& x : v) x /= n;
  return v;
}

struct EpisodeSpec {
  std::size_t seed_idx;
  int variant;
  int task;  // robot-relevant index 0..2
  std::size_t instruction;
};

struct VariantContext {
  world::WorldLayout layout;
  // Normalized backbone reprs in library entry order (repr-cosine keys).
  std::vector<std::vector<double>> repr_keys;
  // Oracle choice per training seed (outer index) and robot-relevant task:
  // among trajectories whose hidden label is the task, the one whose
  // embedding best reproduces the task under that seed's policy on held-out
  // validation starts.
  std::vector<std::array<std::optional<std::uint64_t>, world::kRobotTaskCount>>
      oracle_best;
};

// How decisively a trajectory solves `task`: deeper drawer close, longer
// push toward the target, larger rightward turn. Computed from visible
// trajectory state only; hidden labels only gate which trajectories are
// scored.
double task_margin(const world::Trajectory& traj, world::TaskLabel task) {
  const world::WorldState& s0 = traj.states.front();
  const world::WorldState& sT = traj.states.back();
  switch (task) {
    case world::TaskLabel::CloseDrawer:
      return -sT.drawer_extent;
    case world::TaskLabel::PushCup: {
      const world::Vec2 dir{traj.layout.cup_target[0] - s0.cup[0],
                            traj.layout.cup_target[1] - s0.cup[1]};
      const double n = world::norm(dir);
      if (n < 1e-12) return 0.0;
      const world::Vec2 disp{sT.cup[0] - s0.cup[0], sT.cup[1] - s0.cup[1]};
      return world::dot(disp, {dir[0] / n, dir[1] / n});
    }
    case world::TaskLabel::TurnFaucetRight:
      return sT.faucet_angle - s0.faucet_angle;
    default:
      return 0.0;
  }
}

}  // namespace

EvalReport evaluate(Method method, const PipelineConfig& config,
                    const PipelineData& data,
                    const std::vector<SeedArtifacts>& artifacts) {
  EvalReport report;

  // Hygiene audit: encoder training data must be robot-free, and the
  // instruction seeds must be disjoint from the demo-training seeds.
  for (const auto& sample : data.demo)
    if (sample.domain == world::Domain::Robot) ++report.audit.encoder_robot_samples;
  std::set<std::uint64_t> train_seeds(data.demo_seeds.begin(),
                                      data.demo_seeds.end());

  for (const auto& art : artifacts)
    for (const auto& lib : art.libraries)
      if (lib.encoder_fingerprint !=
          encoder::params_fingerprint(art.encoder_params))
        throw FingerprintMismatch("library was built by a different encoder");

  // Per-variant context shared by every episode (backbone is frozen and
  // the datasets are seed-fixed, so this is training-seed independent).
  std::vector<VariantContext> contexts;
  for (int v = 0; v < config.variants; ++v) {
    VariantContext ctx;
    ctx.layout = world::make_layout(config.seed, v);
    const auto& dataset = data.robot[static_cast<std::size_t>(v)];
    if (method == Method::ReprCosine) {
      ctx.repr_keys.reserve(dataset.size());
      for (const auto& traj : dataset)
        ctx.repr_keys.push_back(normalized(
            encoder::backbone(world::render_features(traj, world::Domain::Robot))
                .v));
    }
    if (method == Method::Oracle) {
      // Candidate pool per task: every trajectory the hidden labels mark as
      // solving it.
      std::array<std::vector<const world::Trajectory*>, world::kRobotTaskCount>
          cands;
      for (const auto& traj : dataset) {
        // The only inference-time code path allowed to read hidden labels.
        ++report.audit.hidden_label_reads_oracle;
        if (!traj.hidden_label ||
            static_cast<int>(*traj.hidden_label) >= world::kRobotTaskCount)
          continue;
        cands[static_cast<std::size_t>(*traj.hidden_label)].push_back(&traj);
      }
      // The oracle is the ground-truth upper bound: for each policy it may
      // also use the success predicate to validate, on starts disjoint from
      // the evaluation starts, which candidate's embedding actually
      // reproduces the task, and condition on the best one. Ties fall back
      // to the task margin, then the lower id.
      constexpr int kValStarts = 5;
      ctx.oracle_best.resize(artifacts.size());
      for (std::size_t s = 0; s < artifacts.size(); ++s) {
        const auto& lib = artifacts[s].libraries[static_cast<std::size_t>(v)];
        const auto& pol = artifacts[s].policies[static_cast<std::size_t>(v)];
        for (int t = 0; t < world::kRobotTaskCount; ++t) {
          const auto task = static_cast<world::TaskLabel>(t);
          int best_score = -1;
          double best_margin = -1e300;
          for (const world::Trajectory* traj : cands[static_cast<std::size_t>(t)]) {
            const library::Entry* entry = lib.find(traj->id);
            if (entry == nullptr)
              throw MissingEmbedding("oracle candidate " +
                                     std::to_string(traj->id));
            int score = 0;
            for (int j = 0; j < kValStarts; ++j) {
              Rng rng(derive_seed(config.seed, "oracle-val",
                                  static_cast<std::uint64_t>(v * 8 + t),
                                  static_cast<std::uint64_t>(j)));
              const world::WorldState start = world::default_state(
                  ctx.layout,
                  {world::kEffectorHome[0] +
                       rng.uniform(-world::kHomeJitter, world::kHomeJitter),
                   world::kEffectorHome[1] +
                       rng.uniform(-world::kHomeJitter, world::kHomeJitter)});
              if (world::success(policy::rollout(ctx.layout, start, pol,
                                                 entry->embedding),
                                 task))
                ++score;
            }
            const double m = task_margin(*traj, task);
            if (score > best_score ||
                (score == best_score && m > best_margin)) {
              best_score = score;
              best_margin = m;
              ctx.oracle_best[s][static_cast<std::size_t>(t)] = traj->id;
            }
          }
        }
      }
    }
    contexts.push_back(std::move(ctx));
  }

  std::vector<EpisodeSpec> specs;
  for (std::size_t s = 0; s < artifacts.size(); ++s)
    for (int v = 0; v < config.variants; ++v)
      for (int t = 0; t < world::kRobotTaskCount; ++t)
        for (std::size_t j = 0; j < config.instructions_per_task; ++j)
          specs.push_back({s, v, t, j});

  const std::uint64_t eval_layout_seed =
      derive_seed(config.seed, "eval-demo-layout");

  // Disjointness is checked up front so episode workers never touch the
  // shared audit record.
  for (int t = 0; t < world::kRobotTaskCount; ++t)
    for (std::size_t j = 0; j < config.instructions_per_task; ++j)
      if (train_seeds.count(derive_seed(config.seed, "eval-instr",
                                        static_cast<std::uint64_t>(t), j)))
        report.audit.eval_seeds_disjoint = false;

  auto run_episode = [&](const EpisodeSpec& spec) -> EpisodeRecord {
    const auto task = static_cast<world::TaskLabel>(spec.task);
    const SeedArtifacts& art = artifacts[spec.seed_idx];
    const VariantContext& ctx = contexts[static_cast<std::size_t>(spec.variant)];
    const auto& lib = art.libraries[static_cast<std::size_t>(spec.variant)];
    const auto& pol = art.policies[static_cast<std::size_t>(spec.variant)];

    // Held-out instruction video, never seen by encoder training.
    const std::uint64_t instr_seed =
        derive_seed(config.seed, "eval-instr",
                    static_cast<std::uint64_t>(spec.task), spec.instruction);
    const world::WorldLayout instr_layout = world::make_layout(
        eval_layout_seed, kEvalLayoutBase + spec.task * 16 +
                              static_cast<int>(spec.instruction));
    auto [instr_traj, instr_feats] =
        world::gen_demonstrator_video(task, instr_layout, instr_seed);

    Rng start_rng(derive_seed(config.seed, "eval-start",
                              static_cast<std::uint64_t>(spec.variant * 64 +
                                                         spec.task * 8) +
                                  spec.instruction));
    const world::WorldState start = world::default_state(
        ctx.layout,
        {world::kEffectorHome[0] +
             start_rng.uniform(-world::kHomeJitter, world::kHomeJitter),
         world::kEffectorHome[1] +
             start_rng.uniform(-world::kHomeJitter, world::kHomeJitter)});

    const auto t0 = std::chrono::steady_clock::now();
    encoder::Embedding selected;
    switch (method) {
      case Method::Vip: {
        const encoder::Embedding query = encoder::project(
            encoder::backbone(instr_feats), art.encoder_params);
        selected = library::topk_average(query, lib, config.inference).selected;
        break;
      }
      case Method::HumanDirect:
        selected = encoder::project(encoder::backbone(instr_feats),
                                    art.encoder_params);
        break;
      case Method::ReprCosine: {
        const auto query_key =
            normalized(encoder::backbone(instr_feats).v);
        selected = library::topk_average_by_keys(query_key, ctx.repr_keys, lib,
                                                 config.inference)
                       .selected;
        break;
      }
      case Method::Oracle: {
        const auto& best =
            ctx.oracle_best[spec.seed_idx][static_cast<std::size_t>(spec.task)];
        if (!best)
          throw EmptyDataset("no oracle candidate for task " +
                             std::string(world::task_name(task)));
        selected = lib.find(*best)->embedding;
        break;
      }
      case Method::Random: {
        Rng pick(derive_seed(config.seed, "random-pick",
                             static_cast<std::uint64_t>(spec.variant * 64 +
                                                        spec.task * 8) +
                                 spec.instruction,
                             art.training_seed));
        selected = lib.entries[pick.uniform_int(lib.size())].embedding;
        break;
      }
    }
    const world::Trajectory ro =
        policy::rollout(ctx.layout, start, pol, selected);
    const bool ok = world::success(ro, task);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return {method,  spec.variant,       task, spec.instruction,
            art.training_seed, ok, secs};
  };

  report.episodes.resize(specs.size());
  if (config.parallel_eval && specs.size() > 1) {
    const std::size_t workers =
        std::min<std::size_t>(std::thread::hardware_concurrency() > 0
                                  ? std::thread::hardware_concurrency()
                                  : 4,
                              specs.size());
    std::vector<std::future<void>> futures;
    for (std::size_t w = 0; w < workers; ++w) {
      futures.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < specs.size(); i += workers)
          report.episodes[i] = run_episode(specs[i]);
      }));
    }
    for (auto& f : futures) f.get();
  } else {
    for (std::size_t i = 0; i < specs.size(); ++i)
      report.episodes[i] = run_episode(specs[i]);
  }
  return report;
}

EvalReport evaluate_zero_shot(const PipelineConfig& config,
                              const PipelineData& data,
                              const std::vector<SeedArtifacts>& artifacts) {
  return evaluate(Method::Vip, config, data, artifacts);
}
EvalReport baseline_human_direct(const PipelineConfig& config,
                                 const PipelineData& data,
                                 const std::vector<SeedArtifacts>& artifacts) {
  return evaluate(Method::HumanDirect, config, data, artifacts);
}
EvalReport baseline_repr_cosine(const PipelineConfig& config,
                                const PipelineData& data,
                                const std::vector<SeedArtifacts>& artifacts) {
  return evaluate(Method::ReprCosine, config, data, artifacts);
}
std::pair<EvalReport, EvalReport> baseline_oracle_and_random(
    const PipelineConfig& config, const PipelineData& data,
    const std::vector<SeedArtifacts>& artifacts) {
  return {evaluate(Method::Oracle, config, data, artifacts),
          evaluate(Method::Random, config, data, artifacts)};
}

std::map<std::pair<int, int>, EvalReport::Aggregate> EvalReport::aggregates()
    const {
  // (method, variant) -> per-training-seed success means.
  std::map<std::pair<int, int>, std::map<std::uint64_t, std::pair<double, int>>>
      acc;
  for (const auto& ep : episodes) {
    auto& cell = acc[{static_cast<int>(ep.method), ep.variant}]
                    [ep.training_seed];
    cell.first += ep.success ? 1.0 : 0.0;
    cell.second += 1;
  }
  std::map<std::pair<int, int>, Aggregate> out;
  for (const auto& [key, seeds] : acc) {
    std::vector<double> means;
    for (const auto& [seed, cell] : seeds)
      means.push_back(100.0 * cell.first / cell.second);
    Aggregate agg;
    agg.seeds = means.size();
    for (double m : means) agg.mean += m;
    agg.mean /= static_cast<double>(means.size());
    if (means.size() > 1) {
      double ss = 0.0;
      for (double m : means) ss += (m - agg.mean) * (m - agg.mean);
      agg.std_dev = std::sqrt(ss / static_cast<double>(means.size() - 1));
    }
    out[key] = agg;
  }
  return out;
}

double EvalReport::method_mean(Method m) const {
  double hits = 0.0;
  std::size_t n = 0;
  for (const auto& ep : episodes) {
    if (ep.method != m) continue;
    hits += ep.success ? 1.0 : 0.0;
    ++n;
  }
  return n > 0 ? 100.0 * hits / static_cast<double>(n) : 0.0;
}

std::vector<AblationRow> ablate_k(const PipelineConfig& config,
                                  const PipelineData& data,
                                  const std::vector<SeedArtifacts>& artifacts,
                                  const std::vector<double>& fractions) {
  std::vector<AblationRow> rows;
  auto sweep_point = [&](const std::string& label, std::size_t k,
                         double fraction) {
    PipelineConfig cfg = config;
    cfg.inference.k = k;
    cfg.inference.k_fraction = fraction;
    const EvalReport rep = evaluate(Method::Vip, cfg, data, artifacts);
    // Per-seed grid means, then mean/std across seeds.
    std::map<std::uint64_t, std::pair<double, int>> per_seed;
    for (const auto& ep : rep.episodes) {
      auto& cell = per_seed[ep.training_seed];
      cell.first += ep.success ? 1.0 : 0.0;
      cell.second += 1;
    }
    std::vector<double> means;
    for (const auto& [seed, cell] : per_seed)
      means.push_back(100.0 * cell.first / cell.second);
    AblationRow row;
    row.k_label = label;
    row.resolved_k = cfg.inference.resolved_k(config.robot_per_variant);
    for (double m : means) row.mean += m;
    row.mean /= static_cast<double>(means.size());
    if (means.size() > 1) {
      double ss = 0.0;
      for (double m : means) ss += (m - row.mean) * (m - row.mean);
      row.std_dev = std::sqrt(ss / static_cast<double>(means.size() - 1));
    }
    rows.push_back(std::move(row));
  };

  sweep_point("1", 1, 0.0);
  for (double f : fractions) {
    std::ostringstream label;
    label << f;
    sweep_point(label.str(), 0, f);
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "k,resolved_k,mean,std\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.k_label << ',' << r.resolved_k << ',' << r.mean << ','
       << r.std_dev << '\n';
}

std::vector<AblationRow> read_ablation_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<AblationRow> rows;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto parts = split(line, ',');
    if (parts.size() != 4) throw CorruptFile(path + ": bad row '" + line + "'");
    rows.push_back({parts[0], std::stoul(parts[1]), std::stod(parts[2]),
                    std::stod(parts[3])});
  }
  return rows;
}

namespace {

json report_to_json(const EvalReport& report, const PipelineConfig& config) {
  json j;
  j["config"] = {
      {"seed", config.seed},
      {"training_seeds", config.training_seeds},
      {"demo_per_class", config.demo_per_class},
      {"robot_per_variant", config.robot_per_variant},
      {"variants", config.variants},
      {"instructions_per_task", config.instructions_per_task},
      {"tau", config.supcon.temperature},
      {"k", config.inference.k},
      {"k_fraction", config.inference.k_fraction},
      {"renormalize_average", config.inference.renormalize_average},
  };
  j["audit"] = {
      {"encoder_robot_samples", report.audit.encoder_robot_samples},
      {"hidden_label_reads_non_oracle",
       report.audit.hidden_label_reads_non_oracle},
      {"hidden_label_reads_oracle", report.audit.hidden_label_reads_oracle},
      {"eval_seeds_disjoint", report.audit.eval_seeds_disjoint},
      {"flag", report.audit.clean() ? "clean" : "dirty"},
  };
  // Episodes omit wall-clock on purpose: report.json must be bit-identical
  // across reruns and across serial/parallel evaluation; timings live in
  // timing.csv.
  json eps = json::array();
  for (const auto& ep : report.episodes)
    eps.push_back({{"method", method_name(ep.method)},
                   {"variant", ep.variant},
                   {"task", world::task_name(ep.task)},
                   {"instruction", ep.instruction},
                   {"training_seed", ep.training_seed},
                   {"success", ep.success}});
  j["episodes"] = std::move(eps);
  json aggs = json::array();
  for (const auto& [key, agg] : report.aggregates())
    aggs.push_back({{"method", method_name(static_cast<Method>(key.first))},
                    {"variant", key.second},
                    {"mean", agg.mean},
                    {"std", agg.std_dev},
                    {"seeds", agg.seeds}});
  j["aggregates"] = std::move(aggs);
  return j;
}

}  // namespace

void emit_report(const EvalReport& report, const PipelineConfig& config,
                 const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "report.json");
    if (!os) throw IoError("cannot write report.json");
    os << report_to_json(report, config).dump(2) << '\n';
  }
  {
    std::ofstream os(fs::path(dir) / "summary.csv");
    if (!os) throw IoError("cannot write summary.csv");
    os << "method";
    for (int v = 0; v < config.variants; ++v) os << ",env" << (v + 1);
    os << ",avg\n";
    const auto aggs = report.aggregates();
    std::set<int> methods;
    for (const auto& [key, agg] : aggs) methods.insert(key.first);
    os << std::fixed;
    os.precision(1);
    for (int m : methods) {
      os << method_name(static_cast<Method>(m));
      double mean_sum = 0.0, std_sum = 0.0;
      for (int v = 0; v < config.variants; ++v) {
        const auto it = aggs.find({m, v});
        const auto agg = it != aggs.end() ? it->second : EvalReport::Aggregate{};
        os << ',' << agg.mean << " (" << agg.std_dev << ")";
        mean_sum += agg.mean;
        std_sum += agg.std_dev;
      }
      os << ',' << mean_sum / config.variants << " ("
         << std_sum / config.variants << ")\n";
    }
  }
  {
    std::ofstream os(fs::path(dir) / "timing.csv");
    if (!os) throw IoError("cannot write timing.csv");
    os << "method,variant,task,instruction,training_seed,success,seconds\n";
    os.precision(9);
    for (const auto& ep : report.episodes)
      os << method_name(ep.method) << ',' << ep.variant << ','
         << world::task_name(ep.task) << ',' << ep.instruction << ','
         << ep.training_seed << ',' << (ep.success ? 1 : 0) << ','
         << ep.wall_seconds << '\n';
  }
}

EvalReport load_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) throw CorruptFile(path + ": bad JSON");
  EvalReport report;
  for (const auto& ej : j.at("episodes")) {
    EpisodeRecord ep;
    ep.method = *method_from_name(ej.at("method").get<std::string>());
    ep.variant = ej.at("variant").get<int>();
    ep.task = *world::task_from_name(ej.at("task").get<std::string>());
    ep.instruction = ej.at("instruction").get<std::size_t>();
    ep.training_seed = ej.at("training_seed").get<std::uint64_t>();
    ep.success = ej.at("success").get<bool>();
    ep.wall_seconds = 0.0;
    report.episodes.push_back(ep);
  }
  const auto& aj = j.at("audit");
  report.audit.encoder_robot_samples =
      aj.at("encoder_robot_samples").get<std::size_t>();
  report.audit.hidden_label_reads_non_oracle =
      aj.at("hidden_label_reads_non_oracle").get<std::size_t>();
  report.audit.hidden_label_reads_oracle =
      aj.at("hidden_label_reads_oracle").get<std::size_t>();
  report.audit.eval_seeds_disjoint = aj.at("eval_seeds_disjoint").get<bool>();
  return report;
}

EvalReport merge_reports(const std::vector<EvalReport>& reports) {
  EvalReport merged;
  for (const auto& rep : reports) {
    merged.episodes.insert(merged.episodes.end(), rep.episodes.begin(),
                           rep.episodes.end());
    merged.audit.encoder_robot_samples =
        std::max(merged.audit.encoder_robot_samples,
                 rep.audit.encoder_robot_samples);
    merged.audit.hidden_label_reads_non_oracle +=
        rep.audit.hidden_label_reads_non_oracle;
    merged.audit.hidden_label_reads_oracle +=
        rep.audit.hidden_label_reads_oracle;
    merged.audit.eval_seeds_disjoint =
        merged.audit.eval_seeds_disjoint && rep.audit.eval_seeds_disjoint;
  }
  return merged;
}

EvalReport run_pipeline(const PipelineConfig& config) {
  fs::create_directories(config.out_dir);
  write_config(config, (fs::path(config.out_dir) / "config.resolved").string());

  const PipelineData data = generate_data(config);
  save_data(config, data);

  std::vector<SeedArtifacts> artifacts;
  for (std::uint64_t s : config.training_seeds) {
    SeedArtifacts art = train_seed(config, data, s);
    save_artifacts(config, art);
    artifacts.push_back(std::move(art));
  }

  std::vector<EvalReport> reports;
  for (Method m : config.methods)
    reports.push_back(evaluate(m, config, data, artifacts));
  EvalReport merged = merge_reports(reports);

  const std::vector<double> fractions = {0.005, 0.01, 0.02, 0.05,
                                         0.1,   0.25, 0.5,  1.0};
  write_ablation_csv(ablate_k(config, data, artifacts, fractions),
                     (fs::path(config.out_dir) / "ablate_k.csv").string());

  emit_report(merged, config, config.out_dir);
  return merged;
}

}  // namespace vip::harness
