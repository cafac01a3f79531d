#include "vip/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "vip/errors.hpp"
#include "vip/rng.hpp"

namespace vip::world {

using json = nlohmann::json;

double dot(Vec2 a, Vec2 b) { return a[0] * b[0] + a[1] * b[1]; }
double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

namespace {

constexpr double kHalfPi = 1.5707963267948966;

double clamp(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

Vec2 clamp_workspace(Vec2 p) { return {clamp(p[0], 0.0, 1.0), clamp(p[1], 0.0, 1.0)}; }

Vec2 clamp_action(Vec2 d, double a_max = kActionMax) {
  return {clamp(d[0], -a_max, a_max), clamp(d[1], -a_max, a_max)};
}

Vec2 unit(Vec2 v) {
  const double n = norm(v);
  return n > 1e-12 ? (1.0 / n) * v : Vec2{1.0, 0.0};
}

// Proportional step toward a displacement, capped by Euclidean norm rather
// than per axis: the resulting action is a continuous (indeed Lipschitz)
// function of the effector position, which keeps generated state->action
// maps learnable by a smooth regressor.
Vec2 norm_capped(Vec2 d, double cap) {
  const double n = norm(d);
  return n > cap ? (cap / n) * d : d;
}

}  // namespace

const char* task_name(TaskLabel t) {
  switch (t) {
    case TaskLabel::CloseDrawer: return "CloseDrawer";
    case TaskLabel::PushCup: return "PushCup";
    case TaskLabel::TurnFaucetRight: return "TurnFaucetRight";
    case TaskLabel::OpenDrawer: return "OpenDrawer";
    case TaskLabel::PushCupReverse: return "PushCupReverse";
    case TaskLabel::TurnFaucetLeft: return "TurnFaucetLeft";
  }
  return "?";
}

std::optional<TaskLabel> task_from_name(const std::string& name) {
  for (int i = 0; i < kTaskCount; ++i) {
    const auto t = static_cast<TaskLabel>(i);
    if (name == task_name(t)) return t;
  }
  return std::nullopt;
}

Vec2 WorldLayout::drawer_handle(double extent) const {
  return drawer_slot + (extent * kDrawerTravel) * drawer_axis;
}

Vec2 WorldLayout::faucet_handle(double angle) const {
  return faucet_pivot + kFaucetLever * Vec2{std::sin(angle), std::cos(angle)};
}

WorldLayout make_layout(std::uint64_t seed, int variant_id) {
  Rng rng(derive_seed(seed, "layout", static_cast<std::uint64_t>(variant_id)));
  WorldLayout lay;
  lay.variant_id = variant_id;
  lay.drawer_slot = {rng.uniform(0.12, 0.30), rng.uniform(0.25, 0.75)};
  const double phi = rng.uniform(-0.6, 0.6);
  lay.drawer_axis = {std::cos(phi), std::sin(phi)};
  lay.cup = {rng.uniform(0.42, 0.58), rng.uniform(0.25, 0.75)};
  // Push direction stays within a rightward cone so the push-forward and
  // push-back classes have a globally consistent direction a video encoder
  // can pick up (mirroring direction-consistent video class pairs).
  for (;;) {
    const double psi = rng.uniform(-0.6, 0.6);
    lay.cup_target = lay.cup + 0.35 * Vec2{std::cos(psi), std::sin(psi)};
    if (lay.cup_target[0] > 0.05 && lay.cup_target[0] < 0.95 &&
        lay.cup_target[1] > 0.05 && lay.cup_target[1] < 0.95)
      break;
  }
  lay.faucet_pivot = {rng.uniform(0.70, 0.88), rng.uniform(0.25, 0.75)};
  for (auto& c : lay.color_code)
    c = static_cast<int>(rng.uniform_int(kColorCount));
  return lay;
}

TrajectoryView strip_label(const Trajectory& traj) {
  return {&traj.states, &traj.actions, &traj.layout, traj.id};
}

WorldState step(const WorldLayout& layout, const WorldState& state,
                const Action& action) {
  WorldState next = state;
  const Vec2 wanted = clamp_action(action.delta);
  const Vec2 moved = clamp_workspace(state.effector + wanted);
  const Vec2 applied = moved - state.effector;
  next.effector = moved;

  if (norm(state.effector - layout.drawer_handle(state.drawer_extent)) <
      kContactRadius) {
    next.drawer_extent =
        clamp(state.drawer_extent + dot(applied, layout.drawer_axis) / kDrawerTravel,
              0.0, 1.0);
  }
  if (norm(state.effector - state.cup) < kContactRadius) {
    next.cup = clamp_workspace(state.cup + applied);
  }
  if (norm(state.effector - layout.faucet_handle(state.faucet_angle)) <
      kContactRadius) {
    const Vec2 tangent{std::cos(state.faucet_angle), -std::sin(state.faucet_angle)};
    next.faucet_angle =
        clamp(state.faucet_angle + dot(applied, tangent) / kFaucetLever,
              -kHalfPi, kHalfPi);
  }
  next.t = state.t + 1;
  return next;
}

WorldState default_state(const WorldLayout& layout, Vec2 effector) {
  WorldState s;
  s.effector = clamp_workspace(effector);
  s.drawer_extent = 0.7;
  s.cup = layout.cup;
  s.faucet_angle = 0.0;
  s.t = 0;
  return s;
}

bool success(const Trajectory& traj, TaskLabel task) {
  if (traj.domain != Domain::Robot)
    throw WrongDomain("success() only applies to robot trajectories");
  const WorldState& s0 = traj.states.front();
  const WorldState& sT = traj.states.back();
  const Vec2 push_dir = unit(traj.layout.cup_target - s0.cup);
  const double cup_disp = dot(sT.cup - s0.cup, push_dir);
  switch (task) {
    case TaskLabel::CloseDrawer:
      return sT.drawer_extent < 0.1 && s0.drawer_extent >= 0.5;
    case TaskLabel::OpenDrawer:
      return sT.drawer_extent > 0.9 && s0.drawer_extent <= 0.5;
    case TaskLabel::PushCup:
      return cup_disp >= 0.15;
    case TaskLabel::PushCupReverse:
      return cup_disp <= -0.15;
    case TaskLabel::TurnFaucetRight:
      return sT.faucet_angle - s0.faucet_angle >= 0.6;
    case TaskLabel::TurnFaucetLeft:
      return sT.faucet_angle - s0.faucet_angle <= -0.6;
  }
  return false;
}

std::vector<TaskLabel> fired_tasks(const Trajectory& traj) {
  std::vector<TaskLabel> fired;
  for (int i = 0; i < kTaskCount; ++i) {
    const auto t = static_cast<TaskLabel>(i);
    if (success(traj, t)) fired.push_back(t);
  }
  return fired;
}

namespace {

// Rolls actions produced by `controller(state) -> raw delta` into a
// trajectory of fixed horizon.
template <typename Controller>
Trajectory roll(const WorldLayout& layout, WorldState start, int horizon,
                Controller&& controller) {
  Trajectory traj;
  traj.layout = layout;
  traj.states.reserve(static_cast<std::size_t>(horizon) + 1);
  traj.actions.reserve(static_cast<std::size_t>(horizon));
  traj.states.push_back(start);
  WorldState s = start;
  for (int t = 0; t < horizon; ++t) {
    Action a{clamp_action(controller(s))};
    s = step(layout, s, a);
    traj.actions.push_back(a);
    traj.states.push_back(s);
  }
  return traj;
}

}  // namespace

Trajectory gen_random_robot_trajectory(const WorldLayout& layout,
                                       std::uint64_t seed) {
  Rng rng(derive_seed(seed, "random-robot"));
  const Vec2 start{
      kEffectorHome[0] + rng.uniform(-kHomeJitter, kHomeJitter),
      kEffectorHome[1] + rng.uniform(-kHomeJitter, kHomeJitter)};
  std::array<Vec2, 3> waypoints;
  // Half of the episodes route their first segment straight through one of
  // the object interaction points (object chosen at random, pass-through
  // direction and length at random). Play data made only of uniformly random
  // waypoints touches the objects too rarely and too glancingly to cover
  // every task; object-anchored passes keep the data undirected while making
  // object contact, when it happens, deliberate and repeatable.
  const bool object_pass = rng.uniform(0.0, 1.0) < 0.5;
  if (object_pass) {
    Vec2 anchor{};
    Vec2 slide{};  // object's direction of motion at the anchor, if any
    switch (rng.uniform_int(3)) {
      case 0:
        anchor = layout.drawer_handle(0.7);
        slide = layout.drawer_axis;
        break;
      case 1:
        anchor = layout.cup;
        break;
      default:
        anchor = layout.faucet_handle(0.0);
        slide = {std::cos(0.0), -std::sin(0.0)};
        break;
    }
    auto clamp01 = [](Vec2 v) {
      for (double& x : v) x = std::min(std::max(x, 0.02), 0.98);
      return v;
    };
    waypoints[0] = clamp01(anchor + Vec2{rng.uniform(-0.03, 0.03),
                                         rng.uniform(-0.03, 0.03)});
    // Sliding objects are mostly dragged along their motion axis (either
    // way), so the pass actually exercises the mechanism; the rest of the
    // time (and always for the freely pushable cup) the leave direction is
    // uniform.
    double theta;
    double reach = rng.uniform(0.18, 0.40);
    if ((slide[0] != 0.0 || slide[1] != 0.0) && rng.uniform(0.0, 1.0) < 0.7) {
      const double axis_angle = std::atan2(slide[1], slide[0]);
      theta = axis_angle + (rng.bernoulli(0.5) ? 0.0 : std::numbers::pi) +
              rng.uniform(-0.15, 0.15);
      reach = rng.uniform(0.24, 0.45);
    } else {
      theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    waypoints[1] =
        clamp01(anchor + reach * Vec2{std::cos(theta), std::sin(theta)});
    // The memoryless waypoint schedule switches to the final waypoint as
    // soon as the effector is past the plane through waypoint 1; an exit
    // waypoint sampled behind the pass would preempt it mid-drag, so keep
    // drawing until the exit lies beyond the pass end.
    for (int tries = 0; tries < 64; ++tries) {
      waypoints[2] = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
      if (dot(waypoints[0] - waypoints[1], waypoints[2] - waypoints[1]) < 0.0)
        break;
    }
  } else {
    for (auto& w : waypoints)
      w = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
  }
  const double speed = rng.uniform(0.25, 0.85);  // per-trajectory pace

  // Memoryless waypoint schedule: the active target is a function of the
  // effector position alone (which side of the switching plane through each
  // waypoint the effector is on), never of hidden phase or elapsed time.
  // This keeps state -> action a well-defined function, so behavior cloning
  // on this data is realizable.
  auto past = [](Vec2 eff, Vec2 a, Vec2 b) {
    const Vec2 d = b - a;
    const double len = norm(d);
    if (len < 1e-9) return true;
    return dot(eff - a, d) >= 0.0;
  };
  auto controller = [&](const WorldState& s) -> Vec2 {
    Vec2 target = waypoints[0];
    const bool p01 = past(s.effector, waypoints[0], waypoints[1]);
    const bool p12 = past(s.effector, waypoints[1], waypoints[2]);
    if (p01) target = p12 ? waypoints[2] : waypoints[1];
    return norm_capped(target - s.effector, speed * kActionMax);
  };
  Trajectory traj =
      roll(layout, default_state(layout, start), kHorizon, controller);
  traj.domain = Domain::Robot;
  const auto fired = fired_tasks(traj);
  if (!fired.empty()) traj.hidden_label = fired.front();
  return traj;
}

namespace {

struct ExpertNoise {
  Vec2 start;
  double speed;        // in (0, 1], scales per-axis step size
  Vec2 approach_off;   // detour applied while approaching the object
};

WorldLayout perturb_layout(const WorldLayout& base, Rng& rng) {
  WorldLayout lay = base;
  auto jit = [&rng](Vec2 p) {
    return clamp_workspace(p + Vec2{rng.uniform(-0.02, 0.02),
                                    rng.uniform(-0.02, 0.02)});
  };
  lay.drawer_slot = jit(lay.drawer_slot);
  lay.cup = jit(lay.cup);
  lay.cup_target = jit(lay.cup_target);
  lay.faucet_pivot = jit(lay.faucet_pivot);
  return lay;
}

Trajectory run_expert(TaskLabel task, const WorldLayout& layout,
                      const ExpertNoise& noise) {
  WorldState start = default_state(layout, noise.start);
  switch (task) {
    case TaskLabel::CloseDrawer:
      start.drawer_extent = 0.55 + 0.35 * noise.speed;  // always >= 0.55
      break;
    case TaskLabel::OpenDrawer:
      start.drawer_extent = 0.05 + 0.25 * (1.0 - noise.speed);
      break;
    case TaskLabel::TurnFaucetRight:
      start.faucet_angle = -0.3 + 0.5 * (1.0 - noise.speed);
      break;
    case TaskLabel::TurnFaucetLeft:
      start.faucet_angle = 0.3 - 0.5 * (1.0 - noise.speed);
      break;
    default:
      break;
  }

  const double a_step = kActionMax * noise.speed;
  const double target_angle =
      task == TaskLabel::TurnFaucetRight ? start.faucet_angle + 0.9
                                         : start.faucet_angle - 0.9;
  const Vec2 push_dir = unit(layout.cup_target - layout.cup);
  bool approached = false;
  bool done = false;

  auto controller = [&](const WorldState& s) -> Vec2 {
    if (done) return {0.0, 0.0};
    Vec2 contact{};
    switch (task) {
      case TaskLabel::CloseDrawer:
      case TaskLabel::OpenDrawer:
        contact = layout.drawer_handle(s.drawer_extent);
        break;
      case TaskLabel::PushCup:
      case TaskLabel::PushCupReverse:
        contact = s.cup;
        break;
      case TaskLabel::TurnFaucetRight:
      case TaskLabel::TurnFaucetLeft:
        contact = layout.faucet_handle(s.faucet_angle);
        break;
    }
    const bool cup_task =
        task == TaskLabel::PushCup || task == TaskLabel::PushCupReverse;
    const double dist = norm(contact - s.effector);
    if (!approached) {
      // Cup contact is sticky (the cup translates with the effector from the
      // first touch), so for cup tasks any contact is good enough to push.
      if (dist < (cup_task ? kContactRadius : 0.75 * kContactRadius)) {
        approached = true;
      } else {
        // Detour through a per-seed offset while still far away. Approach at
        // full speed so slow experts still reach the object within horizon.
        const Vec2 goal =
            dist > 0.25 ? contact + noise.approach_off : contact;
        return clamp_action(2.0 * (goal - s.effector), kActionMax);
      }
    }
    // Manipulation phase: push along the task direction, with a correction
    // term that keeps the effector glued to the moving contact point.
    Vec2 push{};
    switch (task) {
      case TaskLabel::CloseDrawer:
        if (s.drawer_extent <= 0.03) { done = true; return {0.0, 0.0}; }
        push = (-a_step) * layout.drawer_axis;
        break;
      case TaskLabel::OpenDrawer:
        if (s.drawer_extent >= 0.97) { done = true; return {0.0, 0.0}; }
        push = a_step * layout.drawer_axis;
        break;
      case TaskLabel::PushCup:
      case TaskLabel::PushCupReverse: {
        const double sign = task == TaskLabel::PushCup ? 1.0 : -1.0;
        const double disp = dot(s.cup - layout.cup, push_dir) * sign;
        if (disp >= 0.20) { done = true; return {0.0, 0.0}; }
        push = (sign * a_step) * push_dir;
        break;
      }
      case TaskLabel::TurnFaucetRight:
      case TaskLabel::TurnFaucetLeft: {
        const double sign = task == TaskLabel::TurnFaucetRight ? 1.0 : -1.0;
        if (sign * (s.faucet_angle - target_angle) >= 0.0) {
          done = true;
          return {0.0, 0.0};
        }
        const Vec2 tangent{std::cos(s.faucet_angle), -std::sin(s.faucet_angle)};
        const double step_len = std::min(a_step, kFaucetLever * 0.35);
        push = (sign * step_len) * tangent;
        break;
      }
    }
    // The glue-to-contact correction helps the drawer and faucet handles
    // (whose contact point moves along a constrained path) but would skew a
    // stickily-held cup; push the cup straight instead.
    if (cup_task) return clamp_action(push, a_step);
    return clamp_action(push + 0.5 * (contact - s.effector), a_step);
  };

  return roll(layout, start, kHorizon, controller);
}

}  // namespace

Trajectory gen_scripted_robot_trajectory(TaskLabel task,
                                         const WorldLayout& layout,
                                         std::uint64_t seed) {
  Rng rng(derive_seed(seed, "expert-robot", static_cast<std::uint64_t>(task)));
  ExpertNoise noise;
  noise.start = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
  noise.speed = rng.uniform(0.6, 1.0);
  noise.approach_off = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
  Trajectory traj = run_expert(task, layout, noise);
  traj.domain = Domain::Robot;
  traj.hidden_label = task;
  return traj;
}

std::pair<Trajectory, VideoFeatures> gen_demonstrator_video(
    TaskLabel task, const WorldLayout& layout, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "expert-demo", static_cast<std::uint64_t>(task)));
  const WorldLayout perturbed = perturb_layout(layout, rng);
  ExpertNoise noise;
  noise.start = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
  noise.speed = rng.uniform(0.6, 1.0);
  noise.approach_off = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
  Trajectory traj = run_expert(task, perturbed, noise);
  traj.domain = Domain::Demonstrator;
  traj.hidden_label = task;
  traj.id = derive_seed(seed, "demo-id", static_cast<std::uint64_t>(task));
  VideoFeatures feats = render_features(traj, Domain::Demonstrator);
  return {std::move(traj), std::move(feats)};
}

namespace {

std::vector<double> semantic_features(const WorldState& s) {
  return {s.effector[0], s.effector[1], s.drawer_extent,
          s.cup[0],      s.cup[1],      s.faucet_angle};
}

// Fixed demonstrator-domain scramble: per-channel scale plus mild dense
// mixing plus offsets. Seeded once, constant forever.
struct Scramble {
  std::array<double, 6> scale;
  std::array<double, 6> offset;
  std::array<std::array<double, 6>, 6> mix;
};

const Scramble& scramble() {
  static const Scramble sc = [] {
    Scramble s;
    Rng rng(0x5c7a3b1e9d2f4681ULL);
    for (auto& v : s.scale) v = rng.uniform(0.7, 1.4);
    for (auto& v : s.offset) v = rng.uniform(-0.15, 0.15);
    for (auto& row : s.mix)
      for (auto& v : row) v = 0.15 * rng.uniform(-1.0, 1.0);
    return s;
  }();
  return sc;
}

std::vector<std::size_t> subsample_indices(std::size_t n) {
  std::vector<std::size_t> idx(kVideoFrames);
  if (n >= kVideoFrames) {
    for (int j = 0; j < kVideoFrames; ++j)
      idx[j] = static_cast<std::size_t>(
          std::llround(static_cast<double>(j) * static_cast<double>(n - 1) /
                       (kVideoFrames - 1)));
  } else {
    for (int j = 0; j < kVideoFrames; ++j)
      idx[j] = std::min<std::size_t>(static_cast<std::size_t>(j), n - 1);
  }
  return idx;
}

}  // namespace

std::vector<double> robot_state_features(const WorldLayout& layout,
                                         const WorldState& state) {
  std::vector<double> f = semantic_features(state);
  f.reserve(kRobotFeatureWidth);
  for (int obj = 0; obj < 3; ++obj)
    for (int c = 0; c < kColorCount; ++c)
      f.push_back(layout.color_code[static_cast<std::size_t>(obj)] == c ? 1.0
                                                                        : 0.0);
  return f;
}

VideoFeatures render_features(const Trajectory& traj, Domain domain) {
  const auto idx = subsample_indices(traj.states.size());
  VideoFeatures vf;
  vf.frames.reserve(kVideoFrames);
  for (int j = 0; j < kVideoFrames; ++j) {
    const WorldState& s = traj.states[idx[static_cast<std::size_t>(j)]];
    if (domain == Domain::Robot) {
      vf.frames.push_back(robot_state_features(traj.layout, s));
    } else {
      const auto sem = semantic_features(s);
      const Scramble& sc = scramble();
      std::vector<double> f(kDemoFeatureWidth);
      for (int i = 0; i < 6; ++i) {
        double v = sc.scale[static_cast<std::size_t>(i)] *
                       sem[static_cast<std::size_t>(i)] +
                   sc.offset[static_cast<std::size_t>(i)];
        for (int k = 0; k < 6; ++k)
          v += sc.mix[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] *
               sem[static_cast<std::size_t>(k)];
        f[static_cast<std::size_t>(i)] = v;
      }
      // Nuisance channels: deterministic in (trajectory id, frame index).
      Rng noise(derive_seed(traj.id, "demo-noise", static_cast<std::uint64_t>(j)));
      for (int i = 0; i < 4; ++i) f[static_cast<std::size_t>(6 + i)] = noise.uniform(-0.5, 0.5);
      for (int obj = 0; obj < 3; ++obj)
        f[static_cast<std::size_t>(10 + obj)] =
            0.25 * (traj.layout.color_code[static_cast<std::size_t>(obj)] + 1);
      vf.frames.push_back(std::move(f));
    }
  }
  return vf;
}

namespace {

json layout_to_json(const WorldLayout& lay) {
  return json{{"variant_id", lay.variant_id},
              {"drawer_slot", lay.drawer_slot},
              {"drawer_axis", lay.drawer_axis},
              {"cup", lay.cup},
              {"cup_target", lay.cup_target},
              {"faucet_pivot", lay.faucet_pivot},
              {"color_code", lay.color_code}};
}

WorldLayout layout_from_json(const json& j) {
  WorldLayout lay;
  lay.variant_id = j.at("variant_id").get<int>();
  j.at("drawer_slot").get_to(lay.drawer_slot);
  j.at("drawer_axis").get_to(lay.drawer_axis);
  j.at("cup").get_to(lay.cup);
  j.at("cup_target").get_to(lay.cup_target);
  j.at("faucet_pivot").get_to(lay.faucet_pivot);
  j.at("color_code").get_to(lay.color_code);
  return lay;
}

}  // namespace

void save_trajectories(const std::vector<Trajectory>& trajs,
                       const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  for (const auto& traj : trajs) {
    json j;
    j["id"] = traj.id;
    j["domain"] = traj.domain == Domain::Robot ? "robot" : "demonstrator";
    j["variant_id"] = traj.layout.variant_id;
    j["layout"] = layout_to_json(traj.layout);
    json states = json::array();
    for (const auto& s : traj.states)
      states.push_back({s.effector[0], s.effector[1], s.drawer_extent,
                        s.cup[0], s.cup[1], s.faucet_angle, s.t});
    j["states"] = std::move(states);
    json actions = json::array();
    for (const auto& a : traj.actions)
      actions.push_back({a.delta[0], a.delta[1]});
    j["actions"] = std::move(actions);
    if (traj.hidden_label) j["hidden_label"] = task_name(*traj.hidden_label);
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("write failed for " + path);
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<Trajectory> trajs;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw CorruptFile(path + ": bad JSON line");
    Trajectory traj;
    traj.id = j.at("id").get<std::uint64_t>();
    traj.domain = j.at("domain").get<std::string>() == "robot"
                      ? Domain::Robot
                      : Domain::Demonstrator;
    traj.layout = layout_from_json(j.at("layout"));
    for (const auto& sj : j.at("states")) {
      WorldState s;
      s.effector = {sj.at(0).get<double>(), sj.at(1).get<double>()};
      s.drawer_extent = sj.at(2).get<double>();
      s.cup = {sj.at(3).get<double>(), sj.at(4).get<double>()};
      s.faucet_angle = sj.at(5).get<double>();
      s.t = sj.at(6).get<int>();
      traj.states.push_back(s);
    }
    for (const auto& aj : j.at("actions"))
      traj.actions.push_back({Vec2{aj.at(0).get<double>(), aj.at(1).get<double>()}});
    if (j.contains("hidden_label")) {
      const auto t = task_from_name(j.at("hidden_label").get<std::string>());
      if (!t) throw CorruptFile(path + ": unknown task label");
      traj.hidden_label = t;
    }
    trajs.push_back(std::move(traj));
  }
  return trajs;
}

}  // namespace vip::world
