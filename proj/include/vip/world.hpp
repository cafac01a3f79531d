// Deterministic 2-D multi-task manipulation world.
//
// A point effector moves in the unit workspace [0,1]^2 and interacts with
// three objects: a sliding drawer, a pushable cup, and a pivoting faucet
// handle. Contact rules (documented at step()) stand in for physics.
// Ground-truth success predicates exist for evaluation only.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vip::world {

using Vec2 = std::array<double, 2>;

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a[0], s * a[1]}; }
double dot(Vec2 a, Vec2 b);
double norm(Vec2 a);

// World geometry constants.
inline constexpr double kActionMax = 0.05;        // per-axis clamp
inline constexpr double kContactRadius = 0.08;    // effector-object contact
inline constexpr double kDrawerTravel = 0.25;     // world units, extent 0..1
inline constexpr double kFaucetLever = 0.10;      // pivot-to-handle distance
inline constexpr double kHorizon = 60;            // default episode length
// Canonical effector reset pose: robot episodes (data collection and
// evaluation alike) start here, up to kHomeJitter of per-episode jitter.
inline constexpr Vec2 kEffectorHome{0.5, 0.12};
inline constexpr double kHomeJitter = 0.06;
inline constexpr int kColorCount = 4;             // color codes per object

enum class Domain { Robot, Demonstrator };

enum class TaskLabel {
  CloseDrawer = 0,
  PushCup,
  TurnFaucetRight,
  OpenDrawer,
  PushCupReverse,
  TurnFaucetLeft,
};
inline constexpr int kTaskCount = 6;
inline constexpr int kRobotTaskCount = 3;  // first three are robot-relevant
const char* task_name(TaskLabel t);
std::optional<TaskLabel> task_from_name(const std::string& name);

struct WorldLayout {
  int variant_id = 0;
  Vec2 drawer_slot{};   // fully-closed handle position
  Vec2 drawer_axis{};   // unit vector; extent grows along +axis
  Vec2 cup{};           // initial cup position
  Vec2 cup_target{};    // "toward the coffee machine" push direction
  Vec2 faucet_pivot{};
  std::array<int, 3> color_code{};  // drawer, cup, faucet

  Vec2 drawer_handle(double extent) const;
  Vec2 faucet_handle(double angle) const;
};

// Deterministic layout for (seed, variant index). Anchors land in disjoint
// workspace bands so objects never overlap.
WorldLayout make_layout(std::uint64_t seed, int variant_id);

struct WorldState {
  Vec2 effector{};
  double drawer_extent = 0.0;  // 1 = fully open
  Vec2 cup{};
  double faucet_angle = 0.0;   // radians in [-pi/2, pi/2]
  int t = 0;
};

struct Action {
  Vec2 delta{};  // per-axis clamped to [-kActionMax, kActionMax]
};

struct Trajectory {
  std::vector<WorldState> states;  // length H+1
  std::vector<Action> actions;     // length H
  WorldLayout layout;
  Domain domain = Domain::Robot;
  std::optional<TaskLabel> hidden_label;  // evaluation / demonstrator only
  std::uint64_t id = 0;
};

// Label-stripped view handed to robot-side training code paths.
struct TrajectoryView {
  const std::vector<WorldState>* states;
  const std::vector<Action>* actions;
  const WorldLayout* layout;
  std::uint64_t id;
};
TrajectoryView strip_label(const Trajectory& traj);

struct VideoFeatures {
  std::vector<std::vector<double>> frames;  // T x F, T = 16 exactly
};
inline constexpr int kVideoFrames = 16;
inline constexpr int kRobotFeatureWidth = 6 + 3 * kColorCount;   // 18
inline constexpr int kDemoFeatureWidth = 6 + 4 + 3;              // 13

// One dynamics step. Contact rules, checked against hand computation in
// tests:
//   - effector moves by the per-axis clamped delta, then clamps to [0,1]^2;
//   - if the pre-move effector is within kContactRadius of the drawer
//     handle, drawer_extent += dot(applied_delta, axis) / kDrawerTravel,
//     clamped to [0,1];
//   - if within kContactRadius of the cup, the cup translates by the
//     applied delta (clamped to the workspace);
//   - if within kContactRadius of the faucet handle, faucet_angle +=
//     dot(applied_delta, tangent) / kFaucetLever, clamped to [-pi/2, pi/2],
//     where tangent = (cos a, -sin a) is the handle's direction of motion.
WorldState step(const WorldLayout& layout, const WorldState& state,
                const Action& action);

// Canonical episode start: drawer open (0.7), faucet centered, cup at its
// layout anchor, effector wherever the caller puts it.
WorldState default_state(const WorldLayout& layout, Vec2 effector);

// Success predicate thresholds (declared, not from any reference).
//   CloseDrawer:     final extent < 0.1 and initial >= 0.5
//   OpenDrawer:      final extent > 0.9 and initial <= 0.5
//   PushCup:         cup displacement along unit(cup_target - cup0) >= 0.15
//   PushCupReverse:  that displacement <= -0.15
//   TurnFaucetRight: faucet_angle increased by >= 0.6 rad
//   TurnFaucetLeft:  faucet_angle decreased by >= 0.6 rad
bool success(const Trajectory& traj, TaskLabel task);

// All tasks whose predicate fires, in enum order.
std::vector<TaskLabel> fired_tasks(const Trajectory& traj);

// Random-waypoint play data: a proportional controller drives the effector
// through 3 random waypoints over H = 60 steps. Half of the episodes aim
// their first segment through a randomly chosen object interaction point so
// object contact is deliberate often enough to cover every task; the rest
// use uniform waypoints. hidden_label is set post-hoc to the first fired
// predicate, if any.
Trajectory gen_random_robot_trajectory(const WorldLayout& layout,
                                       std::uint64_t seed);

// Scripted demonstrator episode for `task` with per-seed nuisance variation
// (start pose, speed, approach offset, anchor jitter), rendered in the
// Demonstrator domain.
std::pair<Trajectory, VideoFeatures> gen_demonstrator_video(
    TaskLabel task, const WorldLayout& layout, std::uint64_t seed);

// Scripted expert rollout in the Robot domain (used for oracle fixtures).
Trajectory gen_scripted_robot_trajectory(TaskLabel task,
                                         const WorldLayout& layout,
                                         std::uint64_t seed);

// Per-frame robot-domain feature vector; also the policy's state features.
std::vector<double> robot_state_features(const WorldLayout& layout,
                                         const WorldState& state);

// Pure function of (trajectory, domain). Robot: semantic channels plus
// one-hot color codes. Demonstrator: semantic channels through a fixed
// affine scramble, 4 nuisance channels, and a scalar color encoding.
VideoFeatures render_features(const Trajectory& traj, Domain domain);

// JSON Lines persistence: one trajectory per line with fields
// {id, domain, variant_id, layout, states, actions, hidden_label?}.
void save_trajectories(const std::vector<Trajectory>& trajs,
                       const std::string& path);
std::vector<Trajectory> load_trajectories(const std::string& path);

}  // namespace vip::world
