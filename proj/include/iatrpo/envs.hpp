#pragma once

// Multi-agent lane-change (bicycle kinematics) and robot-navigation
// (unicycle kinematics) simulators. Lane change: C2Fixed and C2, two cars.
// Navigation: R2 (left and right robots) and R3 (plus a bottom robot).
//
// Heading 0 points along +x. Agents are discs; an agent that collides is
// marked broken and an agent within goal_radius of its goal is marked
// reached. Both flags are absorbing and freeze the agent in place, while
// the episode continues for the others.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "iatrpo/rng.hpp"

namespace iatrpo::envs {

using Vector = Eigen::VectorXd;

enum class EnvId { kC2Fixed, kC2, kR2, kR3 };

std::string to_string(EnvId id);
EnvId parse_env_id(const std::string& name);  // "C2Fixed", "C2", "R2", "R3"
bool is_lane_change(EnvId id);
std::size_t agent_count(EnvId id);
std::string role_name(EnvId id, std::size_t role);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b);

struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;
};

struct EnvGeometry {
  // Lane-change course [0, lane_course_length] x [0, lane_course_width].
  double lane_course_length = 8.0;
  double lane_course_width = 4.0;
  std::vector<double> lane_centers = {0.5, 1.5, 2.5, 3.5};
  double lane_goal_x = 7.5;
  std::vector<Rect> lane_barriers;  // extra obstacles inside the course
  double c2fixed_start_x = 0.5;
  double c2fixed_jitter = 1.5;  // start x drawn from [start_x, start_x + jitter]

  // Navigation course [0, nav_course_size]^2.
  double nav_course_size = 8.0;
  Point nav_left_goal{0.8, 4.0};
  Point nav_right_goal{7.2, 4.0};
  Point nav_top_goal{4.0, 7.2};

  double agent_radius = 0.2;
  double goal_radius = 0.4;
  double dt = 0.1;
  int horizon = 300;
  double wheelbase = 0.3;
  double max_steer = 0.6;
  double max_accel = 1.0;
  double max_angular_accel = 1.0;
  double max_speed = 1.0;
  double max_turn_rate = 1.0;
};

struct NoiseConfig {
  double own_obs = 0.01;
  double other_obs = 0.1;
  double action = 0.1;
};

struct RewardConfig {
  double scale = 3.0;
  double shaping_sign = -1.0;  // sign of the d/1000 term
};

struct EnvConfig {
  EnvGeometry geometry;
  NoiseConfig noise;
  RewardConfig reward;

  void validate() const;
  Rect course(EnvId id) const;
};

struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double omega = 0.0;
  double heading = 0.0;
  bool broken = false;
  bool reached = false;

  Point position() const { return {x, y}; }
  bool terminal() const { return broken || reached; }
  bool operator==(const AgentState&) const = default;
};

struct WorldState {
  EnvId env_id = EnvId::kC2Fixed;
  std::vector<AgentState> agents;
  std::vector<Point> goals;
  // Environment role of each agent (index into the full roster of env_id).
  // A single-agent world keeps only one role.
  std::vector<std::size_t> roles;
  int t = 0;

  std::size_t size() const { return agents.size(); }
};

// Own state features, also the layout of each other-agent block.
inline constexpr std::size_t kStateFeatures = 5;  // x, y, v, heading, omega
inline constexpr std::size_t kGoalFeatures = 2;
inline constexpr std::size_t kActionDim = 2;

struct Observation {
  Vector own;                 // noisy (x, y, v, heading, omega)
  Point goal;                 // exact
  std::vector<Vector> others; // noisy (x, y, v, heading, omega), by agent index
  bool broken = false;
  bool reached = false;
};

// Cars: action = (acceleration, steering angle).
AgentState bicycle_step(const AgentState& s, double accel, double steer,
                        const EnvGeometry& geom);
// Robots: action = (acceleration, angular acceleration).
AgentState unicycle_step(const AgentState& s, double accel, double angular_accel,
                         const EnvGeometry& geom);

WorldState sample_initial(EnvId id, const EnvConfig& cfg, Rng& rng);

// Keeps only `role` of a full world (same pose and goal).
WorldState single_agent_world(const WorldState& world, std::size_t role);

Observation observe(const WorldState& world, std::size_t agent, const EnvConfig& cfg,
                    Rng& rng);

// R_sng scaled: -scale on environment collision, +scale inside the goal
// radius, otherwise scale * shaping_sign * d / 1000.
double reward_single(const AgentState& s, Point goal, bool env_collision,
                     const RewardConfig& reward, double goal_radius);
// R_mlt: as reward_single, with -scale for agent collisions; environment
// collisions take precedence.
double reward_multi(const AgentState& s, Point goal, bool env_collision,
                    bool agent_collision, const RewardConfig& reward,
                    double goal_radius);

struct CollisionFlags {
  bool env = false;
  bool agent = false;
};

// Environment collision: the agent disc crosses the course boundary or
// overlaps a barrier. Agent collision: centre distance < 2 * agent_radius.
std::vector<CollisionFlags> collision_check(const WorldState& world, const EnvConfig& cfg);

enum class RewardMode { kSingle, kMulti };

struct StepOutcome {
  WorldState world;
  std::vector<double> rewards;
  std::vector<bool> dones;
  std::vector<CollisionFlags> collisions;
  bool world_done = false;
};

// Advances one step. joint_actions holds one action per agent; entries of
// terminal agents are ignored. Throws ContractError once t reached the
// horizon. A world whose agents are all terminal returns zero rewards.
StepOutcome env_step(const WorldState& world, std::span<const Vector> joint_actions,
                     const EnvConfig& cfg, Rng& rng,
                     RewardMode mode = RewardMode::kMulti);

bool world_done(const WorldState& world, const EnvConfig& cfg);

}  // namespace iatrpo::envs
