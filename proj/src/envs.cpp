#include "iatrpo/envs.hpp"

#include <algorithm>
#include <cmath>

#include "iatrpo/error.hpp"

namespace iatrpo::envs {
namespace {

// Keeps tan(steer) bounded for arbitrary caller input.
constexpr double kSteerLimit = 1.4;

// Start regions keep this much clearance from the quarter/region border.
double start_margin(const EnvGeometry& g) { return g.agent_radius + 0.1; }

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double disc_rect_distance(Point c, const Rect& r) {
  const double dx = std::max({r.x0 - c.x, 0.0, c.x - r.x1});
  const double dy = std::max({r.y0 - c.y, 0.0, c.y - r.y1});
  return std::hypot(dx, dy);
}

}  // namespace

std::string to_string(EnvId id) {
  switch (id) {
    case EnvId::kC2Fixed: return "C2Fixed";
    case EnvId::kC2: return "C2";
    case EnvId::kR2: return "R2";
    case EnvId::kR3: return "R3";
  }
  return "?";
}

EnvId parse_env_id(const std::string& name) {
  if (name == "C2Fixed") return EnvId::kC2Fixed;
  if (name == "C2") return EnvId::kC2;
  if (name == "R2") return EnvId::kR2;
  if (name == "R3") return EnvId::kR3;
  throw ContractError("unknown environment id '" + name + "' (expected C2Fixed, C2, R2, R3)");
}

bool is_lane_change(EnvId id) { return id == EnvId::kC2Fixed || id == EnvId::kC2; }

std::size_t agent_count(EnvId id) { return id == EnvId::kR3 ? 3 : 2; }

std::string role_name(EnvId id, std::size_t role) {
  if (is_lane_change(id)) return role == 0 ? "bottom" : "top";
  static const char* kNames[] = {"left", "right", "bottom"};
  return role < 3 ? kNames[role] : "?";
}

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

void EnvConfig::validate() const {
  const EnvGeometry& g = geometry;
  require(g.lane_course_length > 0 && g.lane_course_width > 0, "env: lane course must be positive");
  require(g.lane_centers.size() == 4, "env: lane-change course needs exactly 4 lanes");
  require(g.nav_course_size > 0, "env: navigation course must be positive");
  require(g.agent_radius > 0, "env: agent_radius must be > 0");
  require(g.goal_radius == 0.4, "env: goal_radius is fixed at 0.4");
  require(g.dt > 0, "env: dt must be > 0");
  require(g.horizon >= 1, "env: horizon must be >= 1");
  require(g.wheelbase > 0, "env: wheelbase must be > 0");
  require(g.max_steer > 0 && g.max_steer < kSteerLimit, "env: max_steer must be in (0, 1.4)");
  require(g.max_accel > 0 && g.max_angular_accel > 0, "env: action bounds must be > 0");
  require(g.max_speed > 0 && g.max_turn_rate > 0, "env: velocity bounds must be > 0");
  require(g.c2fixed_jitter >= 0, "env: c2fixed_jitter must be >= 0");
  require(noise.own_obs >= 0 && noise.other_obs >= 0 && noise.action >= 0,
          "env: noise amplitudes must be >= 0");
  require(reward.scale > 0, "env: reward scale must be > 0");
  require(reward.shaping_sign == 1.0 || reward.shaping_sign == -1.0,
          "env: shaping_sign must be +1 or -1");
}

Rect EnvConfig::course(EnvId id) const {
  if (is_lane_change(id)) {
    return {0.0, 0.0, geometry.lane_course_length, geometry.lane_course_width};
  }
  return {0.0, 0.0, geometry.nav_course_size, geometry.nav_course_size};
}

AgentState bicycle_step(const AgentState& s, double accel, double steer,
                        const EnvGeometry& geom) {
  AgentState n = s;
  const double dt = geom.dt;
  n.v = std::clamp(s.v + accel * dt, -geom.max_speed, geom.max_speed);
  const double delta = std::clamp(steer, -kSteerLimit, kSteerLimit);
  const double beta = std::atan(0.5 * std::tan(delta));
  n.omega = std::clamp(n.v / geom.wheelbase * std::sin(beta), -geom.max_turn_rate,
                       geom.max_turn_rate);
  n.x = s.x + n.v * std::cos(s.heading + beta) * dt;
  n.y = s.y + n.v * std::sin(s.heading + beta) * dt;
  n.heading = s.heading + n.omega * dt;
  return n;
}

AgentState unicycle_step(const AgentState& s, double accel, double angular_accel,
                         const EnvGeometry& geom) {
  AgentState n = s;
  const double dt = geom.dt;
  n.omega = std::clamp(s.omega + angular_accel * dt, -geom.max_turn_rate, geom.max_turn_rate);
  n.v = std::clamp(s.v + accel * dt, -geom.max_speed, geom.max_speed);
  n.heading = s.heading + n.omega * dt;
  n.x = s.x + n.v * std::cos(n.heading) * dt;
  n.y = s.y + n.v * std::sin(n.heading) * dt;
  return n;
}

WorldState sample_initial(EnvId id, const EnvConfig& cfg, Rng& rng) {
  const EnvGeometry& g = cfg.geometry;
  const double m = start_margin(g);
  WorldState w;
  w.env_id = id;
  auto place = [&](double x, double y) {
    AgentState a;
    a.x = x;
    a.y = y;
    w.agents.push_back(a);
  };

  if (is_lane_change(id)) {
    const double len = g.lane_course_length;
    const double wid = g.lane_course_width;
    const auto& lanes = g.lane_centers;
    if (id == EnvId::kC2Fixed) {
      place(g.c2fixed_start_x + uniform(rng, 0.0, g.c2fixed_jitter), 0.25 * wid);
      place(g.c2fixed_start_x + uniform(rng, 0.0, g.c2fixed_jitter), 0.75 * wid);
      // Bottom car heads for the third lane, top car for the first.
      w.goals = {{g.lane_goal_x, lanes[2]}, {g.lane_goal_x, lanes[0]}};
    } else {
      place(uniform(rng, m, 0.5 * len - m), uniform(rng, m, 0.5 * wid - m));
      place(uniform(rng, m, 0.5 * len - m), uniform(rng, 0.5 * wid + m, wid - m));
      // Non-adjacent lane pairs; the bottom car takes the upper lane.
      static constexpr std::size_t kPairs[3][2] = {{0, 2}, {0, 3}, {1, 3}};
      const auto& pair = kPairs[std::uniform_int_distribution<int>(0, 2)(rng)];
      w.goals = {{g.lane_goal_x, lanes[pair[1]]}, {g.lane_goal_x, lanes[pair[0]]}};
    }
  } else {
    const double size = g.nav_course_size;
    const double lo = 0.3125 * size;  // 2.5 of 8
    const double hi = 0.6875 * size;  // 5.5 of 8
    const double edge = 0.25 * size;  // 2.0 of 8
    // left robot -> right goal
    place(uniform(rng, m + 0.1, edge), uniform(rng, lo, hi));
    w.goals.push_back(g.nav_right_goal);
    // right robot -> left goal
    place(uniform(rng, size - edge, size - m - 0.1), uniform(rng, lo, hi));
    w.goals.push_back(g.nav_left_goal);
    if (id == EnvId::kR3) {
      // bottom robot -> top goal
      place(uniform(rng, lo, hi), uniform(rng, m + 0.1, edge));
      w.goals.push_back(g.nav_top_goal);
    }
    // Robots start facing their goals.
    for (std::size_t i = 0; i < w.agents.size(); ++i) {
      auto& a = w.agents[i];
      a.heading = std::atan2(w.goals[i].y - a.y, w.goals[i].x - a.x);
    }
  }
  w.roles.resize(w.agents.size());
  for (std::size_t i = 0; i < w.roles.size(); ++i) w.roles[i] = i;
  return w;
}

WorldState single_agent_world(const WorldState& world, std::size_t role) {
  require(role < world.size(), "single_agent_world: role out of range");
  WorldState w;
  w.env_id = world.env_id;
  w.agents = {world.agents[role]};
  w.goals = {world.goals[role]};
  w.roles = {world.roles[role]};
  w.t = world.t;
  return w;
}

Observation observe(const WorldState& world, std::size_t agent, const EnvConfig& cfg, Rng& rng) {
  require(agent < world.size(), "observe: agent index out of range");
  auto features = [](const AgentState& s) {
    Vector f(kStateFeatures);
    f << s.x, s.y, s.v, s.heading, s.omega;
    return f;
  };
  auto perturb = [&rng](Vector f, double amplitude) {
    if (amplitude > 0.0) {
      std::uniform_real_distribution<double> noise(-amplitude, amplitude);
      for (Eigen::Index i = 0; i < f.size(); ++i) f[i] += noise(rng);
    }
    return f;
  };
  const AgentState& self = world.agents[agent];
  Observation obs;
  obs.own = perturb(features(self), cfg.noise.own_obs);
  obs.goal = world.goals[agent];
  obs.broken = self.broken;
  obs.reached = self.reached;
  for (std::size_t j = 0; j < world.size(); ++j) {
    if (j == agent) continue;
    obs.others.push_back(perturb(features(world.agents[j]), cfg.noise.other_obs));
  }
  return obs;
}

double reward_single(const AgentState& s, Point goal, bool env_collision,
                     const RewardConfig& reward, double goal_radius) {
  if (env_collision) return -reward.scale;
  const double d = distance(s.position(), goal);
  if (d < goal_radius) return reward.scale;
  return reward.scale * reward.shaping_sign * d / 1000.0;
}

double reward_multi(const AgentState& s, Point goal, bool env_collision, bool agent_collision,
                    const RewardConfig& reward, double goal_radius) {
  if (!env_collision && agent_collision) return -reward.scale;
  return reward_single(s, goal, env_collision, reward, goal_radius);
}

std::vector<CollisionFlags> collision_check(const WorldState& world, const EnvConfig& cfg) {
  const double r = cfg.geometry.agent_radius;
  const Rect course = cfg.course(world.env_id);
  const bool lanes = is_lane_change(world.env_id);
  std::vector<CollisionFlags> flags(world.size());
  for (std::size_t i = 0; i < world.size(); ++i) {
    const AgentState& a = world.agents[i];
    bool env = a.x - r < course.x0 || a.x + r > course.x1 || a.y - r < course.y0 ||
               a.y + r > course.y1;
    if (lanes) {
      for (const Rect& barrier : cfg.geometry.lane_barriers) {
        env = env || disc_rect_distance(a.position(), barrier) < r;
      }
    }
    flags[i].env = env;
    for (std::size_t j = i + 1; j < world.size(); ++j) {
      if (distance(a.position(), world.agents[j].position()) < 2.0 * r) {
        flags[i].agent = true;
        flags[j].agent = true;
      }
    }
  }
  return flags;
}

bool world_done(const WorldState& world, const EnvConfig& cfg) {
  if (world.t >= cfg.geometry.horizon) return true;
  return std::all_of(world.agents.begin(), world.agents.end(),
                     [](const AgentState& a) { return a.terminal(); });
}

StepOutcome env_step(const WorldState& world, std::span<const Vector> joint_actions,
                     const EnvConfig& cfg, Rng& rng, RewardMode mode) {
  const EnvGeometry& g = cfg.geometry;
  const std::size_t n = world.size();
  require(joint_actions.size() == n, "env_step: expected one action per agent");
  if (world.t >= g.horizon) {
    throw ContractError("env_step: episode already reached the horizon");
  }
  StepOutcome out;
  out.world = world;
  out.rewards.assign(n, 0.0);
  out.dones.assign(n, true);
  if (std::all_of(world.agents.begin(), world.agents.end(),
                  [](const AgentState& a) { return a.terminal(); })) {
    out.collisions.assign(n, {});
    out.world_done = true;
    return out;
  }

  const bool cars = is_lane_change(world.env_id);
  std::uniform_real_distribution<double> noise(-cfg.noise.action, cfg.noise.action);
  for (std::size_t i = 0; i < n; ++i) {
    const AgentState& a = world.agents[i];
    if (a.terminal()) continue;
    const Vector& act = joint_actions[i];
    require(act.size() == static_cast<Eigen::Index>(kActionDim),
            "env_step: actions must have 2 components");
    double first = std::clamp(act[0], -g.max_accel, g.max_accel);
    double second = cars ? std::clamp(act[1], -g.max_steer, g.max_steer)
                         : std::clamp(act[1], -g.max_angular_accel, g.max_angular_accel);
    if (cfg.noise.action > 0.0) {
      first += noise(rng);
      second += noise(rng);
    }
    out.world.agents[i] = cars ? bicycle_step(a, first, second, g) : unicycle_step(a, first, second, g);
  }

  out.world.t = world.t + 1;
  out.collisions = collision_check(out.world, cfg);
  const bool timeout = out.world.t >= g.horizon;
  for (std::size_t i = 0; i < n; ++i) {
    AgentState& a = out.world.agents[i];
    if (world.agents[i].terminal()) continue;
    const CollisionFlags c = out.collisions[i];
    const bool agent_hit = mode == RewardMode::kMulti && c.agent;
    out.rewards[i] = mode == RewardMode::kMulti
                         ? reward_multi(a, out.world.goals[i], c.env, c.agent, cfg.reward, g.goal_radius)
                         : reward_single(a, out.world.goals[i], c.env, cfg.reward, g.goal_radius);
    if (c.env || agent_hit) {
      a.broken = true;
    } else if (distance(a.position(), out.world.goals[i]) < g.goal_radius) {
      a.reached = true;
    }
    if (a.terminal()) {
      a.v = 0.0;
      a.omega = 0.0;
    }
    out.dones[i] = a.terminal() || timeout;
  }
  out.world_done = world_done(out.world, cfg);
  return out;
}

}  // namespace iatrpo::envs
