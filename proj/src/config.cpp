#include "iatrpo/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "iatrpo/error.hpp"
#include "iatrpo/hash.hpp"

namespace iatrpo {
namespace {

using json = nlohmann::json;

// Reads the known keys of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ != nullptr && !node_->is_object()) {
      throw ConfigError(path_ + " must be an object");
    }
  }

  template <class T>
  void read(const char* key, T& out) {
    const json* v = find(key);
    if (v != nullptr) convert(*v, key_path(key), out);
  }

  Section section(const char* key) {
    return Section(find(key), key_path(key));
  }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& item : node_->items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key " + key_path(item.key()));
    }
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    if (node_ == nullptr) return nullptr;
    auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  static void convert(const json& v, const std::string& path, double& out) {
    if (!v.is_number()) throw ConfigError(path + " must be a number");
    out = v.get<double>();
  }
  static void convert(const json& v, const std::string& path, int& out) {
    if (!v.is_number_integer()) throw ConfigError(path + " must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw ConfigError(path + " is out of range");
    }
    out = static_cast<int>(x);
  }
  static void convert(const json& v, const std::string& path, std::uint64_t& out) {
    if (!v.is_number_unsigned()) throw ConfigError(path + " must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  static void convert(const json& v, const std::string& path, bool& out) {
    if (!v.is_boolean()) throw ConfigError(path + " must be true or false");
    out = v.get<bool>();
  }
  static void convert(const json& v, const std::string& path, std::string& out) {
    if (!v.is_string()) throw ConfigError(path + " must be a string");
    out = v.get<std::string>();
  }
  static void convert(const json& v, const std::string& path, envs::Point& out) {
    if (!v.is_array() || v.size() != 2) throw ConfigError(path + " must be [x, y]");
    convert(v[0], path + "[0]", out.x);
    convert(v[1], path + "[1]", out.y);
  }
  static void convert(const json& v, const std::string& path, envs::Rect& out) {
    if (!v.is_array() || v.size() != 4) throw ConfigError(path + " must be [x0, y0, x1, y1]");
    convert(v[0], path + "[0]", out.x0);
    convert(v[1], path + "[1]", out.y0);
    convert(v[2], path + "[2]", out.x1);
    convert(v[3], path + "[3]", out.y1);
  }
  template <class T>
  static void convert(const json& v, const std::string& path, std::vector<T>& out) {
    if (!v.is_array()) throw ConfigError(path + " must be a list");
    std::vector<T> tmp(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      convert(v[i], path + "[" + std::to_string(i) + "]", tmp[i]);
    }
    out = std::move(tmp);
  }

  const json* node_;
  std::string path_;
  std::set<std::string> seen_;
};

// One field list drives parsing and the canonical dump alike.
template <class Visitor>
void visit_env(Visitor&& f, envs::EnvConfig& e, std::string& id) {
  auto& g = e.geometry;
  f("id", id);
  f("dt", g.dt);
  f("horizon", g.horizon);
  f("agent_radius", g.agent_radius);
  f("goal_radius", g.goal_radius);
  f("wheelbase", g.wheelbase);
  f("max_steer", g.max_steer);
  f("max_accel", g.max_accel);
  f("max_angular_accel", g.max_angular_accel);
  f("max_speed", g.max_speed);
  f("max_turn_rate", g.max_turn_rate);
  f("lane_course_length", g.lane_course_length);
  f("lane_course_width", g.lane_course_width);
  f("lane_centers", g.lane_centers);
  f("lane_goal_x", g.lane_goal_x);
  f("lane_barriers", g.lane_barriers);
  f("c2fixed_start_x", g.c2fixed_start_x);
  f("c2fixed_jitter", g.c2fixed_jitter);
  f("nav_course_size", g.nav_course_size);
  f("nav_left_goal", g.nav_left_goal);
  f("nav_right_goal", g.nav_right_goal);
  f("nav_top_goal", g.nav_top_goal);
  f("own_obs_noise", e.noise.own_obs);
  f("other_obs_noise", e.noise.other_obs);
  f("action_noise", e.noise.action);
  f("reward_scale", e.reward.scale);
  f("shaping_sign", e.reward.shaping_sign);
}

template <class Visitor>
void visit_trpo(Visitor&& f, trpo::TrpoConfig& t) {
  f("gamma", t.gamma);
  f("lam", t.lam);
  f("max_kl", t.max_kl);
  f("cg_iters", t.cg_iters);
  f("cg_damping", t.cg_damping);
  f("cg_residual_tol", t.cg_residual_tol);
  f("backtrack_steps", t.backtrack_steps);
  f("backtrack_ratio", t.backtrack_ratio);
  f("vf_iters", t.vf_iters);
  f("vf_step", t.vf_step);
  f("vf_minibatch", t.vf_minibatch);
  f("batch_timesteps", t.batch_timesteps);
  f("ent_coeff", t.ent_coeff);
}

template <class Visitor>
void visit_curriculum(Visitor&& f, CurriculumConfig& c) {
  f("stage1_iterations", c.stage1_iterations);
  f("stage2_iterations", c.stage2_iterations);
  f("seed", c.seed);
  f("modifier_uses_goal", c.modifier_uses_goal);
  f("early_stop_success", c.early_stop_success);
  f("early_stop_window", c.early_stop_window);
  f("probe_episodes", c.probe_episodes);
  f("rollout_lanes", c.rollout_lanes);
  f("hidden", c.hidden);
}

template <class Visitor>
void visit_eval(Visitor&& f, EvalConfig& e) {
  f("n_episodes", e.n_episodes);
  f("deterministic", e.deterministic);
  f("n_pairs", e.n_pairs);
  f("frechet_episodes", e.frechet_episodes);
  f("render_episodes", e.render_episodes);
}

json to_json_value(double x) { return x; }
json to_json_value(int x) { return x; }
json to_json_value(std::uint64_t x) { return x; }
json to_json_value(bool x) { return x; }
json to_json_value(const std::string& x) { return x; }
json to_json_value(const envs::Point& p) { return json::array({p.x, p.y}); }
json to_json_value(const envs::Rect& r) { return json::array({r.x0, r.y0, r.x1, r.y1}); }
template <class T>
json to_json_value(const std::vector<T>& xs) {
  json out = json::array();
  for (const auto& x : xs) out.push_back(to_json_value(x));
  return out;
}

void rethrow_as_config(const auto& fn) {
  try {
    fn();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  rethrow_as_config([&] {
    env.validate();
    curriculum.validate();
  });
  if (eval.n_episodes < 1) throw ConfigError("eval.n_episodes must be >= 1");
  if (eval.n_pairs < 1) throw ConfigError("eval.n_pairs must be >= 1");
  if (eval.frechet_episodes < 1) throw ConfigError("eval.frechet_episodes must be >= 1");
  if (eval.render_episodes < 1) throw ConfigError("eval.render_episodes must be >= 1");
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  json doc;
  bool blank = true;
  for (char ch : text) blank = blank && std::isspace(static_cast<unsigned char>(ch));
  if (!blank) {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  } else {
    doc = json::object();
  }
  Section root(&doc, "");
  std::string id = envs::to_string(cfg.curriculum.env_id);
  {
    Section s = root.section("env");
    visit_env([&](const char* k, auto& v) { s.read(k, v); }, cfg.env, id);
    s.finish();
  }
  {
    Section s = root.section("trpo");
    visit_trpo([&](const char* k, auto& v) { s.read(k, v); }, cfg.curriculum.trpo);
    s.finish();
  }
  {
    Section s = root.section("curriculum");
    visit_curriculum([&](const char* k, auto& v) { s.read(k, v); }, cfg.curriculum);
    s.finish();
  }
  {
    Section s = root.section("eval");
    visit_eval([&](const char* k, auto& v) { s.read(k, v); }, cfg.eval);
    s.finish();
  }
  root.finish();
  try {
    cfg.curriculum.env_id = envs::parse_env_id(id);
  } catch (const Error& e) {
    throw ConfigError(std::string("env.id: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return parse_config("");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading config " + path);
  return parse_config(buf.str());
}

std::string canonical_config(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  json doc = json::object();
  std::string id = envs::to_string(cfg.curriculum.env_id);
  json env = json::object();
  visit_env([&](const char* k, auto& v) { env[k] = to_json_value(v); }, cfg.env, id);
  json tr = json::object();
  visit_trpo([&](const char* k, auto& v) { tr[k] = to_json_value(v); }, cfg.curriculum.trpo);
  json cur = json::object();
  visit_curriculum([&](const char* k, auto& v) { cur[k] = to_json_value(v); }, cfg.curriculum);
  json ev = json::object();
  visit_eval([&](const char* k, auto& v) { ev[k] = to_json_value(v); }, cfg.eval);
  doc["env"] = env;
  doc["trpo"] = tr;
  doc["curriculum"] = cur;
  doc["eval"] = ev;
  return doc.dump(2) + "\n";
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_config(cfg)); }

}  // namespace iatrpo
