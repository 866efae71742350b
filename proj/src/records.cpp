#include "iatrpo/records.hpp"

#include <charconv>
#include <ostream>

#include <json.hpp>

namespace iatrpo {

const char* const kMetricsColumns =
    "iteration,agent,mean_episode_length,success_probe,joint_success_probe,mean_return,kl,"
    "improvement,expected_improvement,backtracks,accepted,value_mse,entropy";

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void emit_metrics(const std::vector<IterationMetrics>& rows, const ArtifactStamp& stamp,
                  std::ostream& out) {
  out << "# config_hash=" << stamp.config_hash << " seed=" << stamp.seed
      << " format_version=" << kRecordFormatVersion << "\n";
  out << kMetricsColumns << "\n";
  for (const auto& m : rows) {
    out << m.iteration << ',' << m.agent << ',' << format_double(m.mean_episode_length) << ','
        << format_double(m.success_probe) << ',' << format_double(m.joint_success_probe) << ','
        << format_double(m.mean_return) << ',' << format_double(m.step.kl) << ','
        << format_double(m.step.improvement) << ',' << format_double(m.step.expected_improvement)
        << ',' << m.step.backtracks << ',' << (m.step.accepted ? 1 : 0) << ','
        << format_double(m.step.value_mse) << ',' << format_double(m.entropy) << "\n";
  }
}

void log_episode(const EpisodeTrace& trace, const ArtifactStamp& stamp, std::ostream& out) {
  using json = nlohmann::json;
  const std::size_t n = trace.num_agents();
  json header = {{"record", "header"},
                 {"config_hash", stamp.config_hash},
                 {"seed", stamp.seed},
                 {"format_version", kRecordFormatVersion},
                 {"env_id", envs::to_string(trace.env_id)},
                 {"episode_seed", trace.seed},
                 {"length", trace.length}};
  json agents = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    agents.push_back({{"role", envs::role_name(trace.env_id, trace.roles[i])},
                      {"start", {trace.starts[i].x, trace.starts[i].y}},
                      {"goal", {trace.goals[i].x, trace.goals[i].y}},
                      {"outcome", to_string(trace.outcomes[i])},
                      {"arrival_step", trace.arrival_step[i]}});
  }
  header["agents"] = agents;
  out << header.dump() << "\n";
  for (const auto& s : trace.steps) {
    json rec = {{"t", s.t}};
    json per = json::array();
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
      const auto& a = s.agents[i];
      per.push_back({{"x", a.x},
                     {"y", a.y},
                     {"heading", a.heading},
                     {"v", a.v},
                     {"omega", a.omega},
                     {"action", {s.actions[i][0], s.actions[i][1]}},
                     {"reward", s.rewards[i]},
                     {"active", static_cast<bool>(s.active[i])},
                     {"broken", a.broken},
                     {"reached", a.reached}});
    }
    rec["agents"] = per;
    out << rec.dump() << "\n";
  }
}

}  // namespace iatrpo
