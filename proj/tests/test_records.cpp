#include <doctest.h>

#include <json.hpp>

#include <charconv>
#include <random>
#include <sstream>
#include <string>

#include "iatrpo/evalr.hpp"
#include "iatrpo/records.hpp"
#include "iatrpo/svg.hpp"

using namespace iatrpo;

namespace {

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

std::vector<PolicyHandle> random_team(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PolicyHandle> out;
  for (int i = 0; i < 2; ++i)
    out.push_back(make_composed_policy(make_single_policy(rng, NetworkShape{{8, 8}}), 2, false,
                                       rng, NetworkShape{{8, 8}}));
  return out;
}

const ArtifactStamp kStamp{"abc123", 7};

}  // namespace

TEST_CASE("metrics CSV carries the stamp, the header and one row per record") {
  std::vector<IterationMetrics> rows(3);
  for (int i = 0; i < 3; ++i) {
    rows[static_cast<std::size_t>(i)].iteration = i;
    rows[static_cast<std::size_t>(i)].step.kl = 0.001 * i;
  }
  std::ostringstream out;
  emit_metrics(rows, kStamp, out);
  const auto lines = lines_of(out.str());
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "# config_hash=abc123 seed=7 format_version=1");
  CHECK(lines[1] == kMetricsColumns);
  const std::size_t columns = count(kMetricsColumns, ",") + 1;
  CHECK(columns == 13);
  for (std::size_t i = 2; i < lines.size(); ++i) CHECK(count(lines[i], ",") + 1 == columns);
  CHECK(lines[3].rfind("1,", 0) == 0);

  std::ostringstream empty;
  emit_metrics({}, kStamp, empty);
  CHECK(lines_of(empty.str()).size() == 2);
}

TEST_CASE("episode logs hold a header record and one record per step") {
  const envs::EnvConfig env;
  const auto team = random_team(3);
  evalr::EvalOptions o;
  o.record_steps = true;
  const auto r = evalr::success_rate(env, envs::EnvId::kC2, team, 3, 4, o);
  for (const auto& tr : r.traces) {
    std::ostringstream out;
    log_episode(tr, kStamp, out);
    const auto lines = lines_of(out.str());
    CHECK(lines.size() == 1 + static_cast<std::size_t>(tr.length));
    CHECK(tr.steps.size() == static_cast<std::size_t>(tr.length));
    const auto head = nlohmann::json::parse(lines[0]);
    CHECK(head["config_hash"] == "abc123");
    CHECK(head["seed"] == 7);
    CHECK(head["format_version"] == kRecordFormatVersion);
    CHECK(head["episode_seed"] == tr.seed);
    CHECK(head["length"] == tr.length);
    CHECK(head["agents"].size() == 2);
    for (std::size_t k = 1; k < lines.size(); ++k) {
      const auto rec = nlohmann::json::parse(lines[k]);
      CHECK(rec["t"] == static_cast<int>(k));
      CHECK(rec["agents"].size() == 2);
    }
  }

  EpisodeTrace bare;
  bare.outcomes = {Outcome::kTimeout};
  bare.roles = {0};
  bare.starts = {{0, 0}};
  bare.goals = {{1, 1}};
  bare.positions = {{}};
  bare.arrival_step = {-1};
  std::ostringstream out;
  log_episode(bare, kStamp, out);
  CHECK(lines_of(out.str()).size() == 1);
}

TEST_CASE("doubles are printed in shortest round-trip form") {
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int k = 0; k < 1000; ++k) {
    const double x = u(g) * std::ldexp(1.0, static_cast<int>(g() % 40) - 20);
    const std::string s = format_double(x);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == x);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(3.0) == "3");
}

TEST_CASE("trajectory overlays draw one polyline per agent path") {
  const envs::EnvConfig env;
  const auto team = random_team(5);
  const auto r = evalr::success_rate(env, envs::EnvId::kC2Fixed, team, 2, 6);
  Rng rng(1);
  const std::vector<PolicyHandle> one = {make_single_policy(rng, NetworkShape{{8, 8}})};
  RolloutOptions ro;
  ro.mode = RolloutMode::kSingle;
  ro.deterministic = true;
  const auto seeds = evalr::eval_seeds(6, 2);
  std::vector<EpisodeTrace> singles;
  for (auto& e : run_episodes(env, envs::EnvId::kC2Fixed, one, seeds, ro)) singles.push_back(e.trace);

  std::ostringstream out;
  render_trajectories(env, r.traces, singles, out);
  const std::string svg = out.str();
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(count(svg, "<polyline") == 2 * 2 + 2);
  CHECK(count(svg, "<polyline fill=\"none\" stroke=\"#") == 6);
  CHECK(count(svg, "<") == count(svg, ">"));
  CHECK_THROWS(render_trajectories(env, {}, {}, out));
}
