#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "iatrpo/config.hpp"
#include "iatrpo/error.hpp"

using namespace iatrpo;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty documents give the defaults") {
  const RunConfig a = parse_config("");
  const RunConfig b = parse_config("{}");
  const RunConfig d;
  CHECK(canonical_config(a) == canonical_config(d));
  CHECK(canonical_config(b) == canonical_config(d));
  CHECK(a.curriculum.trpo.gamma == 0.99);
  CHECK(a.curriculum.trpo.lam == 0.98);
  CHECK(a.curriculum.trpo.max_kl == 0.01);
  CHECK(a.eval.n_episodes == 1000);
  CHECK(a.eval.n_pairs == 20);
  CHECK(canonical_config(load_config("")) == canonical_config(d));
}

TEST_CASE("sections override individual keys") {
  const RunConfig c = parse_config(R"({
    "env": {"id": "C2", "horizon": 250},
    "trpo": {"max_kl": 0.02},
    "curriculum": {"seed": 9, "hidden": [32, 16]},
    "eval": {"n_episodes": 10}
  })");
  CHECK(c.curriculum.env_id == envs::EnvId::kC2);
  CHECK(c.env.geometry.horizon == 250);
  CHECK(c.curriculum.trpo.max_kl == 0.02);
  CHECK(c.curriculum.seed == 9);
  CHECK(c.curriculum.hidden == std::vector<std::size_t>{32, 16});
  CHECK(c.eval.n_episodes == 10);
  CHECK(c.curriculum.trpo.gamma == 0.99);
}

TEST_CASE("canonical dump round-trips and fixes the hash") {
  const RunConfig c = parse_config(R"({"trpo": {"gamma": 0.995}, "env": {"dt": 0.05}})");
  const std::string text = canonical_config(c);
  const RunConfig back = parse_config(text);
  CHECK(canonical_config(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 64);
  CHECK(config_hash(c) != config_hash(RunConfig{}));
  // Key order and whitespace do not matter.
  const RunConfig reordered = parse_config(R"({"env":{"dt":0.05},"trpo":{"gamma":0.995}})");
  CHECK(config_hash(reordered) == config_hash(c));
}

TEST_CASE("errors name the offending key") {
  CHECK(error_of(R"({"trpo": {"gama": 0.9}})").find("trpo.gama") != std::string::npos);
  CHECK(error_of(R"({"nope": {}})").find("nope") != std::string::npos);
  CHECK(error_of(R"({"trpo": {"gamma": "high"}})").find("trpo.gamma") != std::string::npos);
  CHECK(error_of(R"({"trpo": {"gamma": 1.5}})").find("gamma") != std::string::npos);
  CHECK(error_of(R"({"env": {"id": "C9"}})").find("env.id") != std::string::npos);
  CHECK(error_of(R"({"curriculum": {"probe_episodes": 0}})").find("probe_episodes") !=
        std::string::npos);
  CHECK(error_of(R"({"eval": {"n_pairs": 0}})").find("eval.n_pairs") != std::string::npos);
  CHECK_FALSE(error_of("{ not json").empty());
  CHECK_FALSE(error_of("[1, 2]").empty());
}

TEST_CASE("files are read from disk") {
  const std::string path = "test_config_tmp.json";
  {
    std::ofstream f(path);
    f << R"({"curriculum": {"seed": 3}})";
  }
  CHECK(load_config(path).curriculum.seed == 3);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_config("/nonexistent/dir/cfg.json"), IoError);
}
