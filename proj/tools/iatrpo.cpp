// Command-line front end: training stages, evaluation, replay and render.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iatrpo/checkpoint.hpp"
#include "iatrpo/config.hpp"
#include "iatrpo/error.hpp"
#include "iatrpo/evalr.hpp"
#include "iatrpo/records.hpp"
#include "iatrpo/svg.hpp"
#include "iatrpo/trainer.hpp"

namespace fs = std::filesystem;
using namespace iatrpo;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir;
  bool quiet = false;
};

struct Context {
  RunConfig cfg;
  std::string hash;
  fs::path out;
};

// Tees progress lines to stdout and to the run's log file.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == EOF) return !EOF;
    if (a_ != nullptr && a_->sputc(static_cast<char>(c)) == EOF) return EOF;
    if (b_ != nullptr && b_->sputc(static_cast<char>(c)) == EOF) return EOF;
    return c;
  }
  int sync() override {
    if (a_ != nullptr) a_->pubsync();
    if (b_ != nullptr) b_->pubsync();
    return 0;
  }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path.string(), text);
}

Context open_context(const Common& c) {
  Context ctx;
  ctx.cfg = load_config(c.config);
  if (c.seed_given) ctx.cfg.curriculum.seed = c.seed;
  ctx.hash = config_hash(ctx.cfg);
  ctx.out = c.out_dir;
  ensure_dir(ctx.out);
  write_text(ctx.out / "config.json", canonical_config(ctx.cfg));
  return ctx;
}

void banner(const Context& ctx, std::ostream& os, const std::string& command) {
  const auto& g = ctx.cfg.env.geometry;
  os << command << ": env " << envs::to_string(ctx.cfg.curriculum.env_id) << " dt " << g.dt
     << " horizon " << g.horizon << " seed " << ctx.cfg.curriculum.seed << " config_hash "
     << ctx.hash << std::endl;
}

std::string ckpt_name(const std::string& stage, std::size_t role) {
  return stage + "_agent" + std::to_string(role) + ".ckpt";
}

void save_run(const Context& ctx, const TrainingRun& run, const std::string& stage) {
  const ArtifactStamp stamp{ctx.hash, ctx.cfg.curriculum.seed};
  for (std::size_t r = 0; r < run.policies.size(); ++r) {
    Checkpoint c;
    c.policy = run.policies[r];
    c.meta.seed = ctx.cfg.curriculum.seed;
    c.meta.iteration = run.iterations[r];
    c.meta.config_hash = ctx.hash;
    c.meta.env_id = ctx.cfg.curriculum.env_id;
    c.meta.role = r;
    c.meta.stage = stage;
    save_checkpoint(c, (ctx.out / ckpt_name(stage, r)).string());
    std::ostringstream csv;
    emit_metrics(run.metrics[r], stamp, csv);
    write_text(ctx.out / ("metrics_" + stage + "_agent" + std::to_string(r) + ".csv"), csv.str());
  }
}

std::vector<PolicyHandle> load_policies(const fs::path& dir, const std::string& stage,
                                        envs::EnvId env_id) {
  std::vector<PolicyHandle> out;
  const std::size_t n = envs::agent_count(env_id);
  for (std::size_t r = 0; r < n; ++r) {
    const fs::path p = dir / ckpt_name(stage, r);
    Checkpoint c = load_checkpoint(p.string());
    if (c.meta.env_id != env_id) {
      throw ConfigError(p.string() + " was trained on " + envs::to_string(c.meta.env_id) +
                        " but the config selects " + envs::to_string(env_id));
    }
    if (c.meta.role != r) {
      throw IoError(p.string() + " holds role " + std::to_string(c.meta.role) + ", expected " +
                    std::to_string(r));
    }
    out.push_back(std::move(c.policy));
  }
  return out;
}

std::vector<fs::path> split_dirs(const std::string& list) {
  std::vector<fs::path> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.emplace_back(item);
  }
  return out;
}

evalr::EvalOptions eval_options(const Context& ctx) {
  evalr::EvalOptions o;
  o.deterministic = ctx.cfg.eval.deterministic;
  o.lanes = static_cast<std::size_t>(ctx.cfg.curriculum.rollout_lanes);
  return o;
}

std::string stamp_line(const Context& ctx) {
  return "# config_hash=" + ctx.hash + " seed=" + std::to_string(ctx.cfg.curriculum.seed) +
         " format_version=" + std::to_string(kRecordFormatVersion) + "\n";
}

std::string pct(double fraction) { return format_double(100.0 * fraction); }

void eval_success(Context& ctx, const fs::path& dir, const std::string& stage, std::ostream& log) {
  const auto env_id = ctx.cfg.curriculum.env_id;
  const auto policies = load_policies(dir, stage, env_id);
  const auto res = evalr::success_rate(ctx.cfg.env, env_id, policies,
                                       static_cast<std::size_t>(ctx.cfg.eval.n_episodes),
                                       ctx.cfg.curriculum.seed, eval_options(ctx));
  std::ostringstream csv;
  csv << stamp_line(ctx) << "agent,success_percent\n";
  csv << "joint," << pct(res.rate) << "\n";
  for (std::size_t i = 0; i < res.agent_rate.size(); ++i) {
    csv << envs::role_name(env_id, i) << ',' << pct(res.agent_rate[i]) << "\n";
  }
  write_text(ctx.out / "eval_success.csv", csv.str());
  log << "success " << pct(res.rate) << "% over " << ctx.cfg.eval.n_episodes << " episodes"
      << std::endl;
}

void eval_first_arrival(Context& ctx, const std::vector<fs::path>& runs, const std::string& stage,
                        std::ostream& log) {
  const auto env_id = ctx.cfg.curriculum.env_id;
  std::vector<std::vector<EpisodeTrace>> groups;
  for (const auto& dir : runs) {
    const auto policies = load_policies(dir, stage, env_id);
    groups.push_back(evalr::success_rate(ctx.cfg.env, env_id, policies,
                                         static_cast<std::size_t>(ctx.cfg.eval.n_episodes),
                                         ctx.cfg.curriculum.seed, eval_options(ctx))
                         .traces);
  }
  const std::size_t n = envs::agent_count(env_id);
  const auto stats = evalr::first_arrival_stats(groups, n);
  std::ostringstream csv;
  csv << stamp_line(ctx) << "run";
  for (std::size_t i = 0; i < n; ++i) csv << ',' << envs::role_name(env_id, i) << "_first_percent";
  csv << "\n";
  for (std::size_t g = 0; g < runs.size(); ++g) {
    csv << runs[g].string();
    for (double v : stats.per_group[g]) csv << ',' << format_double(v);
    csv << "\n";
  }
  csv << "mean";
  for (const auto& s : stats.share) csv << ',' << format_double(s.mean);
  csv << "\nstd";
  for (const auto& s : stats.share) csv << ',' << format_double(s.std);
  csv << "\n# ties=" << stats.ties << " no_arrival=" << stats.no_arrival << "\n";
  write_text(ctx.out / "eval_first_arrival.csv", csv.str());
  for (std::size_t i = 0; i < n; ++i) {
    log << envs::role_name(env_id, i) << " first " << format_double(stats.share[i].mean) << " +- "
        << format_double(stats.share[i].std) << "%" << std::endl;
  }
}

void eval_frechet(Context& ctx, const fs::path& dir, std::ostream& log) {
  const auto env_id = ctx.cfg.curriculum.env_id;
  const auto singles = load_policies(dir, "single", env_id);
  const auto composed = load_policies(dir, "iatrpo", env_id);
  const auto res = evalr::compromise_analysis(
      ctx.cfg.env, env_id, singles, composed,
      static_cast<std::size_t>(ctx.cfg.eval.frechet_episodes), ctx.cfg.curriculum.seed,
      eval_options(ctx));
  std::ostringstream csv;
  csv << stamp_line(ctx) << "agent,mean_frechet,compromise_percent\n";
  for (std::size_t i = 0; i < res.percent.size(); ++i) {
    csv << envs::role_name(env_id, i) << ',' << format_double(res.mean_frechet[i]) << ','
        << format_double(res.percent[i]) << "\n";
  }
  if (res.degenerate) csv << "# degenerate: all distances zero, uniform split reported\n";
  write_text(ctx.out / "eval_frechet.csv", csv.str());

  const std::size_t shown = std::min<std::size_t>(static_cast<std::size_t>(ctx.cfg.eval.render_episodes),
                                                  res.multi_traces.size());
  for (std::size_t e = 0; e < shown; ++e) {
    std::vector<EpisodeTrace> singles_e;
    for (const auto& per_agent : res.single_traces) singles_e.push_back(per_agent[e]);
    std::ostringstream svg;
    render_trajectories(ctx.cfg.env, {res.multi_traces[e]}, singles_e, svg);
    write_text(ctx.out / ("frechet_episode" + std::to_string(e) + ".svg"), svg.str());
  }
  for (std::size_t i = 0; i < res.percent.size(); ++i) {
    log << envs::role_name(env_id, i) << " frechet " << format_double(res.mean_frechet[i])
        << " compromise " << format_double(res.percent[i]) << "%" << std::endl;
  }
}

void eval_mixed(Context& ctx, const std::vector<fs::path>& runs, const std::string& stage,
                std::ostream& log) {
  const auto env_id = ctx.cfg.curriculum.env_id;
  std::vector<std::vector<PolicyHandle>> by_seed;
  for (const auto& dir : runs) by_seed.push_back(load_policies(dir, stage, env_id));
  const auto res = evalr::mixed_pairing_eval(
      ctx.cfg.env, env_id, by_seed, static_cast<std::size_t>(ctx.cfg.eval.n_pairs),
      static_cast<std::size_t>(ctx.cfg.eval.n_episodes), ctx.cfg.curriculum.seed,
      eval_options(ctx));
  const std::size_t n = envs::agent_count(env_id);
  std::ostringstream csv;
  csv << stamp_line(ctx);
  for (std::size_t i = 0; i < n; ++i) csv << envs::role_name(env_id, i) << "_run,";
  csv << "success_percent\n";
  for (const auto& p : res.pairings) {
    for (auto s : p.seed_index) csv << runs[s].string() << ',';
    csv << pct(p.success) << "\n";
  }
  csv << "# mean=" << pct(res.success.mean) << " std=" << pct(res.success.std) << "\n";
  write_text(ctx.out / "eval_mixed.csv", csv.str());
  log << "mixed success " << pct(res.success.mean) << " +- " << pct(res.success.std) << "% over "
      << res.pairings.size() << " pairings" << std::endl;
}

std::vector<EpisodeTrace> record_episodes(Context& ctx, const fs::path& dir,
                                          const std::string& stage) {
  const auto env_id = ctx.cfg.curriculum.env_id;
  const auto policies = load_policies(dir, stage, env_id);
  evalr::EvalOptions o = eval_options(ctx);
  o.record_steps = true;
  return evalr::success_rate(ctx.cfg.env, env_id, policies,
                             static_cast<std::size_t>(ctx.cfg.eval.render_episodes),
                             ctx.cfg.curriculum.seed, o)
      .traces;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file (defaults when omitted)");
  sub->add_option("--seed", c.seed, "master seed, overrides curriculum.seed")
      ->each([&c](const std::string&) { c.seed_given = true; });
  sub->add_option("--out-dir", c.out_dir, "output directory")->required();
  sub->add_flag("--quiet", c.quiet, "no progress on stdout");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage interaction-aware TRPO for multi-agent driving and navigation"};
  app.require_subcommand(1);
  Common common;
  std::string single_dir;
  std::string metric = "success";
  std::string checkpoints;
  std::string runs;
  std::string stage = "iatrpo";

  auto* ts = app.add_subcommand("train-single", "stage 1: one single-agent policy per role");
  auto* ti = app.add_subcommand("train-iatrpo", "stage 2: composed policies around frozen stage-1");
  auto* tm = app.add_subcommand("train-matrpo", "from-scratch baseline with action-aware critics");
  auto* ev = app.add_subcommand("eval", "evaluation metrics");
  auto* rp = app.add_subcommand("replay", "per-step episode logs");
  auto* rd = app.add_subcommand("render", "SVG trajectory overlays");
  for (auto* s : {ts, ti, tm, ev, rp, rd}) add_common(s, common);
  ti->add_option("--single-dir", single_dir, "directory with stage-1 checkpoints (default out-dir)");
  ev->add_option("--metric", metric, "success | first-arrival | frechet | mixed")
      ->check(CLI::IsMember({"success", "first-arrival", "frechet", "mixed"}));
  for (auto* s : {ev, rp, rd}) {
    s->add_option("--checkpoints", checkpoints, "checkpoint directory (default out-dir)");
    s->add_option("--stage", stage, "single | iatrpo | matrpo")
        ->check(CLI::IsMember({"single", "iatrpo", "matrpo"}));
  }
  ev->add_option("--runs", runs, "comma-separated run directories, one per training seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorCategory::kConfig);
  }

  try {
    Context ctx = open_context(common);
    const std::string command = app.get_subcommands().front()->get_name();
    const std::string log_name = command == "eval" ? "eval_" + metric : command;
    std::ofstream log_file((ctx.out / (log_name + ".log")).string(), std::ios::trunc);
    if (!log_file) throw IoError("cannot open log in " + ctx.out.string());
    TeeBuf tee(common.quiet ? nullptr : std::cout.rdbuf(), log_file.rdbuf());
    std::ostream log(&tee);
    banner(ctx, log, command);
    TrainOptions topts;
    topts.log = &log;
    const fs::path ckdir = checkpoints.empty() ? ctx.out : fs::path(checkpoints);

    if (command == "train-single") {
      save_run(ctx, train_single(ctx.cfg.env, ctx.cfg.curriculum, topts), "single");
    } else if (command == "train-iatrpo") {
      const fs::path src = single_dir.empty() ? ctx.out : fs::path(single_dir);
      const auto singles = load_policies(src, "single", ctx.cfg.curriculum.env_id);
      save_run(ctx, train_iatrpo(ctx.cfg.env, ctx.cfg.curriculum, singles, topts), "iatrpo");
    } else if (command == "train-matrpo") {
      save_run(ctx, train_matrpo(ctx.cfg.env, ctx.cfg.curriculum, topts), "matrpo");
    } else if (command == "eval") {
      const auto run_dirs = split_dirs(runs);
      if (metric == "success") {
        eval_success(ctx, ckdir, stage, log);
      } else if (metric == "frechet") {
        eval_frechet(ctx, ckdir, log);
      } else {
        if (run_dirs.size() < 2) throw ConfigError("--runs needs at least two run directories");
        if (metric == "first-arrival") {
          eval_first_arrival(ctx, run_dirs, stage, log);
        } else {
          eval_mixed(ctx, run_dirs, stage, log);
        }
      }
    } else if (command == "replay") {
      const auto traces = record_episodes(ctx, ckdir, stage);
      const ArtifactStamp stamp{ctx.hash, ctx.cfg.curriculum.seed};
      for (std::size_t e = 0; e < traces.size(); ++e) {
        std::ostringstream os;
        log_episode(traces[e], stamp, os);
        write_text(ctx.out / ("episode" + std::to_string(e) + ".jsonl"), os.str());
      }
      log << "wrote " << traces.size() << " episode logs" << std::endl;
    } else if (command == "render") {
      const auto traces = record_episodes(ctx, ckdir, stage);
      std::ostringstream os;
      render_trajectories(ctx.cfg.env, traces, {}, os);
      write_text(ctx.out / "trajectories.svg", os.str());
      log << "wrote trajectories.svg with " << traces.size() << " episodes" << std::endl;
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(ErrorCategory::kContract);
  }
}
