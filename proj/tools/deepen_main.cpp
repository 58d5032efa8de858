// Command-line front end: training runs with depth-expansion events,
// checkpoint surgery, sweeps, mixing analysis, the convex-theory
// verifier, and plot emission.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "deepen/checkpoint.hpp"
#include "deepen/config.hpp"
#include "deepen/convex.hpp"
#include "deepen/experiment.hpp"
#include "deepen/linalg.hpp"
#include "deepen/mixing.hpp"
#include "deepen/pareto.hpp"
#include "deepen/plot.hpp"
#include "deepen/rng.hpp"

namespace {

using nlohmann::json;
using namespace deepen;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct GlobalArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> precision;
  std::optional<int> threads;
};

ExperimentConfig load_with_overrides(const GlobalArgs& g) {
  if (g.config.empty())
    throw std::invalid_argument("--config is required for this subcommand");
  ExperimentConfig cfg = load_config_file(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.model.seed = mix64(cfg.seed ^ 0x6d6f64656cull);
  }
  if (g.out) cfg.out_dir = *g.out;
  if (g.precision) cfg.precision = *g.precision;
  if (g.threads) cfg.threads = *g.threads;
  cfg.validate();
  return cfg;
}

void print_mixing(const MixingReport& rep) {
  std::printf("tau:            %lld\n", static_cast<long long>(rep.tau));
  std::printf("mixed:          %s\n", rep.mixed ? "yes" : "NOT_MIXED");
  if (rep.mixed) {
    std::printf("t_mix (steps):  %lld\n", static_cast<long long>(rep.t_mix));
    std::printf("mixed at step:  %lld\n",
                static_cast<long long>(rep.mixed_at_step));
    std::printf("tokens to mix:  %lld\n",
                static_cast<long long>(rep.tokens_to_mix));
  }
  std::printf("epsilon:        %g\n", rep.epsilon);
  std::printf("window (evals): %d\n", rep.window);
}

json mixing_to_json(const MixingReport& rep) {
  return json{{"tau", rep.tau},
              {"mixed", rep.mixed},
              {"t_mix", rep.t_mix},
              {"mixed_at_step", rep.mixed_at_step},
              {"tokens_to_mix", rep.tokens_to_mix},
              {"epsilon", rep.epsilon},
              {"window", rep.window}};
}

json bound_to_json(const convex::BoundReport& b) {
  return json{{"lhs", b.lhs},
              {"minima_term", b.minima_term},
              {"g2_term", b.g2_term},
              {"dist_term", b.dist_term},
              {"rhs", b.rhs},
              {"slack", b.slack},
              {"thrown_term", b.thrown_term},
              {"asserted", b.asserted}};
}

json trial_to_json(const convex::TrialReport& r) {
  return json{
      {"trial", r.seed},
      {"tau", r.tau},
      {"progressive", bound_to_json(r.progressive)},
      {"fixed", bound_to_json(r.fixed)},
      {"per_step_ok_progressive", r.steps_progressive.all_hold},
      {"per_step_ok_fixed", r.steps_fixed.all_hold},
      {"gap",
       json{{"mass", r.gap.mass},
            {"minima_gap", r.gap.minima_gap},
            {"mass_term", r.gap.mass_term},
            {"dist_term", r.gap.dist_term},
            {"bound", r.gap.bound}}},
      {"jensen_slack_progressive", r.jensen_slack_prog},
      {"jensen_slack_fixed", r.jensen_slack_fixed}};
}

// name=path or bare path (name defaults to the stem)
std::pair<std::string, std::string> split_log_arg(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos)
    return {std::filesystem::path(arg).stem().string(), arg};
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

int run_train(const GlobalArgs& g) {
  const ExperimentConfig cfg = load_with_overrides(g);
  const RunResult res = train(cfg);
  std::printf("run complete: %lld steps, %lld tokens, %lld FLOPs\n",
              static_cast<long long>(cfg.steps),
              static_cast<long long>(res.total_tokens),
              static_cast<long long>(res.total_flops));
  std::printf("final validation loss: %.6f\n", res.final_val_loss);
  for (const auto& e : res.expansions)
    std::printf("expansion @%lld: depth %d -> %d (%s), rel loss delta %.3e%s\n",
                static_cast<long long>(e.step), e.source_depth, e.target_depth,
                method_str(e.method).c_str(), e.rel_delta,
                e.outside_stable ? " [outside stable phase]" : "");
  if (!cfg.out_dir.empty())
    std::printf("artifacts in %s\n", cfg.out_dir.c_str());
  return kExitOk;
}

int run_expand(const std::string& in_path, const std::string& out_path,
               int target_depth, const std::string& method,
               const std::string& site, const std::string& os_policy,
               std::uint64_t seed) {
  const int precision = checkpoint_precision(in_path);
  auto surgery = [&](auto tag) {
    using T = decltype(tag);
    auto data = load_checkpoint<T>(in_path);
    const auto plan =
        plan_expansion(data.model.depth(), target_depth, parse_method(method),
                       parse_site(site), parse_os_policy(os_policy));
    auto grown = expand(data.model, plan, seed);
    if (data.state) {
      auto grown_state =
          expand_optimizer_state(*data.state, grown, plan.os_policy, data.opt);
      save_checkpoint(out_path, grown.model, &grown_state, &data.opt,
                      data.step);
    } else {
      save_checkpoint<T>(out_path, grown.model, nullptr, nullptr, data.step);
    }
    std::printf("expanded depth %d -> %d (%s) into %s\n", data.model.depth(),
                target_depth, method.c_str(), out_path.c_str());
  };
  if (precision == 32)
    surgery(float{});
  else
    surgery(double{});
  return kExitOk;
}

int run_sweep_cmd(const GlobalArgs& g, const std::vector<double>& tau_fracs,
                  const std::vector<std::string>& methods,
                  const std::vector<int>& depths,
                  const std::vector<double>& lrs, int target_depth, int jobs) {
  const ExperimentConfig base = load_with_overrides(g);
  if (base.out_dir.empty())
    throw std::invalid_argument("sweep needs an out_dir (config or --out)");
  auto taus = tau_fracs.empty() ? std::vector<double>{0.5} : tau_fracs;
  auto mets = methods.empty() ? std::vector<std::string>{"random"} : methods;
  auto deps = depths.empty() ? std::vector<int>{base.model.depth} : depths;
  auto rates = lrs.empty() ? std::vector<double>{base.optimizer.peak_lr} : lrs;

  std::vector<ExperimentConfig> grid;
  for (double tf : taus)
    for (const auto& m : mets)
      for (int d : deps)
        for (double lr : rates) {
          ExperimentConfig cfg = base;
          cfg.model.depth = d;
          cfg.optimizer.peak_lr = lr;
          cfg.schedule.peak_lr = lr;
          cfg.events.clear();
          if (target_depth > d) {
            EventSpec ev;
            ev.step = static_cast<std::int64_t>(tf * static_cast<double>(cfg.steps));
            ev.target_depth = target_depth;
            ev.method = parse_method(m);
            cfg.events.push_back(ev);
          }
          char tag[128];
          std::snprintf(tag, sizeof tag, "tau%.2f_%s_d%d_lr%g", tf, m.c_str(),
                        d, lr);
          cfg.out_dir = base.out_dir + "/" + tag;
          cfg.validate();
          grid.push_back(std::move(cfg));
        }
  std::printf("sweep: %zu runs, %d jobs\n", grid.size(), jobs);
  const auto results = run_sweep(grid, jobs);
  for (std::size_t i = 0; i < results.size(); ++i)
    std::printf("%-40s final val loss %.6f (%lld FLOPs)\n",
                grid[i].out_dir.c_str(), results[i].final_val_loss,
                static_cast<long long>(results[i].total_flops));
  return kExitOk;
}

int run_mixing(const std::string& prog_path, const std::string& fixed_path,
               double epsilon, int window, std::int64_t tau,
               std::int64_t stable_end, std::int64_t warmup_end,
               const std::string& out_path) {
  const RunLog prog = RunLog::load_csv(prog_path);
  const RunLog fixed = RunLog::load_csv(fixed_path);
  const auto rep = detect_mixing(prog, fixed, epsilon, window, tau);
  print_mixing(rep);
  if (stable_end > 0 && rep.mixed) {
    const auto advice = plan_expansion_timing(stable_end, rep.t_mix, warmup_end);
    std::printf("recommended tau: %lld%s\n", static_cast<long long>(advice.tau),
                advice.clamped ? " (clamped to warmup end)" : "");
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << mixing_to_json(rep).dump() << "\n";
  }
  return kExitOk;
}

int run_pareto(const std::vector<std::string>& log_args,
               const std::string& out_path) {
  std::vector<RunPoint> pts;
  for (const auto& arg : log_args) {
    const auto [name, path] = split_log_arg(arg);
    const RunLog log = RunLog::load_csv(path);
    pts.push_back({static_cast<double>(log.records.back().flops),
                   log.final_val_loss(), name});
  }
  const auto frontier = pareto_frontier(pts);
  std::vector<bool> on(pts.size(), false);
  for (std::size_t i : frontier) on[i] = true;
  std::printf("%-32s %16s %12s %s\n", "run", "FLOPs", "val loss", "frontier");
  for (std::size_t i = 0; i < pts.size(); ++i)
    std::printf("%-32s %16.4g %12.6f %s\n", pts[i].name.c_str(), pts[i].flops,
                pts[i].loss, on[i] ? "*" : "");
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    for (std::size_t i = 0; i < pts.size(); ++i)
      out << json{{"name", pts[i].name},
                  {"flops", pts[i].flops},
                  {"loss", pts[i].loss},
                  {"frontier", static_cast<bool>(on[i])}}
                 .dump()
          << "\n";
  }
  return kExitOk;
}

int run_theory(const convex::SuiteOptions& opt, const std::string& out_path) {
  const auto reports = convex::run_theory_suite(opt);
  std::size_t ok_prog = 0, ok_fixed = 0, ok_steps = 0;
  double min_slack = 1e300;
  for (const auto& r : reports) {
    if (r.progressive.slack >= -1e-12) ++ok_prog;
    if (r.fixed.slack >= -1e-12) ++ok_fixed;
    if (r.steps_progressive.all_hold && r.steps_fixed.all_hold) ++ok_steps;
    min_slack = std::min({min_slack, r.progressive.slack, r.fixed.slack});
  }
  std::printf("trials x taus:        %zu\n", reports.size());
  std::printf("progressive bound ok: %zu/%zu\n", ok_prog, reports.size());
  std::printf("fixed bound ok:       %zu/%zu\n", ok_fixed, reports.size());
  std::printf("per-step checks ok:   %zu/%zu\n", ok_steps, reports.size());
  std::printf("min slack:            %.3e\n", min_slack);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    for (const auto& r : reports) out << trial_to_json(r).dump() << "\n";
    std::printf("report written to %s\n", out_path.c_str());
  }
  return kExitOk;
}

int run_plot(const std::string& kind, const std::vector<std::string>& log_args,
             const std::string& out_path, bool logy,
             const std::string& perspective, const std::string& title,
             const std::string& slack_path) {
  std::vector<std::pair<std::string, RunLog>> logs;
  for (const auto& arg : log_args) {
    const auto [name, path] = split_log_arg(arg);
    logs.emplace_back(name, RunLog::load_csv(path));
  }
  std::vector<double> slacks;
  if (!slack_path.empty()) {
    std::ifstream in(slack_path);
    if (!in)
      throw std::invalid_argument("cannot read slack report: " + slack_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      slacks.push_back(j.at("progressive").at("slack").get<double>());
    }
  }
  PlotOptions opt;
  opt.logy = logy;
  opt.title = title;
  emit_plot(out_path, parse_plot_kind(kind), logs, opt,
            perspective == "grown" ? Perspective::GrownOnly
                                   : Perspective::Entire,
            slacks);
  std::printf("wrote %s\n", out_path.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deepen: progressive depth-expansion training engine"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--config", g.config, "experiment config file (JSON)");
  app.add_option("--seed", g.seed, "override run seed");
  app.add_option("--out", g.out, "override output directory");
  app.add_option("--precision", g.precision, "32 or 64")
      ->check(CLI::IsMember({32, 64}));
  app.add_option("--threads", g.threads, "compute threads");

  auto* train_cmd = app.add_subcommand("train", "execute a training run");

  auto* expand_cmd =
      app.add_subcommand("expand", "depth-expand a checkpoint archive");
  std::string in_path, out_path, method = "random", site = "bottom",
              os_policy = "inherit";
  int target_depth = 0;
  std::uint64_t expand_seed = 0;
  expand_cmd->add_option("--in", in_path, "input checkpoint")->required();
  expand_cmd->add_option("--out-ckpt", out_path, "output checkpoint")
      ->required();
  expand_cmd->add_option("--target-depth", target_depth)->required();
  expand_cmd->add_option("--method", method,
                         "random|copying_last|copying_stack|copying_inter|"
                         "zero|copying_zero_norm|copying_zero_last_linear");
  expand_cmd->add_option("--site", site, "bottom|top (random only)");
  expand_cmd->add_option("--os-policy", os_policy, "inherit|copy|reset");
  expand_cmd->add_option("--expand-seed", expand_seed,
                         "seed for new-layer initialization");

  auto* sweep_cmd = app.add_subcommand(
      "sweep", "grid of runs over tau, method, depth and learning rate");
  std::vector<double> sweep_taus, sweep_lrs;
  std::vector<std::string> sweep_methods;
  std::vector<int> sweep_depths;
  int sweep_target = 0, sweep_jobs = 2;
  sweep_cmd->add_option("--tau-fracs", sweep_taus, "expansion points as T fractions");
  sweep_cmd->add_option("--methods", sweep_methods, "expansion methods");
  sweep_cmd->add_option("--depths", sweep_depths, "source depths");
  sweep_cmd->add_option("--lrs", sweep_lrs, "peak learning rates");
  sweep_cmd->add_option("--target-depth", sweep_target,
                        "expansion target depth (0 = no expansion)");
  sweep_cmd->add_option("--jobs", sweep_jobs, "concurrent runs");

  auto* mixing_cmd =
      app.add_subcommand("mixing", "mixing-time report from two run logs");
  std::string mix_prog, mix_fixed, mix_out;
  double mix_eps = 0.01;
  int mix_window = 5;
  std::int64_t mix_tau = -1, mix_stable_end = 0, mix_warmup_end = 0;
  mixing_cmd->add_option("--prog", mix_prog, "progressive runlog.csv")
      ->required();
  mixing_cmd->add_option("--fixed", mix_fixed, "fixed-size runlog.csv")
      ->required();
  mixing_cmd->add_option("--epsilon", mix_eps, "relative tolerance");
  mixing_cmd->add_option("--window", mix_window, "confirmation window (evals)");
  mixing_cmd->add_option("--tau", mix_tau, "expansion step (default: detect)");
  mixing_cmd->add_option("--stable-end", mix_stable_end,
                         "stable-phase end for timing advice");
  mixing_cmd->add_option("--warmup-end", mix_warmup_end,
                         "warmup end for timing advice");
  mixing_cmd->add_option("--report", mix_out, "JSONL output path");

  auto* pareto_cmd =
      app.add_subcommand("pareto", "loss-compute frontier over run logs");
  std::vector<std::string> pareto_logs;
  std::string pareto_out;
  pareto_cmd->add_option("logs", pareto_logs, "run logs (name=path or path)")
      ->required();
  pareto_cmd->add_option("--report", pareto_out, "JSONL output path");

  auto* theory_cmd =
      app.add_subcommand("theory", "convex convergence-bound verifier");
  convex::SuiteOptions topt;
  std::string theory_sched = "wsd", theory_teleport = "random",
              theory_mode = "full", theory_out;
  theory_cmd->add_option("--dw", topt.dw, "small-model dimension");
  theory_cmd->add_option("--dx", topt.dx, "expansion dimension");
  theory_cmd->add_option("--m", topt.m, "data rows");
  theory_cmd->add_option("--horizon", topt.horizon, "steps T");
  theory_cmd->add_option("--tau-fracs", topt.tau_fracs, "expansion points");
  theory_cmd->add_option("--peak-lr", topt.peak_lr);
  theory_cmd->add_option("--schedule", theory_sched, "wsd|cosine|constant");
  theory_cmd->add_option("--teleport", theory_teleport,
                         "keep_zero|random|oracle");
  theory_cmd->add_option("--mode", theory_mode, "full|minibatch");
  theory_cmd->add_option("--trials", topt.trials);
  theory_cmd->add_option("--report", theory_out, "JSONL output path");

  auto* plot_cmd = app.add_subcommand("plot", "emit an SVG figure");
  std::string plot_kind = "loss-vs-steps", plot_out = "plot.svg",
              plot_perspective = "entire", plot_title, plot_slacks;
  std::vector<std::string> plot_logs;
  bool plot_logy = false;
  plot_cmd->add_option("--kind", plot_kind,
                       "loss-vs-steps|loss-vs-flops|pareto|theory-slack");
  plot_cmd->add_option("--out-file", plot_out, "SVG path")->required();
  plot_cmd->add_option("--logs", plot_logs, "run logs (name=path)");
  plot_cmd->add_flag("--logy", plot_logy, "log-scale y axis");
  plot_cmd->add_option("--perspective", plot_perspective, "entire|grown");
  plot_cmd->add_option("--title", plot_title);
  plot_cmd->add_option("--slacks", plot_slacks,
                       "theory report JSONL for theory-slack plots");

  CLI11_PARSE(app, argc, argv);

  try {
    if (g.threads && *g.threads > 0) set_compute_threads(*g.threads);
    if (train_cmd->parsed()) return run_train(g);
    if (expand_cmd->parsed())
      return run_expand(in_path, out_path, target_depth, method, site,
                        os_policy, expand_seed);
    if (sweep_cmd->parsed())
      return run_sweep_cmd(g, sweep_taus, sweep_methods, sweep_depths,
                           sweep_lrs, sweep_target, sweep_jobs);
    if (mixing_cmd->parsed())
      return run_mixing(mix_prog, mix_fixed, mix_eps, mix_window, mix_tau,
                        mix_stable_end, mix_warmup_end, mix_out);
    if (pareto_cmd->parsed()) return run_pareto(pareto_logs, pareto_out);
    if (theory_cmd->parsed()) {
      topt.schedule = parse_schedule(theory_sched);
      topt.teleport = convex::parse_teleport(theory_teleport);
      topt.mode = theory_mode == "minibatch" ? convex::GradMode::Minibatch
                                             : convex::GradMode::FullSubgradient;
      if (g.seed) topt.seed = *g.seed;
      return run_theory(topt, theory_out);
    }
    if (plot_cmd->parsed())
      return run_plot(plot_kind, plot_logs, plot_out, plot_logy,
                      plot_perspective, plot_title, plot_slacks);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
