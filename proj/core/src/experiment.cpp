#include "deepen/experiment.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "deepen/checkpoint.hpp"
#include "deepen/dataset.hpp"
#include "deepen/linalg.hpp"
#include "deepen/rng.hpp"
#include "deepen/tape.hpp"

namespace deepen {

namespace fs = std::filesystem;
using nlohmann::json;

std::int64_t flops_per_step(std::int64_t n_params, std::int64_t batch_items) {
  if (n_params <= 0 || batch_items <= 0)
    throw std::invalid_argument("flops_per_step: N and B must be positive");
  return 6 * n_params * batch_items;
}

namespace {

json expansion_to_json(const ExpansionRecord& r) {
  return json{{"step", r.step},
              {"source_depth", r.source_depth},
              {"target_depth", r.target_depth},
              {"method", method_str(r.method)},
              {"site", site_str(r.site)},
              {"os_policy", os_policy_str(r.os_policy)},
              {"loss_before", r.loss_before},
              {"loss_after", r.loss_after},
              {"abs_delta", r.abs_delta},
              {"rel_delta", r.rel_delta},
              {"n_before", r.n_before},
              {"n_after", r.n_after},
              {"outside_stable", r.outside_stable}};
}

void write_events(const std::string& dir,
                  const std::vector<ExpansionRecord>& events) {
  std::ofstream out(dir + "/events.jsonl");
  for (const auto& e : events) out << expansion_to_json(e).dump() << "\n";
}

void write_result(const std::string& dir, const RunResult& res, bool done,
                  const std::string& abort_reason, const std::string& fp) {
  json j;
  j["done"] = done;
  j["config_fingerprint"] = fp;
  j["total_flops"] = res.total_flops;
  j["total_tokens"] = res.total_tokens;
  if (res.final_val_loss == res.final_val_loss)
    j["final_val_loss"] = res.final_val_loss;
  if (!abort_reason.empty()) j["abort"] = abort_reason;
  std::ofstream out(dir + "/result.json");
  out << j.dump(2) << "\n";
}

template <typename T>
RunResult train_impl(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.threads > 0) set_compute_threads(cfg.threads);
  const std::string fp = config_fingerprint(cfg);

  const bool persist = !cfg.out_dir.empty();
  if (persist) {
    fs::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir + "/config.json");
    out << config_to_json_text(cfg) << "\n";
  }

  const Dataset data = generate_dataset(cfg.data, cfg.seed);
  Model<T> model = build<T>(cfg.model);
  OptimizerState<T> state = init_optimizer_state(model, cfg.optimizer);

  const int seq = cfg.model.family == Family::TinyTransformer
                      ? cfg.model.seq_len
                      : 0;
  const auto eval_batches =
      make_eval_batches<T>(data, cfg.eval_batches, cfg.batch, seq);

  RunResult res;
  res.out_dir = cfg.out_dir;
  std::int64_t n_params_now = param_count(model);
  double batch_scale = 1.0;
  std::size_t next_event = 0;

  Tape<T> tape;
  Tape<T> eval_tape;
  auto eval_model = [&]() {
    double acc = 0.0;
    for (const auto& b : eval_batches) {
      eval_tape.reset();
      acc += static_cast<double>(eval_tape.scalar(forward(model, b, eval_tape)));
    }
    return acc / static_cast<double>(eval_batches.size());
  };

  const std::int64_t warm_end = cfg.schedule.warmup_steps();
  const std::int64_t stable_end = cfg.schedule.stable_end();

  for (std::int64_t t = 0; t < cfg.steps; ++t) {
    bool expanded_now = false;
    if (next_event < cfg.events.size() && cfg.events[next_event].step == t) {
      const EventSpec& ev = cfg.events[next_event];
      ++next_event;
      const auto plan = plan_expansion(model.depth(), ev.target_depth,
                                       ev.method, ev.site, ev.os_policy);
      if (persist)
        save_checkpoint(cfg.out_dir + "/ckpt_step" + std::to_string(t) +
                            "_pre.bin",
                        model, &state, &cfg.optimizer, t);

      // Probe on the event-step batch: same-loss check across the jump.
      auto probe = sample_train_batch<T>(
          data, static_cast<std::int64_t>(std::llround(
                    static_cast<double>(cfg.batch) * batch_scale)),
          seq, t, cfg.seed);
      ExpansionRecord rec;
      rec.step = t;
      rec.source_depth = model.depth();
      rec.target_depth = ev.target_depth;
      rec.method = ev.method;
      rec.site = ev.site;
      rec.os_policy = ev.os_policy;
      rec.n_before = n_params_now;
      rec.loss_before = static_cast<double>(forward_loss(model, probe));

      auto grown = expand(model, plan, mix64(cfg.seed ^ (0xe0000 + t)));
      auto grown_state =
          expand_optimizer_state(state, grown, ev.os_policy, cfg.optimizer);
      model = std::move(grown.model);
      state = std::move(grown_state);
      n_params_now = param_count(model);

      rec.loss_after = static_cast<double>(forward_loss(model, probe));
      rec.abs_delta = std::abs(rec.loss_after - rec.loss_before);
      rec.rel_delta = rec.abs_delta / std::max(std::abs(rec.loss_before), 1e-300);
      rec.n_after = n_params_now;
      rec.outside_stable = t < warm_end || t > stable_end;
      if (rec.outside_stable)
        std::cerr << "[deepen] warning: expansion at step " << t
                  << " falls outside the stable phase [" << warm_end << ", "
                  << stable_end << "]\n";
      res.expansions.push_back(rec);
      batch_scale *= ev.batch_scale;
      expanded_now = true;

      if (persist) {
        save_checkpoint(cfg.out_dir + "/ckpt_step" + std::to_string(t) +
                            "_post.bin",
                        model, &state, &cfg.optimizer, t);
        write_events(cfg.out_dir, res.expansions);
      }
    }

    const std::int64_t batch_items = static_cast<std::int64_t>(
        std::llround(static_cast<double>(cfg.batch) * batch_scale));
    auto batch = sample_train_batch<T>(data, batch_items, seq, t, cfg.seed);

    model.zero_grad();
    tape.reset();
    const auto loss_id = forward(model, batch, tape);
    const double loss = static_cast<double>(tape.scalar(loss_id));
    if (!std::isfinite(loss)) {
      if (persist) {
        res.log.save_csv(cfg.out_dir + "/runlog.csv");
        write_result(cfg.out_dir, res, false,
                     "non-finite loss at step " + std::to_string(t), fp);
      }
      throw TrainAbort("non-finite loss at step " + std::to_string(t));
    }
    tape.backward(loss_id);
    const double lr = schedule_lr(cfg.schedule, t);
    optimizer_step(model, state, cfg.optimizer, lr);

    res.total_tokens += batch_items;
    res.total_flops += flops_per_step(n_params_now, batch_items);

    const bool is_eval = (t % cfg.eval_interval == 0) || t == cfg.steps - 1;
    const bool logged = is_eval || expanded_now || (t % cfg.log_interval == 0);
    if (logged) {
      RunRecord row;
      row.step = t;
      row.tokens = res.total_tokens;
      row.flops = res.total_flops;
      row.lr = lr;
      row.train_loss = loss;
      if (is_eval) row.val_loss = eval_model();
      row.n_params = n_params_now;
      res.log.records.push_back(row);
    }
  }

  res.final_val_loss = res.log.final_val_loss();
  if (persist) {
    save_checkpoint(cfg.out_dir + "/ckpt_final.bin", model, &state,
                    &cfg.optimizer, cfg.steps);
    res.log.save_csv(cfg.out_dir + "/runlog.csv");
    write_events(cfg.out_dir, res.expansions);
    write_result(cfg.out_dir, res, true, "", fp);
  }
  return res;
}

}  // namespace

RunResult train(const ExperimentConfig& cfg) {
  if (cfg.precision == 64) return train_impl<double>(cfg);
  return train_impl<float>(cfg);
}

std::vector<RunResult> run_sweep(const std::vector<ExperimentConfig>& configs,
                                 int jobs) {
  if (jobs < 1) jobs = 1;
  std::vector<RunResult> results(configs.size());
  std::vector<std::string> errors(configs.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= configs.size()) return;
      try {
        results[i] = train(configs[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(jobs, static_cast<int>(configs.size()));
  pool.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      throw std::runtime_error("sweep run " + std::to_string(i) +
                               " failed: " + errors[i]);
  return results;
}

}  // namespace deepen
