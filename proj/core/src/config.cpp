#include "deepen/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "deepen/rng.hpp"

namespace deepen {

namespace {

using nlohmann::json;

// Paper-derived default peak learning rates per (optimizer, schedule).
double default_peak_lr(OptimizerKind opt, ScheduleKind sched) {
  switch (opt) {
    case OptimizerKind::MuonNsgd:
      return sched == ScheduleKind::Cosine ? 0.05 : 0.01;
    case OptimizerKind::AdamW:
      return sched == ScheduleKind::Cosine ? 0.001 : 0.0005;
    case OptimizerKind::Sgd:
      return 0.01;
  }
  return 0.01;
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.family = parse_family(j.value("family", std::string("tiny_transformer")));
  c.depth = j.value("depth", 0);
  c.width = j.value("width", 64);
  c.heads = j.value("heads", 0);
  c.vocab = j.value("vocab", 0);
  c.seq_len = j.value("seq_len", 0);
  c.input_dim = j.value("input_dim", 0);
  c.output_dim = j.value("output_dim", 0);
  c.seed = j.value("seed", std::uint64_t{0});
  c.ln_eps = j.value("ln_eps", 1e-5);
  return c;
}

json model_to_json(const ModelConfig& c) {
  return json{{"family", family_str(c.family)}, {"depth", c.depth},
              {"width", c.width},               {"heads", c.heads},
              {"vocab", c.vocab},               {"seq_len", c.seq_len},
              {"input_dim", c.input_dim},       {"output_dim", c.output_dim},
              {"seed", c.seed},                 {"ln_eps", c.ln_eps}};
}

DatasetSpec data_from_json(const json& j) {
  DatasetSpec d;
  d.kind = parse_data_kind(j.value("kind", std::string("markov")));
  d.path = j.value("path", std::string());
  d.vocab = j.value("vocab", 32);
  d.order = j.value("order", 2);
  d.concentration = j.value("concentration", 0.3);
  d.d_in = j.value("d_in", 16);
  d.d_out = j.value("d_out", 4);
  d.teacher_seed = j.value("teacher_seed", std::uint64_t{0});
  d.length = j.value("length", std::int64_t{1} << 20);
  d.val_frac = j.value("val_frac", 0.05);
  return d;
}

json data_to_json(const DatasetSpec& d) {
  return json{{"kind", data_kind_str(d.kind)},
              {"path", d.path},
              {"vocab", d.vocab},
              {"order", d.order},
              {"concentration", d.concentration},
              {"d_in", d.d_in},
              {"d_out", d.d_out},
              {"teacher_seed", d.teacher_seed},
              {"length", d.length},
              {"val_frac", d.val_frac}};
}

OptimizerConfig optimizer_from_json(const json& j, ScheduleKind sched) {
  OptimizerConfig c;
  c.kind = parse_optimizer(j.value("kind", std::string("muon_nsgd")));
  c.peak_lr = j.value("peak_lr", default_peak_lr(c.kind, sched));
  c.weight_decay = j.value("weight_decay", 0.1);
  c.momentum = j.value("momentum", 0.95);
  c.beta1 = j.value("beta1", 0.9);
  c.beta2 = j.value("beta2", 0.999);
  c.eps = j.value("eps", 1e-8);
  c.ns_steps = j.value("ns_steps", 5);
  return c;
}

json optimizer_to_json(const OptimizerConfig& c) {
  return json{{"kind", optimizer_str(c.kind)},
              {"peak_lr", c.peak_lr},
              {"weight_decay", c.weight_decay},
              {"momentum", c.momentum},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"ns_steps", c.ns_steps}};
}

ScheduleConfig schedule_from_json(const json& j, std::int64_t steps) {
  ScheduleConfig c;
  c.kind = parse_schedule(j.value("kind", std::string("wsd")));
  c.warmup_frac = j.value("warmup_frac", 0.02);
  c.decay_frac =
      j.value("decay_frac", c.kind == ScheduleKind::Wsd ? 0.2 : 0.0);
  c.horizon = j.value("horizon", steps);
  c.peak_lr = j.value("peak_lr", 0.0);  // filled from the optimizer later
  return c;
}

json schedule_to_json(const ScheduleConfig& c) {
  return json{{"kind", schedule_str(c.kind)},
              {"peak_lr", c.peak_lr},
              {"warmup_frac", c.warmup_frac},
              {"decay_frac", c.decay_frac},
              {"horizon", c.horizon}};
}

EventSpec event_from_json(const json& j) {
  EventSpec e;
  e.step = j.at("step");
  e.target_depth = j.at("target_depth");
  e.method = parse_method(j.value("method", std::string("random")));
  e.site = parse_site(j.value("site", std::string("bottom")));
  e.os_policy = parse_os_policy(j.value("os_policy", std::string("inherit")));
  e.batch_scale = j.value("batch_scale", 1.0);
  return e;
}

json event_to_json(const EventSpec& e) {
  return json{{"step", e.step},
              {"target_depth", e.target_depth},
              {"method", method_str(e.method)},
              {"site", site_str(e.site)},
              {"os_policy", os_policy_str(e.os_policy)},
              {"batch_scale", e.batch_scale}};
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  optimizer.validate();
  schedule.validate();
  if (steps <= 0) throw std::invalid_argument("steps must be positive");
  if (schedule.horizon != steps)
    throw std::invalid_argument("schedule horizon must equal steps");
  if (batch <= 0) throw std::invalid_argument("batch must be positive");
  if (eval_interval <= 0 || log_interval <= 0 || eval_batches <= 0)
    throw std::invalid_argument("eval/log settings must be positive");
  if (precision != 32 && precision != 64)
    throw std::invalid_argument("precision must be 32 or 64");
  std::int64_t prev = -1;
  int depth = model.depth;
  for (const auto& e : events) {
    if (e.step <= prev)
      throw std::invalid_argument("event steps must be strictly increasing");
    if (e.step < 0 || e.step >= steps)
      throw std::invalid_argument("event step outside the run horizon");
    if (e.target_depth < depth)
      throw std::invalid_argument("event target depth below current depth");
    if (e.batch_scale <= 0)
      throw std::invalid_argument("event batch_scale must be positive");
    prev = e.step;
    depth = e.target_depth;
  }
  if (model.family == Family::TinyTransformer && batch % model.seq_len != 0)
    throw std::invalid_argument(
        "batch tokens must be a multiple of seq_len for the transformer");
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig c;
  c.steps = j.value("steps", std::int64_t{1000});
  c.model = model_from_json(j.value("model", json::object()));
  c.data = data_from_json(j.value("data", json::object()));
  c.schedule = schedule_from_json(j.value("schedule", json::object()), c.steps);
  c.optimizer =
      optimizer_from_json(j.value("optimizer", json::object()), c.schedule.kind);
  if (c.schedule.peak_lr == 0.0) c.schedule.peak_lr = c.optimizer.peak_lr;
  c.batch = j.value("batch", std::int64_t{1024});
  c.eval_interval = j.value("eval_interval", std::int64_t{50});
  c.eval_batches = j.value("eval_batches", 4);
  c.log_interval = j.value("log_interval", std::int64_t{1});
  for (const auto& ev : j.value("events", json::array()))
    c.events.push_back(event_from_json(ev));
  c.seed = j.value("seed", std::uint64_t{0});
  c.out_dir = j.value("out_dir", std::string());
  c.precision = j.value("precision", 32);
  c.threads = j.value("threads", 0);
  // model defaults tied to run fields
  if (c.model.seed == 0) c.model.seed = mix64(c.seed ^ 0x6d6f64656cull);
  if (c.model.family == Family::TinyTransformer) {
    if (c.model.vocab == 0 && c.data.kind == DataKind::Markov)
      c.model.vocab = c.data.vocab;
    if (c.model.vocab == 0 && c.data.kind == DataKind::ByteLm)
      c.model.vocab = 256;
    if (c.model.seq_len == 0) c.model.seq_len = 64;
  } else if (c.data.kind == DataKind::MlpRegression) {
    if (c.model.input_dim == 0) c.model.input_dim = c.data.d_in;
    if (c.model.output_dim == 0) c.model.output_dim = c.data.d_out;
  }
  c.validate();
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& c, int indent) {
  json j;
  j["steps"] = c.steps;
  j["model"] = model_to_json(c.model);
  j["data"] = data_to_json(c.data);
  j["optimizer"] = optimizer_to_json(c.optimizer);
  j["schedule"] = schedule_to_json(c.schedule);
  j["batch"] = c.batch;
  j["eval_interval"] = c.eval_interval;
  j["eval_batches"] = c.eval_batches;
  j["log_interval"] = c.log_interval;
  json evs = json::array();
  for (const auto& e : c.events) evs.push_back(event_to_json(e));
  j["events"] = std::move(evs);
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["precision"] = c.precision;
  j["threads"] = c.threads;
  return j.dump(indent);
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  // Canonical form without the locational fields.
  ExperimentConfig canon = cfg;
  canon.out_dir.clear();
  canon.threads = 0;
  const std::string text = config_to_json_text(canon, -1);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : text) h = mix64(h ^ static_cast<unsigned char>(ch));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace deepen
