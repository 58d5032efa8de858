#include "deepen/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace deepen {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'P', 'N', 'C'};

json role_to_json(const Role& r) {
  json j;
  j["kind"] = r.kind == Role::Kind::Embedding ? "E"
              : r.kind == Role::Kind::Readout ? "L"
                                              : "H";
  if (r.kind == Role::Kind::Hidden) j["block"] = r.block;
  return j;
}

Role role_from_json(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "E") return Role::E();
  if (kind == "L") return Role::L();
  return Role::H(j.at("block").get<int>());
}

json model_config_to_json(const ModelConfig& c) {
  json j;
  j["family"] = family_str(c.family);
  j["depth"] = c.depth;
  j["width"] = c.width;
  j["heads"] = c.heads;
  j["vocab"] = c.vocab;
  j["seq_len"] = c.seq_len;
  j["input_dim"] = c.input_dim;
  j["output_dim"] = c.output_dim;
  j["seed"] = c.seed;
  j["ln_eps"] = c.ln_eps;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.family = parse_family(j.at("family").get<std::string>());
  c.depth = j.at("depth");
  c.width = j.at("width");
  c.heads = j.value("heads", 0);
  c.vocab = j.value("vocab", 0);
  c.seq_len = j.value("seq_len", 0);
  c.input_dim = j.value("input_dim", 0);
  c.output_dim = j.value("output_dim", 0);
  c.seed = j.value("seed", std::uint64_t{0});
  c.ln_eps = j.value("ln_eps", 1e-5);
  return c;
}

json opt_config_to_json(const OptimizerConfig& c) {
  json j;
  j["kind"] = optimizer_str(c.kind);
  j["peak_lr"] = c.peak_lr;
  j["weight_decay"] = c.weight_decay;
  j["momentum"] = c.momentum;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["ns_steps"] = c.ns_steps;
  return j;
}

OptimizerConfig opt_config_from_json(const json& j) {
  OptimizerConfig c;
  c.kind = parse_optimizer(j.at("kind").get<std::string>());
  c.peak_lr = j.value("peak_lr", 0.01);
  c.weight_decay = j.value("weight_decay", 0.1);
  c.momentum = j.value("momentum", 0.95);
  c.beta1 = j.value("beta1", 0.9);
  c.beta2 = j.value("beta2", 0.999);
  c.eps = j.value("eps", 1e-8);
  c.ns_steps = j.value("ns_steps", 5);
  return c;
}

template <typename T>
const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <typename T>
void append_payload(std::string& blob, const Tensor<T>& t, json& entry) {
  entry["offset"] = blob.size();
  entry["bytes"] = static_cast<std::uint64_t>(t.size()) * sizeof(T);
  // Little-endian raw dump; this codebase targets little-endian hosts.
  blob.append(reinterpret_cast<const char*>(t.data()),
              static_cast<std::size_t>(t.size()) * sizeof(T));
}

template <typename T>
Tensor<T> read_payload(const std::string& blob, const json& entry,
                       const Shape& shape, const std::string& dtype) {
  const std::uint64_t off = entry.at("offset");
  const std::uint64_t bytes = entry.at("bytes");
  if (off + bytes > blob.size())
    throw std::runtime_error("checkpoint payload out of bounds");
  Tensor<T> t(shape);
  if (dtype == dtype_name<T>()) {
    std::memcpy(t.data(), blob.data() + off, bytes);
  } else if (dtype == "f32") {
    const float* src = reinterpret_cast<const float*>(blob.data() + off);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(src[i]);
  } else if (dtype == "f64") {
    const double* src = reinterpret_cast<const double*>(blob.data() + off);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(src[i]);
  } else {
    throw std::runtime_error("unknown checkpoint dtype: " + dtype);
  }
  return t;
}

json read_manifest(std::ifstream& in, const std::string& path) {
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint archive: " + path);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  std::string manifest(len, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return json::parse(manifest);
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model,
                     const OptimizerState<T>* state, const OptimizerConfig* opt,
                     std::int64_t step) {
  json manifest;
  manifest["model"] = model_config_to_json(model.config);
  manifest["step"] = step;
  std::string blob;

  json params = json::array();
  for (const auto& p : model.params) {
    json e;
    e["id"] = p.id;
    e["role"] = role_to_json(p.role);
    e["shape"] = p.value.shape();
    e["dtype"] = dtype_name<T>();
    append_payload(blob, p.value, e);
    params.push_back(std::move(e));
  }
  manifest["params"] = std::move(params);

  if (state) {
    manifest["optimizer"] = opt_config_to_json(*opt);
    json st = json::array();
    for (const auto& p : model.params) {
      const auto& s = state->at(p.id);
      json e;
      e["id"] = p.id;
      e["step"] = s.step;
      json m;
      append_payload(blob, s.m, m);
      e["m"] = std::move(m);
      if (s.v.size() > 0) {
        json v;
        append_payload(blob, s.v, v);
        e["v"] = std::move(v);
      }
      st.push_back(std::move(e));
    }
    manifest["state"] = std::move(st);
  }

  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

int checkpoint_precision(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  const json manifest = read_manifest(in, path);
  const std::string dtype = manifest.at("params").at(0).at("dtype");
  return dtype == "f32" ? 32 : 64;
}

template <typename T>
CheckpointData<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  const json manifest = read_manifest(in, path);
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());

  CheckpointData<T> out;
  out.model.config = model_config_from_json(manifest.at("model"));
  out.step = manifest.value("step", -1);

  // Rebuild parameters in order and reattach the structural references
  // by role + id suffix.
  const bool tf = out.model.config.family == Family::TinyTransformer;
  for (const auto& e : manifest.at("params")) {
    const std::string id = e.at("id");
    const Role role = role_from_json(e.at("role"));
    const Shape shape = e.at("shape").get<Shape>();
    const std::string dtype = e.at("dtype");
    Tensor<T> value = read_payload<T>(blob, e, shape, dtype);
    out.model.params.emplace_back(id, role, std::move(value));
    const int idx = static_cast<int>(out.model.params.size()) - 1;
    const std::string suffix = id.substr(id.find('.'));

    if (role.kind == Role::Kind::Embedding) {
      if (out.model.emb_w < 0)
        out.model.emb_w = idx;
      else
        out.model.emb_b = idx;
    } else if (role.kind == Role::Kind::Readout) {
      if (tf) {
        if (suffix == ".ln")
          out.model.final_ln = idx;
        else
          out.model.readout_w = idx;
      } else {
        if (suffix == ".w")
          out.model.readout_w = idx;
        else
          out.model.readout_b = idx;
      }
    } else {
      while (static_cast<int>(out.model.blocks.size()) <= role.block)
        out.model.blocks.emplace_back();
      BlockRef& b = out.model.blocks[static_cast<std::size_t>(role.block)];
      if (b.name.empty()) b.name = id.substr(0, id.find('.'));
      if (suffix == ".ln1" || suffix == ".ln")
        b.ln1 = idx;
      else if (suffix == ".wq")
        b.wq = idx;
      else if (suffix == ".wk")
        b.wk = idx;
      else if (suffix == ".wv")
        b.wv = idx;
      else if (suffix == ".wo")
        b.wo = idx;
      else if (suffix == ".ln2")
        b.ln2 = idx;
      else if (suffix == ".fc1")
        b.fc1 = idx;
      else if (suffix == ".fc2")
        b.fc2 = idx;
      else
        throw std::runtime_error("unknown block parameter " + id);
    }
  }
  if (static_cast<int>(out.model.blocks.size()) != out.model.config.depth)
    throw std::runtime_error("checkpoint depth mismatch in " + path);

  if (manifest.contains("state")) {
    out.opt = opt_config_from_json(manifest.at("optimizer"));
    OptimizerState<T> state;
    for (const auto& e : manifest.at("state")) {
      const std::string id = e.at("id");
      const auto* p = const_cast<Model<T>&>(out.model).find(id);
      if (!p) throw std::runtime_error("state for unknown parameter " + id);
      ParamState<T> s;
      s.step = e.value("step", std::int64_t{0});
      const std::string dtype = manifest.at("params").at(0).at("dtype");
      s.m = read_payload<T>(blob, e.at("m"), p->value.shape(), dtype);
      if (e.contains("v"))
        s.v = read_payload<T>(blob, e.at("v"), p->value.shape(), dtype);
      state.emplace(id, std::move(s));
    }
    out.state = std::move(state);
  }
  return out;
}

template void save_checkpoint<float>(const std::string&, const Model<float>&,
                                     const OptimizerState<float>*,
                                     const OptimizerConfig*, std::int64_t);
template void save_checkpoint<double>(const std::string&, const Model<double>&,
                                      const OptimizerState<double>*,
                                      const OptimizerConfig*, std::int64_t);
template CheckpointData<float> load_checkpoint<float>(const std::string&);
template CheckpointData<double> load_checkpoint<double>(const std::string&);

}  // namespace deepen
