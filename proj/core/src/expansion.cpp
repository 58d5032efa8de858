#include "deepen/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deepen/linalg.hpp"
#include "deepen/rng.hpp"

namespace deepen {

std::string method_str(ExpansionMethod m) {
  switch (m) {
    case ExpansionMethod::Random:
      return "random";
    case ExpansionMethod::CopyingLast:
      return "copying_last";
    case ExpansionMethod::CopyingStack:
      return "copying_stack";
    case ExpansionMethod::CopyingInter:
      return "copying_inter";
    case ExpansionMethod::Zero:
      return "zero";
    case ExpansionMethod::CopyingZeroNorm:
      return "copying_zero_norm";
    case ExpansionMethod::CopyingZeroLastLinear:
      return "copying_zero_last_linear";
  }
  return "?";
}

ExpansionMethod parse_method(std::string_view s) {
  if (s == "random") return ExpansionMethod::Random;
  if (s == "copying_last") return ExpansionMethod::CopyingLast;
  if (s == "copying_stack" || s == "copying")
    return ExpansionMethod::CopyingStack;
  if (s == "copying_inter") return ExpansionMethod::CopyingInter;
  if (s == "zero") return ExpansionMethod::Zero;
  if (s == "copying_zero_norm" || s == "copying_zeroN")
    return ExpansionMethod::CopyingZeroNorm;
  if (s == "copying_zero_last_linear" || s == "copying_zeroL")
    return ExpansionMethod::CopyingZeroLastLinear;
  throw std::invalid_argument("unknown expansion method: " + std::string(s));
}

std::string site_str(InsertionSite s) {
  return s == InsertionSite::Bottom ? "bottom" : "top";
}

InsertionSite parse_site(std::string_view s) {
  if (s == "bottom") return InsertionSite::Bottom;
  if (s == "top") return InsertionSite::Top;
  throw std::invalid_argument("unknown insertion site: " + std::string(s));
}

std::string os_policy_str(OsPolicy p) {
  switch (p) {
    case OsPolicy::Inherit:
      return "inherit";
    case OsPolicy::Copy:
      return "copy";
    case OsPolicy::Reset:
      return "reset";
  }
  return "?";
}

OsPolicy parse_os_policy(std::string_view s) {
  if (s == "inherit") return OsPolicy::Inherit;
  if (s == "copy") return OsPolicy::Copy;
  if (s == "reset") return OsPolicy::Reset;
  throw std::invalid_argument("unknown optimizer-state policy: " +
                              std::string(s));
}

namespace {

bool is_copying(ExpansionMethod m) {
  return m != ExpansionMethod::Random && m != ExpansionMethod::Zero;
}

}  // namespace

ExpansionPlan plan_expansion(int source_depth, int target_depth,
                             ExpansionMethod method, InsertionSite site,
                             OsPolicy os_policy) {
  if (source_depth < 0 || target_depth < source_depth)
    throw std::invalid_argument(
        "plan_expansion: need 0 <= source_depth <= target_depth, got " +
        std::to_string(source_depth) + " -> " + std::to_string(target_depth));
  if (is_copying(method) && source_depth < 1)
    throw std::invalid_argument("plan_expansion: " + method_str(method) +
                                " requires source depth >= 1");
  if (site == InsertionSite::Top && method != ExpansionMethod::Random)
    throw std::invalid_argument(
        "plan_expansion: insertion site applies to the random method only");

  ExpansionPlan plan;
  plan.source_depth = source_depth;
  plan.target_depth = target_depth;
  plan.method = method;
  plan.site = site;
  plan.os_policy = os_policy;
  plan.mapping.assign(static_cast<std::size_t>(target_depth),
                      ExpansionPlan::kNew);
  plan.zero_sublayer.assign(static_cast<std::size_t>(target_depth), false);

  const int added = target_depth - source_depth;
  auto& map = plan.mapping;

  switch (method) {
    case ExpansionMethod::Random:
    case ExpansionMethod::Zero: {
      const int old_at = (site == InsertionSite::Top) ? added : 0;
      for (int i = 0; i < source_depth; ++i) map[old_at + i] = i;
      break;
    }
    case ExpansionMethod::CopyingLast: {
      for (int i = 0; i < source_depth; ++i) map[i] = i;
      for (int j = source_depth; j < target_depth; ++j)
        map[j] = source_depth - 1;
      break;
    }
    case ExpansionMethod::CopyingStack:
    case ExpansionMethod::CopyingZeroNorm:
    case ExpansionMethod::CopyingZeroLastLinear: {
      for (int j = 0; j < target_depth; ++j) map[j] = j % source_depth;
      if (method != ExpansionMethod::CopyingStack)
        for (int j = source_depth; j < target_depth; ++j)
          plan.zero_sublayer[j] = true;
      break;
    }
    case ExpansionMethod::CopyingInter: {
      const int q = target_depth / source_depth;
      const int r = target_depth % source_depth;
      int j = 0;
      for (int i = 0; i < source_depth; ++i) {
        const int reps = q + (i < r ? 1 : 0);
        for (int k = 0; k < reps; ++k) map[j++] = i;
      }
      break;
    }
  }

  // First occurrence of each source block carries the original
  // parameters; later occurrences are copies with fresh ids.
  plan.is_copy.assign(static_cast<std::size_t>(target_depth), false);
  std::vector<bool> seen(static_cast<std::size_t>(std::max(source_depth, 1)),
                         false);
  for (int j = 0; j < target_depth; ++j) {
    const int src = map[static_cast<std::size_t>(j)];
    if (src == ExpansionPlan::kNew) continue;
    if (seen[static_cast<std::size_t>(src)])
      plan.is_copy[static_cast<std::size_t>(j)] = true;
    else
      seen[static_cast<std::size_t>(src)] = true;
  }
  return plan;
}

namespace {

// Parameter slots of one block, in construction order.
std::vector<int> block_slots(const BlockRef& b, Family family) {
  if (family == Family::TinyTransformer)
    return {b.ln1, b.wq, b.wk, b.wv, b.wo, b.ln2, b.fc1, b.fc2};
  return {b.ln1, b.fc1, b.fc2};
}

// Suffix of a parameter id after the block name ("h3.fc1" -> ".fc1").
std::string id_suffix(const std::string& id) {
  const auto dot = id.find('.');
  return id.substr(dot);
}

template <typename T>
int push_copy(Model<T>& dst, const Parameter<T>& src, std::string id,
              Role role, std::vector<std::pair<std::string, IdOrigin>>& org,
              IdOrigin::Kind kind) {
  dst.params.emplace_back(id, role, src.value);
  org.push_back({std::move(id),
                 {kind, kind == IdOrigin::Kind::Fresh ? "" : src.id}});
  return static_cast<int>(dst.params.size()) - 1;
}

template <typename T>
int push_fresh(Model<T>& dst, std::string id, Role role, Tensor<T> value,
               std::vector<std::pair<std::string, IdOrigin>>& org) {
  dst.params.emplace_back(id, role, std::move(value));
  org.push_back({std::move(id), {IdOrigin::Kind::Fresh, ""}});
  return static_cast<int>(dst.params.size()) - 1;
}

}  // namespace

template <typename T>
Expanded<T> expand(const Model<T>& source, const ExpansionPlan& plan,
                   std::uint64_t seed) {
  if (source.depth() != plan.source_depth)
    throw std::invalid_argument(
        "expand: plan source depth " + std::to_string(plan.source_depth) +
        " does not match model depth " + std::to_string(source.depth()));
  if (static_cast<int>(plan.mapping.size()) != plan.target_depth)
    throw std::invalid_argument("expand: incomplete plan mapping");

  Expanded<T> out;
  Model<T>& dst = out.model;
  dst.config = source.config;
  dst.config.depth = plan.target_depth;
  const Family family = source.config.family;
  const int w = source.config.width;
  Rng rng(seed);

  // E carried verbatim.
  dst.emb_w = push_copy(dst, source.at(source.emb_w),
                        source.at(source.emb_w).id, Role::E(), out.origins,
                        IdOrigin::Kind::Carried);
  if (source.emb_b >= 0)
    dst.emb_b = push_copy(dst, source.at(source.emb_b),
                          source.at(source.emb_b).id, Role::E(), out.origins,
                          IdOrigin::Kind::Carried);

  // Hidden blocks per mapping. Fresh block names continue past the
  // source's so ids stay unique and lineage stays readable.
  int next_name = plan.source_depth;
  for (int pos = 0; pos < plan.target_depth; ++pos) {
    const int src_idx = plan.mapping[static_cast<std::size_t>(pos)];
    const Role role = Role::H(pos);
    BlockRef nb;
    if (src_idx == ExpansionPlan::kNew) {
      nb.name = "h" + std::to_string(next_name++);
      const bool zero = plan.method == ExpansionMethod::Zero;
      auto fresh_mat = [&](int rows, int cols) {
        if (zero) return Tensor<T>::zeros({rows, cols});
        const double sv = std::sqrt(static_cast<double>(cols) / rows);
        return semi_orthogonal<T>(rows, cols, sv, rng);
      };
      auto fresh_gain = [&] {
        return zero ? Tensor<T>::zeros({w}) : Tensor<T>::full({w}, T(1));
      };
      auto add = [&](const char* sfx, Tensor<T> v) {
        return push_fresh(dst, nb.name + sfx, role, std::move(v), out.origins);
      };
      if (family == Family::TinyTransformer) {
        nb.ln1 = add(".ln1", fresh_gain());
        nb.wq = add(".wq", fresh_mat(w, w));
        nb.wk = add(".wk", fresh_mat(w, w));
        nb.wv = add(".wv", fresh_mat(w, w));
        nb.wo = add(".wo", fresh_mat(w, w));
        nb.ln2 = add(".ln2", fresh_gain());
        nb.fc1 = add(".fc1", fresh_mat(w, 4 * w));
        nb.fc2 = add(".fc2", fresh_mat(4 * w, w));
      } else {
        nb.ln1 = add(".ln", fresh_gain());
        nb.fc1 = add(".fc1", fresh_mat(w, 4 * w));
        nb.fc2 = add(".fc2", fresh_mat(4 * w, w));
      }
    } else {
      const BlockRef& sb = source.blocks[static_cast<std::size_t>(src_idx)];
      const bool copy = plan.is_copy[static_cast<std::size_t>(pos)];
      const std::string name =
          copy ? "h" + std::to_string(next_name++) : sb.name;
      nb.name = name;
      const auto slots = block_slots(sb, family);
      std::vector<int> placed;
      placed.reserve(slots.size());
      for (int slot : slots) {
        const Parameter<T>& sp = source.at(slot);
        const std::string id = name + id_suffix(sp.id);
        placed.push_back(push_copy(dst, sp, id, role, out.origins,
                                   copy ? IdOrigin::Kind::CopyOf
                                        : IdOrigin::Kind::Carried));
      }
      if (family == Family::TinyTransformer) {
        nb.ln1 = placed[0];
        nb.wq = placed[1];
        nb.wk = placed[2];
        nb.wv = placed[3];
        nb.wo = placed[4];
        nb.ln2 = placed[5];
        nb.fc1 = placed[6];
        nb.fc2 = placed[7];
      } else {
        nb.ln1 = placed[0];
        nb.fc1 = placed[1];
        nb.fc2 = placed[2];
      }
      if (plan.zero_sublayer[static_cast<std::size_t>(pos)]) {
        if (plan.method == ExpansionMethod::CopyingZeroNorm) {
          dst.at(nb.ln1).value.zero();
          if (nb.ln2 >= 0) dst.at(nb.ln2).value.zero();
        } else {  // CopyingZeroLastLinear
          dst.at(nb.fc2).value.zero();
          if (nb.wo >= 0) dst.at(nb.wo).value.zero();
        }
      }
    }
    dst.blocks.push_back(std::move(nb));
  }

  // L carried verbatim.
  if (source.final_ln >= 0)
    dst.final_ln = push_copy(dst, source.at(source.final_ln),
                             source.at(source.final_ln).id, Role::L(),
                             out.origins, IdOrigin::Kind::Carried);
  dst.readout_w = push_copy(dst, source.at(source.readout_w),
                            source.at(source.readout_w).id, Role::L(),
                            out.origins, IdOrigin::Kind::Carried);
  if (source.readout_b >= 0)
    dst.readout_b = push_copy(dst, source.at(source.readout_b),
                              source.at(source.readout_b).id, Role::L(),
                              out.origins, IdOrigin::Kind::Carried);
  return out;
}

template <typename T>
OptimizerState<T> expand_optimizer_state(const OptimizerState<T>& source,
                                         const Expanded<T>& expanded,
                                         OsPolicy policy,
                                         const OptimizerConfig& opt) {
  OptimizerState<T> out = init_optimizer_state(expanded.model, opt);
  if (policy == OsPolicy::Reset) return out;
  for (const auto& [id, origin] : expanded.origins) {
    const bool take = origin.kind == IdOrigin::Kind::Carried ||
                      (policy == OsPolicy::Copy &&
                       origin.kind == IdOrigin::Kind::CopyOf);
    if (!take) continue;
    auto src = source.find(origin.source);
    if (src == source.end())
      throw std::invalid_argument("expand_optimizer_state: unknown parameter " +
                                  origin.source);
    ParamState<T>& dst = out.at(id);
    dst.m = src->second.m;
    if (src->second.v.size() > 0) dst.v = src->second.v;
    dst.step = src->second.step;
  }
  return out;
}

template <typename T>
PreservationReport verify_function_preserving(Model<T>& small, Model<T>& large,
                                              const Batch<T>& batch,
                                              double tol) {
  PreservationReport rep;
  rep.loss_small = static_cast<double>(forward_loss(small, batch));
  rep.loss_large = static_cast<double>(forward_loss(large, batch));
  rep.abs_delta = std::abs(rep.loss_large - rep.loss_small);
  const double denom = std::max(std::abs(rep.loss_small), 1e-300);
  rep.rel_delta = rep.abs_delta / denom;
  rep.preserved = rep.rel_delta <= tol;
  return rep;
}

#define DEEPEN_INSTANTIATE(T)                                            \
  template Expanded<T> expand<T>(const Model<T>&, const ExpansionPlan&, \
                                 std::uint64_t);                         \
  template OptimizerState<T> expand_optimizer_state<T>(                  \
      const OptimizerState<T>&, const Expanded<T>&, OsPolicy,           \
      const OptimizerConfig&);                                           \
  template PreservationReport verify_function_preserving<T>(             \
      Model<T>&, Model<T>&, const Batch<T>&, double);

DEEPEN_INSTANTIATE(float)
DEEPEN_INSTANTIATE(double)
#undef DEEPEN_INSTANTIATE

}  // namespace deepen
