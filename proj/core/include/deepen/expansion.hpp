#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "deepen/model.hpp"
#include "deepen/optimizer.hpp"

namespace deepen {

// How new hidden blocks are initialized at a depth-expansion event.
// copying_* require a source depth of at least one; random and zero also
// work from depth zero.
enum class ExpansionMethod {
  Random,
  CopyingLast,
  CopyingStack,
  CopyingInter,
  Zero,
  CopyingZeroNorm,        // copies with normalization gains zeroed
  CopyingZeroLastLinear,  // copies with each block's last linear zeroed
};

// Placement of randomly-initialized layers relative to the old stack.
// Bottom appends after the old blocks (nearer the readout); top prepends.
// Only the random method takes a site; copying orderings fix their own
// layout.
enum class InsertionSite { Bottom, Top };

// What happens to optimizer state at expansion: inherit keeps state for
// carried parameters, copy additionally clones state onto copied blocks,
// reset zeroes everything.
enum class OsPolicy { Inherit, Copy, Reset };

std::string method_str(ExpansionMethod m);
ExpansionMethod parse_method(std::string_view s);
std::string site_str(InsertionSite s);
InsertionSite parse_site(std::string_view s);
std::string os_policy_str(OsPolicy p);
OsPolicy parse_os_policy(std::string_view s);

struct ExpansionPlan {
  static constexpr int kNew = -1;

  int source_depth = 0;
  int target_depth = 0;
  ExpansionMethod method = ExpansionMethod::Random;
  InsertionSite site = InsertionSite::Bottom;
  OsPolicy os_policy = OsPolicy::Inherit;

  // One entry per target position: a source block index or kNew.
  std::vector<int> mapping;
  // Position holds a fresh copy (new parameter ids) rather than the
  // carried original.
  std::vector<bool> is_copy;
  // copying_zero_* positions whose designated sub-layer is zeroed.
  std::vector<bool> zero_sublayer;
};

// Deterministic layer mapping for a method. Stack repeats whole cycles
// then a prefix; inter assigns ceil/floor repeat counts from the first
// layer; copying_zero_* use the stack layout with the appended copies
// zeroed.
ExpansionPlan plan_expansion(int source_depth, int target_depth,
                             ExpansionMethod method,
                             InsertionSite site = InsertionSite::Bottom,
                             OsPolicy os_policy = OsPolicy::Inherit);

// Provenance of each parameter in the expanded model.
struct IdOrigin {
  enum class Kind { Carried, CopyOf, Fresh };
  Kind kind = Kind::Fresh;
  std::string source;  // source parameter id for Carried / CopyOf
};

template <typename T>
struct Expanded {
  Model<T> model;
  // (new parameter id, origin), in new-model parameter order.
  std::vector<std::pair<std::string, IdOrigin>> origins;
};

// Grows a model per the plan. E and L parameters carry over unchanged;
// hidden blocks are placed per the mapping; new blocks follow the
// method's initialization. The source model is not modified.
template <typename T>
Expanded<T> expand(const Model<T>& source, const ExpansionPlan& plan,
                   std::uint64_t seed);

// Maps optimizer state across an expansion per the plan's policy.
template <typename T>
OptimizerState<T> expand_optimizer_state(const OptimizerState<T>& source,
                                         const Expanded<T>& expanded,
                                         OsPolicy policy,
                                         const OptimizerConfig& opt);

struct PreservationReport {
  bool preserved = false;
  double abs_delta = 0.0;
  double rel_delta = 0.0;
  double loss_small = 0.0;
  double loss_large = 0.0;
};

// Compares forward losses of the two models on one batch; preserved iff
// the relative delta is within tol.
template <typename T>
PreservationReport verify_function_preserving(Model<T>& small,
                                              Model<T>& large,
                                              const Batch<T>& batch,
                                              double tol);

}  // namespace deepen
