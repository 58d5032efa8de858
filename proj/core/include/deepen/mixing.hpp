#pragma once

#include <cstdint>

#include "deepen/runlog.hpp"

namespace deepen {

struct MixingReport {
  std::int64_t tau = 0;
  bool mixed = false;
  std::int64_t t_mix = -1;           // steps after tau; -1 when not mixed
  std::int64_t mixed_at_step = -1;   // absolute step of the first hit
  std::int64_t tokens_to_mix = -1;   // progressive-run tokens after tau
  double epsilon = 0.01;
  int window = 5;
};

// Compares the smoothed validation curves of a progressive run and a
// fixed-size run on their shared eval grid. t_mix is the first step at
// or after tau where the relative gap stays within epsilon for `window`
// consecutive evals. tau < 0 derives the expansion step from the first
// n_params change in the progressive log.
MixingReport detect_mixing(const RunLog& progressive, const RunLog& fixed,
                           double epsilon = 0.01, int window = 5,
                           std::int64_t tau = -1);

struct TimingAdvice {
  std::int64_t tau = 0;
  bool clamped = false;  // t_mix exceeded the stable phase; tau = warmup_end
};

// Recommended expansion step: end of the stable phase minus the pilot
// mixing time, clamped to the end of warmup.
TimingAdvice plan_expansion_timing(std::int64_t stable_end, std::int64_t t_mix,
                                   std::int64_t warmup_end);

}  // namespace deepen
