#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace deepen {

enum class ScheduleKind { Wsd, Cosine, Constant };

std::string schedule_str(ScheduleKind k);
ScheduleKind parse_schedule(std::string_view s);

// Learning-rate schedule over a fixed horizon. WSD: linear warmup,
// constant plateau, linear decay to zero over the final decay_frac of
// steps. Cosine: warmup then half-cosine to zero. Constant: warmup then
// peak.
struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::Wsd;
  double peak_lr = 0.01;
  double warmup_frac = 0.02;
  double decay_frac = 0.2;  // wsd only; long runs use 0.1
  std::int64_t horizon = 0;

  void validate() const;

  std::int64_t warmup_steps() const;
  // First step of the decay phase (wsd); horizon for constant; end of
  // warmup for cosine, which has no plateau.
  std::int64_t stable_end() const;

  bool operator==(const ScheduleConfig&) const = default;
};

// eta_t for step t in [0, horizon). Throws on t outside the horizon.
double schedule_lr(const ScheduleConfig& s, std::int64_t t);

// Partial learning-rate mass: sum of eta over the first tau steps divided
// by the sum over all steps, by direct summation. tau in [0, horizon].
double schedule_mass(const ScheduleConfig& s, std::int64_t tau);

}  // namespace deepen
