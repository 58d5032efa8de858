#include "deepen/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace deepen {

std::string schedule_str(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Wsd:
      return "wsd";
    case ScheduleKind::Cosine:
      return "cosine";
    case ScheduleKind::Constant:
      return "constant";
  }
  return "?";
}

ScheduleKind parse_schedule(std::string_view s) {
  if (s == "wsd") return ScheduleKind::Wsd;
  if (s == "cosine" || s == "cos") return ScheduleKind::Cosine;
  if (s == "constant" || s == "const") return ScheduleKind::Constant;
  throw std::invalid_argument("unknown schedule: " + std::string(s));
}

void ScheduleConfig::validate() const {
  if (!(peak_lr > 0)) throw std::invalid_argument("peak_lr must be positive");
  if (horizon <= 0) throw std::invalid_argument("schedule horizon must be positive");
  if (warmup_frac < 0 || decay_frac < 0 || warmup_frac + decay_frac > 1.0)
    throw std::invalid_argument("need warmup_frac + decay_frac <= 1");
}

std::int64_t ScheduleConfig::warmup_steps() const {
  return static_cast<std::int64_t>(warmup_frac * static_cast<double>(horizon));
}

std::int64_t ScheduleConfig::stable_end() const {
  switch (kind) {
    case ScheduleKind::Wsd:
      return horizon -
             static_cast<std::int64_t>(decay_frac * static_cast<double>(horizon));
    case ScheduleKind::Constant:
      return horizon;
    case ScheduleKind::Cosine:
      return warmup_steps();
  }
  return horizon;
}

double schedule_lr(const ScheduleConfig& s, std::int64_t t) {
  if (t < 0 || t >= s.horizon)
    throw std::out_of_range("schedule_lr: step " + std::to_string(t) +
                            " outside horizon " + std::to_string(s.horizon));
  const std::int64_t warm = s.warmup_steps();
  if (t < warm)
    return s.peak_lr * static_cast<double>(t + 1) / static_cast<double>(warm);

  switch (s.kind) {
    case ScheduleKind::Constant:
      return s.peak_lr;
    case ScheduleKind::Wsd: {
      const std::int64_t decay_start = s.stable_end();
      if (t < decay_start) return s.peak_lr;
      // Linear to zero; eta(decay_start) == peak keeps the boundary
      // continuous, eta(horizon-1) == peak / decay_len.
      return s.peak_lr * static_cast<double>(s.horizon - t) /
             static_cast<double>(s.horizon - decay_start);
    }
    case ScheduleKind::Cosine: {
      if (s.horizon - 1 == warm) return s.peak_lr;
      const double prog = static_cast<double>(t - warm) /
                          static_cast<double>(s.horizon - 1 - warm);
      return s.peak_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * prog));
    }
  }
  return s.peak_lr;
}

double schedule_mass(const ScheduleConfig& s, std::int64_t tau) {
  if (tau < 0 || tau > s.horizon)
    throw std::out_of_range("schedule_mass: tau outside [0, horizon]");
  double head = 0.0, total = 0.0;
  for (std::int64_t t = 0; t < s.horizon; ++t) {
    const double lr = schedule_lr(s, t);
    total += lr;
    if (t < tau) head += lr;
  }
  return head / total;
}

}  // namespace deepen
