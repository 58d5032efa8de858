#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deepen/runlog.hpp"

namespace deepen {

struct Series {
  std::string label;
  std::vector<double> x, y;
  bool line = true;
  bool marks = false;
};

struct PlotOptions {
  std::string title, xlabel, ylabel;
  bool logy = false;
  int width = 860, height = 520;
};

// Self-contained SVG: axes, ticks, legend, optional log-scale y.
void write_svg(const std::string& path, const std::vector<Series>& series,
               const PlotOptions& opt);

enum class PlotKind { LossVsSteps, LossVsFlops, Pareto, TheorySlack };
PlotKind parse_plot_kind(std::string_view s);
std::string plot_kind_str(PlotKind k);

// Perspective for progressive runs: the whole run, or only the grown
// model (curve starts at the expansion step).
enum class Perspective { Entire, GrownOnly };

// Standard figures from run logs. TheorySlack plots the values passed
// in `slacks` (one per trial) instead of log data.
void emit_plot(const std::string& path, PlotKind kind,
               const std::vector<std::pair<std::string, RunLog>>& logs,
               PlotOptions opt, Perspective perspective = Perspective::Entire,
               const std::vector<double>& slacks = {});

}  // namespace deepen
