#include "deepen/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "deepen/pareto.hpp"

namespace deepen {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Axis {
  double lo = 0, hi = 1;
  double map(double v, double a, double b) const {
    if (hi == lo) return (a + b) / 2;
    return a + (v - lo) / (hi - lo) * (b - a);
  }
  std::vector<double> ticks(int n = 5) const {
    std::vector<double> out;
    if (hi == lo) return {lo};
    const double span = hi - lo;
    const double raw = span / n;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double mult : {1.0, 2.0, 2.5, 5.0, 10.0})
      if (mag * mult >= raw) {
        step = mag * mult;
        break;
      }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-12 * span;
         v += step)
      out.push_back(v);
    return out;
  }
};

}  // namespace

void write_svg(const std::string& path, const std::vector<Series>& series,
               const PlotOptions& opt) {
  if (series.empty()) throw std::invalid_argument("write_svg: no series");
  const double ml = 74, mr = 16, mt = 34, mb = 50;
  const double W = opt.width, H = opt.height;

  auto ty = [&](double v) {
    if (!opt.logy) return v;
    return std::log10(std::max(v, 1e-300));
  };

  Axis ax, ay;
  bool first = true;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double xv = s.x[i], yv = ty(s.y[i]);
      if (!std::isfinite(xv) || !std::isfinite(yv)) continue;
      if (first) {
        ax.lo = ax.hi = xv;
        ay.lo = ay.hi = yv;
        first = false;
      }
      ax.lo = std::min(ax.lo, xv);
      ax.hi = std::max(ax.hi, xv);
      ay.lo = std::min(ay.lo, yv);
      ay.hi = std::max(ay.hi, yv);
    }
  }
  if (first) throw std::invalid_argument("write_svg: series have no points");
  if (ay.hi == ay.lo) {
    ay.lo -= 0.5;
    ay.hi += 0.5;
  }
  const double pad = 0.04 * (ay.hi - ay.lo);
  ay.lo -= pad;
  ay.hi += pad;

  auto px = [&](double v) { return ax.map(v, ml, W - mr); };
  auto py = [&](double v) { return ay.map(ty(v), H - mb, mt); };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">"
      << opt.title << "</text>\n";

  // frame
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr
      << "\" height=\"" << H - mt - mb
      << "\" fill=\"none\" stroke=\"#333\"/>\n";

  for (double t : ax.ticks()) {
    const double x = px(t);
    out << "<line x1=\"" << x << "\" y1=\"" << H - mb << "\" x2=\"" << x
        << "\" y2=\"" << H - mb + 5 << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << H - mb + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(t) << "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double y = ay.map(t, H - mb, mt);
    const double label = opt.logy ? std::pow(10.0, t) : t;
    out << "<line x1=\"" << ml - 5 << "\" y1=\"" << y << "\" x2=\"" << ml
        << "\" y2=\"" << y << "\" stroke=\"#333\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << W - mr
        << "\" y2=\"" << y << "\" stroke=\"#eee\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(label) << "</text>\n";
  }
  out << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">"
      << opt.xlabel << "</text>\n";
  out << "<text x=\"18\" y=\"" << (mt + H - mb) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 18 "
      << (mt + H - mb) / 2 << ")\">" << opt.ylabel << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    const char* color = kPalette[s % (sizeof kPalette / sizeof *kPalette)];
    if (ser.line && ser.x.size() > 1) {
      out << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.6\" points=\"";
      for (std::size_t i = 0; i < ser.x.size(); ++i)
        out << px(ser.x[i]) << "," << py(ser.y[i]) << " ";
      out << "\"/>\n";
    }
    if (ser.marks || ser.x.size() == 1) {
      for (std::size_t i = 0; i < ser.x.size(); ++i)
        out << "<circle cx=\"" << px(ser.x[i]) << "\" cy=\"" << py(ser.y[i])
            << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    // legend
    const double ly = mt + 16 + 16 * static_cast<double>(s);
    out << "<line x1=\"" << W - mr - 150 << "\" y1=\"" << ly << "\" x2=\""
        << W - mr - 126 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - mr - 120 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << ser.label
        << "</text>\n";
  }
  out << "</svg>\n";
}

PlotKind parse_plot_kind(std::string_view s) {
  if (s == "loss-vs-steps" || s == "loss-steps") return PlotKind::LossVsSteps;
  if (s == "loss-vs-flops" || s == "loss-flops") return PlotKind::LossVsFlops;
  if (s == "pareto") return PlotKind::Pareto;
  if (s == "theory-slack") return PlotKind::TheorySlack;
  throw std::invalid_argument("unknown plot kind: " + std::string(s));
}

std::string plot_kind_str(PlotKind k) {
  switch (k) {
    case PlotKind::LossVsSteps:
      return "loss-vs-steps";
    case PlotKind::LossVsFlops:
      return "loss-vs-flops";
    case PlotKind::Pareto:
      return "pareto";
    case PlotKind::TheorySlack:
      return "theory-slack";
  }
  return "?";
}

namespace {

// First step whose record shows a parameter-count change; 0 when none.
std::int64_t expansion_step(const RunLog& log) {
  std::int64_t n0 = -1;
  for (const auto& r : log.records) {
    if (n0 < 0) n0 = r.n_params;
    if (r.n_params != n0) return r.step;
  }
  return 0;
}

}  // namespace

void emit_plot(const std::string& path, PlotKind kind,
               const std::vector<std::pair<std::string, RunLog>>& logs,
               PlotOptions opt, Perspective perspective,
               const std::vector<double>& slacks) {
  std::vector<Series> series;
  switch (kind) {
    case PlotKind::LossVsSteps:
    case PlotKind::LossVsFlops: {
      if (logs.empty()) throw std::invalid_argument("emit_plot: no logs");
      for (const auto& [name, log] : logs) {
        Series s;
        s.label = name;
        const std::int64_t start = perspective == Perspective::GrownOnly
                                       ? expansion_step(log)
                                       : 0;
        for (const auto* r : log.eval_points()) {
          if (r->step < start) continue;
          s.x.push_back(kind == PlotKind::LossVsSteps
                            ? static_cast<double>(r->step)
                            : static_cast<double>(r->flops));
          s.y.push_back(r->val_loss);
        }
        series.push_back(std::move(s));
      }
      if (opt.xlabel.empty())
        opt.xlabel = kind == PlotKind::LossVsSteps ? "step" : "cumulative FLOPs";
      if (opt.ylabel.empty()) opt.ylabel = "validation loss";
      break;
    }
    case PlotKind::Pareto: {
      if (logs.empty()) throw std::invalid_argument("emit_plot: no logs");
      std::vector<RunPoint> pts;
      Series all;
      all.label = "runs";
      all.line = false;
      all.marks = true;
      for (const auto& [name, log] : logs) {
        const double flops =
            static_cast<double>(log.records.back().flops);
        const double loss = log.final_val_loss();
        pts.push_back({flops, loss, name});
        all.x.push_back(flops);
        all.y.push_back(loss);
      }
      Series front;
      front.label = "frontier";
      front.marks = true;
      for (std::size_t idx : pareto_frontier(pts)) {
        front.x.push_back(pts[idx].flops);
        front.y.push_back(pts[idx].loss);
      }
      series.push_back(std::move(all));
      series.push_back(std::move(front));
      if (opt.xlabel.empty()) opt.xlabel = "cumulative FLOPs";
      if (opt.ylabel.empty()) opt.ylabel = "final validation loss";
      break;
    }
    case PlotKind::TheorySlack: {
      if (slacks.empty())
        throw std::invalid_argument("emit_plot: theory-slack needs slacks");
      Series s;
      s.label = "slack";
      s.line = false;
      s.marks = true;
      for (std::size_t i = 0; i < slacks.size(); ++i) {
        s.x.push_back(static_cast<double>(i));
        s.y.push_back(slacks[i]);
      }
      series.push_back(std::move(s));
      if (opt.xlabel.empty()) opt.xlabel = "trial";
      if (opt.ylabel.empty()) opt.ylabel = "bound slack";
      break;
    }
  }
  write_svg(path, series, opt);
}

}  // namespace deepen
