#include "deepen/runlog.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace deepen {

void RunLog::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run log: " + path);
  out << "step,tokens,flops,lr,train_loss,val_loss,n_params\n";
  char buf[64];
  for (const auto& r : records) {
    out << r.step << ',' << r.tokens << ',' << r.flops << ',';
    std::snprintf(buf, sizeof buf, "%.10g", r.lr);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.10g", r.train_loss);
    out << buf << ',';
    if (r.has_val()) {
      std::snprintf(buf, sizeof buf, "%.10g", r.val_loss);
      out << buf;
    }
    out << ',' << r.n_params << '\n';
  }
}

RunLog RunLog::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read run log: " + path);
  RunLog log;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty run log: " + path);
  if (line.rfind("step,", 0) != 0)
    throw std::runtime_error("not a run log (bad header): " + path);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    RunRecord r;
    auto next = [&]() {
      if (!std::getline(ss, field, ','))
        throw std::runtime_error("truncated run log row: " + line);
      return field;
    };
    r.step = std::stoll(next());
    r.tokens = std::stoll(next());
    r.flops = std::stoll(next());
    r.lr = std::stod(next());
    r.train_loss = std::stod(next());
    const std::string val = next();
    if (!val.empty()) r.val_loss = std::stod(val);
    r.n_params = std::stoll(next());
    log.records.push_back(r);
  }
  return log;
}

std::vector<const RunRecord*> RunLog::eval_points() const {
  std::vector<const RunRecord*> out;
  for (const auto& r : records)
    if (r.has_val()) out.push_back(&r);
  return out;
}

double RunLog::final_val_loss() const {
  for (auto it = records.rbegin(); it != records.rend(); ++it)
    if (it->has_val()) return it->val_loss;
  throw std::runtime_error("run log has no validation points");
}

const RunRecord* RunLog::at_or_before(std::int64_t s) const {
  const RunRecord* best = nullptr;
  for (const auto& r : records) {
    if (r.step > s) break;
    best = &r;
  }
  return best;
}

}  // namespace deepen
