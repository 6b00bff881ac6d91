#include "metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "serial.hpp"

namespace miso::metrics {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void Sink::add(const std::string& stage, int step, const std::string& metric,
               double value) {
  rows_.push_back({stage, step, metric, value});
}

void Sink::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << "method,stage,step,metric,value\n";
  for (const auto& r : rows_)
    f << method_ << ',' << r.stage << ',' << r.step << ',' << r.metric << ','
      << format_double(r.value) << '\n';
  if (!f) throw IoError("write failed for " + path);
}

std::vector<Sink::Row> read_csv_rows(const std::string& path, std::string* method) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(f, line) || line != "method,stage,step,metric,value")
    throw FormatError("not a metrics csv: " + path);
  std::vector<Sink::Row> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string m, stage, step, metric, value;
    if (!std::getline(ss, m, ',') || !std::getline(ss, stage, ',') ||
        !std::getline(ss, step, ',') || !std::getline(ss, metric, ',') ||
        !std::getline(ss, value))
      throw FormatError("bad metrics row: " + line);
    if (method) *method = m;
    rows.push_back({stage, std::stoi(step), metric, std::stod(value)});
  }
  return rows;
}

void write_plot_csv(const std::string& path,
                    const std::vector<std::vector<Sink::Row>>& runs) {
  struct Key {
    std::string stage, metric;
    int step;
    bool operator<(const Key& o) const {
      if (stage != o.stage) return stage < o.stage;
      if (metric != o.metric) return metric < o.metric;
      return step < o.step;
    }
  };
  std::vector<Key> order;
  std::map<Key, std::vector<double>> values;
  for (const auto& run : runs)
    for (const auto& r : run) {
      Key k{r.stage, r.metric, r.step};
      auto [it, fresh] = values.try_emplace(k);
      if (fresh) order.push_back(k);
      it->second.push_back(r.value);
    }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << "stage,metric,step,mean,std\n";
  for (const auto& k : order) {
    const auto& vs = values[k];
    double mean = 0.0;
    for (double v : vs) mean += v;
    mean /= double(vs.size());
    double var = 0.0;
    for (double v : vs) var += (v - mean) * (v - mean);
    var /= double(vs.size());
    f << k.stage << ',' << k.metric << ',' << k.step << ','
      << format_double(mean) << ',' << format_double(std::sqrt(var)) << '\n';
  }
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace miso::metrics
