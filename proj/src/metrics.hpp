#pragma once
#include <string>
#include <vector>

namespace miso::metrics {

// Append-only scalar log for training runs. Rows are buffered in order and
// flushed as one deterministic CSV (no timestamps, %.17g floats) so that
// same-seed runs produce byte-identical files.
class Sink {
 public:
  struct Row {
    std::string stage;
    int step = 0;
    std::string metric;
    double value = 0.0;
  };

  explicit Sink(std::string method) : method_(std::move(method)) {}

  void add(const std::string& stage, int step, const std::string& metric,
           double value);
  const std::vector<Row>& rows() const { return rows_; }
  const std::string& method() const { return method_; }
  void write_csv(const std::string& path) const;

 private:
  std::string method_;
  std::vector<Row> rows_;
};

std::vector<Sink::Row> read_csv_rows(const std::string& path, std::string* method);

// Learning-curve aggregation across runs (seeds): for every (stage, metric,
// step) present in any run, mean and population std over the runs that
// logged it. Rows ordered by first appearance for deterministic output.
void write_plot_csv(const std::string& path,
                    const std::vector<std::vector<Sink::Row>>& runs);

std::string format_double(double v);  // shortest round-trip-safe decimal

}  // namespace miso::metrics
