#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace respnet::metrics {

// Rows are truth, columns are prediction.
struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<int64_t> counts;

  explicit ConfusionMatrix(int c = 0) : n_classes(c), counts(static_cast<size_t>(c) * c, 0) {}
  int64_t& at(int truth, int pred) { return counts[static_cast<size_t>(truth) * n_classes + pred]; }
  int64_t at(int truth, int pred) const {
    return counts[static_cast<size_t>(truth) * n_classes + pred];
  }
  void add(int truth, int pred) { ++at(truth, pred); }
  int64_t total() const;
  int64_t row_total(int truth) const;
};

// ICBHI multi-class convention: specificity is accuracy on the normal-class
// rows; sensitivity is diagonal accuracy over all non-normal rows.
std::pair<double, double> sen_spec(const ConfusionMatrix& m, int normal_class);

// AS = (sen+spec)/2, HS = harmonic mean (0 when sen = spec = 0).
std::pair<double, double> icbhi_scores(double sen, double spec);

struct EvalReport {
  std::string task;
  double sen = 0, spec = 0, as_score = 0, hs_score = 0;
  ConfusionMatrix matrix;
};

EvalReport make_report(const std::string& task, const ConfusionMatrix& m, int normal_class);

// Human-readable table; values rounded only here.
std::string render_report(const EvalReport& r, const std::vector<std::string>& class_names);
// Machine-readable: task<TAB>sen<TAB>spec<TAB>as<TAB>hs
std::string report_tsv_line(const EvalReport& r);

}  // namespace respnet::metrics
