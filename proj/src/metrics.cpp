#include "respnet/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "respnet/error.hpp"

namespace respnet::metrics {

int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), int64_t{0});
}

int64_t ConfusionMatrix::row_total(int truth) const {
  int64_t n = 0;
  for (int p = 0; p < n_classes; ++p) n += at(truth, p);
  return n;
}

std::pair<double, double> sen_spec(const ConfusionMatrix& m, int normal_class) {
  require(m.n_classes >= 2 && normal_class >= 0 && normal_class < m.n_classes,
          Errc::DegenerateClass, "bad normal class index");
  require(m.total() > 0, Errc::DegenerateClass, "empty confusion matrix");

  const int64_t normal_total = m.row_total(normal_class);
  int64_t abnormal_total = 0, abnormal_correct = 0;
  for (int c = 0; c < m.n_classes; ++c) {
    if (c == normal_class) continue;
    abnormal_total += m.row_total(c);
    abnormal_correct += m.at(c, c);
  }
  require(normal_total > 0, Errc::DegenerateClass, "no normal-class instances");
  require(abnormal_total > 0, Errc::DegenerateClass, "no abnormal-class instances");

  const double spec = static_cast<double>(m.at(normal_class, normal_class)) / normal_total;
  const double sen = static_cast<double>(abnormal_correct) / abnormal_total;
  return {sen, spec};
}

std::pair<double, double> icbhi_scores(double sen, double spec) {
  const double as = (sen + spec) / 2.0;
  const double hs = (sen + spec) > 0.0 ? 2.0 * sen * spec / (sen + spec) : 0.0;
  return {as, hs};
}

EvalReport make_report(const std::string& task, const ConfusionMatrix& m, int normal_class) {
  EvalReport r;
  r.task = task;
  r.matrix = m;
  auto [sen, spec] = sen_spec(m, normal_class);
  r.sen = sen;
  r.spec = spec;
  auto [as, hs] = icbhi_scores(sen, spec);
  r.as_score = as;
  r.hs_score = hs;
  return r;
}

std::string render_report(const EvalReport& r, const std::vector<std::string>& class_names) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s  Spec %.2f  Sen %.2f  AS %.2f  HS %.2f\n",
                r.task.c_str(), r.spec, r.sen, r.as_score, r.hs_score);
  out << buf;
  out << "confusion (rows = truth):\n";
  out << "            ";
  for (const auto& name : class_names) {
    std::snprintf(buf, sizeof(buf), "%10s", name.c_str());
    out << buf;
  }
  out << "\n";
  for (int t = 0; t < r.matrix.n_classes; ++t) {
    std::snprintf(buf, sizeof(buf), "%-12s", class_names[t].c_str());
    out << buf;
    for (int p = 0; p < r.matrix.n_classes; ++p) {
      std::snprintf(buf, sizeof(buf), "%10lld", static_cast<long long>(r.matrix.at(t, p)));
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

std::string report_tsv_line(const EvalReport& r) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%s\t%.6f\t%.6f\t%.6f\t%.6f", r.task.c_str(), r.sen, r.spec,
                r.as_score, r.hs_score);
  return std::string(buf);
}

}  // namespace respnet::metrics
