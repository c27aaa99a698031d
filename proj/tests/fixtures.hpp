#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "xma/evaluate.hpp"

namespace xma::test {

/// Reference few-shot sweeps per (model, test set): acc and macro-F1 at
/// n = 0, 2, 4, 6, 8, with the n marked best.
struct SweepFixture {
  std::string model;
  std::string dataset;
  std::vector<std::pair<double, double>> acc_f1;
  std::size_t expected_n;

  SweepReport report() const {
    SweepReport r{model, dataset, {}};
    for (std::size_t i = 0; i < acc_f1.size(); ++i) {
      SweepRow row;
      row.n_shots = 2 * i;
      row.metrics.acc = acc_f1[i].first;
      row.metrics.macro_f1 = acc_f1[i].second;
      r.rows.push_back(row);
    }
    return r;
  }
};

inline const std::vector<SweepFixture>& few_shot_fixtures() {
  static const std::vector<SweepFixture> f = {
      {"llama-3.2-11b", "mhc", {{0.66, 0.62}, {0.79, 0.74}, {0.77, 0.74}, {0.79, 0.74}, {0.77, 0.73}}, 2},
      {"llama-3.2-11b", "hatemm", {{0.79, 0.78}, {0.76, 0.76}, {0.79, 0.78}, {0.79, 0.78}, {0.78, 0.78}}, 0},
      {"llava-next-video-7b", "mhc", {{0.54, 0.53}, {0.69, 0.69}, {0.64, 0.63}, {0.66, 0.65}, {0.62, 0.62}}, 2},
      {"llava-next-video-7b", "hatemm", {{0.67, 0.66}, {0.70, 0.70}, {0.73, 0.73}, {0.70, 0.69}, {0.65, 0.64}}, 4},
  };
  return f;
}

/// Confusion counts by direct enumeration; a missing prediction is wrong.
inline MetricSet brute_force_metrics(const std::vector<int>& gt, const std::vector<int>& pred) {
  // pred: 1 positive, 0 negative, -1 no label
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int p = pred[i] < 0 ? 1 - gt[i] : pred[i];
    if (gt[i] == 1 && p == 1) tp += 1;
    if (gt[i] == 0 && p == 1) fp += 1;
    if (gt[i] == 0 && p == 0) tn += 1;
    if (gt[i] == 1 && p == 0) fn += 1;
  }
  auto div = [](double a, double b) { return b == 0 ? 0.0 : a / b; };
  MetricSet m;
  m.acc = div(tp + tn, tp + fp + tn + fn);
  m.precision_pos = div(tp, tp + fp);
  m.recall_pos = div(tp, tp + fn);
  m.f1_pos = div(2 * tp, 2 * tp + fp + fn);
  m.precision_neg = div(tn, tn + fn);
  m.recall_neg = div(tn, tn + fp);
  m.f1_neg = div(2 * tn, 2 * tn + fn + fp);
  m.macro_f1 = (m.f1_pos + m.f1_neg) / 2;
  return m;
}

inline double max_metric_gap(const MetricSet& a, const MetricSet& b) {
  const double d[] = {a.acc - b.acc,
                      a.macro_f1 - b.macro_f1,
                      a.f1_pos - b.f1_pos,
                      a.recall_pos - b.recall_pos,
                      a.precision_pos - b.precision_pos,
                      a.f1_neg - b.f1_neg,
                      a.recall_neg - b.recall_neg,
                      a.precision_neg - b.precision_neg};
  double worst = 0;
  for (double v : d) worst = std::max(worst, std::abs(v));
  return worst;
}

}  // namespace xma::test
