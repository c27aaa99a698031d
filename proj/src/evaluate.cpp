#include "xma/evaluate.hpp"

#include <algorithm>
#include <set>

#include "xma/errors.hpp"

namespace xma {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw IntegrityError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

bool correct(BinaryLabel gold, const Prediction& p) { return p.has_label() && p.label == gold; }

}  // namespace

ConfusionMatrix confusion(const std::vector<BinaryLabel>& gt,
                          const std::vector<Prediction>& pred) {
  require_same_length(gt.size(), pred.size(), "compute_metrics");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto predicted = pred[i].has_label() ? pred[i].label : opposite(gt[i]);
    if (gt[i] == BinaryLabel::Positive) {
      ++(predicted == BinaryLabel::Positive ? cm.tp : cm.fn);
    } else {
      ++(predicted == BinaryLabel::Positive ? cm.fp : cm.tn);
    }
  }
  return cm;
}

MetricSet metrics_from(const ConfusionMatrix& cm) {
  MetricSet m;
  m.acc = ratio(cm.tp + cm.tn, cm.total());
  m.precision_pos = ratio(cm.tp, cm.tp + cm.fp);
  m.recall_pos = ratio(cm.tp, cm.tp + cm.fn);
  m.f1_pos = f1(m.precision_pos, m.recall_pos);
  m.precision_neg = ratio(cm.tn, cm.tn + cm.fn);
  m.recall_neg = ratio(cm.tn, cm.tn + cm.fp);
  m.f1_neg = f1(m.precision_neg, m.recall_neg);
  m.macro_f1 = (m.f1_pos + m.f1_neg) / 2.0;
  return m;
}

MetricSet compute_metrics(const std::vector<BinaryLabel>& gt,
                          const std::vector<Prediction>& pred) {
  if (gt.empty()) throw IntegrityError("compute_metrics: no items to score");
  return metrics_from(confusion(gt, pred));
}

MetricSet compute_metrics(const std::vector<BinaryLabel>& gt,
                          const std::vector<BinaryLabel>& pred) {
  std::vector<Prediction> p;
  p.reserve(pred.size());
  for (auto l : pred) p.push_back(Prediction::ok(l));
  return compute_metrics(gt, p);
}

SweepReport sweep_shots(const Dataset& test, const Dataset& video_train, const TaskDef& task,
                        std::vector<std::size_t> n_values, ChatModel& model, RunLog& log,
                        std::uint64_t seed, const SweepOptions& options) {
  if (n_values.empty()) throw ValidationError("sweep needs at least one n value");
  std::sort(n_values.begin(), n_values.end());
  if (std::adjacent_find(n_values.begin(), n_values.end()) != n_values.end()) {
    throw ValidationError("sweep n values must be distinct");
  }
  const auto gt = binary_labels(test, task);
  const auto answers = AnswerMap::for_task(task);
  SweepReport report;
  report.model_id = model.model_id();
  report.dataset_id = test.dataset_id;
  for (auto n : n_values) {
    auto demos = select_demos(video_train, task, n, seed,
                              DemoOptions{options.balanced, options.descriptions});
    std::vector<PredictJob> jobs;
    jobs.reserve(test.items.size());
    for (const auto& item : test.items) {
      jobs.push_back({item.item_id, build_prompt(item, demos, task, options.mode, seed)});
    }
    auto results = predict_all(jobs, model, log, answers, options.batch);
    std::vector<Prediction> preds;
    SweepRow row;
    row.n_shots = n;
    for (const auto& r : results) {
      preds.push_back(r.prediction);
      if (!r.prediction.has_label()) ++row.failed;
    }
    row.metrics = compute_metrics(gt, preds);
    report.rows.push_back(row);
  }
  return report;
}

std::size_t select_optimal_shots(const SweepReport& report) {
  if (report.rows.empty()) throw ValidationError("cannot select from an empty sweep");
  const SweepRow* best = &report.rows.front();
  for (const auto& row : report.rows) {
    const auto& a = row.metrics;
    const auto& b = best->metrics;
    if (a.macro_f1 > b.macro_f1 ||
        (a.macro_f1 == b.macro_f1 &&
         (row.n_shots < best->n_shots || (row.n_shots == best->n_shots && a.acc > b.acc)))) {
      best = &row;
    }
  }
  return best->n_shots;
}

DiffReport diff_predictions(const std::vector<std::string>& ids,
                            const std::vector<BinaryLabel>& gt,
                            const std::vector<Prediction>& a,
                            const std::vector<Prediction>& b) {
  require_same_length(gt.size(), a.size(), "diff_predictions");
  require_same_length(gt.size(), b.size(), "diff_predictions");
  require_same_length(gt.size(), ids.size(), "diff_predictions");
  DiffReport d;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool ra = correct(gt[i], a[i]);
    const bool rb = correct(gt[i], b[i]);
    if (!ra && rb) {
      ++d.corrected;
      d.corrected_ids.push_back(ids[i]);
    } else if (ra && !rb) {
      ++d.introduced;
      d.introduced_ids.push_back(ids[i]);
    }
  }
  return d;
}

DistributionReport label_distribution(const Dataset& before, const Dataset& after,
                                      const TaskDef& task) {
  std::map<std::string, BinaryLabel> after_labels;
  const auto al = binary_labels(after, task);
  for (std::size_t i = 0; i < after.items.size(); ++i) {
    after_labels[after.items[i].item_id] = al[i];
  }
  const auto bl = binary_labels(before, task);
  if (after_labels.size() != before.items.size()) {
    throw IntegrityError("label_distribution: datasets hold different items");
  }
  DistributionReport r;
  for (std::size_t i = 0; i < before.items.size(); ++i) {
    auto it = after_labels.find(before.items[i].item_id);
    if (it == after_labels.end()) {
      throw IntegrityError("label_distribution: item '" + before.items[i].item_id +
                           "' missing after re-annotation");
    }
    const auto b = bl[i];
    const auto a = it->second;
    ++(b == BinaryLabel::Positive ? r.before_positive : r.before_negative);
    ++(a == BinaryLabel::Positive ? r.after_positive : r.after_negative);
    if (a != b) {
      ++(b == BinaryLabel::Positive ? r.positive_to_negative : r.negative_to_positive);
      r.flipped_ids.push_back(before.items[i].item_id);
    }
  }
  return r;
}

}  // namespace xma
