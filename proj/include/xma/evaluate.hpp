#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xma/core.hpp"
#include "xma/inference.hpp"
#include "xma/ingest.hpp"
#include "xma/runlog.hpp"

namespace xma {

/// Counts with respect to the POSITIVE class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct MetricSet {
  double acc = 0.0;
  double macro_f1 = 0.0;
  double f1_pos = 0.0;
  double recall_pos = 0.0;
  double precision_pos = 0.0;
  double f1_neg = 0.0;
  double recall_neg = 0.0;
  double precision_neg = 0.0;
};

inline constexpr const char* kScoringPolicy =
    "failed or unparseable predictions are scored as incorrect";

/// A missing prediction counts as the opposite of the gold label.
ConfusionMatrix confusion(const std::vector<BinaryLabel>& gt,
                          const std::vector<Prediction>& pred);

/// Precision, recall and F1 are 0 when their denominator is 0.
MetricSet metrics_from(const ConfusionMatrix& cm);

MetricSet compute_metrics(const std::vector<BinaryLabel>& gt,
                          const std::vector<Prediction>& pred);
MetricSet compute_metrics(const std::vector<BinaryLabel>& gt,
                          const std::vector<BinaryLabel>& pred);

struct SweepRow {
  std::size_t n_shots = 0;
  MetricSet metrics;
  std::size_t failed = 0;  // predictions without a label
};

struct SweepReport {
  std::string model_id;
  std::string dataset_id;
  std::vector<SweepRow> rows;  // n_shots strictly increasing
};

struct SweepOptions {
  PromptMode mode = PromptMode::MultiImage;
  bool balanced = true;
  std::map<std::string, std::string> descriptions;
  BatchOptions batch;
};

/// Few-shot evaluation of `test` (labels are task words) at every n in
/// `n_values`, demos drawn from `video_train`. Responses go through `log`,
/// so a rerun against the same log makes no model calls.
SweepReport sweep_shots(const Dataset& test, const Dataset& video_train, const TaskDef& task,
                        std::vector<std::size_t> n_values, ChatModel& model, RunLog& log,
                        std::uint64_t seed, const SweepOptions& options = {});

/// Highest macro-F1; ties go to the smaller n, then the higher accuracy.
std::size_t select_optimal_shots(const SweepReport& report);

struct DiffReport {
  std::size_t corrected = 0;   // A wrong, B right
  std::size_t introduced = 0;  // A right, B wrong
  std::vector<std::string> corrected_ids;
  std::vector<std::string> introduced_ids;
};

DiffReport diff_predictions(const std::vector<std::string>& ids,
                            const std::vector<BinaryLabel>& gt,
                            const std::vector<Prediction>& a,
                            const std::vector<Prediction>& b);

struct DistributionReport {
  std::size_t before_positive = 0;
  std::size_t before_negative = 0;
  std::size_t after_positive = 0;
  std::size_t after_negative = 0;
  std::size_t positive_to_negative = 0;
  std::size_t negative_to_positive = 0;
  std::vector<std::string> flipped_ids;
};

/// Both datasets carry task words and the same item ids.
DistributionReport label_distribution(const Dataset& before, const Dataset& after,
                                      const TaskDef& task);

}  // namespace xma
