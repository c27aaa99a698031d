#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "xma/evaluate.hpp"
#include "xma/jsonl.hpp"

namespace xma {

enum class ReportFormat { Text, Jsonl, Html };
ReportFormat report_format_from_string(std::string_view s);

/// Half-up to two decimals, e.g. 0.8125 -> "0.81", 0.125 -> "0.13".
std::string format_2dp(double value);

using Cell = std::variant<std::string, double, long long>;

struct ReportRow {
  std::vector<Cell> cells;
  bool highlight = false;
};

/// A titled table. Numbers are shown rounded and kept at full precision in
/// line-delimited output.
struct ReportTable {
  std::string name;
  std::string title;
  std::vector<std::string> notes;
  std::vector<std::string> columns;
  std::vector<ReportRow> rows;
};

std::string render_report(const ReportTable& table, ReportFormat format);
std::string render_text(const ReportTable& table);
std::string render_jsonl(const ReportTable& table);
std::string render_html(const ReportTable& table);

/// Rows per n; the selected optimum is highlighted.
ReportTable sweep_table(const SweepReport& report);

struct StrategyResult {
  std::string strategy;
  std::string dataset;
  MetricSet metrics;
  std::size_t items = 0;
  std::size_t failed = 0;
};

ReportTable metrics_table(const std::vector<StrategyResult>& results);
ReportTable diff_table(const DiffReport& diff, std::string_view a, std::string_view b);
ReportTable distribution_table(const DistributionReport& dist, std::string_view dataset);

}  // namespace xma
