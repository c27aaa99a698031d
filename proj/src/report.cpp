#include "xma/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "xma/errors.hpp"

namespace xma {

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "text") return ReportFormat::Text;
  if (s == "jsonl") return ReportFormat::Jsonl;
  if (s == "html") return ReportFormat::Html;
  throw ValidationError("unknown report format '" + std::string(s) +
                        "' (expected text, jsonl or html)");
}

std::string format_2dp(double value) {
  // The epsilon absorbs binary representation error on exact halves.
  double r = std::floor(value * 100.0 + 0.5 + 1e-9) / 100.0;
  if (r == 0.0) r = 0.0;  // no "-0.00"
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", r);
  return buf;
}

namespace {

std::string display(const Cell& c) {
  if (auto s = std::get_if<std::string>(&c)) return *s;
  if (auto d = std::get_if<double>(&c)) return format_2dp(*d);
  return std::to_string(std::get<long long>(c));
}

ordered_json machine(const Cell& c) {
  if (auto s = std::get_if<std::string>(&c)) return *s;
  if (auto d = std::get_if<double>(&c)) return *d;
  return std::get<long long>(c);
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::vector<Cell> metric_cells(const MetricSet& m) {
  return {m.acc,           m.macro_f1,  m.f1_pos,        m.recall_pos,
          m.precision_pos, m.f1_neg,    m.recall_neg,    m.precision_neg};
}

const std::vector<std::string> kMetricColumns = {"acc",       "macro_f1",   "f1_pos",
                                                 "recall_pos", "precision_pos", "f1_neg",
                                                 "recall_neg", "precision_neg"};

}  // namespace

std::string render_text(const ReportTable& t) {
  std::string out;
  if (!t.title.empty()) out += t.title + "\n";
  for (const auto& n : t.notes) out += "# " + n + "\n";
  if (t.columns.empty()) return out;
  std::vector<std::size_t> width(t.columns.size());
  for (std::size_t i = 0; i < t.columns.size(); ++i) width[i] = t.columns[i].size();
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : t.rows) {
    std::vector<std::string> r;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      auto s = i < row.cells.size() ? display(row.cells[i]) : "";
      if (i == 0 && row.highlight) s += " *";
      width[i] = std::max(width[i], s.size());
      r.push_back(std::move(s));
    }
    cells.push_back(std::move(r));
  }
  auto line = [&](const std::vector<std::string>& r) {
    std::string l;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) l += "  ";
      l += r[i] + std::string(width[i] - r[i].size(), ' ');
    }
    while (!l.empty() && l.back() == ' ') l.pop_back();
    return l + "\n";
  };
  out += line(t.columns);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  out += line(rule);
  for (const auto& r : cells) out += line(r);
  return out;
}

std::string render_jsonl(const ReportTable& t) {
  ordered_json head;
  head["kind"] = "header";
  head["report"] = t.name;
  head["title"] = t.title;
  head["notes"] = t.notes;
  head["columns"] = t.columns;
  std::string out = head.dump() + "\n";
  for (const auto& row : t.rows) {
    ordered_json r;
    r["kind"] = "row";
    for (std::size_t i = 0; i < t.columns.size() && i < row.cells.size(); ++i) {
      r[t.columns[i]] = machine(row.cells[i]);
    }
    if (row.highlight) r["selected"] = true;
    out += r.dump() + "\n";
  }
  return out;
}

std::string render_html(const ReportTable& t) {
  std::string out = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" +
                    html_escape(t.title) + "</title></head><body>\n";
  if (!t.title.empty()) out += "<h1>" + html_escape(t.title) + "</h1>\n";
  for (const auto& n : t.notes) out += "<p>" + html_escape(n) + "</p>\n";
  out += "<table>\n";
  if (!t.columns.empty()) {
    out += "<tr>";
    for (const auto& c : t.columns) out += "<th>" + html_escape(c) + "</th>";
    out += "</tr>\n";
  }
  for (const auto& row : t.rows) {
    out += "<tr>";
    for (const auto& c : row.cells) {
      auto s = html_escape(display(c));
      out += row.highlight ? "<td><b>" + s + "</b></td>" : "<td>" + s + "</td>";
    }
    out += "</tr>\n";
  }
  out += "</table>\n</body></html>\n";
  return out;
}

std::string render_report(const ReportTable& t, ReportFormat format) {
  switch (format) {
    case ReportFormat::Text:
      return render_text(t);
    case ReportFormat::Jsonl:
      return render_jsonl(t);
    case ReportFormat::Html:
      break;
  }
  return render_html(t);
}

ReportTable sweep_table(const SweepReport& report) {
  ReportTable t;
  t.name = "sweep";
  t.title = "Few-shot sweep: " + report.model_id + " on " + report.dataset_id;
  t.notes = {std::string("scoring: ") + kScoringPolicy, "* marks the selected n"};
  t.columns = {"n_shots"};
  t.columns.insert(t.columns.end(), kMetricColumns.begin(), kMetricColumns.end());
  t.columns.push_back("failed");
  const auto best = report.rows.empty() ? 0 : select_optimal_shots(report);
  for (const auto& row : report.rows) {
    ReportRow r;
    r.cells.push_back(static_cast<long long>(row.n_shots));
    for (auto& c : metric_cells(row.metrics)) r.cells.push_back(c);
    r.cells.push_back(static_cast<long long>(row.failed));
    r.highlight = row.n_shots == best;
    t.rows.push_back(std::move(r));
  }
  return t;
}

ReportTable metrics_table(const std::vector<StrategyResult>& results) {
  ReportTable t;
  t.name = "metrics";
  t.title = "Strategy comparison";
  t.notes = {std::string("scoring: ") + kScoringPolicy};
  t.columns = {"strategy", "dataset"};
  t.columns.insert(t.columns.end(), kMetricColumns.begin(), kMetricColumns.end());
  t.columns.push_back("items");
  t.columns.push_back("failed");
  for (const auto& res : results) {
    ReportRow r;
    r.cells = {res.strategy, res.dataset};
    for (auto& c : metric_cells(res.metrics)) r.cells.push_back(c);
    r.cells.push_back(static_cast<long long>(res.items));
    r.cells.push_back(static_cast<long long>(res.failed));
    t.rows.push_back(std::move(r));
  }
  return t;
}

ReportTable diff_table(const DiffReport& diff, std::string_view a, std::string_view b) {
  ReportTable t;
  t.name = "diff";
  t.title = "Prediction changes from " + std::string(a) + " to " + std::string(b);
  t.notes = {"corrected: " + std::to_string(diff.corrected) +
                 ", introduced: " + std::to_string(diff.introduced),
             std::string("scoring: ") + kScoringPolicy};
  t.columns = {"item_id", "change"};
  for (const auto& id : diff.corrected_ids) t.rows.push_back({{id, std::string("corrected")}});
  for (const auto& id : diff.introduced_ids) t.rows.push_back({{id, std::string("introduced")}});
  return t;
}

ReportTable distribution_table(const DistributionReport& d, std::string_view dataset) {
  ReportTable t;
  t.name = "distribution";
  t.title = "Label distribution for " + std::string(dataset);
  t.notes = {"flips positive->negative: " + std::to_string(d.positive_to_negative) +
             ", negative->positive: " + std::to_string(d.negative_to_positive)};
  t.columns = {"labels", "positive", "negative", "total"};
  auto ll = [](std::size_t v) { return static_cast<long long>(v); };
  t.rows.push_back({{std::string("original"), ll(d.before_positive), ll(d.before_negative),
                     ll(d.before_positive + d.before_negative)}});
  t.rows.push_back({{std::string("re-annotated"), ll(d.after_positive), ll(d.after_negative),
                     ll(d.after_positive + d.after_negative)}});
  return t;
}

}  // namespace xma
