#include "xma/core.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "xma/errors.hpp"

namespace xma {

namespace {

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

std::string_view to_string(BinaryLabel label) {
  return label == BinaryLabel::Positive ? "positive" : "negative";
}

std::optional<BinaryLabel> binary_label_from_string(std::string_view s) {
  auto n = normalize_label(s);
  if (n == "positive") return BinaryLabel::Positive;
  if (n == "negative") return BinaryLabel::Negative;
  return std::nullopt;
}

std::string normalize_label(std::string_view raw) {
  auto begin = raw.find_first_not_of(" \t\r\n\f\v");
  if (begin == std::string_view::npos) return {};
  auto end = raw.find_last_not_of(" \t\r\n\f\v");
  std::string out(raw.substr(begin, end - begin + 1));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view to_string(MediaKind kind) {
  return kind == MediaKind::Meme ? "meme" : "video";
}

MediaKind media_kind_from_string(std::string_view s) {
  auto n = normalize_label(s);
  if (n == "meme") return MediaKind::Meme;
  if (n == "video") return MediaKind::Video;
  throw ValidationError("unknown media kind '" + std::string(s) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Test:
      return "test";
    case Split::Unsplit:
      break;
  }
  return "unsplit";
}

Split split_from_string(std::string_view s) {
  auto n = normalize_label(s);
  if (n == "train") return Split::Train;
  if (n == "test") return Split::Test;
  if (n == "unsplit" || n.empty()) return Split::Unsplit;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

std::string TaskDef::render(BinaryLabel label) const {
  return label == BinaryLabel::Positive ? positive_word : negative_word;
}

std::optional<BinaryLabel> TaskDef::parse_word(std::string_view word) const {
  auto n = normalize_label(word);
  if (n == positive_word) return BinaryLabel::Positive;
  if (n == negative_word) return BinaryLabel::Negative;
  return std::nullopt;
}

std::string TaskDef::question(MediaKind kind) const {
  std::string q = question_template;
  replace_all(q, "{content_kind}", to_string(kind));
  replace_all(q, "{positive_word}", positive_word);
  replace_all(q, "{negative_word}", negative_word);
  return q;
}

std::vector<std::string> TaskDef::vocabulary() const {
  return {positive_word, negative_word};
}

void validate_task(const TaskDef& task) {
  if (task.task_id.empty()) throw SchemaError("task has an empty task_id");
  if (task.positive_word.empty() || task.negative_word.empty()) {
    throw SchemaError("task '" + task.task_id + "' has an empty label word");
  }
  if (normalize_label(task.positive_word) != task.positive_word ||
      normalize_label(task.negative_word) != task.negative_word) {
    throw SchemaError("task '" + task.task_id +
                      "' label words must be lowercase and trimmed");
  }
  if (task.positive_word == task.negative_word) {
    throw SchemaError("task '" + task.task_id +
                      "' uses the same word for both classes");
  }
  auto slots = count_occurrences(task.question_template, "{positive_word}");
  if (slots != 1) {
    throw SchemaError("task '" + task.task_id +
                      "' question_template must contain exactly one "
                      "{positive_word} slot, found " +
                      std::to_string(slots));
  }
}

LabelSchema::LabelSchema(std::string schema_id,
                         const std::vector<std::string>& labels)
    : id_(std::move(schema_id)) {
  if (labels.empty()) throw SchemaError("schema '" + id_ + "' has no labels");
  std::set<std::string> seen;
  for (const auto& raw : labels) {
    auto l = normalize_label(raw);
    if (l.empty()) throw SchemaError("schema '" + id_ + "' has an empty label");
    if (!seen.insert(l).second) {
      throw SchemaError("schema '" + id_ + "' repeats label '" + l + "'");
    }
    labels_.push_back(std::move(l));
  }
}

bool LabelSchema::contains(std::string_view label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

LabelSchema LabelSchema::for_task(const TaskDef& task) {
  return LabelSchema(task.task_id, task.vocabulary());
}

std::string ValidationReport::describe() const {
  std::ostringstream out;
  for (const auto& l : uncovered_labels) out << "uncovered source label '" << l << "'\n";
  for (const auto& [s, t] : unknown_targets) {
    out << "source label '" << s << "' maps to unknown target '" << t << "'\n";
  }
  for (const auto& l : unknown_sources) out << "mapping key '" << l << "' is not in the schema\n";
  for (const auto& p : problems) out << p << "\n";
  return out.str();
}

ValidationReport validate_mapping(const LabelMapping& mapping,
                                  const LabelSchema& schema,
                                  const TaskDef& task) {
  ValidationReport report;
  if (mapping.source_schema != schema.id()) {
    report.problems.push_back("mapping source '" + mapping.source_schema +
                              "' does not match schema '" + schema.id() + "'");
  }
  if (mapping.target_task != task.task_id) {
    report.problems.push_back("mapping target '" + mapping.target_task +
                              "' does not match task '" + task.task_id + "'");
  }
  for (const auto& label : schema.labels()) {
    auto it = mapping.table.find(label);
    if (it == mapping.table.end()) {
      report.uncovered_labels.push_back(label);
    } else if (!task.parse_word(it->second)) {
      report.unknown_targets.emplace_back(label, it->second);
    }
  }
  for (const auto& [source, target] : mapping.table) {
    if (!schema.contains(source)) report.unknown_sources.push_back(source);
  }
  return report;
}

BinaryLabel harmonize_mhc(std::string_view raw_label) {
  auto l = normalize_label(raw_label);
  if (l == "hateful" || l == "offensive") return BinaryLabel::Positive;
  if (l == "normal") return BinaryLabel::Negative;
  throw SchemaError("'" + std::string(raw_label) +
                    "' is not an MHC label (hateful, offensive, normal)");
}

BinaryLabel remap_label(std::string_view label, const LabelMapping& mapping,
                        const TaskDef& task) {
  auto key = normalize_label(label);
  auto it = mapping.table.find(key);
  if (it == mapping.table.end()) {
    throw MappingError("mapping " + mapping.source_schema + " -> " +
                       mapping.target_task + " has no entry for '" + key + "'");
  }
  auto target = task.parse_word(it->second);
  if (!target) {
    throw MappingError("mapping " + mapping.source_schema + " -> " +
                       mapping.target_task + " sends '" + key +
                       "' to unknown target '" + it->second + "'");
  }
  return *target;
}

std::string MediaItem::full_text() const {
  if (kind == MediaKind::Meme) return text;
  if (title.empty()) return transcript;
  if (transcript.empty()) return title;
  return title + " " + transcript;
}

}  // namespace xma
