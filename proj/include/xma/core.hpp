#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xma {

enum class BinaryLabel { Positive, Negative };

constexpr BinaryLabel opposite(BinaryLabel l) {
  return l == BinaryLabel::Positive ? BinaryLabel::Negative
                                    : BinaryLabel::Positive;
}

/// "positive" / "negative"; the wire spelling used by the annotation API.
std::string_view to_string(BinaryLabel label);
std::optional<BinaryLabel> binary_label_from_string(std::string_view s);

/// Trims surrounding whitespace and lowercases (ASCII). Every label string
/// is stored in this canonical form.
std::string normalize_label(std::string_view raw);

enum class MediaKind { Meme, Video };
std::string_view to_string(MediaKind kind);
MediaKind media_kind_from_string(std::string_view s);

enum class Split { Train, Test, Unsplit };
std::string_view to_string(Split split);
Split split_from_string(std::string_view s);

/// A binary target task: its two vocabulary words, the question asked about
/// an item, and the definition annotators judge against.
///
/// The question template holds exactly one `{positive_word}` slot, which is
/// the class the yes/no answer refers to. `{content_kind}` and
/// `{negative_word}` may also appear.
struct TaskDef {
  std::string task_id;
  std::string positive_word;
  std::string negative_word;
  std::string question_template;
  std::string definition_text;

  std::string render(BinaryLabel label) const;
  std::optional<BinaryLabel> parse_word(std::string_view word) const;
  std::string question(MediaKind kind) const;
  /// Two-word schema {positive_word, negative_word} in that order.
  std::vector<std::string> vocabulary() const;

  friend bool operator==(const TaskDef&, const TaskDef&) = default;
};

/// Throws SchemaError when the invariants do not hold.
void validate_task(const TaskDef& task);

class LabelSchema {
 public:
  LabelSchema() = default;
  /// Normalizes every label; throws SchemaError on empty or duplicate sets.
  LabelSchema(std::string schema_id, const std::vector<std::string>& labels);

  const std::string& id() const { return id_; }
  const std::vector<std::string>& labels() const { return labels_; }
  bool contains(std::string_view label) const;

  static LabelSchema for_task(const TaskDef& task);

  friend bool operator==(const LabelSchema&, const LabelSchema&) = default;

 private:
  std::string id_;
  std::vector<std::string> labels_;
};

/// Source label -> target vocabulary word. Mappings are loaded from config
/// and checked with validate_mapping before use.
struct LabelMapping {
  std::string source_schema;
  std::string target_task;
  std::map<std::string, std::string> table;
};

struct ValidationReport {
  std::vector<std::string> uncovered_labels;
  /// Source labels whose target is not a word of the task.
  std::vector<std::pair<std::string, std::string>> unknown_targets;
  /// Table keys that are not labels of the source schema.
  std::vector<std::string> unknown_sources;
  std::vector<std::string> problems;

  bool ok() const {
    return uncovered_labels.empty() && unknown_targets.empty() &&
           unknown_sources.empty() && problems.empty();
  }
  std::string describe() const;
};

ValidationReport validate_mapping(const LabelMapping& mapping,
                                  const LabelSchema& schema,
                                  const TaskDef& task);

/// MHC's ternary labels merged to binary: hateful and offensive are both
/// the positive class.
BinaryLabel harmonize_mhc(std::string_view raw_label);

BinaryLabel remap_label(std::string_view label, const LabelMapping& mapping,
                        const TaskDef& task);

/// One meme or one video. Paths are absolute once loaded.
struct MediaItem {
  std::string item_id;
  MediaKind kind = MediaKind::Meme;
  std::string text;  // meme overlay text
  std::string title;
  std::string transcript;
  std::filesystem::path image;
  std::filesystem::path frames_dir;
  std::filesystem::path video;
  /// Lexicographically ordered frame files when frames_dir is set.
  std::vector<std::filesystem::path> frames;
  int frame_count = 0;
  std::optional<double> duration_s;
  std::string original_label;
  Split split = Split::Unsplit;
  std::string source_label;  // pre-remap label, if remapped
  std::string provenance;    // AGREED / RESOLVED once finalized

  /// T: overlay text for memes, title + transcript for videos.
  std::string full_text() const;

  friend bool operator==(const MediaItem&, const MediaItem&) = default;
};

}  // namespace xma
