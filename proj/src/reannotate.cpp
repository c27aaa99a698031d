#include "xma/reannotate.hpp"

#include "xma/errors.hpp"

namespace xma {

std::string_view to_string(RecordState state) {
  switch (state) {
    case RecordState::Agreed:
      return "AGREED";
    case RecordState::Queued:
      return "QUEUED";
    case RecordState::Leased:
      return "LEASED";
    case RecordState::Resolved:
      return "RESOLVED";
    case RecordState::Failed:
      break;
  }
  return "FAILED";
}

RecordState record_state_from_string(std::string_view s) {
  if (s == "AGREED") return RecordState::Agreed;
  if (s == "QUEUED") return RecordState::Queued;
  if (s == "LEASED") return RecordState::Leased;
  if (s == "RESOLVED") return RecordState::Resolved;
  if (s == "FAILED") return RecordState::Failed;
  throw ParseError("unknown record state '" + std::string(s) + "'", 0);
}

VoteOutcome resolve_vote(BinaryLabel original, const Prediction& model,
                         std::optional<BinaryLabel> human) {
  VoteOutcome out;
  if (model.has_label() && model.label == original) {
    // Two votes already agree; a third cannot change the majority.
    out.final_label = original;
    out.state = human ? RecordState::Resolved : RecordState::Agreed;
    return out;
  }
  if (!human) {
    out.state = model.has_label() ? RecordState::Queued : RecordState::Failed;
    return out;
  }
  if (model.has_label()) {
    // original != model, so the human vote is the tie-breaker.
    int positive = (original == BinaryLabel::Positive) +
                   (model.label == BinaryLabel::Positive) +
                   (*human == BinaryLabel::Positive);
    out.final_label = positive >= 2 ? BinaryLabel::Positive : BinaryLabel::Negative;
  } else {
    out.final_label = *human;
  }
  out.state = RecordState::Resolved;
  return out;
}

Dataset finalize_dataset(const Store& store, const Dataset& dataset) {
  const auto& task = store.task();
  Dataset out{dataset.dataset_id, dataset.schema, dataset.kind, {}};
  std::vector<std::string> pending;
  for (const auto& item : dataset.items) {
    auto rec = store.record(item.item_id);
    if (!rec) {
      throw IntegrityError("item '" + item.item_id + "' was never enqueued in the store");
    }
    if (task.parse_word(item.original_label) != rec->original) {
      throw IntegrityError("item '" + item.item_id +
                           "' label differs from the label recorded in the store");
    }
    if (!rec->final_label ||
        (rec->state != RecordState::Agreed && rec->state != RecordState::Resolved)) {
      pending.push_back(item.item_id);
      continue;
    }
    auto copy = item;
    copy.original_label = task.render(*rec->final_label);
    copy.provenance = std::string(to_string(rec->state));
    out.items.push_back(std::move(copy));
  }
  if (!pending.empty()) {
    std::string ids;
    for (const auto& id : pending) ids += (ids.empty() ? "" : ", ") + id;
    throw IncompleteQueueError(std::to_string(pending.size()) +
                                   " item(s) still awaiting annotation: " + ids,
                               pending);
  }
  return out;
}

std::map<std::string, Prediction> load_predictions(const std::filesystem::path& path,
                                                   const TaskDef& task) {
  std::map<std::string, Prediction> out;
  for_each_jsonl(path, [&](const json& j, std::size_t line) {
    if (!j.contains("item_id") || !j.contains("label")) {
      throw ParseError(path.filename().string() + ":" + std::to_string(line) +
                           ": prediction records need item_id and label",
                       line);
    }
    out[j["item_id"].get<std::string>()] =
        Prediction::parse(j["label"].get<std::string>(), task);
  });
  return out;
}

void save_predictions(const std::vector<ItemPrediction>& predictions,
                      const TaskDef& task, const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : predictions) {
    ordered_json j;
    j["item_id"] = p.item_id;
    j["label"] = p.prediction.render(task);
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace xma
