#include "xma/runlog.hpp"

namespace xma {

namespace {

ordered_json to_json(const RunLogEntry& e) {
  ordered_json j;
  j["item_id"] = e.item_id;
  j["prompt_hash"] = e.prompt_hash;
  j["response_text"] = e.response_text;
  j["latency_ms"] = e.latency_ms;
  j["status"] = e.status;
  return j;
}

}  // namespace

RunLog::RunLog(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    for_each_jsonl(path, [&](const json& j, std::size_t) {
      RunLogEntry e;
      e.item_id = j.value("item_id", "");
      e.prompt_hash = j.value("prompt_hash", "");
      e.response_text = j.value("response_text", "");
      e.latency_ms = j.value("latency_ms", 0.0);
      e.status = j.value("status", "");
      ++size_;
      if (e.status != "failed") cache_[e.prompt_hash] = std::move(e);
    });
  }
  file_ = std::make_unique<AppendFile>(path);
}

std::optional<RunLogEntry> RunLog::lookup(const std::string& prompt_hash) const {
  std::lock_guard lock(mu_);
  auto it = cache_.find(prompt_hash);
  if (it == cache_.end()) return std::nullopt;
  return it->second;
}

void RunLog::append(const RunLogEntry& entry) {
  std::lock_guard lock(mu_);
  if (file_) file_->append_line(to_json(entry).dump());
  ++size_;
  if (entry.status != "failed") cache_[entry.prompt_hash] = entry;
}

std::size_t RunLog::size() const {
  std::lock_guard lock(mu_);
  return size_;
}

}  // namespace xma
