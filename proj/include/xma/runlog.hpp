#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "xma/jsonl.hpp"

namespace xma {

/// `{item_id, prompt_hash, response_text, latency_ms, status}`; status is
/// ok | unparseable | failed. For failed calls response_text holds the
/// error message.
struct RunLogEntry {
  std::string item_id;
  std::string prompt_hash;
  std::string response_text;
  double latency_ms = 0.0;
  std::string status;
};

/// Append-only request/response log, doubling as the response cache.
/// Default-constructed logs live in memory only.
class RunLog {
 public:
  RunLog() = default;
  explicit RunLog(const std::filesystem::path& path);

  /// Most recent non-failed entry for the hash.
  std::optional<RunLogEntry> lookup(const std::string& prompt_hash) const;
  void append(const RunLogEntry& entry);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unique_ptr<AppendFile> file_;
  std::map<std::string, RunLogEntry> cache_;
  std::size_t size_ = 0;
};

}  // namespace xma
