#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace xma {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Calls `fn(record, line_number)` for each non-blank line. Throws
/// ParseError carrying the 1-based line number on malformed JSON.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn);

std::vector<json> read_jsonl(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

/// Writes via a temporary file and rename so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents);

/// Append-only line writer. Each append is flushed and fsync'd before
/// returning.
class AppendFile {
 public:
  explicit AppendFile(const std::filesystem::path& path, bool sync = true);
  ~AppendFile();
  AppendFile(const AppendFile&) = delete;
  AppendFile& operator=(const AppendFile&) = delete;

  void append_line(const std::string& line);

 private:
  std::FILE* file_ = nullptr;
  std::filesystem::path path_;
  bool sync_ = true;
  std::mutex mu_;
};

}  // namespace xma
