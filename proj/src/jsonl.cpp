#include "xma/jsonl.hpp"

#include <unistd.h>

#include <fstream>
#include <sstream>

#include "xma/errors.hpp"

namespace xma {

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.filename().string() + ":" + std::to_string(lineno) +
                           ": malformed record: " + e.what(),
                       lineno);
    }
    if (!record.is_object()) {
      throw ParseError(path.filename().string() + ":" + std::to_string(lineno) +
                           ": record is not an object",
                       lineno);
    }
    fn(record, lineno);
  }
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(j); });
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // An identical file is left untouched.
  std::error_code ec;
  if (std::filesystem::file_size(path, ec) == contents.size() && !ec) {
    std::ifstream in(path, std::ios::binary);
    std::string existing(contents.size(), '\0');
    if (in.read(existing.data(), static_cast<std::streamsize>(existing.size())) &&
        existing == contents) {
      return;
    }
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

AppendFile::AppendFile(const std::filesystem::path& path, bool sync)
    : path_(path), sync_(sync) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_ = std::fopen(path.c_str(), "ab");
  if (!file_) throw Error("cannot open " + path.string() + " for append");
}

AppendFile::~AppendFile() {
  if (file_) std::fclose(file_);
}

void AppendFile::append_line(const std::string& line) {
  std::lock_guard lock(mu_);
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() ||
      std::fputc('\n', file_) == EOF || std::fflush(file_) != 0) {
    throw Error("append to " + path_.string() + " failed");
  }
  if (sync_) ::fsync(::fileno(file_));
}

}  // namespace xma
