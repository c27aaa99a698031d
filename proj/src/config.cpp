#include "xma/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <sstream>

#include "xma/errors.hpp"

namespace xma {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string required_scalar(const YAML::Node& node, const char* key,
                            const std::string& where) {
  auto v = node[key];
  if (!v || !v.IsScalar()) {
    throw ConfigError(where + ": missing string field '" + key + "'");
  }
  return v.as<std::string>();
}

}  // namespace

std::vector<LabelMapping> parse_mapping_documents(const std::string& yaml) {
  std::vector<LabelMapping> out;
  std::vector<YAML::Node> docs;
  try {
    docs = YAML::LoadAll(yaml);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("mapping config: ") + e.what());
  }
  std::size_t index = 0;
  for (const auto& doc : docs) {
    ++index;
    if (doc.IsNull()) continue;
    auto where = "mapping document " + std::to_string(index);
    LabelMapping m;
    m.source_schema = normalize_label(required_scalar(doc, "source_schema", where));
    m.target_task = normalize_label(required_scalar(doc, "target_task", where));
    auto table = doc["map"];
    if (!table || !table.IsMap()) throw ConfigError(where + ": 'map' must be a mapping");
    for (const auto& kv : table) {
      auto source = normalize_label(kv.first.as<std::string>());
      auto target = normalize_label(kv.second.as<std::string>());
      if (!m.table.emplace(source, target).second) {
        throw ConfigError(where + ": duplicate source label '" + source + "'");
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

LabelConfig LabelConfig::load(const std::filesystem::path& dir) {
  return from_strings(read_file(dir / "labels.yaml"),
                      read_file(dir / "mappings.yaml"));
}

LabelConfig LabelConfig::from_strings(const std::string& labels_yaml,
                                      const std::string& mappings_yaml) {
  LabelConfig cfg;
  YAML::Node root;
  try {
    root = YAML::Load(labels_yaml);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("labels config: ") + e.what());
  }
  try {
    for (const auto& kv : root["schemas"]) {
      auto id = normalize_label(kv.first.as<std::string>());
      cfg.schemas_.emplace(id, LabelSchema(id, kv.second.as<std::vector<std::string>>()));
    }
    for (const auto& kv : root["tasks"]) {
      TaskDef t;
      t.task_id = normalize_label(kv.first.as<std::string>());
      auto where = "task " + t.task_id;
      t.positive_word = normalize_label(required_scalar(kv.second, "positive_word", where));
      t.negative_word = normalize_label(required_scalar(kv.second, "negative_word", where));
      t.question_template = required_scalar(kv.second, "question_template", where);
      t.definition_text = required_scalar(kv.second, "definition", where);
      validate_task(t);
      cfg.tasks_.emplace(t.task_id, std::move(t));
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("labels config: ") + e.what());
  }
  cfg.mappings_ = parse_mapping_documents(mappings_yaml);
  for (const auto& m : cfg.mappings_) {
    auto report = validate_mapping(m, cfg.schema(m.source_schema), cfg.task(m.target_task));
    if (!report.ok()) {
      throw MappingError("mapping " + m.source_schema + " -> " + m.target_task +
                         " is invalid:\n" + report.describe());
    }
  }
  return cfg;
}

const LabelSchema& LabelConfig::schema(const std::string& id) const {
  auto it = schemas_.find(normalize_label(id));
  if (it == schemas_.end()) throw ConfigError("unknown schema '" + id + "'");
  return it->second;
}

const TaskDef& LabelConfig::task(const std::string& id) const {
  auto it = tasks_.find(normalize_label(id));
  if (it == tasks_.end()) throw ConfigError("unknown task '" + id + "'");
  return it->second;
}

const LabelMapping& LabelConfig::mapping(const std::string& source_schema,
                                         const std::string& target_task) const {
  auto s = normalize_label(source_schema);
  auto t = normalize_label(target_task);
  for (const auto& m : mappings_) {
    if (m.source_schema == s && m.target_task == t) return m;
  }
  throw ConfigError("no mapping from schema '" + s + "' to task '" + t + "'");
}

}  // namespace xma
