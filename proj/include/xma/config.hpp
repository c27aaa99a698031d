#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xma/core.hpp"

namespace xma {

/// Schemas, tasks, and mappings loaded from a config directory:
///   labels.yaml    `schemas: {id: [labels]}` and `tasks: {id: {...}}`
///   mappings.yaml  one YAML document per mapping
/// Every mapping is validated against its schema and task on load.
class LabelConfig {
 public:
  static LabelConfig load(const std::filesystem::path& dir);
  static LabelConfig from_strings(const std::string& labels_yaml,
                                  const std::string& mappings_yaml);

  const LabelSchema& schema(const std::string& id) const;
  const TaskDef& task(const std::string& id) const;
  const LabelMapping& mapping(const std::string& source_schema,
                              const std::string& target_task) const;

  const std::map<std::string, LabelSchema>& schemas() const { return schemas_; }
  const std::map<std::string, TaskDef>& tasks() const { return tasks_; }
  const std::vector<LabelMapping>& mappings() const { return mappings_; }

 private:
  std::map<std::string, LabelSchema> schemas_;
  std::map<std::string, TaskDef> tasks_;
  std::vector<LabelMapping> mappings_;
};

/// Parses the mapping documents only; no validation.
std::vector<LabelMapping> parse_mapping_documents(const std::string& yaml);

}  // namespace xma
