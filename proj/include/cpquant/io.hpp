#pragma once

#include <map>
#include <set>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "cpquant/limitlaw.hpp"
#include "cpquant/simulate.hpp"

namespace cpquant {

// Dataset CSV: header row x1..xd then y, rows in time order.
Dataset load_dataset_csv(const std::string& path);
std::string dataset_to_csv(const Dataset& data);
void save_dataset_csv(const Dataset& data, const std::string& path);

// Flat key-value configuration with dotted section keys. Keys must all be
// consumed; finish() rejects unknown keys by name.
class KeyValueConfig {
public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text,
                                     const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key) const;       // "20,85"
  std::vector<VectorXd> get_vector_list(const std::string& key) const;  // "a,b; c,d"
  void finish() const;  // throws naming any unconsumed key

private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

// Section readers with defaults (scenario.*, fit.*, constraints.*,
// selection.*).
ScenarioSpec scenario_from_config(const KeyValueConfig& cfg);
FitConfig fit_config_from_config(const KeyValueConfig& cfg);
SegmentationConstraints constraints_from_config(const KeyValueConfig& cfg);
SelectionConfig selection_from_config(const KeyValueConfig& cfg);

// JSON serialization; all artifacts re-parse into equal in-memory values.
nlohmann::json to_json(const SegmentedFit& fit);
SegmentedFit segmented_fit_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SelectionResult& result);
SelectionResult selection_result_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

nlohmann::json to_json(const McReport& report);
McReport mc_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LimitLawPmf& pmf);
LimitLawPmf limit_pmf_from_json(const nlohmann::json& j);

nlohmann::json to_json(const NormalityCheck& check);

// Canonical on-disk form of a JSON artifact.
std::string json_bytes(const nlohmann::json& j);

// Flat per-replication CSV for external plotting.
std::string mc_report_csv(const McReport& report);
std::string pmf_csv(const LimitLawPmf& pmf);
std::string standardized_csv(const NormalityCheck& check);

// Writes via a temp file in the same directory plus rename.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace cpquant
