#pragma once

#include "echmm/evaluation.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace echmm {

struct ConfigKey {
  std::string key;
  std::string type;  // int, uint, double, bool, string
  std::string default_value;
  std::vector<std::string> choices;  // for strings; empty means free text
  std::string help;
};

/// Every recognised key with its default.
const std::vector<ConfigKey>& config_keys();

/// Flat dotted-key configuration. Files may nest objects ({"em": {"seed": 3}})
/// or use dotted keys directly; later sources win.
class RunConfig {
 public:
  RunConfig();

  void merge_json(const std::string& text, const std::string& origin = "config");
  void load_file(const std::string& path);
  /// "key=value".
  void apply_assignment(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Effective configuration as a nested JSON document.
  std::string to_json() const;

 private:
  std::map<std::string, std::string> values_;
};

std::string config_help();

EmConfig em_config(const RunConfig& config);
PoolConfig pool_config(const RunConfig& config, int classes);
FillPolicy fill_policy(const RunConfig& config);
MissingDayPolicy missing_day_policy(const RunConfig& config);
Split split_from_config(const RunConfig& config, int num_days);

}  // namespace echmm
