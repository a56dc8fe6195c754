#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace brwd {

/// Invalid or missing setting; `field` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Flat key = value settings. Later assignments override earlier ones, so
/// command-line flags are applied after the config file.
class RunConfig {
 public:
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Lines "key = value"; '#' starts a comment; blank lines are skipped.
  static RunConfig parse(std::istream& is);

 private:
  std::map<std::string, std::string> values_;
};

/// Keys handled by the driver itself; never echoed, so outputs do not depend on them.
inline constexpr const char* kDriverKeys[] = {"threads", "out", "format"};

using FieldValue = std::variant<std::int64_t, double, std::string, bool>;

/// Ordered (name, value) pairs. Every estimate is followed by its standard
/// error or accompanied by an exactness marker.
struct ResultRecord {
  std::vector<std::pair<std::string, FieldValue>> fields;

  ResultRecord& add(std::string name, FieldValue v);
  ResultRecord& add(std::string name, const char* v) { return add(std::move(name), FieldValue(std::string(v))); }
  /// Integers are stored as int64, floating values as double.
  template <class T>
    requires std::is_arithmetic_v<T>
  ResultRecord& add(std::string name, T v) {
    if constexpr (std::is_same_v<T, bool>) return add(std::move(name), FieldValue(v));
    else if constexpr (std::is_floating_point_v<T>) return add(std::move(name), FieldValue(static_cast<double>(v)));
    else return add(std::move(name), FieldValue(static_cast<std::int64_t>(v)));
  }
  const FieldValue* find(const std::string& name) const;
};

enum class OutputFormat { csv, json };

OutputFormat parse_format(const std::string& s);

/// 17 significant digits; "nan", "inf" and "-inf" for non-finite values.
std::string format_double(double v);

/// CSV: header with the union of field names in first-appearance order, LF
/// line endings, RFC 4180 quoting. JSON: one array of objects, non-finite
/// numbers as null.
void write_records(std::ostream& os, const std::vector<ResultRecord>& records, OutputFormat format);

struct KeyInfo {
  std::string name;
  std::string default_value;
  std::string help;
};

struct ExperimentInfo {
  std::string name;
  std::string summary;
  std::vector<KeyInfo> keys;
};

/// Every experiment with its settings and defaults, in subcommand order.
const std::vector<ExperimentInfo>& experiment_catalog();
const ExperimentInfo& find_experiment(const std::string& name);

enum class RunStatus { ok, statistical_failure, oracle_failure };

struct RunOutput {
  std::vector<ResultRecord> records;
  RunStatus status = RunStatus::ok;
};

struct RunContext {
  int threads = 1;
  /// Append wall_seconds to every record (breaks byte-identity across runs).
  bool timing = false;
};

/// Resolves cfg against the experiment's keys and runs it. `seed` is required
/// in cfg. Unknown keys and out-of-range values throw ConfigError. Every
/// record starts with the experiment name and ends with the resolved
/// settings as config.<key> fields.
RunOutput run_experiment(const std::string& name, const RunConfig& cfg, const RunContext& ctx = {});

}  // namespace brwd
