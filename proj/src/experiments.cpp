#include "brwd/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "brwd/boxes.hpp"
#include "brwd/brw.hpp"
#include "brwd/gw_embed.hpp"
#include "brwd/parallel.hpp"
#include "brwd/percolation.hpp"
#include "brwd/random.hpp"
#include "brwd/verify.hpp"
#include "brwd/walk.hpp"

namespace brwd {

ConfigError::ConfigError(std::string field, const std::string& message)
    : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_driver_key(const std::string& k) {
  for (const char* d : kDriverKeys)
    if (k == d) return true;
  return false;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw ConfigError("(empty)", "empty key");
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "not set");
  return it->second;
}

RunConfig RunConfig::parse(std::istream& is) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
    cfg.set(key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

ResultRecord& ResultRecord::add(std::string name, FieldValue v) {
  fields.emplace_back(std::move(name), std::move(v));
  return *this;
}

const FieldValue* ResultRecord::find(const std::string& name) const {
  for (const auto& [k, v] : fields)
    if (k == name) return &v;
  return nullptr;
}

OutputFormat parse_format(const std::string& s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  throw ConfigError("format", "expected csv or json, got '" + s + "'");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string csv_cell(const FieldValue& v) {
  std::string s;
  if (const auto* i = std::get_if<std::int64_t>(&v)) s = std::to_string(*i);
  else if (const auto* d = std::get_if<double>(&v)) s = format_double(*d);
  else if (const auto* b = std::get_if<bool>(&v)) s = *b ? "true" : "false";
  else s = std::get<std::string>(v);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out + '"';
}

std::string json_value(const FieldValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) return std::isfinite(*d) ? format_double(*d) : "null";
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  return json_string(std::get<std::string>(v));
}

}  // namespace

void write_records(std::ostream& os, const std::vector<ResultRecord>& records, OutputFormat format) {
  if (format == OutputFormat::json) {
    os << "[";
    for (std::size_t r = 0; r < records.size(); ++r) {
      os << (r ? ",\n  {" : "\n  {");
      const auto& f = records[r].fields;
      for (std::size_t i = 0; i < f.size(); ++i)
        os << (i ? ", " : "") << json_string(f[i].first) << ": " << json_value(f[i].second);
      os << "}";
    }
    os << (records.empty() ? "]\n" : "\n]\n");
    return;
  }
  std::vector<std::string> columns;
  std::set<std::string> seen;
  for (const auto& r : records)
    for (const auto& [k, v] : r.fields)
      if (seen.insert(k).second) columns.push_back(k);
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << csv_cell(FieldValue(columns[i]));
  os << "\n";
  for (const auto& r : records) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) os << ",";
      if (const auto* v = r.find(columns[i])) os << csv_cell(*v);
    }
    os << "\n";
  }
}

namespace {

// ---------------------------------------------------------------- settings

/// Resolved settings of one experiment: config values over defaults.
class Settings {
 public:
  Settings(const ExperimentInfo& info, const RunConfig& cfg) : info_(info) {
    for (const auto& [k, v] : cfg.values()) {
      if (k == "seed" || is_driver_key(k)) continue;
      const bool known = std::any_of(info.keys.begin(), info.keys.end(), [&](const KeyInfo& ki) { return ki.name == k; });
      if (!known) throw ConfigError(k, "unknown setting for experiment " + info.name);
    }
    if (!cfg.has("seed")) throw ConfigError("seed", "a seed is required");
    seed_text_ = trim(cfg.get("seed"));
    const auto* b = seed_text_.data();
    const auto [ptr, ec] = std::from_chars(b, b + seed_text_.size(), seed_);
    if (ec != std::errc() || ptr != b + seed_text_.size()) throw ConfigError("seed", "expected an unsigned 64-bit integer");
    for (const auto& ki : info.keys) values_[ki.name] = cfg.has(ki.name) ? trim(cfg.get(ki.name)) : ki.default_value;
  }

  std::uint64_t seed() const { return seed_; }

  /// Gives an empty setting a value that depends on other settings; the echo
  /// shows the filled value.
  void fill(const std::string& key, const std::string& value) {
    auto& v = values_.at(key);
    if (v.empty()) v = value;
  }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("undeclared setting " + key);
    return it->second;
  }

  double num(const std::string& key, double lo, double hi) const { return parse_num(key, raw(key), lo, hi); }

  std::int64_t integer(const std::string& key, std::int64_t lo, std::int64_t hi) const {
    return parse_int(key, raw(key), lo, hi);
  }

  std::size_t count(const std::string& key, std::int64_t lo, std::int64_t hi) const {
    return static_cast<std::size_t>(integer(key, lo, hi));
  }

  std::vector<double> list(const std::string& key, double lo, double hi, bool allow_empty = false) const {
    std::vector<double> out;
    std::stringstream ss(raw(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) throw ConfigError(key, "empty list entry");
      out.push_back(parse_num(key, item, lo, hi));
    }
    if (out.empty() && !allow_empty) throw ConfigError(key, "list must not be empty");
    return out;
  }

  bool flag(const std::string& key) const {
    const auto& v = raw(key);
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError(key, "expected true/false, got '" + v + "'");
  }

  std::string choice(const std::string& key, std::initializer_list<const char*> allowed) const {
    const auto& v = raw(key);
    std::string names;
    for (const char* a : allowed) {
      if (v == a) return v;
      names += std::string(names.empty() ? "" : "|") + a;
    }
    throw ConfigError(key, "expected one of " + names + ", got '" + v + "'");
  }

  /// config.seed followed by config.<key> in declaration order.
  void echo(ResultRecord& r) const {
    r.add("config.seed", FieldValue(seed_text_));
    for (const auto& ki : info_.keys) r.add("config." + ki.name, FieldValue(values_.at(ki.name)));
  }

 private:
  static double parse_num(const std::string& key, const std::string& text, double lo, double hi) {
    double v = 0.0;
    std::size_t used = 0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      throw ConfigError(key, "expected a number, got '" + text + "'");
    }
    if (used != text.size() || !std::isfinite(v)) throw ConfigError(key, "expected a number, got '" + text + "'");
    if (v < lo || v > hi) throw ConfigError(key, "value " + text + " outside [" + format_double(lo) + ", " + format_double(hi) + "]");
    return v;
  }

  static std::int64_t parse_int(const std::string& key, const std::string& text, std::int64_t lo, std::int64_t hi) {
    std::int64_t v = 0;
    const auto* b = text.data();
    const auto [ptr, ec] = std::from_chars(b, b + text.size(), v);
    if (ec != std::errc() || ptr != b + text.size()) {
      // Allow scientific notation for large counts, e.g. 1e5.
      const double d = parse_num(key, text, static_cast<double>(lo), static_cast<double>(hi));
      if (d != std::floor(d)) throw ConfigError(key, "expected an integer, got '" + text + "'");
      return static_cast<std::int64_t>(d);
    }
    if (v < lo || v > hi) throw ConfigError(key, "value " + text + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
  }

  const ExperimentInfo& info_;
  std::map<std::string, std::string> values_;
  std::uint64_t seed_ = 0;
  std::string seed_text_;
};

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::int64_t kMaxCount = 1'000'000'000;

std::vector<KeyInfo> brw_keys(const char* kappa, const char* lambda, const char* offspring) {
  return {{"kappa", kappa, "jump rate"},
          {"lambda", lambda, "branching rate"},
          {"alpha", "1", "disaster rate"},
          {"offspring", offspring, "offspring pmf q(0),q(1),..."},
          {"dim", "1", "lattice dimension (1-4)"}};
}

std::vector<KeyInfo> cap_keys(const char* max_alive) {
  return {{"max_alive", max_alive, "population cap per replica"},
          {"max_events", "100000000", "event cap per replica"}};
}

std::vector<KeyInfo> join(std::initializer_list<std::vector<KeyInfo>> parts) {
  std::vector<KeyInfo> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

BrwParams brw_params(const Settings& s) {
  BrwParams p;
  p.kappa = s.num("kappa", 0.0, 1e6);
  p.lambda = s.num("lambda", 0.0, 1e6);
  p.alpha = s.num("alpha", 0.0, 1e6);
  p.offspring = s.list("offspring", 0.0, 1.0);
  p.dim = static_cast<int>(s.integer("dim", 1, kMaxDim));
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("offspring", e.what());
  }
  return p;
}

Caps caps(const Settings& s) {
  Caps c;
  c.max_alive = s.count("max_alive", 1, kMaxCount);
  c.max_events = static_cast<std::uint64_t>(s.integer("max_events", 1, std::numeric_limits<std::int64_t>::max()));
  return c;
}

double z_score(double diff, double se) { return se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::copysign(kInf, diff)); }

int phase_rank(Phase p) { return p == Phase::subcritical ? 0 : p == Phase::critical_band ? 1 : 2; }

struct Output {
  std::vector<ResultRecord> records;
  RunStatus status = RunStatus::ok;

  ResultRecord& next() { return records.emplace_back(); }
  void fail_statistics() {
    if (status == RunStatus::ok) status = RunStatus::statistical_failure;
  }
};

using Runner = Output (*)(Settings&, const RunContext&);

// ---------------------------------------------------------------- annealed

Output run_annealed(Settings& s, const RunContext& ctx) {
  const auto kappas = s.list("kappa_list", 0.0, 1e6);
  const auto ts = s.list("t_list", 0.0, 1e3);
  const auto dims = s.list("dim_list", 1, kMaxDim);
  const double alpha = s.num("alpha", 0.0, 1e6);
  const auto n = s.count("n_samples", 1, kMaxCount);
  struct Cell {
    double kappa, t;
    int dim;
  };
  std::vector<Cell> cells;
  for (double d : dims) {
    if (d != std::floor(d)) throw ConfigError("dim_list", "dimensions must be integers");
    for (double k : kappas)
      for (double t : ts) cells.push_back({k, t, static_cast<int>(d)});
  }
  const auto est = parallel_map(cells.size(), ctx.threads, [&](std::size_t i) {
    return annealed_survival(cells[i].kappa, alpha, cells[i].dim, cells[i].t, n, derive_seed(s.seed(), "annealed", i));
  });
  Output out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const double target = std::exp(-alpha * cells[i].t);
    const double z = z_score(est[i].value - target, est[i].std_err);
    const bool ok = std::abs(z) <= 3.0;
    if (!ok) out.fail_statistics();
    out.next()
        .add("kappa", cells[i].kappa)
        .add("dim", cells[i].dim)
        .add("t", cells[i].t)
        .add("n_samples", est[i].n_samples)
        .add("estimate", est[i].value)
        .add("std_err", est[i].std_err)
        .add("target", target)
        .add("z", z)
        .add("within_3sigma", ok);
  }
  return out;
}

// ---------------------------------------------------------------- lyapunov

Output run_lyapunov(Settings& s, const RunContext& ctx) {
  const auto kappas = s.list("kappa_list", 0.0, 1e6);
  LyapunovOptions opt;
  opt.alpha = s.num("alpha", 0.0, 1e6);
  opt.dim = static_cast<int>(s.integer("dim", 1, kMaxDim));
  opt.t = s.num("t", 1e-9, 1e4);
  opt.n_env = s.count("n_env", 2, kMaxCount);
  opt.n_walkers = s.count("n_walkers", 1, kMaxCount);
  opt.method = s.choice("method", {"forward", "walkers"}) == "forward" ? SurvivalMethod::forward_equation
                                                                        : SurvivalMethod::walkers;
  opt.threads = ctx.threads;
  const auto pin_mode = s.choice("pinned", {"no", "yes", "both"});
  const auto t_list = s.list("t_list", 1e-9, 1e4, true);
  std::vector<bool> pins;
  if (pin_mode != "yes") pins.push_back(false);
  if (pin_mode != "no") pins.push_back(true);

  Output out;
  for (std::size_t ki = 0; ki < kappas.size(); ++ki) {
    opt.kappa = kappas[ki];
    // Pinned and unpinned runs share environments.
    const std::uint64_t seed = derive_seed(s.seed(), "lyapunov", ki);
    for (bool pin : pins) {
      opt.pinned = pin;
      const auto e = estimate_lyapunov(opt, seed);
      out.next()
          .add("kind", "rate")
          .add("kappa", opt.kappa)
          .add("pinned", pin)
          .add("t", opt.t)
          .add("p_hat", e.p_hat)
          .add("std_err", e.std_err)
          .add("censor_fraction", e.censor_fraction)
          .add("dominated_by_censoring", e.dominated_by_censoring);
    }
    if (t_list.empty()) continue;
    for (bool pin : pins) {
      opt.pinned = pin;
      for (const auto& row : concentration_profile(opt, t_list, derive_seed(s.seed(), "lyapunov-profile", ki))) {
        out.next()
            .add("kind", "profile")
            .add("kappa", opt.kappa)
            .add("pinned", pin)
            .add("t", row.t)
            .add("mean_log", row.mean_log)
            .add("std_log", row.std_log)
            .add("std_log_err", row.std_log_err)
            .add("std_over_t", row.std_log / row.t)
            .add("std_over_t_err", row.std_log_err / row.t)
            .add("std_valid", row.std_valid)
            .add("censor_fraction", row.censor_fraction);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- brw-survival

Output run_brw_survival(Settings& s, const RunContext& ctx) {
  BrwParams p = brw_params(s);
  const double horizon = s.num("horizon", 0.0, 1e4);
  const auto n_reps = s.count("n_reps", 1, kMaxCount);
  auto lambdas = s.list("lambda_list", 0.0, 1e6, true);
  const bool grow = s.flag("growth");
  const double g_horizon = s.num("growth_horizon", 1e-9, 1e4);
  const auto g_reps = s.count("growth_reps", 1, kMaxCount);
  const bool listed = !lambdas.empty();
  if (!listed) lambdas.push_back(p.lambda);

  ReplicaOptions ro;
  ro.caps = caps(s);
  ro.threads = ctx.threads;
  // One bound for the whole list couples the runs across lambda.
  ro.branch_rate_bound = *std::max_element(lambdas.begin(), lambdas.end());
  const std::uint64_t seed = derive_seed(s.seed(), "brw-survival");

  Output out;
  std::vector<std::size_t> survived;
  for (double lam : lambdas) {
    p.lambda = lam;
    const auto f = survival_frequency(p, horizon, n_reps, seed, ro);
    survived.push_back(f.survived);
    out.next()
        .add("kind", "survival")
        .add("lambda", lam)
        .add("growth_exponent", p.growth_exponent())
        .add("horizon", horizon)
        .add("n_reps", f.n_reps)
        .add("survived", f.survived)
        .add("capped", f.capped)
        .add("survival", f.estimate.value)
        .add("std_err", f.estimate.std_err);
  }
  if (listed && lambdas.size() > 1) {
    // Pathwise monotonicity holds only without childless branchings.
    const bool checked = p.offspring.front() == 0.0 && std::is_sorted(lambdas.begin(), lambdas.end());
    const bool holds = std::is_sorted(survived.begin(), survived.end());
    if (checked && !holds) out.fail_statistics();
    out.next().add("kind", "monotone").add("checked", checked).add("nondecreasing", holds);
  }
  if (grow) {
    GrowthOptions go;
    go.replicas = ro;
    for (double lam : lambdas) {
      p.lambda = lam;
      const auto g = growth_rate(p, g_horizon, g_reps, derive_seed(s.seed(), "brw-growth"), go);
      auto& r = out.next().add("kind", "growth").add("lambda", lam).add("horizon", g_horizon);
      if (g) {
        r.add("slope", g->slope).add("std_err", g->std_err).add("n_survivors", g->n_survivors).add("capped", g->n_capped);
      } else {
        r.add("slope", std::nan("")).add("std_err", std::nan("")).add("n_survivors", 0).add("capped", 0);
      }
      r.add("n_reps", g_reps);
    }
  }
  return out;
}

// ---------------------------------------------------------------- moment-check / embed

struct FieldZ {
  double lhs, lhs_se, rhs, rhs_se, z;
  std::size_t capped;
};

void summarize_fields(Output& out, const std::vector<FieldZ>& rows) {
  std::size_t within = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool ok = std::abs(rows[i].z) <= 3.0;
    within += ok;
    out.next()
        .add("kind", "field")
        .add("field", i)
        .add("lhs", rows[i].lhs)
        .add("lhs_se", rows[i].lhs_se)
        .add("rhs", rows[i].rhs)
        .add("rhs_se", rows[i].rhs_se)
        .add("z", rows[i].z)
        .add("within_3sigma", ok)
        .add("capped", rows[i].capped);
  }
  const double frac = static_cast<double>(within) / static_cast<double>(rows.size());
  const bool pass = frac >= 0.95;
  if (!pass) out.fail_statistics();
  out.next().add("kind", "summary").add("n_fields", rows.size()).add("fraction_within_3sigma", frac).add("pass", pass);
}

Output run_moment_check(Settings& s, const RunContext& ctx) {
  const BrwParams p = brw_params(s);
  const double t = s.num("t", 0.0, 1e3);
  const auto n_fields = s.count("n_fields", 1, kMaxCount);
  const auto n_reps = s.count("n_reps", 2, kMaxCount);
  const auto n_walkers = s.count("n_walkers", 2, kMaxCount);
  ReplicaOptions ro{caps(s), ctx.threads};
  std::vector<FieldZ> rows;
  for (std::size_t i = 0; i < n_fields; ++i) {
    const DisasterField field(derive_seed(s.seed(), "moment-field", i), p.alpha, p.dim);
    const auto m = moment_identity_check(p, field, t, n_reps, n_walkers, derive_seed(s.seed(), "moment-check", i), ro);
    rows.push_back({m.lhs, m.lhs_se, m.rhs, m.rhs_se, m.z, m.capped});
  }
  Output out;
  summarize_fields(out, rows);
  return out;
}

Output run_embed(Settings& s, const RunContext& ctx) {
  const BrwParams p = brw_params(s);
  const auto mode = s.choice("mode", {"identity", "offspring", "independence", "bound"});
  const double T = s.num("T", 0.0, 1e3);
  const auto n_fields = s.count("n_fields", 1, kMaxCount);
  const auto n_reps = s.count("n_reps", 2, kMaxCount);
  const auto n_walkers = s.count("n_walkers", 2, kMaxCount);
  const int k = static_cast<int>(s.integer("k", 1, 1000));
  ReplicaOptions ro{caps(s), ctx.threads};
  auto field = [&](std::size_t i) { return DisasterField(derive_seed(s.seed(), "embed-field", i), p.alpha, p.dim); };
  auto seed_of = [&](std::size_t i) { return derive_seed(s.seed(), "embed-" + mode, i); };

  Output out;
  if (mode == "identity") {
    std::vector<FieldZ> rows;
    for (std::size_t i = 0; i < n_fields; ++i) {
      const auto c = identity_3_8_check(field(i), p, T, n_reps, n_walkers, seed_of(i), ro);
      rows.push_back({c.lhs, c.lhs_se, c.rhs, c.rhs_se, c.z, 0});
    }
    summarize_fields(out, rows);
  } else if (mode == "offspring") {
    for (std::size_t i = 0; i < n_fields; ++i) {
      const auto o = sample_offspring(field(i), p, T, k, n_reps, seed_of(i), ro);
      out.next()
          .add("kind", "offspring")
          .add("field", i)
          .add("k", o.k)
          .add("n_reps", o.n_reps)
          .add("mean", o.mean)
          .add("std_err", o.std_err)
          .add("q0", o.pmf.empty() ? 1.0 : o.pmf.front())
          .add("max_count", o.pmf.empty() ? 0 : o.pmf.size() - 1)
          .add("capped", o.capped);
    }
  } else if (mode == "independence") {
    if (n_fields < 4) throw ConfigError("n_fields", "independence needs at least 4 fields");
    const auto r = offspring_independence(p, T, n_fields, n_reps, derive_seed(s.seed(), "embed-independence"), ctx.threads);
    out.next()
        .add("kind", "independence")
        .add("correlation", r.correlation)
        .add("correlation_p", r.correlation_p)
        .add("homogeneity_statistic", r.homogeneity.statistic)
        .add("homogeneity_dof", r.homogeneity.dof)
        .add("homogeneity_p", r.homogeneity.p_value)
        .add("ks_p", r.ks_p)
        .add("mean_log_nonextinction", r.mean_log_nonextinction)
        .add("degenerate_fraction", r.degenerate_fraction);
  } else {
    std::size_t violated = 0;
    for (std::size_t i = 0; i < n_fields; ++i) {
      const auto b = nonextinction_bound_check(field(i), p, T, n_reps, n_walkers, seed_of(i), ro);
      violated += b.violated;
      out.next()
          .add("kind", "field")
          .add("field", i)
          .add("lhs", b.lhs)
          .add("lhs_se", b.lhs_se)
          .add("rhs", b.rhs)
          .add("rhs_se", b.rhs_se)
          .add("violated", b.violated);
    }
    const double frac = static_cast<double>(violated) / static_cast<double>(n_fields);
    const bool pass = frac <= 0.05;
    if (!pass) out.fail_statistics();
    out.next().add("kind", "summary").add("n_fields", n_fields).add("fraction_violated", frac).add("pass", pass);
  }
  return out;
}

// ---------------------------------------------------------------- phase / sweep

struct PhaseKnobs {
  double t_lyap;
  std::size_t n_env, n_walkers, n_reps;
  double horizon;
  ReplicaOptions ro;
};

PhaseKnobs phase_knobs(const Settings& s, const RunContext& ctx) {
  PhaseKnobs k;
  k.t_lyap = s.num("t_lyap", 1e-9, 1e4);
  k.n_env = s.count("n_env", 2, kMaxCount);
  k.n_walkers = s.count("n_walkers", 1, kMaxCount);
  k.horizon = s.num("horizon", 0.0, 1e4);
  k.n_reps = s.count("n_reps", 1, kMaxCount);
  k.ro.caps = caps(s);
  k.ro.threads = ctx.threads;
  return k;
}

struct PhaseCell {
  PhaseVerdict verdict;
  SurvivalFrequency survival;
};

// Column ki of a sweep and the single phase run use the same seeds, so a 1 x 1
// sweep reproduces the phase run.
PhaseCell phase_cell(const BrwParams& p, PhaseKnobs k, std::uint64_t seed, std::size_t column, double bound) {
  PhaseCell c;
  c.verdict = phase_classify(p, k.t_lyap, k.n_env, k.n_walkers, derive_seed(seed, "phase-lyap", column), k.ro.threads);
  k.ro.branch_rate_bound = bound;
  c.survival = survival_frequency(p, k.horizon, k.n_reps, derive_seed(seed, "phase-survival", column), k.ro);
  return c;
}

void add_phase_fields(ResultRecord& r, const BrwParams& p, const PhaseCell& c) {
  r.add("kappa", p.kappa)
      .add("lambda", p.lambda)
      .add("growth_exponent", p.growth_exponent())
      .add("verdict", std::string(to_string(c.verdict.verdict)))
      .add("criterion", c.verdict.criterion)
      .add("criterion_se", c.verdict.std_err)
      .add("p_hat", c.verdict.p_hat)
      .add("censor_fraction", c.verdict.censor_fraction)
      .add("unreliable", c.verdict.unreliable)
      .add("survived", c.survival.survived)
      .add("capped", c.survival.capped)
      .add("n_reps", c.survival.n_reps)
      .add("survival", c.survival.estimate.value)
      .add("survival_se", c.survival.estimate.std_err);
}

Output run_phase(Settings& s, const RunContext& ctx) {
  const BrwParams p = brw_params(s);
  const auto k = phase_knobs(s, ctx);
  const bool grow = s.flag("growth");
  const double g_horizon = s.num("growth_horizon", 1e-9, 1e4);
  const auto g_reps = s.count("growth_reps", 1, kMaxCount);
  const auto cell = phase_cell(p, k, s.seed(), 0, p.lambda);
  Output out;
  auto& r = out.next();
  add_phase_fields(r, p, cell);
  r.add("horizon", k.horizon);
  if (grow) {
    GrowthOptions go;
    go.replicas = k.ro;
    const auto g = growth_rate(p, g_horizon, g_reps, derive_seed(s.seed(), "phase-growth"), go);
    r.add("growth_horizon", g_horizon)
        .add("slope", g ? g->slope : std::nan(""))
        .add("slope_se", g ? g->std_err : std::nan(""))
        .add("growth_survivors", g ? g->n_survivors : 0)
        .add("growth_capped", g ? g->n_capped : 0);
  }
  return out;
}

Output run_sweep(Settings& s, const RunContext& ctx) {
  const auto grid = s.choice("grid", {"kl", "p"});
  Output out;
  if (grid == "p") {
    const auto ps = s.list("p_list", 0.0, 1.0);
    const int K = static_cast<int>(s.integer("K", 0, 100000));
    const auto n_reps = s.count("n_reps", 1, kMaxCount);
    const auto res = independent_perc(ps, K, n_reps, derive_seed(s.seed(), "sweep-perc"), ctx.threads);
    for (const auto& r : res)
      out.next().add("kind", "cell").add("p", r.p).add("K", K).add("survival", r.estimate.value).add("std_err", r.estimate.std_err);
    bool holds = true;
    for (std::size_t i = 1; i < ps.size(); ++i)
      if (ps[i] >= ps[i - 1] && res[i].estimate.value < res[i - 1].estimate.value) holds = false;
    if (!holds) out.fail_statistics();
    out.next().add("kind", "monotone").add("checked", true).add("nondecreasing", holds);
    return out;
  }
  BrwParams p = brw_params(s);
  const auto kappas = s.list("kappa_list", 0.0, 1e6);
  auto lambdas = s.list("lambda_list", 0.0, 1e6);
  std::sort(lambdas.begin(), lambdas.end());
  const auto k = phase_knobs(s, ctx);
  const double bound = lambdas.back();
  const bool monotone_expected = p.offspring.front() == 0.0;
  for (std::size_t ki = 0; ki < kappas.size(); ++ki) {
    p.kappa = kappas[ki];
    std::vector<PhaseCell> column;
    for (double lam : lambdas) {
      p.lambda = lam;
      // The survival runs of one column share a seed and a rate bound.
      column.push_back(phase_cell(p, k, s.seed(), ki, lambdas.size() == 1 ? lam : bound));
      auto& r = out.next().add("kind", "cell");
      add_phase_fields(r, p, column.back());
    }
    bool surv_ok = true, verdict_ok = true;
    double first_super = std::nan(""), last_sub = std::nan("");
    for (std::size_t i = 0; i < column.size(); ++i) {
      if (i > 0) {
        surv_ok = surv_ok && column[i].survival.survived >= column[i - 1].survival.survived;
        verdict_ok = verdict_ok && phase_rank(column[i].verdict.verdict) >= phase_rank(column[i - 1].verdict.verdict);
      }
      if (column[i].verdict.verdict == Phase::subcritical) last_sub = lambdas[i];
      if (column[i].verdict.verdict == Phase::supercritical && std::isnan(first_super)) first_super = lambdas[i];
    }
    if ((monotone_expected && !surv_ok) || !verdict_ok) out.fail_statistics();
    out.next()
        .add("kind", "column")
        .add("kappa", p.kappa)
        .add("last_subcritical_lambda", last_sub)
        .add("first_supercritical_lambda", first_super)
        .add("boundary_crossed", !std::isnan(last_sub) && !std::isnan(first_super))
        .add("verdicts_monotone", verdict_ok)
        .add("survival_monotone_checked", monotone_expected)
        .add("survival_nondecreasing", surv_ok);
  }
  return out;
}

// ---------------------------------------------------------------- boxes-fkg

Output run_boxes_fkg(Settings& s, const RunContext& ctx) {
  const BrwParams p = brw_params(s);
  const auto mode = s.choice("mode", {"suite", "corollary49"});
  SpaceTimeBox box;
  box.dim = p.dim;
  box.L = static_cast<int>(s.integer("L", 1, 100000));
  box.T = s.num("T", 1e-9, 1e4);
  const auto n_reps = s.count("n_reps", 2, kMaxCount);
  const ReplicaOptions ro{caps(s), ctx.threads};
  Output out;
  if (mode == "suite") {
    const auto batches = s.count("batches", 1, kMaxCount);
    const auto pairs = s.choice("pairs", {"diagonal", "all"});
    if (box.L < 2) throw ConfigError("L", "the suite starts a tree at e1, which needs L >= 2");
    const auto eta1 = point_configuration(Site{});
    Site e1{};
    e1[0] = 1;
    const auto eta2 = point_configuration(e1);
    const auto suite = fkg_functional_suite(p.dim);
    std::size_t n_est = 0, below = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto est = fkg_suite_test(p, eta1, eta2, box, suite, n_reps, derive_seed(s.seed(), "boxes-fkg", b), ro);
      for (std::size_t i = 0; i < suite.size(); ++i)
        for (std::size_t j = 0; j < suite.size(); ++j) {
          if (pairs == "diagonal" && i != j) continue;
          const auto& e = est[i * suite.size() + j];
          const bool low = e.cov < -3.0 * e.std_err;
          ++n_est;
          below += low;
          out.next()
              .add("kind", "estimate")
              .add("batch", b)
              .add("f", suite[i].name)
              .add("g", suite[j].name)
              .add("cov", e.cov)
              .add("std_err", e.std_err)
              .add("z", z_score(e.cov, e.std_err))
              .add("mean_f", e.mean_f)
              .add("mean_g", e.mean_g)
              .add("capped", e.capped)
              .add("below_minus_3sigma", low);
        }
    }
    if (below > 0) out.fail_statistics();
    out.next().add("kind", "summary").add("n_estimates", n_est).add("below_minus_3sigma", below).add("pass", below == 0);
    return out;
  }
  const auto K = s.integer("K", 0, kMaxCount);
  const auto K2 = s.integer("K2", 0, kMaxCount);
  const int S = static_cast<int>(s.integer("S", 0, 64));
  const auto rep =
      corollary49_check(p, point_configuration(Site{}), box, K, K2, S, n_reps, derive_seed(s.seed(), "boxes-products"), ro);
  for (const auto& b : rep.bounds) {
    if (b.violated) out.fail_statistics();
    out.next()
        .add("kind", "bound")
        .add("name", b.name)
        .add("lhs", b.lhs)
        .add("lhs_se", b.lhs_se)
        .add("rhs_prob", b.rhs_prob)
        .add("rhs_prob_se", b.rhs_prob_se)
        .add("additive", b.additive)
        .add("additive_displayed", b.additive_displayed)
        .add("violated", b.violated)
        .add("violated_displayed", b.violated_displayed)
        .add("n_reps", rep.n_reps)
        .add("capped", rep.capped);
  }
  return out;
}

// ---------------------------------------------------------------- perc

Output run_perc(Settings& s, const RunContext& ctx) {
  const auto mode = s.choice("mode", {"independent", "brw"});
  s.fill("K", mode == "independent" ? "50" : "4");
  s.fill("n_reps", mode == "independent" ? "2000" : "400");
  const auto n_reps = s.count("n_reps", 1, kMaxCount);
  const int K = static_cast<int>(s.integer("K", 0, 100000));
  Output out;
  if (mode == "independent") {
    const auto ps = s.list("p_list", 0.0, 1.0);
    const auto res = independent_perc(ps, K, n_reps, derive_seed(s.seed(), "perc-independent"), ctx.threads);
    bool holds = true;
    for (std::size_t i = 0; i < res.size(); ++i) {
      if (i > 0 && ps[i] >= ps[i - 1] && res[i].estimate.value < res[i - 1].estimate.value) holds = false;
      out.next().add("kind", "survival").add("p", res[i].p).add("K", K).add("survival", res[i].estimate.value).add("std_err", res[i].estimate.std_err);
    }
    if (!holds) out.fail_statistics();
    out.next().add("kind", "monotone").add("checked", true).add("nondecreasing", holds);
    return out;
  }
  const BrwParams p = brw_params(s);
  PercOptions opt;
  opt.L = static_cast<int>(s.integer("L", 1, 100000));
  opt.T = s.num("T", 1e-9, 1e4);
  opt.n = static_cast<int>(s.integer("n", 0, 100000));
  opt.S = static_cast<int>(s.integer("S", 1, 100000));
  opt.K = K;
  opt.construction = s.choice("construction", {"truncated", "global"}) == "truncated" ? PercConstruction::truncated
                                                                                      : PercConstruction::global;
  opt.caps = caps(s);
  const int row = static_cast<int>(s.integer("probe_row", 0, K));
  const int dist = static_cast<int>(s.integer("probe_distance", 0, K));
  if (dist > row) throw ConfigError("probe_distance", "must not exceed probe_row");
  const std::string dump = s.raw("lattice_out");

  const std::uint64_t seed = derive_seed(s.seed(), "perc-brw");
  const auto lattices = parallel_map(n_reps, ctx.threads, [&](std::size_t r) { return brw_lattice_replica(p, opt, seed, r); });
  std::size_t reached = 0, capped = 0;
  for (const auto& lat : lattices) {
    reached += lat.reaches_row(K);
    capped += std::any_of(lat.row_capped.begin(), lat.row_capped.end(), [](char c) { return c != 0; });
  }
  const double frac = static_cast<double>(reached) / static_cast<double>(n_reps);
  out.next()
      .add("kind", "survival")
      .add("K", K)
      .add("n_reps", n_reps)
      .add("reached", reached)
      .add("capped", capped)
      .add("survival", frac)
      .add("std_err", binomial_std_error(frac, n_reps));
  if (dist >= 1) {
    std::optional<DependenceProbe> probe;
    std::string error;
    try {
      probe = dependence_range_probe([&](std::size_t r) { return lattices[r]; }, row, dist, n_reps, 1);
    } catch (const std::runtime_error& e) {
      // Too few attempted pairs; capped rows do not count as attempted.
      error = e.what();
    }
    const bool within = probe && std::abs(probe->correlation) <= 3.0 * probe->std_err;
    // The untruncated construction is a contrast run and may fail the check.
    if (opt.construction == PercConstruction::truncated && !within) out.fail_statistics();
    auto& r = out.next().add("kind", "probe").add("row", row).add("distance", dist);
    if (probe) {
      r.add("n_pairs", probe->n_pairs)
          .add("correlation", probe->correlation)
          .add("std_err", probe->std_err)
          .add("mean_first", probe->mean_first)
          .add("mean_second", probe->mean_second);
    } else {
      r.add("error", error);
    }
    r.add("within_3sigma", within);
  }
  if (!dump.empty() && !lattices.empty()) {
    std::ofstream f(dump);
    if (!f) throw ConfigError("lattice_out", "cannot open " + dump);
    write_lattice(f, lattices.front());
  }
  return out;
}

// ---------------------------------------------------------------- verify

Output run_verify(Settings& s, const RunContext&) {
  Output out;
  for (const auto& r : run_oracle_suites(s.seed())) {
    if (!r.passed) out.status = RunStatus::oracle_failure;
    out.next()
        .add("group", r.group)
        .add("suite", r.name)
        .add("passed", r.passed)
        .add("checks", r.checks)
        .add("failures", r.failures)
        .add("detail", r.detail);
  }
  return out;
}

struct Entry {
  ExperimentInfo info;
  Runner run;
};

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back({{"annealed",
                  "environment-averaged survival of one walker against exp(-alpha t)",
                  {{"kappa_list", "0.5,2,8", "jump rates"},
                   {"t_list", "0.5,1,2", "times"},
                   {"dim_list", "1,2", "dimensions"},
                   {"alpha", "1", "disaster rate"},
                   {"n_samples", "100000", "walkers per cell, each in a fresh environment"}}},
                 run_annealed});
    e.push_back({{"lyapunov",
                  "quenched decay rate log S(t) / t over environments, optional spread profile",
                  {{"kappa_list", "0.5,2,8", "jump rates"},
                   {"alpha", "1", "disaster rate"},
                   {"dim", "1", "lattice dimension"},
                   {"t", "20", "time horizon"},
                   {"n_env", "200", "environments"},
                   {"n_walkers", "10000", "walkers per environment (walkers method)"},
                   {"method", "forward", "forward|walkers"},
                   {"pinned", "no", "no|yes|both"},
                   {"t_list", "", "times for the spread profile (empty: none)"}}},
                 run_lyapunov});
    e.push_back({{"brw-survival",
                  "survival frequency of the branching walk, optional lambda list and growth fit",
                  join({brw_keys("8", "2", "0,0,1"),
                        {{"horizon", "10", "time horizon"},
                         {"n_reps", "1000", "replicas (fresh environment each)"},
                         {"lambda_list", "", "lambda values sharing one rate bound (empty: lambda)"},
                         {"growth", "no", "also fit the growth rate"},
                         {"growth_horizon", "12", "horizon of the growth fit"},
                         {"growth_reps", "100", "replicas of the growth fit"}},
                        cap_keys("20000")})},
                 run_brw_survival});
    e.push_back({{"moment-check",
                  "mean population against exp(lambda (m-1) t) S(t), field by field",
                  join({brw_keys("1", "1", "0.5,0,0.5"),
                        {{"t", "2", "time"},
                         {"n_fields", "50", "environments"},
                         {"n_reps", "20000", "trees per environment"},
                         {"n_walkers", "100000", "walkers per environment"}},
                        cap_keys("1000000")})},
                 run_moment_check});
    e.push_back({{"embed",
                  "embedded Galton-Watson process at the origin",
                  join({brw_keys("1", "1", "0.5,0,0.5"),
                        {{"mode", "identity", "identity|offspring|independence|bound"},
                         {"T", "2", "period"},
                         {"k", "1", "period index (offspring mode)"},
                         {"n_fields", "50", "environments"},
                         {"n_reps", "20000", "trees per environment"},
                         {"n_walkers", "100000", "walkers per environment"}},
                        cap_keys("1000000")})},
                 run_embed});
    e.push_back({{"phase",
                  "phase verdict from lambda (m-1) + p_hat with the survival frequency",
                  join({brw_keys("8", "2", "0,0,1"),
                        {{"t_lyap", "20", "horizon of the decay-rate estimate"},
                         {"n_env", "200", "environments for the decay rate"},
                         {"n_walkers", "10000", "walkers per environment (unused by the forward solver)"},
                         {"horizon", "50", "survival horizon"},
                         {"n_reps", "500", "survival replicas"},
                         {"growth", "no", "also fit the growth rate"},
                         {"growth_horizon", "12", "horizon of the growth fit"},
                         {"growth_reps", "100", "replicas of the growth fit"}},
                        cap_keys("10000")})},
                 run_phase});
    e.push_back({{"sweep",
                  "grid of phase verdicts over (kappa, lambda), or of percolation survival over p",
                  join({{{"grid", "kl", "kl|p"},
                         {"kappa_list", "0.5,2,8", "jump rates"},
                         {"lambda_list", "0.25,0.5,1,2", "branching rates"}},
                        brw_keys("1", "1", "0,0,1"),
                        {{"t_lyap", "20", "horizon of the decay-rate estimate"},
                         {"n_env", "100", "environments for the decay rate"},
                         {"n_walkers", "10000", "walkers per environment (unused by the forward solver)"},
                         {"horizon", "20", "survival horizon"},
                         {"n_reps", "300", "survival replicas per cell"},
                         {"p_list", "0.5,0.6,0.7,0.8,0.9,0.95", "site probabilities (grid p)"},
                         {"K", "50", "rows (grid p)"}},
                        cap_keys("5000")})},
                 run_sweep});
    e.push_back({{"boxes-fkg",
                  "positive correlation of exit counts in a shared environment, or the orthant product bounds",
                  join({brw_keys("2", "1", "0,0,1"),
                        {{"mode", "suite", "suite|corollary49"},
                         {"L", "3", "box half width"},
                         {"T", "1", "box duration"},
                         {"n_reps", "1000", "replicas per batch"},
                         {"batches", "20", "batches (suite mode)"},
                         {"pairs", "diagonal", "diagonal|all functional pairs (suite mode)"},
                         {"K", "0", "per-orthant threshold (corollary49 mode)"},
                         {"K2", "0", "second sum threshold (corollary49 mode)"},
                         {"S", "1", "scaling of the start configuration (corollary49 mode)"}},
                        cap_keys("100000")})},
                 run_boxes_fkg});
    e.push_back({{"perc",
                  "oriented percolation: independent reference or occupancy from the branching walk",
                  join({{{"mode", "independent", "independent|brw"},
                         {"p_list", "0.5,0.95", "site probabilities (independent)"},
                         {"K", "", "rows (default 50 independent, 4 brw)"},
                         {"n_reps", "", "lattices (default 2000 independent, 400 brw)"}},
                        brw_keys("4", "3", "0,0,1"),
                        {{"L", "2", "box half width"},
                         {"T", "0.5", "box time unit"},
                         {"n", "0", "radius of the copied block"},
                         {"S", "2", "S^2 particles per site make a copy"},
                         {"construction", "truncated", "truncated|global"},
                         {"probe_row", "4", "row of the dependence probe"},
                         {"probe_distance", "3", "distance of the probe (0: no probe)"},
                         {"lattice_out", "", "write the first lattice here"}},
                        cap_keys("20000")})},
                 run_perc});
    e.push_back({{"verify", "exact oracle suites: parity, orders and the product inequality", {}}, run_verify});
    return e;
  }();
  return entries;
}

const Entry& find_entry(const std::string& name) {
  for (const auto& e : registry())
    if (e.info.name == name) return e;
  throw ConfigError("experiment", "unknown experiment '" + name + "'");
}

}  // namespace

const std::vector<ExperimentInfo>& experiment_catalog() {
  static const std::vector<ExperimentInfo> infos = [] {
    std::vector<ExperimentInfo> v;
    for (const auto& e : registry()) v.push_back(e.info);
    return v;
  }();
  return infos;
}

const ExperimentInfo& find_experiment(const std::string& name) { return find_entry(name).info; }

RunOutput run_experiment(const std::string& name, const RunConfig& cfg, const RunContext& ctx) {
  const auto& entry = find_entry(name);
  Settings settings(entry.info, cfg);
  const auto start = std::chrono::steady_clock::now();
  Output body = entry.run(settings, ctx);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  RunOutput out;
  out.status = body.status;
  out.records.reserve(body.records.size());
  for (auto& r : body.records) {
    ResultRecord full;
    full.add("experiment", FieldValue(name));
    for (auto& f : r.fields) full.fields.push_back(std::move(f));
    if (ctx.timing) full.add("wall_seconds", wall);
    settings.echo(full);
    out.records.push_back(std::move(full));
  }
  return out;
}

}  // namespace brwd
