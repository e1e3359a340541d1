#pragma once

// Experiment harness: config ingestion, result tables with deterministic CSV
// serialization, optional SVG plots, and the five experiment runners exposed
// by the tvsplit-lab CLI. Every runner is a pure function of its validated
// config: identical configs produce byte-identical CSV output.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tvsplit/lowrank.hpp"
#include "tvsplit/shallownet.hpp"
#include "tvsplit/tvo.hpp"

namespace tvsplit {

inline constexpr int kConfigSchema = 1;
inline constexpr const char* kArtifactVersion = "0.1.0";

struct ConfigError : Error {
  using Error::Error;
};
struct MemoryGuard : Error {
  using Error::Error;
};
struct NumericalFailure : Error {
  using Error::Error;
};
struct HashMismatch : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Config files: line-oriented "key = value" under [section] headers
// ---------------------------------------------------------------------------

struct ConfigSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }
};

struct ConfigFile {
  std::vector<ConfigSection> sections;

  const ConfigSection* find(const std::string& name) const {
    for (const ConfigSection& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  }
};

namespace detail {

inline std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline ConfigFile parse_config_text(const std::string& text) {
  ConfigFile file;
  ConfigSection* current = nullptr;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::strip(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      const std::string name = detail::strip(line.substr(1, line.size() - 2));
      if (name.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
      if (file.find(name))
        throw ConfigError("config line " + std::to_string(lineno) + ": duplicate section [" +
                          name + "]");
      file.sections.push_back({name, {}});
      current = &file.sections.back();
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    if (!current)
      throw ConfigError("config line " + std::to_string(lineno) + ": entry before any [section]");
    const std::string key = detail::strip(line.substr(0, eq));
    const std::string value = detail::strip(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (current->find(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                        "' in [" + current->name + "]");
    current->entries.emplace_back(key, value);
  }
  return file;
}

inline ConfigFile read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// ---------------------------------------------------------------------------
// Typed experiment configs
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  std::map<std::string, std::uint64_t> uints;
  std::map<std::string, double> reals;
  std::map<std::string, bool> flags;
  std::map<std::string, std::string> strings;
  std::map<std::string, std::vector<std::uint64_t>> uint_lists;
  std::map<std::string, std::vector<double>> real_lists;

  std::uint64_t u(const std::string& k) const { return fetch(uints, k); }
  double r(const std::string& k) const { return fetch(reals, k); }
  bool flag(const std::string& k) const { return fetch(flags, k); }
  const std::string& str(const std::string& k) const { return fetch(strings, k); }
  const std::vector<std::uint64_t>& ulist(const std::string& k) const {
    return fetch(uint_lists, k);
  }
  const std::vector<double>& rlist(const std::string& k) const { return fetch(real_lists, k); }

 private:
  template <class M>
  static const typename M::mapped_type& fetch(const M& m, const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) throw ConfigError("internal: config key '" + k + "' not loaded");
    return it->second;
  }
};

namespace detail {

enum class KeyKind { uint_scalar, real_scalar, boolean, text, uint_list, real_list };

struct KeySpec {
  const char* name;
  KeyKind kind;
  bool required = true;
  const char* preset = nullptr;  // textual default when not required
  bool positive = false;         // scalars: > 0 required; lists: every entry
};

inline const std::vector<KeySpec>& experiment_schema(const std::string& experiment) {
  static const std::vector<KeySpec> gap = {
      {"n_train", KeyKind::uint_scalar, true, nullptr, true},
      {"maps", KeyKind::uint_scalar, true, nullptr, true},
      {"feature_dim", KeyKind::uint_scalar, true, nullptr, true},
      {"input_dim", KeyKind::uint_scalar, true, nullptr, true},
      {"grid", KeyKind::uint_scalar, true, nullptr, true},
      {"n_val", KeyKind::uint_list, true, nullptr, true},
      {"trials", KeyKind::uint_scalar, true, nullptr, true},
      {"test_samples", KeyKind::uint_scalar, true, nullptr, true},
      {"noise", KeyKind::real_scalar, true, nullptr, false},
      {"ridge", KeyKind::real_scalar, true, nullptr, false},
  };
  static const std::vector<KeySpec> rank1 = {
      {"n", KeyKind::uint_scalar, true, nullptr, true},
      {"gamma", KeyKind::real_list, true, nullptr, true},
      {"h", KeyKind::uint_list, true, nullptr, true},
      {"trials", KeyKind::uint_scalar, true, nullptr, true},
      {"noise", KeyKind::real_scalar, true, nullptr, false},
      {"stage2", KeyKind::boolean, false, "false", false},
      {"memory_cap", KeyKind::uint_scalar, false, "20000000", true},
  };
  static const std::vector<KeySpec> concentration = {
      {"widths", KeyKind::uint_list, true, nullptr, true},
      {"samples", KeyKind::uint_scalar, true, nullptr, true},
      {"input_dim", KeyKind::uint_scalar, true, nullptr, true},
      {"grid", KeyKind::uint_scalar, true, nullptr, true},
      {"family", KeyKind::text, true, nullptr, false},
      {"mc_samples", KeyKind::uint_scalar, true, nullptr, true},
      {"c0", KeyKind::real_scalar, true, nullptr, true},
  };
  static const std::vector<KeySpec> lipschitz = {
      {"network", KeyKind::text, false, "shallow", false},
      {"widths", KeyKind::uint_list, true, nullptr, true},
      {"dalpha", KeyKind::real_list, true, nullptr, true},  // zero steps rejected
      {"trials", KeyKind::uint_scalar, true, nullptr, true},
      {"samples", KeyKind::uint_scalar, true, nullptr, true},
      {"heldout", KeyKind::uint_scalar, true, nullptr, true},
      {"input_dim", KeyKind::uint_scalar, true, nullptr, true},
      {"family", KeyKind::text, true, nullptr, false},
      {"alpha", KeyKind::real_list, true, nullptr, false},
      {"direction", KeyKind::real_list, true, nullptr, false},
      {"eta_scale", KeyKind::real_scalar, true, nullptr, true},
      {"steps", KeyKind::uint_scalar, true, nullptr, true},
  };
  static const std::vector<KeySpec> tvo_gen = {
      {"width", KeyKind::uint_scalar, true, nullptr, true},
      {"n_train", KeyKind::uint_scalar, true, nullptr, true},
      {"n_val", KeyKind::uint_scalar, true, nullptr, true},
      {"n_test", KeyKind::uint_scalar, true, nullptr, true},
      {"input_dim", KeyKind::uint_scalar, true, nullptr, true},
      {"grid", KeyKind::uint_scalar, true, nullptr, true},
      {"family", KeyKind::text, true, nullptr, false},
      {"c0", KeyKind::real_scalar, true, nullptr, true},
      {"eta_scale", KeyKind::real_scalar, true, nullptr, true},
      {"steps", KeyKind::uint_scalar, true, nullptr, true},
  };
  if (experiment == "gap") return gap;
  if (experiment == "rank1") return rank1;
  if (experiment == "concentration") return concentration;
  if (experiment == "lipschitz") return lipschitz;
  if (experiment == "tvo-gen") return tvo_gen;
  throw ConfigError("unknown experiment: " + experiment);
}

inline std::uint64_t parse_uint(const std::string& v, const std::string& where) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(where + ": expected a nonnegative integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& v, const std::string& where) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(where + ": expected a real number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(where + ": expected true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    std::size_t comma = v.find(',', start);
    if (comma == std::string::npos) comma = v.size();
    out.push_back(strip(v.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string format_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, p);
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig load_experiment_config(const ConfigFile& file,
                                               const std::string& experiment) {
  const ConfigSection* meta = file.find("tvsplit");
  if (!meta) throw ConfigError("config is missing the [tvsplit] section");
  for (const auto& [k, v] : meta->entries) {
    if (k != "schema") throw ConfigError("[tvsplit] has unknown key '" + k + "'");
    if (detail::parse_uint(v, "[tvsplit] schema") != static_cast<std::uint64_t>(kConfigSchema))
      throw ConfigError("unsupported config schema '" + v + "' (this build reads schema " +
                        std::to_string(kConfigSchema) + ")");
  }
  if (!meta->find("schema")) throw ConfigError("[tvsplit] is missing the schema key");

  const std::vector<detail::KeySpec>& schema = detail::experiment_schema(experiment);
  const ConfigSection* sec = file.find(experiment);
  if (!sec) throw ConfigError("config has no [" + experiment + "] section");

  ExperimentConfig cfg;
  cfg.experiment = experiment;

  auto known = [&](const std::string& k) {
    if (k == "seed" || k == "output_dir") return true;
    for (const detail::KeySpec& ks : schema)
      if (k == ks.name) return true;
    return false;
  };
  for (const auto& [k, v] : sec->entries)
    if (!known(k)) throw ConfigError("[" + experiment + "] has unknown key '" + k + "'");

  const std::string* seed = sec->find("seed");
  if (!seed) throw ConfigError("[" + experiment + "] is missing the seed key");
  cfg.seed = detail::parse_uint(*seed, "[" + experiment + "] seed");
  if (const std::string* od = sec->find("output_dir")) cfg.output_dir = *od;

  for (const detail::KeySpec& ks : schema) {
    const std::string where = "[" + experiment + "] " + ks.name;
    const std::string* raw = sec->find(ks.name);
    std::string value;
    if (raw) {
      value = *raw;
    } else if (!ks.required) {
      value = ks.preset;
    } else {
      throw ConfigError(where + ": required key missing");
    }
    switch (ks.kind) {
      case detail::KeyKind::uint_scalar: {
        const std::uint64_t v = detail::parse_uint(value, where);
        if (ks.positive && v == 0) throw ConfigError(where + ": must be >= 1");
        cfg.uints[ks.name] = v;
        break;
      }
      case detail::KeyKind::real_scalar: {
        const double v = detail::parse_real(value, where);
        if (ks.positive && !(v > 0.0)) throw ConfigError(where + ": must be > 0");
        if (!ks.positive && !(v >= 0.0)) throw ConfigError(where + ": must be >= 0");
        cfg.reals[ks.name] = v;
        break;
      }
      case detail::KeyKind::boolean:
        cfg.flags[ks.name] = detail::parse_bool(value, where);
        break;
      case detail::KeyKind::text:
        if (value.empty()) throw ConfigError(where + ": must not be empty");
        cfg.strings[ks.name] = value;
        break;
      case detail::KeyKind::uint_list: {
        std::vector<std::uint64_t> out;
        for (const std::string& item : detail::split_list(value)) {
          const std::uint64_t v = detail::parse_uint(item, where);
          if (ks.positive && v == 0) throw ConfigError(where + ": entries must be >= 1");
          out.push_back(v);
        }
        if (out.empty()) throw ConfigError(where + ": list must not be empty");
        cfg.uint_lists[ks.name] = std::move(out);
        break;
      }
      case detail::KeyKind::real_list: {
        std::vector<double> out;
        for (const std::string& item : detail::split_list(value)) {
          const double v = detail::parse_real(item, where);
          if (ks.positive && !(v > 0.0)) throw ConfigError(where + ": entries must be > 0");
          out.push_back(v);
        }
        if (out.empty()) throw ConfigError(where + ": list must not be empty");
        cfg.real_lists[ks.name] = std::move(out);
        break;
      }
    }
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path,
                                               const std::string& experiment) {
  return load_experiment_config(read_config_file(path), experiment);
}

// Canonical hash over everything that affects the science: experiment name,
// schema, seed, and the sorted experiment parameters. output_dir is an
// environment detail and deliberately excluded.
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> canon;
  for (const auto& [k, v] : cfg.uints) canon[k] = std::to_string(v);
  for (const auto& [k, v] : cfg.reals) canon[k] = detail::format_real(v);
  for (const auto& [k, v] : cfg.flags) canon[k] = v ? "true" : "false";
  for (const auto& [k, v] : cfg.strings) canon[k] = v;
  for (const auto& [k, v] : cfg.uint_lists) {
    std::string joined;
    for (std::uint64_t x : v) joined += std::to_string(x) + ",";
    canon[k] = joined;
  }
  for (const auto& [k, v] : cfg.real_lists) {
    std::string joined;
    for (double x : v) joined += detail::format_real(x) + ",";
    canon[k] = joined;
  }
  std::uint64_t h = detail::fnv1a64("tvsplit.schema=" + std::to_string(kConfigSchema));
  h = detail::fnv1a64("experiment=" + cfg.experiment + "\n", h);
  h = detail::fnv1a64("seed=" + std::to_string(cfg.seed) + "\n", h);
  for (const auto& [k, v] : canon) h = detail::fnv1a64(k + "=" + v + "\n", h);
  return h;
}

// ---------------------------------------------------------------------------
// Result tables and CSV round-tripping
// ---------------------------------------------------------------------------

using Cell = std::variant<double, std::string>;

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::string experiment;
  std::uint64_t config_hash = 0;
  std::string artifact_version = kArtifactVersion;
  double wall_clock_seconds = 0.0;  // informational only; never serialized

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns.size())
      throw DimensionMismatch("result table: row width does not match columns");
    rows.push_back(std::move(row));
  }
};

namespace detail {

inline void check_csv_text(const std::string& s) {
  for (char c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '#')
      throw InvalidArgument("csv cell/name contains a delimiter byte: '" + s + "'");
}

inline std::string cell_text(const Cell& c) {
  if (std::holds_alternative<double>(c)) return format_real(std::get<double>(c));
  const std::string& s = std::get<std::string>(c);
  check_csv_text(s);
  return s;
}

}  // namespace detail

inline std::string render_csv(const ResultTable& table) {
  std::string out;
  detail::check_csv_text(table.experiment);
  out += "# tvsplit-lab," + table.artifact_version + "\n";
  out += "# experiment," + table.experiment + "\n";
  out += "# config_hash," + detail::hex64(table.config_hash) + "\n";
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    detail::check_csv_text(table.columns[c]);
    out += table.columns[c];
    out += (c + 1 == table.columns.size()) ? '\n' : ',';
  }
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += detail::cell_text(row[c]);
      out += (c + 1 == row.size()) ? '\n' : ',';
    }
  }
  return out;
}

inline ResultTable parse_csv(const std::string& text) {
  ResultTable table;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = detail::strip(line.substr(1));
      const std::size_t comma = body.find(',');
      if (comma == std::string::npos) continue;
      const std::string key = body.substr(0, comma);
      const std::string value = body.substr(comma + 1);
      if (key == "tvsplit-lab") table.artifact_version = value;
      if (key == "experiment") table.experiment = value;
      if (key == "config_hash") {
        std::uint64_t h = 0;
        for (char c : value) {
          h <<= 4;
          if (c >= '0' && c <= '9') h |= static_cast<std::uint64_t>(c - '0');
          else if (c >= 'a' && c <= 'f') h |= static_cast<std::uint64_t>(c - 'a' + 10);
          else throw InvalidArgument("csv: malformed config_hash");
        }
        table.config_hash = h;
      }
      continue;
    }
    std::vector<std::string> items = detail::split_list(line);
    if (!have_header) {
      table.columns = std::move(items);
      have_header = true;
      continue;
    }
    std::vector<Cell> row;
    row.reserve(items.size());
    for (const std::string& item : items) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec == std::errc{} && p == item.data() + item.size())
        row.emplace_back(v);
      else
        row.emplace_back(item);
    }
    table.add_row(std::move(row));
  }
  if (!have_header) throw InvalidArgument("csv: missing header row");
  return table;
}

inline void write_csv(const ResultTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open for writing: " + path);
  out << render_csv(table);
}

inline ResultTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open csv: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

// Appends src's rows to dst; refuses to aggregate tables produced under
// different configs.
inline void append_rows(ResultTable& dst, const ResultTable& src) {
  if (dst.config_hash != src.config_hash || dst.experiment != src.experiment)
    throw HashMismatch("refusing mixed-hash aggregation: tables come from different configs");
  if (dst.columns != src.columns)
    throw DimensionMismatch("append_rows: column mismatch");
  for (const auto& row : src.rows) dst.rows.push_back(row);
}

inline std::size_t column_index(const ResultTable& table, const std::string& name) {
  for (std::size_t c = 0; c < table.columns.size(); ++c)
    if (table.columns[c] == name) return c;
  throw InvalidArgument("result table has no column '" + name + "'");
}

// ---------------------------------------------------------------------------
// Least-squares line fit (log-log slopes of rate plots)
// ---------------------------------------------------------------------------

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit fit_line_xy(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw InvalidArgument("fit_line_xy: need at least two paired points");
  const double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  if (!(std::abs(denom) > 0.0)) throw InvalidArgument("fit_line_xy: degenerate abscissae");
  LineFit out;
  out.slope = (n * sxy - sx * sy) / denom;
  out.intercept = (sy - out.slope * sx) / n;
  return out;
}

// ---------------------------------------------------------------------------
// SVG plots (derived from a ResultTable only; acceptance never depends on these)
// ---------------------------------------------------------------------------

struct PlotSpec {
  std::string x_col;
  std::string y_col;
  std::string group_col;  // empty = single series
  bool log_x = false;
  bool log_y = false;
  bool lines = true;  // false = scatter only
  std::string title;
};

inline std::string render_svg_plot(const ResultTable& table, const PlotSpec& spec) {
  const std::size_t xc = column_index(table, spec.x_col);
  const std::size_t yc = column_index(table, spec.y_col);
  const std::size_t gc = spec.group_col.empty() ? table.columns.size()
                                                : column_index(table, spec.group_col);

  struct Pt {
    double x, y;
  };
  std::vector<std::pair<std::string, std::vector<Pt>>> series;
  auto series_of = [&](const std::string& label) -> std::vector<Pt>& {
    for (auto& [name, pts] : series)
      if (name == label) return pts;
    series.emplace_back(label, std::vector<Pt>{});
    return series.back().second;
  };
  auto transform = [](double v, bool logscale) {
    return logscale ? std::log10(v) : v;
  };

  for (const auto& row : table.rows) {
    if (!std::holds_alternative<double>(row[xc]) || !std::holds_alternative<double>(row[yc]))
      continue;
    double x = std::get<double>(row[xc]);
    double y = std::get<double>(row[yc]);
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    if ((spec.log_x && !(x > 0.0)) || (spec.log_y && !(y > 0.0))) continue;
    std::string label = "all";
    if (gc < table.columns.size())
      label = std::holds_alternative<double>(row[gc])
                  ? detail::format_real(std::get<double>(row[gc]))
                  : std::get<std::string>(row[gc]);
    series_of(label).push_back({transform(x, spec.log_x), transform(y, spec.log_y)});
  }
  if (series.empty()) throw InvalidArgument("plot: no finite points for the chosen columns");

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& [name, pts] : series)
    for (const Pt& p : pts) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;

  const double w = 640.0, h = 480.0, ml = 70.0, mr = 20.0, mt = 40.0, mb = 50.0;
  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << (spec.title.empty() ? table.experiment : spec.title) << "</text>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n";
  auto axis_label = [&](double v, bool logscale) {
    return detail::format_real(logscale ? std::pow(10.0, v) : v);
  };
  svg << "<text x=\"" << ml << "\" y=\"" << h - mb + 18 << "\" font-size=\"11\">"
      << axis_label(xmin, spec.log_x) << "</text>\n";
  svg << "<text x=\"" << w - mr << "\" y=\"" << h - mb + 18
      << "\" text-anchor=\"end\" font-size=\"11\">" << axis_label(xmax, spec.log_x)
      << "</text>\n";
  svg << "<text x=\"" << ml - 6 << "\" y=\"" << h - mb << "\" text-anchor=\"end\" "
      << "font-size=\"11\">" << axis_label(ymin, spec.log_y) << "</text>\n";
  svg << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4 << "\" text-anchor=\"end\" "
      << "font-size=\"11\">" << axis_label(ymax, spec.log_y) << "</text>\n";
  svg << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << spec.x_col
      << (spec.log_x ? " (log)" : "") << "</text>\n";
  svg << "<text x=\"16\" y=\"" << (mt + h - mb) / 2 << "\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << (mt + h - mb) / 2 << ")\" text-anchor=\"middle\">"
      << spec.y_col << (spec.log_y ? " (log)" : "") << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % 8];
    const auto& pts = series[s].second;
    if (spec.lines && pts.size() > 1) {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (const Pt& p : pts) svg << sx(p.x) << "," << sy(p.y) << " ";
      svg << "\"/>\n";
    }
    for (const Pt& p : pts)
      svg << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    svg << "<text x=\"" << w - mr - 6 << "\" y=\"" << mt + 16 + 16 * static_cast<double>(s)
        << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << color << "\">"
        << series[s].first << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void write_svg_plot(const ResultTable& table, const PlotSpec& spec,
                           const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open for writing: " + path);
  out << render_svg_plot(table, spec);
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

namespace detail {

inline void require_experiment(const ExperimentConfig& cfg, const char* name) {
  if (cfg.experiment != name)
    throw ConfigError(std::string("runner '") + name + "' got a config for '" +
                      cfg.experiment + "'");
}

inline ResultTable new_table(const ExperimentConfig& cfg, std::vector<std::string> columns) {
  ResultTable t;
  t.experiment = cfg.experiment;
  t.config_hash = tvsplit::config_hash(cfg);
  t.columns = std::move(columns);
  return t;
}

inline std::string alpha_label(const HyperPoint& a) {
  std::string out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out += format_real(a[i]);
    if (i + 1 < a.size()) out += '|';
  }
  return out;
}

// SampleSet over rows [lo, hi) of a larger set.
inline SampleSet slice_samples(const SampleSet& all, std::size_t lo, std::size_t hi) {
  DenseMatrix x(hi - lo, all.d());
  std::vector<double> y(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) {
    for (std::size_t c = 0; c < all.d(); ++c) x(i - lo, c) = all.inputs(i, c);
    y[i - lo] = all.labels[i];
  }
  return make_sample_set(std::move(x), std::move(y), all.normalized);
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

// Validation-gap concentration on the planted linear feature-map task: for
// each validation size, the max-over-grid |population - validation| risk gap
// and the gap at the selected point, averaged over trials.
inline ResultTable run_gap(const ExperimentConfig& cfg) {
  detail::require_experiment(cfg, "gap");
  const auto t0 = std::chrono::steady_clock::now();

  const std::size_t n_train = cfg.u("n_train");
  const std::size_t maps = cfg.u("maps");
  const std::size_t feature_dim = cfg.u("feature_dim");
  const std::size_t input_dim = cfg.u("input_dim");
  const std::size_t grid_res = cfg.u("grid");
  const std::size_t trials = cfg.u("trials");
  const std::size_t test_samples = cfg.u("test_samples");
  const double noise = cfg.r("noise");
  const double ridge = cfg.r("ridge");
  std::vector<std::size_t> n_vals;
  for (std::uint64_t v : cfg.ulist("n_val")) n_vals.push_back(static_cast<std::size_t>(v));
  const std::size_t max_val = *std::max_element(n_vals.begin(), n_vals.end());

  const FeatureFamily fam =
      linear_feature_family(maps, feature_dim, input_dim, cfg.seed);
  const std::vector<HyperPoint> grid = alpha_grid(maps, grid_res);
  const HyperPoint alpha_star(maps, 1.0 / static_cast<double>(maps));

  std::vector<std::vector<double>> max_gaps(n_vals.size()), sel_gaps(n_vals.size());
  for (std::size_t t = 0; t < trials; ++t) {
    // One pooled draw per trial: train rows, then the validation superset,
    // then the population (Monte-Carlo test) pool.
    const std::size_t pool = n_train + max_val + test_samples;
    DenseMatrix inputs = gauss_matrix(RngStream(cfg.seed, 100 + t), pool, input_dim, 1.0);
    SampleSet all = make_sample_set(std::move(inputs), std::vector<double>(pool, 0.0), false);

    // Planted coefficients live in the row space of the alpha_star features,
    // so the min-norm fit at alpha_star can recover them exactly.
    const DenseMatrix phi_star = feature_matrix(fam, alpha_star, all);
    std::vector<double> theta_star(feature_dim, 0.0);
    {
      RngStream cs(cfg.seed, 200 + t);
      for (std::size_t i = 0; i < n_train; ++i) {
        const double c = cs.next_gauss();
        for (std::size_t j = 0; j < feature_dim; ++j)
          theta_star[j] += c * phi_star(i, j);
      }
      const double norm = l2_norm(theta_star);
      if (!(norm > 0.0)) throw NumericalFailure("gap: degenerate planted direction");
      for (double& v : theta_star) v /= norm;
    }
    RngStream zs(cfg.seed, 300 + t);
    for (std::size_t i = 0; i < pool; ++i) {
      double f = 0.0;
      for (std::size_t j = 0; j < feature_dim; ++j) f += phi_star(i, j) * theta_star[j];
      all.labels[i] = f + noise * zs.next_gauss();
    }

    const SampleSet train = detail::slice_samples(all, 0, n_train);
    const SampleSet valsup = detail::slice_samples(all, n_train, n_train + max_val);
    const SampleSet testp = detail::slice_samples(all, n_train + max_val, pool);

    // Per grid point: one fit, then squared-error vectors on both pools.
    std::vector<std::vector<double>> val_sq(grid.size()), test_mean(grid.size());
    std::vector<bool> ok(grid.size(), false);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      try {
        const FitResult fit = ridge_fit(fam, grid[g], train, ridge);
        const std::vector<double> pv = predict_all(fam, fit, valsup);
        const std::vector<double> pt = predict_all(fam, fit, testp);
        val_sq[g].resize(max_val);
        for (std::size_t i = 0; i < max_val; ++i) {
          const double e = pv[i] - valsup.labels[i];
          val_sq[g][i] = e * e;
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < test_samples; ++i) {
          const double e = pt[i] - testp.labels[i];
          acc += e * e;
        }
        test_mean[g] = {acc / static_cast<double>(test_samples)};
        ok[g] = true;
      } catch (const Error&) {
        // Rank-deficient mixtures (for example alpha = 0) cannot be trained;
        // they are excluded from the maxima exactly like search failures.
      }
    }
    if (std::none_of(ok.begin(), ok.end(), [](bool b) { return b; }))
      throw NumericalFailure("gap: every grid point failed to train at trial " +
                             std::to_string(t));

    for (std::size_t vi = 0; vi < n_vals.size(); ++vi) {
      const std::size_t nv = n_vals[vi];
      double worst = 0.0;
      double best_val = std::numeric_limits<double>::infinity();
      std::size_t best_g = 0;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        if (!ok[g]) continue;
        double vr = 0.0;
        for (std::size_t i = 0; i < nv; ++i) vr += val_sq[g][i];
        vr /= static_cast<double>(nv);
        const double gap = std::abs(vr - test_mean[g][0]);
        worst = std::max(worst, gap);
        if (vr < best_val) {
          best_val = vr;
          best_g = g;
        }
      }
      max_gaps[vi].push_back(worst);
      double vr = 0.0;
      for (std::size_t i = 0; i < nv; ++i) vr += val_sq[best_g][i];
      vr /= static_cast<double>(nv);
      sel_gaps[vi].push_back(std::abs(vr - test_mean[best_g][0]));
    }
  }

  ResultTable table = detail::new_table(
      cfg, {"n_val", "max_gap_mean", "max_gap_std", "sel_gap_mean", "sel_gap_std"});
  for (std::size_t vi = 0; vi < n_vals.size(); ++vi)
    table.add_row({static_cast<double>(n_vals[vi]), detail::mean_of(max_gaps[vi]),
                   detail::std_of(max_gaps[vi]), detail::mean_of(sel_gaps[vi]),
                   detail::std_of(sel_gaps[vi])});
  table.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return table;
}

// Rank-1 spectral recovery sweep over (gamma, h) with p = gamma n^2 / h:
// mean correlation per cell, optionally followed by the stage-2 fit and its
// risks (predictive and oriented parameter error) plus the limiting formula.
inline ResultTable run_rank1(const ExperimentConfig& cfg) {
  detail::require_experiment(cfg, "rank1");
  const auto t0 = std::chrono::steady_clock::now();

  const std::size_t n = cfg.u("n");
  const std::size_t trials = cfg.u("trials");
  const double noise = cfg.r("noise");
  const bool stage2 = cfg.flag("stage2");
  const std::uint64_t cap = cfg.u("memory_cap");
  const std::vector<double>& gammas = cfg.rlist("gamma");
  const std::vector<std::uint64_t>& hs = cfg.ulist("h");

  ResultTable table = detail::new_table(
      cfg, {"gamma", "h", "p", "p_bar", "rho_mean", "rho_std", "risk_mean", "param_error_mean",
            "asym_risk"});
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    for (std::size_t hi = 0; hi < hs.size(); ++hi) {
      const double gamma = gammas[gi];
      const std::size_t h = static_cast<std::size_t>(hs[hi]);
      const std::size_t p = std::max<std::size_t>(
          1, static_cast<std::size_t>(gamma * static_cast<double>(n) *
                                          static_cast<double>(n) / static_cast<double>(h) +
                                      0.5));
      if (static_cast<std::uint64_t>(h) * p > cap)
        throw MemoryGuard("rank1: h*p = " + std::to_string(h * p) +
                          " exceeds memory_cap at gamma=" + detail::format_real(gamma) +
                          " h=" + std::to_string(h));
      std::vector<double> rhos, risks, perrs;
      for (std::uint64_t s = 0; s < trials; ++s) {
        // Per-cell master seed: a hash chain keeps cells statistically
        // disjoint without coordinating offsets.
        std::uint64_t master = detail::fnv1a64("rank1 cell", cfg.seed);
        master = detail::fnv1a64(std::to_string(gi) + "," + std::to_string(hi) + "," +
                                     std::to_string(s),
                                 master);
        try {
          const Rank1Instance inst = random_rank1_instance(h, p, n, noise, master);
          if (!stage2) {
            rhos.push_back(spectral_estimate(inst).rho);
            continue;
          }
          const SpectralResult r = rank1_pipeline(inst);
          rhos.push_back(r.rho);
          risks.push_back(r.risk);
          std::vector<double> oriented = r.theta_hat;
          double dot = 0.0;
          for (std::size_t i = 0; i < h; ++i) dot += inst.alpha_star[i] * r.alpha_hat[i];
          if (dot < 0.0)
            for (double& v : oriented) v = -v;
          double perr = 0.0;
          for (std::size_t j = 0; j < p; ++j) {
            const double d = inst.theta_star[j] - oriented[j];
            perr += d * d;
          }
          perrs.push_back(perr);
        } catch (const Error& e) {
          throw NumericalFailure("rank1: gamma=" + detail::format_real(gamma) +
                                 " h=" + std::to_string(h) + " seed=" + std::to_string(s) +
                                 ": " + e.what());
        }
      }
      const double pbar = static_cast<double>(p) / static_cast<double>(n);
      const double rho_mean = detail::mean_of(rhos);
      double asym = nan;
      if (stage2 && pbar > 1.0) asym = asymptotic_risk(std::min(rho_mean, 1.0), pbar);
      table.add_row({gamma, static_cast<double>(h), static_cast<double>(p), pbar, rho_mean,
                     detail::std_of(rhos), stage2 ? detail::mean_of(risks) : nan,
                     stage2 ? detail::mean_of(perrs) : nan, asym});
    }
  }
  table.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return table;
}

// Tangent-gram concentration: spectral deviation between the width-k
// empirical gram and a Monte-Carlo estimate of its population limit, per
// (width, mixture), with the per-mixture log-log slope across widths.
inline ResultTable run_concentration(const ExperimentConfig& cfg) {
  detail::require_experiment(cfg, "concentration");
  const auto t0 = std::chrono::steady_clock::now();

  const std::size_t samples = cfg.u("samples");
  const std::size_t input_dim = cfg.u("input_dim");
  const std::size_t grid_res = cfg.u("grid");
  const std::size_t mc_samples = cfg.u("mc_samples");
  const double c0 = cfg.r("c0");
  const ActivationFamily fam = activation_family(cfg.str("family"));
  std::vector<std::size_t> widths;
  for (std::uint64_t k : cfg.ulist("widths")) {
    if (k % 2 != 0) throw ConfigError("[concentration] widths: must be even");
    widths.push_back(static_cast<std::size_t>(k));
  }

  const SampleSet data = binary_task(samples, input_dim, cfg.seed ^ 0x517cc1b727220a95ull);
  const std::vector<HyperPoint> grid = alpha_grid_simplex(fam.size(), grid_res);

  ResultTable table = detail::new_table(cfg, {"k", "alpha", "deviation", "slope"});
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const NtkEstimate ref =
        ntk_gram_mc(fam, grid[g], data, c0, mc_samples, RngStream(cfg.seed, 7000 + g));
    std::vector<double> logk, logd, devs;
    for (std::size_t ki = 0; ki < widths.size(); ++ki) {
      try {
        ShallowConfig scfg;
        scfg.k = widths[ki];
        scfg.d = input_dim;
        scfg.c0 = c0;
        scfg.seed = RngStream(cfg.seed, 300 + ki);
        const ShallowState st = shallow_init(scfg, fam, grid[g]);
        DenseMatrix diff = empirical_gram(st, data, true);
        for (std::size_t t = 0; t < diff.data.size(); ++t) diff.data[t] -= ref.gram.data[t];
        double dev = 0.0;
        try {
          dev = top_singular_left(diff).sigma1;
        } catch (const ZeroMatrix&) {
          dev = 0.0;  // exact match (e.g. the linear family)
        }
        devs.push_back(dev);
        if (dev > 0.0) {
          logk.push_back(std::log(static_cast<double>(widths[ki])));
          logd.push_back(std::log(dev));
        }
      } catch (const Error& e) {
        throw NumericalFailure("concentration: k=" + std::to_string(widths[ki]) + " alpha=" +
                               detail::alpha_label(grid[g]) + ": " + e.what());
      }
    }
    const double slope =
        logk.size() >= 2 ? fit_line_xy(logk, logd).slope : std::numeric_limits<double>::quiet_NaN();
    for (std::size_t ki = 0; ki < widths.size(); ++ki)
      table.add_row({static_cast<double>(widths[ki]), detail::alpha_label(grid[g]), devs[ki],
                     slope});
  }
  table.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return table;
}

// Trained-solution sensitivity to the activation mixture: paired gradient
// descent runs from a shared initialization at alpha and alpha + dalpha *
// direction, reporting the normalized weight distance and the output
// variability on held-out inputs, per (width, dalpha), averaged over trials.
inline ResultTable run_lipschitz(const ExperimentConfig& cfg) {
  detail::require_experiment(cfg, "lipschitz");
  const auto t0 = std::chrono::steady_clock::now();

  if (cfg.str("network") != "shallow")
    throw ConfigError("[lipschitz] network: only 'shallow' is supported (deep training is out "
                      "of scope)");
  const ActivationFamily fam = activation_family(cfg.str("family"));
  const HyperPoint alpha = cfg.rlist("alpha");
  const HyperPoint dir = cfg.rlist("direction");
  if (alpha.size() != fam.size() || dir.size() != fam.size())
    throw ConfigError("[lipschitz] alpha/direction length must match the activation family");
  const std::vector<double>& dalphas = cfg.rlist("dalpha");
  for (double da : dalphas) {
    HyperPoint moved = alpha;
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += da * dir[i];
    if (l1_norm(alpha) > 1.0 + 1e-12 || l1_norm(moved) > 1.0 + 1e-12)
      throw ConfigError("[lipschitz] alpha + dalpha*direction leaves the unit l1 ball at "
                        "dalpha = " + detail::format_real(da));
  }
  const std::size_t samples = cfg.u("samples");
  const std::size_t heldout = cfg.u("heldout");
  const std::size_t input_dim = cfg.u("input_dim");
  const std::size_t trials = cfg.u("trials");
  const double eta_scale = cfg.r("eta_scale");
  if (eta_scale > 1.0) throw ConfigError("[lipschitz] eta_scale: must be <= 1");
  const std::size_t steps = cfg.u("steps");

  const SampleSet all =
      binary_task(samples + heldout, input_dim, cfg.seed ^ 0x2545f4914f6cdd1dull);
  const SampleSet train = detail::slice_samples(all, 0, samples);
  const SampleSet hold = detail::slice_samples(all, samples, samples + heldout);
  // One step size for the whole pair (taken at the base mixture), so weight
  // distances measure the mixture change, not a step-size change.
  const double c0 = default_c0(samples);
  const double eta = eta_scale * default_eta(c0, mixture_bound(fam, alpha), train.inputs);

  ResultTable table = detail::new_table(
      cfg, {"k", "dalpha", "weight_distance", "max_output_gap", "avg_output_gap"});
  for (std::size_t ki = 0; ki < cfg.ulist("widths").size(); ++ki) {
    const std::size_t k = static_cast<std::size_t>(cfg.ulist("widths")[ki]);
    if (k % 2 != 0) throw ConfigError("[lipschitz] widths: must be even");
    std::vector<std::vector<double>> wd(dalphas.size()), mx(dalphas.size()), av(dalphas.size());
    for (std::size_t t = 0; t < trials; ++t) {
      ShallowConfig scfg;
      scfg.k = k;
      scfg.d = input_dim;
      scfg.c0 = c0;
      scfg.seed = RngStream(cfg.seed, 40 + ki).derived(t);
      try {
        ShallowState base = shallow_init(scfg, fam, alpha);
        gd_train(base, train, eta, steps);
        const std::vector<double> fbase = shallow_forward_all(base, hold.inputs);
        for (std::size_t di = 0; di < dalphas.size(); ++di) {
          HyperPoint moved = alpha;
          for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += dalphas[di] * dir[i];
          ShallowState pert = shallow_init(scfg, fam, moved);
          gd_train(pert, train, eta, steps);
          double dist2 = 0.0;
          for (std::size_t j = 0; j < base.w.data.size(); ++j) {
            const double d = base.w.data[j] - pert.w.data[j];
            dist2 += d * d;
          }
          wd[di].push_back(std::sqrt(dist2) / dalphas[di]);
          const std::vector<double> fpert = shallow_forward_all(pert, hold.inputs);
          double worst = 0.0, acc = 0.0;
          for (std::size_t i = 0; i < heldout; ++i) {
            const double d = std::abs(fbase[i] - fpert[i]);
            worst = std::max(worst, d);
            acc += d;
          }
          mx[di].push_back(worst);
          av[di].push_back(acc / static_cast<double>(heldout));
        }
      } catch (const Error& e) {
        throw NumericalFailure("lipschitz: k=" + std::to_string(k) + " trial=" +
                               std::to_string(t) + ": " + e.what());
      }
    }
    for (std::size_t di = 0; di < dalphas.size(); ++di)
      table.add_row({static_cast<double>(k), dalphas[di], detail::mean_of(wd[di]),
                     detail::mean_of(mx[di]), detail::mean_of(av[di])});
  }
  table.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return table;
}

// Interpolation-yet-selection on the synthetic binary task: every simplex
// mixture is trained to (near) zero training error by gradient descent, yet
// test errors spread; the row with selected = 1 minimizes validation error
// (lowest index on ties), and the excess-risk quadratic form from the gram at
// initialization is reported for rank comparisons.
inline ResultTable run_tvo_generalization(const ExperimentConfig& cfg) {
  detail::require_experiment(cfg, "tvo-gen");
  const auto t0 = std::chrono::steady_clock::now();

  const std::size_t k = cfg.u("width");
  if (k % 2 != 0) throw ConfigError("[tvo-gen] width: must be even");
  const std::size_t n_train = cfg.u("n_train");
  const std::size_t n_val = cfg.u("n_val");
  const std::size_t n_test = cfg.u("n_test");
  const std::size_t input_dim = cfg.u("input_dim");
  const std::size_t grid_res = cfg.u("grid");
  const ActivationFamily fam = activation_family(cfg.str("family"));
  const double c0 = cfg.r("c0");
  const double eta_scale = cfg.r("eta_scale");
  if (eta_scale > 1.0) throw ConfigError("[tvo-gen] eta_scale: must be <= 1");
  const std::size_t steps = cfg.u("steps");

  const SampleSet all =
      binary_task(n_train + n_val + n_test, input_dim, cfg.seed ^ 0x6a09e667f3bcc909ull);
  const SampleSet train = detail::slice_samples(all, 0, n_train);
  const SampleSet val = detail::slice_samples(all, n_train, n_train + n_val);
  const SampleSet test = detail::slice_samples(all, n_train + n_val, all.n());

  const std::vector<HyperPoint> grid = alpha_grid_simplex(fam.size(), grid_res);
  struct Row {
    double train01, val01, test01, form;
  };
  std::vector<Row> rows(grid.size());
  parallel_for_indexed(grid.size(), [&](std::size_t g) {
    ShallowConfig scfg;
    scfg.k = k;
    scfg.d = input_dim;
    scfg.c0 = c0;
    scfg.seed = RngStream(cfg.seed, 90);  // shared initialization across mixtures
    try {
      ShallowState st = shallow_init(scfg, fam, grid[g]);
      double form = std::numeric_limits<double>::quiet_NaN();
      {
        DenseMatrix gram = empirical_gram(st, train, true);
        detail::Ldlt f = detail::ldlt_factor(gram, 0.0);
        const double threshold =
            1e-12 * detail::trace_of(gram) / static_cast<double>(n_train);
        if (f.positive && f.min_pivot >= threshold && f.min_pivot > 0.0) {
          std::vector<double> w = train.labels;
          f.solve_in_place(w);
          double quad = 0.0;
          for (std::size_t i = 0; i < n_train; ++i) quad += train.labels[i] * w[i];
          form = std::sqrt(fam.bound_B * std::max(quad, 0.0) /
                           static_cast<double>(n_train));
        }
      }
      // Each mixture runs at the same fraction of its own stability cap, so
      // flat mixtures (small derivative sup) are not starved of step size.
      const double eta = eta_scale * default_eta(c0, mixture_bound(fam, grid[g]), train.inputs);
      gd_train(st, train, eta, steps);
      rows[g] = {evaluate_risk(shallow_forward_all(st, train.inputs), train, Loss::zero_one),
                 evaluate_risk(shallow_forward_all(st, val.inputs), val, Loss::zero_one),
                 evaluate_risk(shallow_forward_all(st, test.inputs), test, Loss::zero_one),
                 form};
    } catch (const Error& e) {
      throw NumericalFailure("tvo-gen: alpha=" + detail::alpha_label(grid[g]) + ": " +
                             e.what());
    }
  });

  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (rows[g].val01 < rows[best].val01) best = g;

  ResultTable table = detail::new_table(cfg, {"alpha", "train_zero_one", "val_zero_one",
                                              "test_zero_one", "excess_form", "selected"});
  for (std::size_t g = 0; g < grid.size(); ++g)
    table.add_row({detail::alpha_label(grid[g]), rows[g].train01, rows[g].val01, rows[g].test01,
                   rows[g].form, g == best ? 1.0 : 0.0});
  table.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return table;
}

inline ResultTable run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "gap") return run_gap(cfg);
  if (cfg.experiment == "rank1") return run_rank1(cfg);
  if (cfg.experiment == "concentration") return run_concentration(cfg);
  if (cfg.experiment == "lipschitz") return run_lipschitz(cfg);
  if (cfg.experiment == "tvo-gen") return run_tvo_generalization(cfg);
  throw ConfigError("unknown experiment: " + cfg.experiment);
}

// Default plot wiring for --plots; purely derived from the emitted table.
inline PlotSpec default_plot_spec(const std::string& experiment) {
  PlotSpec spec;
  if (experiment == "gap") {
    spec = {"n_val", "max_gap_mean", "", true, true, true, "validation gap vs n_val"};
  } else if (experiment == "rank1") {
    spec = {"h", "rho_mean", "gamma", false, false, true, "correlation vs h per gamma"};
  } else if (experiment == "concentration") {
    spec = {"k", "deviation", "alpha", true, true, true, "gram deviation vs width"};
  } else if (experiment == "lipschitz") {
    spec = {"dalpha", "weight_distance", "k", true, false, true,
            "normalized weight distance vs dalpha"};
  } else if (experiment == "tvo-gen") {
    spec = {"excess_form", "test_zero_one", "", false, false, false,
            "test error vs excess-risk form"};
  } else {
    throw ConfigError("unknown experiment: " + experiment);
  }
  return spec;
}

}  // namespace tvsplit
