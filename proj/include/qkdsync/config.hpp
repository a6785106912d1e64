#pragma once

// key=value run configuration. Dimensioned values must carry a unit suffix;
// bare numbers are rejected for them.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "units.hpp"

namespace qkdsync {

enum class Dim {
  none,        // dimensionless, optional '%'
  integer,
  text,
  time,        // fs ps ns us µs ms s min h
  length,      // nm um m km
  frequency,   // Hz kHz MHz GHz
  count_rate,  // Hz cps kcps Mcps
  db,
  db_per_km,
  drift,       // fractional frequency: ps/s ns/s us/s µs/s ppb ppm
  drift_rate,  // 1/s: ps/s2 ns/s2 us/s2 ppb/day ppm/day ppm/year
  dispersion,  // ps/nm/km
  chirp,       // rad/s2
  phase_walk,  // ps/sqrt(s)
  freq_walk,   // ps/s/sqrt(s)
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

struct UnitEntry {
  const char* name;
  double factor;
};

inline const std::vector<UnitEntry>& units_for(Dim d) {
  using namespace units;
  static const std::vector<UnitEntry> time_u{{"fs", fs}, {"ps", ps}, {"ns", ns}, {"us", us}, {"\xC2\xB5s", us},
                                             {"ms", ms}, {"s", s}, {"min", 60.0}, {"h", 3600.0}};
  static const std::vector<UnitEntry> length_u{{"nm", nm}, {"um", 1e-6}, {"m", m}, {"km", km}};
  static const std::vector<UnitEntry> freq_u{{"Hz", Hz}, {"kHz", kHz}, {"MHz", MHz}, {"GHz", 1e9}};
  static const std::vector<UnitEntry> rate_u{{"Hz", 1.0}, {"cps", 1.0}, {"kHz", 1e3}, {"kcps", 1e3}, {"Mcps", 1e6}};
  static const std::vector<UnitEntry> db_u{{"dB", 1.0}};
  static const std::vector<UnitEntry> dbkm_u{{"dB/km", 1.0}};
  static const std::vector<UnitEntry> drift_u{{"ps/s", 1e-12}, {"ns/s", 1e-9}, {"us/s", 1e-6}, {"\xC2\xB5s/s", 1e-6},
                                              {"ppb", 1e-9},   {"ppm", 1e-6}};
  static const std::vector<UnitEntry> drate_u{{"ps/s2", 1e-12},        {"ps/s^2", 1e-12},          {"ns/s2", 1e-9},
                                              {"ns/s^2", 1e-9},        {"us/s2", 1e-6},            {"us/s^2", 1e-6},
                                              {"ppb/day", 1e-9 / 86400.0}, {"ppm/day", 1e-6 / 86400.0},
                                              {"ppm/year", 1e-6 / (365.25 * 86400.0)}};
  static const std::vector<UnitEntry> disp_u{{"ps/nm/km", ps_per_nm_km}, {"ps/(nm km)", ps_per_nm_km}};
  static const std::vector<UnitEntry> chirp_u{{"rad/s2", 1.0}, {"rad/s^2", 1.0}};
  static const std::vector<UnitEntry> walk_u{{"ps/sqrt(s)", 1e-12}, {"ns/sqrt(s)", 1e-9}};
  static const std::vector<UnitEntry> fwalk_u{{"ps/s/sqrt(s)", 1e-12}, {"ns/s/sqrt(s)", 1e-9}};
  static const std::vector<UnitEntry> none_u{};
  switch (d) {
    case Dim::time: return time_u;
    case Dim::length: return length_u;
    case Dim::frequency: return freq_u;
    case Dim::count_rate: return rate_u;
    case Dim::db: return db_u;
    case Dim::db_per_km: return dbkm_u;
    case Dim::drift: return drift_u;
    case Dim::drift_rate: return drate_u;
    case Dim::dispersion: return disp_u;
    case Dim::chirp: return chirp_u;
    case Dim::phase_walk: return walk_u;
    case Dim::freq_walk: return fwalk_u;
    default: return none_u;
  }
}

inline double parse_number(std::string_view text, std::string_view key, std::size_t* consumed) {
  const std::string s(text);
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr == b) throw ConfigError("config: '" + std::string(key) + "': not a number: '" + s + "'");
  *consumed = static_cast<std::size_t>(ptr - b);
  return v;
}

}  // namespace config_detail

/// Parses "<number>[ ]<unit>" for the given dimension, returning SI.
inline double parse_quantity(std::string_view text, Dim dim, std::string_view key = "value") {
  const std::string s = config_detail::trim(text);
  std::size_t used = 0;
  const double v = config_detail::parse_number(s, key, &used);
  const std::string unit = config_detail::trim(std::string_view(s).substr(used));
  if (dim == Dim::none) {
    if (unit.empty()) return v;
    if (unit == "%") return v / 100.0;
    throw ConfigError("config: '" + std::string(key) + "': unexpected unit '" + unit + "'");
  }
  if (dim == Dim::integer) {
    if (!unit.empty() || v != static_cast<double>(static_cast<std::int64_t>(v)))
      throw ConfigError("config: '" + std::string(key) + "': expected an integer");
    return v;
  }
  if (unit.empty()) throw ConfigError("config: '" + std::string(key) + "': missing unit in '" + s + "'");
  for (const auto& u : config_detail::units_for(dim))
    if (unit == u.name) return v * u.factor;
  throw ConfigError("config: '" + std::string(key) + "': unknown unit '" + unit + "'");
}

inline std::vector<double> parse_list(std::string_view text, Dim dim, std::string_view key) {
  std::vector<double> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    if (config_detail::trim(item).empty()) continue;
    out.push_back(parse_quantity(item, dim, key));
  }
  if (out.empty()) throw ConfigError("config: '" + std::string(key) + "': empty list");
  return out;
}

struct KeySpec {
  const char* name;
  Dim dim;
  const char* default_value;
  bool list = false;
};

/// Every recognized key with its dimension and default.
inline const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs{
      // clocks
      {"f_alice", Dim::frequency, "500 MHz"},
      {"initial_drift", Dim::drift, "2.3 us/s"},
      {"static_offset", Dim::time, "0 ps"},
      {"random_offset", Dim::integer, "1"},
      {"aging", Dim::drift_rate, "0 ps/s2"},
      // link
      {"wavelength", Dim::length, "1550 nm"},
      {"pulse_fwhm", Dim::time, "77 ps"},
      {"chirp", Dim::chirp, "-3.7e20 rad/s2"},
      {"dispersion", Dim::dispersion, "17 ps/nm/km"},
      {"fiber_length", Dim::length, "100 km"},
      {"attenuation", Dim::db_per_km, "0.2 dB/km"},
      {"extra_loss", Dim::db, "0 dB"},
      {"loss", Dim::db, "fiber"},  // total loss override; "fiber" uses attenuation * length + extra_loss
      // detector
      {"skew_shape", Dim::none, "3"},
      {"skew_scale", Dim::time, "150 ps"},
      {"efficiency", Dim::none, "0.25"},
      {"dead_time", Dim::time, "15 us"},
      {"dark_count_rate", Dim::count_rate, "1800 Hz"},
      // TDC and protocol
      {"t_bin", Dim::time, "1 ns"},
      {"tdc_bin", Dim::time, "100 ps"},
      {"delay_resolution", Dim::time, "11 ps"},
      {"window", Dim::time, "300 ps"},
      {"error_threshold", Dim::none, "0.1 %"},
      {"mean_photon", Dim::none, "0.225"},
      {"intrinsic_error", Dim::none, "0"},
      {"pattern_slots", Dim::integer, "500"},
      {"linear_detection", Dim::integer, "0"},
      {"grid_step", Dim::time, "0.5 ps"},
      // oscillator noise
      {"white_fm", Dim::phase_walk, "0 ps/sqrt(s)"},
      {"random_walk_fm", Dim::freq_walk, "0 ps/s/sqrt(s)"},
      {"path_jitter", Dim::time, "32 ps"},
      {"path_tau", Dim::time, "2 s"},
      // synchronization
      {"t_int_start", Dim::time, "155 us"},
      {"t_int_max", Dim::time, "500 ms"},
      {"growth", Dim::none, "4"},
      {"iters_per_stage", Dim::integer, "3"},
      {"n_bar_ramp", Dim::none, "10"},
      {"modulus_floor", Dim::none, "0.05"},
      {"pearson_threshold", Dim::none, "0.5"},
      {"guard_fraction", Dim::none, "0.9"},
      {"tracking_iterations", Dim::integer, "60"},
      {"duration", Dim::time, "24 h"},
      // sweeps
      {"dt_step", Dim::time, "10 ps"},
      {"windows", Dim::time, "1000 ps, 700 ps, 500 ps, 300 ps", true},
      {"z_list", Dim::length, "0 km, 20 km, 40 km, 60 km, 80 km, 100 km, 120 km, 140 km, 160 km, 180 km, 200 km", true},
      {"drift_list", Dim::drift, "-3 us/s, -2 us/s, -1 us/s, -0.3 us/s, 0.3 us/s, 1 us/s, 2 us/s, 3 us/s", true},
      {"t_int_list", Dim::time, "155 us, 310 us, 620 us, 1.24 ms, 2.48 ms, 4.96 ms, 10 ms", true},
      {"noisy_mean_photon", Dim::none, "10"},
      {"photons_per_hist", Dim::none, "10"},
      {"safety", Dim::none, "0.7"},
      {"calibration_drift", Dim::drift, "50 ppm"},
      {"calibration_span", Dim::time, "87660 h"},
      {"xo_aging", Dim::drift_rate, "500 ppb/day"},
      {"stability_shift", Dim::time, "23 ps"},
      {"stability_t_int", Dim::time, "500 ms"},
      {"tdev_max_tau", Dim::time, "4096 s"},
      // field scenario
      {"field_length", Dim::length, "16 km"},
      {"field_loss", Dim::db, "11.5 dB"},
      {"field_intrinsic_error", Dim::none, "1.87 %"},
      {"field_smoothing", Dim::time, "60 s"},
      {"seed", Dim::integer, "1"},
  };
  return specs;
}

inline const KeySpec& key_spec(const std::string& key) {
  for (const auto& k : key_specs())
    if (key == k.name) return k;
  throw ConfigError("config: unknown key '" + key + "'");
}

class RunConfig {
 public:
  /// Parses key=value lines; '#' starts a comment.
  static RunConfig parse(std::string_view text) {
    RunConfig c;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = config_detail::trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
      c.set(config_detail::trim(std::string_view(t).substr(0, eq)), config_detail::trim(std::string_view(t).substr(eq + 1)));
    }
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot read '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  /// Sets a value after checking that the key exists and the value parses.
  void set(const std::string& key, const std::string& value) {
    const KeySpec& spec = key_spec(key);
    if (spec.dim != Dim::text && !(key == "loss" && value == "fiber")) {
      if (spec.list)
        parse_list(value, spec.dim, key);
      else
        parse_quantity(value, spec.dim, key);
    }
    values_[key] = value;
  }

  /// Applies "key=value" overrides (flags win over file values).
  void apply_overrides(const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("override '" + o + "': expected key=value");
      set(config_detail::trim(std::string_view(o).substr(0, eq)), config_detail::trim(std::string_view(o).substr(eq + 1)));
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string raw(const std::string& key) const {
    const KeySpec& spec = key_spec(key);
    auto it = values_.find(key);
    return it != values_.end() ? it->second : std::string(spec.default_value);
  }

  double get(const std::string& key) const {
    const KeySpec& spec = key_spec(key);
    return parse_quantity(raw(key), spec.dim, key);
  }

  std::int64_t get_int(const std::string& key) const { return static_cast<std::int64_t>(get(key)); }

  std::vector<double> get_list(const std::string& key) const {
    const KeySpec& spec = key_spec(key);
    return parse_list(raw(key), spec.dim, key);
  }

  /// Fully resolved key=value text, one line per known key, sorted.
  std::string canonical() const {
    std::vector<std::string> lines;
    for (const auto& k : key_specs()) lines.push_back(std::string(k.name) + "=" + raw(k.name));
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
  }

  /// FNV-1a 64 of the canonical text, hex.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
      buf[i] = hex[h & 0xf];
      h >>= 4;
    }
    buf[16] = '\0';
    return buf;
  }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed")); }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace qkdsync
