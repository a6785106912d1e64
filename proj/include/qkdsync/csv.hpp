#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "config.hpp"
#include "rng.hpp"

#ifndef QKDSYNC_VERSION
#define QKDSYNC_VERSION "0.0.0"
#endif

namespace qkdsync {

/// Named text output of a subcommand; the CLI writes these to the output dir.
struct OutputFile {
  std::string name;
  std::string content;
};

using Outputs = std::vector<OutputFile>;

/// Comment lines carried at the top of every table.
inline std::string metadata_header(const RunConfig& cfg, const std::string& command) {
  return fmt::format("# qkdsync {} command={} config_hash={} seed={} rng={}\n", QKDSYNC_VERSION, command, cfg.hash(),
                     cfg.seed(), kRngName);
}

/// Shortest round-trip-stable rendering used in all tables; NaN prints NA.
inline std::string num(double v) {
  if (std::isnan(v)) return "NA";
  return fmt::format("{:.10g}", v);
}

class CsvTable {
 public:
  CsvTable(std::string header_comment, std::vector<std::string> columns)
      : text_(std::move(header_comment)), width_(columns.size()) {
    for (std::size_t i = 0; i < columns.size(); ++i) text_ += (i ? "," : "") + columns[i];
    text_ += '\n';
  }

  void row(const std::vector<std::string>& cells) {
    detail::require(cells.size() == width_, "csv: row width does not match header");
    for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
    text_ += '\n';
  }

  const std::string& str() const { return text_; }

 private:
  std::string text_;
  std::size_t width_;
};

/// Flat key=value summary text.
class Summary {
 public:
  explicit Summary(std::string header_comment) : text_(std::move(header_comment)) {}

  void put(const std::string& key, const std::string& value) { text_ += key + "=" + value + "\n"; }
  void put(const std::string& key, double value) { put(key, num(value)); }

  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

}  // namespace qkdsync
