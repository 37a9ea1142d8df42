// Plain CSV readers and writers for scenario batches and small tables.
#pragma once

#include "diffcharge/engine.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace diffcharge {

namespace csv {

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

inline double to_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw std::invalid_argument(context + ": not a number: '" + s + "'");
  return v;
}

/// Shortest round-trippable text for a double.
inline std::string format(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string step_column(Eigen::Index i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "t%04d", static_cast<int>(i + 1));
  return buf;
}

}  // namespace csv

/// Header `[label,]t0001,...,tL`, one scenario per row. A non-empty
/// `provenance` is written first as a `# ...` comment line.
inline void write_scenarios(const ScenarioBatch& batch, std::ostream& out, const std::string& provenance = {}) {
  batch.validate();
  if (!provenance.empty()) out << "# " << provenance << '\n';
  if (batch.conditional()) out << "label,";
  for (Eigen::Index i = 0; i < batch.length(); ++i) out << (i ? "," : "") << csv::step_column(i);
  out << '\n';
  for (Eigen::Index r = 0; r < batch.size(); ++r) {
    if (batch.conditional()) out << batch.labels[static_cast<std::size_t>(r)] << ',';
    for (Eigen::Index i = 0; i < batch.length(); ++i) out << (i ? "," : "") << csv::format(batch.values(r, i));
    out << '\n';
  }
}

inline void write_scenarios(const ScenarioBatch& batch, const std::filesystem::path& path,
                            const std::string& provenance = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_scenarios(batch, out, provenance);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline ScenarioBatch read_scenarios(std::istream& in, const std::string& name = "scenario csv") {
  std::string line;
  std::size_t line_no = 0;
  do {
    if (!std::getline(in, line)) throw std::runtime_error(name + ": empty file");
    ++line_no;
  } while (!line.empty() && line[0] == '#');
  const auto header = csv::split(line);
  const bool labeled = !header.empty() && header.front() == "label";
  const std::size_t offset = labeled ? 1 : 0;
  const std::size_t length = header.size() - offset;
  if (length == 0) throw std::runtime_error(name + ": header has no time columns");
  for (std::size_t i = 0; i < length; ++i)
    if (header[i + offset] != csv::step_column(static_cast<Eigen::Index>(i)))
      throw std::runtime_error(name + ": unexpected header column '" + header[i + offset] + "'");

  std::vector<std::vector<double>> rows;
  ScenarioBatch batch;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split(line);
    const std::string where = name + " line " + std::to_string(line_no);
    if (fields.size() != header.size()) throw std::runtime_error(where + ": wrong field count");
    if (labeled) batch.labels.push_back(static_cast<int>(csv::to_double(fields[0], where)));
    std::vector<double> row(length);
    for (std::size_t i = 0; i < length; ++i) row[i] = csv::to_double(fields[i + offset], where);
    rows.push_back(std::move(row));
  }
  batch.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(length));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t i = 0; i < length; ++i)
      batch.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = rows[r][i];
  return batch;
}

inline ScenarioBatch read_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_scenarios(in, path.string());
}

inline void write_loss_history(const std::vector<double>& history, const std::filesystem::path& path,
                               const std::string& provenance = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!provenance.empty()) out << "# " << provenance << '\n';
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) out << e + 1 << ',' << csv::format(history[e]) << '\n';
}

}  // namespace diffcharge
