// Run configuration: INI-style `key = value` lines grouped under [section]
// headers. Every key is optional; defaults reproduce the reference setup.
#pragma once

#include "diffcharge/bidding.hpp"
#include "diffcharge/checkpoint.hpp"
#include "diffcharge/engine.hpp"
#include "diffcharge/ingest.hpp"
#include "diffcharge/network.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffcharge {

enum class Task { kBattery, kStation };

struct RunConfig {
  Task task = Task::kBattery;
  std::uint64_t seed = 0;

  // paths
  std::string sessions;    // raw session export
  std::string corpus;      // training corpus CSV
  std::string checkpoint;  // model checkpoint
  std::string output = "out";

  // data
  int battery_resolution_seconds = 60;
  int battery_length = 720;
  int station_resolution_seconds = 300;
  int station_length = 288;
  std::string rate_unit = "amps";
  double nominal_voltage = 208.0;
  int utc_offset_minutes = 0;
  std::vector<std::string> stations{"JPL", "Caltech"};  // label = position

  ScheduleSpec diffusion;

  int hidden = 48;
  int heads = 4;
  int head_width = 48;

  TrainConfig train;

  int marginal_bins = 50;
  int discriminative_repeats = 5;
  int tail_clusters = 7;
  int classifier_epochs = 30;
  int classifier_hidden = 32;

  std::string prices;
  std::string arrivals;
  double penalty_factor = 0.8;
  double capacity_kw = 10.0;
  int reduce_k = 0;  // 0: one scenario per EV
  int evs = 28;

  bool operator==(const RunConfig&) const = default;

  [[nodiscard]] double curve_resolution_minutes() const {
    return task == Task::kBattery ? battery_resolution_seconds / 60.0 : station_resolution_seconds / 60.0;
  }
  [[nodiscard]] int sequence_length() const { return task == Task::kBattery ? battery_length : station_length; }

  [[nodiscard]] NetworkConfig network() const {
    NetworkConfig n;
    n.length = sequence_length();
    n.hidden = hidden;
    n.heads = heads;
    n.head_width = head_width;
    n.conditional = task == Task::kStation;
    n.labels = n.conditional ? static_cast<int>(stations.size()) : 0;
    return n;
  }

  void validate() const {
    network().validate();
    (void)diffusion.build();
    train.validate();
    if (battery_resolution_seconds <= 0 || station_resolution_seconds <= 0)
      throw std::invalid_argument("resolutions must be positive");
    if (rate_unit != "amps" && rate_unit != "kw") throw std::invalid_argument("rate_unit must be 'amps' or 'kw'");
    if (marginal_bins < 1 || discriminative_repeats < 1 || tail_clusters < 1)
      throw std::invalid_argument("evaluation parameters must be positive");
    if (penalty_factor < 0.0 || capacity_kw < 0.0 || reduce_k < 0 || evs < 1)
      throw std::invalid_argument("bidding parameters out of range");
  }
};

namespace detail {

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

inline std::string task_name(Task t) { return t == Task::kBattery ? "battery" : "station"; }

inline Task parse_task(const std::string& s) {
  if (s == "battery") return Task::kBattery;
  if (s == "station") return Task::kStation;
  throw std::invalid_argument("unknown task '" + s + "' (expected battery or station)");
}

inline LrDecay parse_decay(const std::string& s) {
  if (s == "cosine") return LrDecay::kCosine;
  if (s == "constant") return LrDecay::kConstant;
  throw std::invalid_argument("unknown lr_decay '" + s + "' (expected cosine or constant)");
}

/// Visits every (section, key, field) triple so parsing and serialization stay in sync.
template <typename Cfg, typename Fn>
void visit_fields(Cfg& c, Fn&& fn) {
  fn("run", "seed", c.seed);
  fn("paths", "sessions", c.sessions);
  fn("paths", "corpus", c.corpus);
  fn("paths", "checkpoint", c.checkpoint);
  fn("paths", "output", c.output);
  fn("data", "battery_resolution_seconds", c.battery_resolution_seconds);
  fn("data", "battery_length", c.battery_length);
  fn("data", "station_resolution_seconds", c.station_resolution_seconds);
  fn("data", "station_length", c.station_length);
  fn("data", "rate_unit", c.rate_unit);
  fn("data", "nominal_voltage", c.nominal_voltage);
  fn("data", "utc_offset_minutes", c.utc_offset_minutes);
  fn("diffusion", "steps", c.diffusion.steps);
  fn("diffusion", "beta_first", c.diffusion.beta_first);
  fn("diffusion", "beta_last", c.diffusion.beta_last);
  fn("network", "hidden", c.hidden);
  fn("network", "heads", c.heads);
  fn("network", "head_width", c.head_width);
  fn("train", "epochs", c.train.epochs);
  fn("train", "batch_size", c.train.batch_size);
  fn("train", "learning_rate", c.train.learning_rate);
  fn("train", "patience", c.train.early_stop_patience);
  fn("train", "clip_norm", c.train.clip_norm);
  fn("evaluate", "bins", c.marginal_bins);
  fn("evaluate", "repeats", c.discriminative_repeats);
  fn("evaluate", "tail_clusters", c.tail_clusters);
  fn("evaluate", "classifier_epochs", c.classifier_epochs);
  fn("evaluate", "classifier_hidden", c.classifier_hidden);
  fn("bidding", "prices", c.prices);
  fn("bidding", "arrivals", c.arrivals);
  fn("bidding", "penalty_factor", c.penalty_factor);
  fn("bidding", "capacity_kw", c.capacity_kw);
  fn("bidding", "reduce_k", c.reduce_k);
  fn("bidding", "evs", c.evs);
}

template <typename T>
std::string to_text(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_floating_point_v<T>) {
    return csv::format(v);
  } else {
    return std::to_string(v);
  }
}

template <typename T>
T from_text(const std::string& s, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_floating_point_v<T>) {
      return csv::to_double(s, key);
    } else {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used != s.size() || (v < 0 && !std::is_signed_v<T>)) throw std::invalid_argument("bad integer");
      return static_cast<T>(v);
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': invalid value '" + s + "'");
  }
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  std::set<std::string> known{"run.task", "data.stations", "train.lr_decay"};
  if (auto v = tree.get_optional<std::string>("run.task")) cfg.task = detail::parse_task(*v);
  if (auto v = tree.get_optional<std::string>("train.lr_decay")) cfg.train.lr_decay = detail::parse_decay(*v);
  if (auto v = tree.get_optional<std::string>("data.stations")) cfg.stations = csv::split(*v);
  detail::visit_fields(cfg, [&](const char* section, const char* key, auto& field) {
    const std::string path = std::string(section) + "." + key;
    known.insert(path);
    if (auto v = tree.get_optional<std::string>(path))
      field = detail::from_text<std::decay_t<decltype(field)>>(*v, path);
  });
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw std::invalid_argument("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body)
      if (!known.contains(section + "." + key))
        throw std::invalid_argument("config: unknown key '" + section + "." + key + "'");
  }
  cfg.validate();
  return cfg;
}

/// Applies one `section.key=value` override. Call validate() once all are applied.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("override '" + assignment + "' is not section.key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  bool found = true;
  if (path == "run.task") {
    cfg.task = detail::parse_task(value);
  } else if (path == "data.stations") {
    cfg.stations = csv::split(value);
  } else if (path == "train.lr_decay") {
    cfg.train.lr_decay = detail::parse_decay(value);
  } else {
    found = false;
    detail::visit_fields(cfg, [&](const char* section, const char* key, auto& field) {
      if (std::string(section) + "." + key != path) return;
      field = detail::from_text<std::decay_t<decltype(field)>>(value, path);
      found = true;
    });
  }
  if (!found) throw std::invalid_argument("config: unknown key '" + path + "'");
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  return parse_config(in);
}

inline std::string serialize_config(const RunConfig& cfg) {
  boost::property_tree::ptree tree;
  tree.put("run.task", detail::task_name(cfg.task));
  tree.put("data.stations", detail::join(cfg.stations));
  tree.put("train.lr_decay", cfg.train.lr_decay == LrDecay::kCosine ? "cosine" : "constant");
  detail::visit_fields(cfg, [&](const char* section, const char* key, const auto& field) {
    tree.put(std::string(section) + "." + key, detail::to_text(field));
  });
  std::ostringstream out;
  boost::property_tree::ini_parser::write_ini(out, tree);
  return out.str();
}

}  // namespace diffcharge
