// Self-describing JSON checkpoint: architecture, schedule, normalization and
// every named parameter tensor with its shape (row-major data).
#pragma once

#include "diffcharge/engine.hpp"
#include "diffcharge/network.hpp"
#include "diffcharge/schedule.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

namespace diffcharge {

inline constexpr const char* kCheckpointFormat = "diffcharge-checkpoint/1";

struct ScheduleSpec {
  int steps = 50;
  double beta_first = 1e-4;
  double beta_last = 0.5;

  [[nodiscard]] DiffusionSchedule build() const { return build_schedule(steps, beta_first, beta_last); }
  bool operator==(const ScheduleSpec&) const = default;
};

template <typename S>
struct Checkpoint {
  DenoiserModel<S> model;
  ScheduleSpec schedule;
  NormalizationRecord normalization;
  std::uint64_t seed = 0;
};

template <typename S>
nlohmann::json to_json(const Checkpoint<S>& ckpt) {
  const auto& cfg = ckpt.model.config;
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["config"] = {{"length", cfg.length},
                 {"hidden", cfg.hidden},
                 {"heads", cfg.heads},
                 {"head_width", cfg.head_width},
                 {"attention_width", cfg.attention_width()},
                 {"conditional", cfg.conditional},
                 {"labels", cfg.labels},
                 {"attention_residual", false},
                 {"layer_norm", false},
                 {"step_embedding", "sinusoidal-raw"},
                 {"loss_reduction", "sum_over_time_mean_over_batch"}};
  j["schedule"] = {{"steps", ckpt.schedule.steps},
                   {"beta_first", ckpt.schedule.beta_first},
                   {"beta_last", ckpt.schedule.beta_last},
                   {"kind", "quadratic"}};
  j["normalization"] = {{"min", ckpt.normalization.min},
                        {"max", ckpt.normalization.max},
                        {"degenerate", ckpt.normalization.degenerate}};
  j["seed"] = ckpt.seed;
  auto& params = j["parameters"] = nlohmann::json::array();
  ckpt.model.for_each_parameter([&](const std::string& name, const Matrix<S>& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(static_cast<double>(m(r, c)));
    params.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}});
  });
  return j;
}

template <typename S>
Checkpoint<S> checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != kCheckpointFormat)
    throw std::runtime_error("unsupported checkpoint format '" + j.value("format", std::string{}) + "'");
  const auto& c = j.at("config");
  NetworkConfig cfg;
  cfg.length = c.at("length").get<int>();
  cfg.hidden = c.at("hidden").get<int>();
  cfg.heads = c.at("heads").get<int>();
  cfg.head_width = c.at("head_width").get<int>();
  cfg.conditional = c.at("conditional").get<bool>();
  cfg.labels = c.at("labels").get<int>();
  if (c.value("attention_residual", false) || c.value("layer_norm", false))
    throw std::runtime_error("checkpoint uses attention variants this build does not implement");

  Checkpoint<S> ckpt;
  ckpt.model = DenoiserModel<S>(cfg);
  const auto& s = j.at("schedule");
  ckpt.schedule = {s.at("steps").get<int>(), s.at("beta_first").get<double>(), s.at("beta_last").get<double>()};
  const auto& n = j.at("normalization");
  ckpt.normalization = {n.at("min").get<double>(), n.at("max").get<double>(), n.at("degenerate").get<bool>()};
  ckpt.seed = j.value("seed", std::uint64_t{0});

  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& p : j.at("parameters")) by_name[p.at("name").get<std::string>()] = &p;
  ckpt.model.for_each_parameter([&](const std::string& name, Matrix<S>& m) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint is missing parameter '" + name + "'");
    const auto& p = *it->second;
    const auto shape = p.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols())
      throw std::runtime_error("checkpoint parameter '" + name + "' has the wrong shape");
    const auto& data = p.at("data");
    if (static_cast<Eigen::Index>(data.size()) != m.size())
      throw std::runtime_error("checkpoint parameter '" + name + "' has the wrong element count");
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index col = 0; col < m.cols(); ++col) m(r, col) = static_cast<S>(data[k++].get<double>());
    by_name.erase(it);
  });
  if (!by_name.empty()) throw std::runtime_error("checkpoint has unknown parameter '" + by_name.begin()->first + "'");
  return ckpt;
}

template <typename S>
void save_checkpoint(const Checkpoint<S>& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << to_json(ckpt).dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return checkpoint_from_json<S>(nlohmann::json::parse(in));
}

}  // namespace diffcharge
