// diffcharge: ingest sessions, train and sample the diffusion model, score
// generated corpora, and solve the day-ahead bidding program.
#include "diffcharge/bidding.hpp"
#include "diffcharge/checkpoint.hpp"
#include "diffcharge/config.hpp"
#include "diffcharge/csv.hpp"
#include "diffcharge/engine.hpp"
#include "diffcharge/ingest.hpp"
#include "diffcharge/metrics.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace diffcharge;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

struct Run {
  RunConfig cfg;
  fs::path out;
  std::string command;

  [[nodiscard]] std::string provenance() const {
    return "diffcharge " + command + " seed=" + std::to_string(cfg.seed) + " task=" + detail::task_name(cfg.task);
  }
};

Run prepare(const Common& c, const std::string& command) {
  Run run;
  run.command = command;
  if (!c.config_path.empty()) run.cfg = load_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(run.cfg, o);
  if (c.seed) run.cfg.seed = *c.seed;
  if (!c.out.empty()) run.cfg.output = c.out;
  run.cfg.validate();
  run.out = run.cfg.output;
  fs::create_directories(run.out);
  return run;
}

fs::path require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw std::invalid_argument("no " + what + " given");
  if (!fs::is_regular_file(path)) throw std::runtime_error(what + " '" + path + "' does not exist");
  return path;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

class Report {
 public:
  explicit Report(const Run& run) {
    add("command", run.command);
    add("seed", std::to_string(run.cfg.seed));
    add("task", detail::task_name(run.cfg.task));
  }
  void add(const std::string& key, const std::string& value) { text_ << key << " = " << value << '\n'; }
  void add(const std::string& key, double value) { add(key, csv::format(value)); }
  void add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }
  [[nodiscard]] std::string str() const { return text_.str(); }

 private:
  std::ostringstream text_;
};

void write_histogram(const fs::path& path, const Histogram& real, const Histogram& gen) {
  std::ofstream out(path);
  out << "bin_lo,bin_hi,real,gen\n";
  for (std::size_t b = 0; b < real.mass.size(); ++b)
    out << csv::format(real.edges[b]) << ',' << csv::format(real.edges[b + 1]) << ',' << csv::format(real.mass[b])
        << ',' << csv::format(gen.mass[b]) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<double> flatten(const RowMatrix& m) { return {m.data(), m.data() + m.size()}; }

/// Mean per-row autocorrelation over each row's valid prefix (whole rows when
/// `valid_len` is empty). Rows too short or without variation are skipped.
std::vector<double> mean_acf(const RowMatrix& m, int max_lag, const std::vector<int>& valid_len = {}) {
  std::vector<double> acc(static_cast<std::size_t>(max_lag) + 1, 0.0);
  int used = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto n = valid_len.empty() ? m.cols() : valid_len[static_cast<std::size_t>(r)];
    if (n <= max_lag) continue;
    const std::span<const double> row(m.row(r).data(), static_cast<std::size_t>(n));
    if (std::all_of(row.begin(), row.end(), [&](double v) { return v == row.front(); })) continue;
    const auto a = autocorrelation(row, max_lag);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += a[k];
    ++used;
  }
  for (auto& v : acc) v = used ? v / used : 0.0;
  return acc;
}

std::vector<int> read_lengths(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (csv::split(line) != std::vector<std::string>{"session_id", "valid_len"})
    throw std::runtime_error(path.string() + ": expected header 'session_id,valid_len'");
  std::vector<int> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 2) throw std::runtime_error(path.string() + ": wrong field count");
    out.push_back(static_cast<int>(csv::to_double(f[1], path.string())));
  }
  return out;
}

std::vector<double> read_arrivals(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = csv::split(line);
  const auto col = std::find(header.begin(), header.end(), "arrival_minute");
  if (col == header.end()) throw std::runtime_error(path.string() + ": missing column 'arrival_minute'");
  const auto idx = static_cast<std::size_t>(col - header.begin());
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) throw std::runtime_error(path.string() + ": wrong field count");
    out.push_back(csv::to_double(f[idx], path.string()));
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const Common& c, const std::string& sessions_flag) {
  Run run = prepare(c, "ingest");
  const auto& cfg = run.cfg;
  const auto path = require_file(sessions_flag.empty() ? cfg.sessions : sessions_flag, "session file");
  const auto file = parse_sessions(path);

  Report report(run);
  report.add("sessions_file", path.string());
  report.add("valid_rows", file.sessions.size());
  report.add("skipped_rows", file.skipped.size());
  for (const auto& issue : file.skipped) report.add("skipped_line_" + std::to_string(issue.line), issue.reason);

  CurveReport cr;
  const auto curves = build_battery_curves(file.sessions, {cfg.battery_resolution_seconds, cfg.battery_length}, &cr);
  write_scenarios(curves_to_batch(curves), run.out / "battery.csv", run.provenance());
  {
    std::ofstream out(run.out / "battery_lengths.csv");
    out << "session_id,valid_len\n";
    for (const auto& cv : curves) out << cv.session_id << ',' << cv.valid_len << '\n';
  }
  report.add("battery_curves", curves.size());
  report.add("battery_truncated", cr.truncated);
  report.add("battery_dropped_short", cr.dropped_short);
  report.add("battery_dropped_empty", cr.dropped_empty);

  ProfileOptions po;
  po.resolution_seconds = cfg.station_resolution_seconds;
  po.length = cfg.station_length;
  po.unit = cfg.rate_unit == "kw" ? RateUnit::kKilowatts : RateUnit::kAmps;
  po.nominal_voltage = cfg.nominal_voltage;
  po.utc_offset_minutes = cfg.utc_offset_minutes;
  std::vector<StationProfile> profiles;
  for (std::size_t label = 0; label < cfg.stations.size(); ++label) {
    ProfileReport pr;
    auto p = build_station_profiles(file.sessions, cfg.stations[label], static_cast<int>(label), po, &pr);
    report.add("station_" + cfg.stations[label] + "_days", pr.days_emitted);
    report.add("station_" + cfg.stations[label] + "_empty_days_omitted", pr.empty_days_omitted);
    profiles.insert(profiles.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  write_scenarios(profiles_to_batch(profiles), run.out / "station.csv", run.provenance());
  {
    std::ofstream out(run.out / "station_days.csv");
    out << "date,label\n";
    for (const auto& p : profiles) out << p.date << ',' << p.label << '\n';
  }

  const auto arrivals = arrival_minutes(file.sessions, cfg.utc_offset_minutes);
  {
    std::ofstream out(run.out / "arrivals.csv");
    out << "session_id,station_id,arrival_minute\n";
    for (std::size_t i = 0; i < arrivals.size(); ++i)
      out << file.sessions[i].session_id << ',' << file.sessions[i].station_id << ',' << csv::format(arrivals[i])
          << '\n';
  }
  write_text(run.out / "ingest_report.txt", report.str());
  return 0;
}

int cmd_train(const Common& c, const std::string& corpus_flag) {
  Run run = prepare(c, "train");
  const auto& cfg = run.cfg;
  const auto path = require_file(corpus_flag.empty() ? cfg.corpus : corpus_flag, "training corpus");
  const auto data = read_scenarios(path);
  if (cfg.task == Task::kStation && !data.conditional())
    throw std::invalid_argument("station task needs a labeled corpus (first column 'label')");
  if (cfg.task == Task::kBattery && data.conditional())
    throw std::invalid_argument("battery task expects an unlabeled corpus");

  NetworkConfig net = cfg.network();
  net.length = static_cast<int>(data.length());
  if (net.conditional) {
    const int top = *std::max_element(data.labels.begin(), data.labels.end());
    net.labels = std::max(net.labels, top + 1);
  }
  NormalizationRecord rec;
  ScenarioBatch normalized{normalize(data.values, &rec), data.labels};

  DenoiserModel<float> model(net);
  Rng init = derive_stream(cfg.seed, stage::kInit);
  model.initialize(init);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const auto result = train(normalized, model, cfg.diffusion.build(), tc, [](int epoch, double loss) {
    std::cerr << "epoch " << epoch << " loss " << csv::format(loss) << '\n';
  });

  Checkpoint<float> ckpt{std::move(model), cfg.diffusion, rec, cfg.seed};
  save_checkpoint(ckpt, run.out / "checkpoint.json");
  write_loss_history(result.loss_history, run.out / "loss.csv", run.provenance());

  Report report(run);
  report.add("corpus", path.string());
  report.add("rows", static_cast<std::size_t>(data.size()));
  report.add("length", static_cast<std::size_t>(data.length()));
  report.add("epochs_run", result.loss_history.size());
  report.add("best_epoch", static_cast<std::size_t>(result.best_epoch));
  report.add("best_loss", result.loss_history[static_cast<std::size_t>(result.best_epoch - 1)]);
  report.add("stopped_early", std::string(result.stopped_early ? "true" : "false"));
  write_text(run.out / "train_report.txt", report.str());
  return 0;
}

int cmd_sample(const Common& c, const std::string& ckpt_flag, int count, const std::string& label_text) {
  Run run = prepare(c, "sample");
  const auto path = require_file(ckpt_flag.empty() ? run.cfg.checkpoint : ckpt_flag, "checkpoint");
  const auto ckpt = load_checkpoint<float>(path);
  std::optional<int> label;
  if (!label_text.empty()) {
    const auto& names = run.cfg.stations;
    const auto it = std::find(names.begin(), names.end(), label_text);
    label = it != names.end() ? static_cast<int>(it - names.begin())
                              : static_cast<int>(csv::to_double(label_text, "--label"));
  }
  if (count < 1) throw std::invalid_argument("--n must be positive");
  const auto batch = sample(ckpt.model, ckpt.schedule.build(), count, label, run.cfg.seed, ckpt.normalization);
  const auto name = label ? "samples_label" + std::to_string(*label) + ".csv" : std::string("samples.csv");
  write_scenarios(batch, run.out / name, run.provenance() + " checkpoint_seed=" + std::to_string(ckpt.seed));
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& real_path, const std::string& gen_path,
                 const std::string& lengths_path) {
  Run run = prepare(c, "evaluate");
  const auto& cfg = run.cfg;
  const auto real = read_scenarios(require_file(real_path, "real corpus"));
  const auto gen = read_scenarios(require_file(gen_path, "generated corpus"));
  if (real.length() != gen.length()) throw std::invalid_argument("real and generated corpora differ in length");

  Report report(run);
  report.add("real", real_path);
  report.add("gen", gen_path);
  report.add("real_rows", static_cast<std::size_t>(real.size()));
  report.add("gen_rows", static_cast<std::size_t>(gen.size()));

  report.add("marginal_score", marginal_score(real.values, gen.values, cfg.marginal_bins));
  {
    const auto rv = flatten(real.values), gv = flatten(gen.values);
    const double lo = std::min(real.values.minCoeff(), gen.values.minCoeff());
    const double hi = std::max(real.values.maxCoeff(), gen.values.maxCoeff());
    const double top = hi > lo ? hi : lo + 1.0;
    write_histogram(run.out / "marginal_hist.csv", histogram(rv, cfg.marginal_bins, lo, top),
                    histogram(gv, cfg.marginal_bins, lo, top));
  }

  ClassifierOptions co;
  co.hidden = cfg.classifier_hidden;
  co.epochs = cfg.classifier_epochs;
  const auto disc = discriminative_score(real.values, gen.values, cfg.discriminative_repeats, cfg.seed, co);
  report.add("discriminative_score", disc.score.mean);
  report.add("discriminative_score_std", disc.score.std);
  report.add("discriminative_ideal", std::log(2.0));

  export_projection_input(real.values, gen.values, run.out / "projection_input.csv");

  const int lag = std::min<int>(48, static_cast<int>(real.length()) - 1);
  auto write_acf = [&](const std::vector<int>& real_len, const std::vector<int>& gen_len) {
    const auto ra = mean_acf(real.values, lag, real_len), ga = mean_acf(gen.values, lag, gen_len);
    std::ofstream out(run.out / "acf.csv");
    out << "lag,real,gen\n";
    for (int k = 0; k <= lag; ++k)
      out << k << ',' << csv::format(ra[static_cast<std::size_t>(k)]) << ',' << csv::format(ga[static_cast<std::size_t>(k)])
          << '\n';
  };

  if (cfg.task == Task::kBattery) {
    const double res = cfg.curve_resolution_minutes();
    CurveCorpus rc = recover_corpus(real.values, res);
    if (!lengths_path.empty()) {
      rc.valid_len = read_lengths(require_file(lengths_path, "length file"));
      if (static_cast<Eigen::Index>(rc.valid_len.size()) != real.size())
        throw std::invalid_argument("length file does not match the real corpus");
    }
    const CurveCorpus gc = recover_corpus(gen.values, res);
    write_acf(rc.valid_len, gc.valid_len);

    TailOptions to;
    to.clusters = cfg.tail_clusters;
    to.seed = cfg.seed;
    const auto tail = tail_score(rc, gc, to);
    report.add("tail_score", tail.score.mean);
    report.add("tail_score_std", tail.score.std);
    report.add("tail_clusters_flagged",
               static_cast<std::size_t>(std::count(tail.flagged.begin(), tail.flagged.end(), true)));
    {
      std::ofstream out(run.out / "tail_clusters.csv");
      out << "cluster,real_members,gen_members,distance,flagged\n";
      for (std::size_t k = 0; k < tail.cluster_distance.size(); ++k)
        out << k << ',' << tail.real_members[k] << ',' << tail.gen_members[k] << ','
            << csv::format(tail.cluster_distance[k]) << ',' << (tail.flagged[k] ? 1 : 0) << '\n';
    }

    const double hours = real.length() * res / 60.0;
    const auto rd = duration_pdf(rc.valid_len, res, 30.0, hours);
    const auto gd = duration_pdf(gc.valid_len, res, 30.0, hours);
    report.add("duration_tv", total_variation(rd, gd));
    write_histogram(run.out / "duration_pdf.csv", rd, gd);

    const auto rb = bulk_rate_density(rc, cfg.marginal_bins);
    const auto gb = bulk_rate_density(gc, cfg.marginal_bins);
    std::ofstream out(run.out / "bulk_density.csv");
    out << "source,x,density\n";
    for (std::size_t i = 0; i < rb.grid.size(); ++i)
      out << "real," << csv::format(rb.grid[i]) << ',' << csv::format(rb.density[i]) << '\n';
    for (std::size_t i = 0; i < gb.grid.size(); ++i)
      out << "gen," << csv::format(gb.grid[i]) << ',' << csv::format(gb.density[i]) << '\n';
  } else {
    write_acf({}, {});
    report.add("tail_score", std::string("na"));
  }
  write_text(run.out / "metrics.txt", report.str());
  return 0;
}

int cmd_bid(const Common& c, const std::string& scen_flag, const std::string& prices_flag,
            const std::string& arrivals_flag, const std::string& actual_flag) {
  Run run = prepare(c, "bid");
  const auto& cfg = run.cfg;
  const auto scenarios = read_scenarios(require_file(scen_flag, "scenario file"));
  const auto prices = read_prices(require_file(prices_flag.empty() ? cfg.prices : prices_flag, "price file"));
  const auto observed = read_arrivals(require_file(arrivals_flag.empty() ? cfg.arrivals : arrivals_flag, "arrival file"));

  ArrivalDistribution dist(observed);
  Rng rng = derive_stream(cfg.seed, stage::kBid);
  std::vector<double> arrivals;
  for (int n = 0; n < cfg.evs; ++n) arrivals.push_back(dist.sample(rng));

  AssemblyOptions ao;
  ao.curve_resolution_minutes = cfg.curve_resolution_minutes();
  ao.nominal_voltage = cfg.nominal_voltage;
  ao.curves_in_amps = cfg.task == Task::kBattery && cfg.rate_unit == "amps";
  ao.capacity_kw = cfg.capacity_kw;
  ao.penalty_factor = cfg.penalty_factor;

  Report report(run);
  report.add("evs", static_cast<std::size_t>(cfg.evs));
  BiddingPlan plan;
  BiddingCosts planned;
  BiddingInstance inst;
  if (cfg.reduce_k == 0 || cfg.reduce_k >= cfg.evs) {
    if (scenarios.size() < cfg.evs)
      throw std::invalid_argument("scenario file has fewer curves than EVs; set bidding.reduce_k");
    std::vector<int> assignment(static_cast<std::size_t>(cfg.evs));
    std::iota(assignment.begin(), assignment.end(), 0);
    inst = assemble_instance(scenarios.values, assignment, arrivals, prices, ao);
    plan = solve_bidding(inst);
    planned = plan.costs;
    report.add("scenarios", static_cast<std::size_t>(cfg.evs));
  } else {
    const auto reduced = reduce_scenarios(scenarios.values, cfg.reduce_k, cfg.seed);
    const auto insts = assemble_scenarios(reduced, arrivals, prices, ao);
    inst = expected_instance(insts, reduced.weights);
    plan = solve_bidding(inst);
    planned = expected_costs(plan.power, insts, reduced.weights);
    report.add("scenarios", static_cast<std::size_t>(cfg.reduce_k));
  }
  report.add("penalty_price", inst.penalty_price);
  report.add("energy_procurement", planned.energy);
  report.add("user_penalty", planned.penalty);
  report.add("total", planned.total);

  if (!actual_flag.empty()) {
    const auto actual = read_scenarios(require_file(actual_flag, "actual curve file"));
    if (actual.size() < cfg.evs) throw std::invalid_argument("actual curve file has fewer curves than EVs");
    std::vector<int> assignment(static_cast<std::size_t>(cfg.evs));
    std::iota(assignment.begin(), assignment.end(), 0);
    auto real_inst = assemble_instance(actual.values, assignment, arrivals, prices, ao);
    real_inst.penalty_price = inst.penalty_price;
    const auto ac = evaluate_plan(plan.power, real_inst);
    report.add("actual_energy_procurement", ac.energy);
    report.add("actual_user_penalty", ac.penalty);
    report.add("actual_total", ac.total);
  }
  write_plan(plan, run.out / "plan.csv", run.provenance());
  write_text(run.out / "bid_report.txt", report.str());
  return 0;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "Run configuration file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Root seed (overrides run.seed)");
  app->add_option("--out", c.out, "Output directory (overrides paths.output)");
  app->add_option("--set", c.overrides, "Config override section.key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-model EV charging scenarios and day-ahead bidding"};
  app.require_subcommand(1);
  Common common;
  std::string sessions, corpus, ckpt, label, real, gen, lengths, scen, prices, arrivals, actual;
  int count = 1;

  auto* ingest = app.add_subcommand("ingest", "Build battery and station corpora from a session export");
  add_common(ingest, common);
  ingest->add_option("--sessions", sessions, "Session file (overrides paths.sessions)");

  auto* trn = app.add_subcommand("train", "Train the denoiser on a corpus");
  add_common(trn, common);
  trn->add_option("--corpus", corpus, "Training corpus CSV (overrides paths.corpus)");

  auto* smp = app.add_subcommand("sample", "Draw scenarios from a checkpoint");
  add_common(smp, common);
  smp->add_option("--checkpoint", ckpt, "Checkpoint (overrides paths.checkpoint)");
  smp->add_option("-n,--n", count, "Number of scenarios")->required();
  smp->add_option("--label", label, "Station name or label index (conditional models)");

  auto* ev = app.add_subcommand("evaluate", "Score a generated corpus against a real one");
  add_common(ev, common);
  ev->add_option("--real", real, "Real corpus CSV")->required();
  ev->add_option("--gen", gen, "Generated corpus CSV")->required();
  ev->add_option("--real-lengths", lengths, "Valid lengths of the real curves (from ingest)");

  auto* bid = app.add_subcommand("bid", "Solve the day-ahead bidding program over scenarios");
  add_common(bid, common);
  bid->add_option("--scenarios", scen, "Scenario curves CSV")->required();
  bid->add_option("--prices", prices, "Day-ahead price file (overrides bidding.prices)");
  bid->add_option("--arrivals", arrivals, "Arrival-time file (overrides bidding.arrivals)");
  bid->add_option("--actual", actual, "Observed curves for plan-vs-actual costs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*ingest) return cmd_ingest(common, sessions);
    if (*trn) return cmd_train(common, corpus);
    if (*smp) return cmd_sample(common, ckpt, count, label);
    if (*ev) return cmd_evaluate(common, real, gen, lengths);
    if (*bid) return cmd_bid(common, scen, prices, arrivals, actual);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
