// Charging-session ingestion: raw session exports to 1-min battery curves and
// 5-min daily station load profiles.
#pragma once

#include "diffcharge/csv.hpp"
#include "diffcharge/engine.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace diffcharge {

using EpochSeconds = std::int64_t;

struct RatePoint {
  EpochSeconds time = 0;
  double rate = 0.0;
};

struct SessionRecord {
  std::string session_id;
  std::string station_id;
  EpochSeconds connection_time = 0;
  EpochSeconds done_charging_time = 0;
  double kwh_delivered = 0.0;
  std::vector<RatePoint> rate_signal;  // sorted by time
};

struct ParseIssue {
  std::size_t line = 0;
  std::string reason;
};

struct SessionFile {
  std::vector<SessionRecord> sessions;
  std::vector<ParseIssue> skipped;
};

/// Accepts integer epoch seconds or ISO-8601 `YYYY-MM-DD[T ]HH:MM:SS[Z|+HH:MM]`.
inline EpochSeconds parse_timestamp(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("empty timestamp");
  if (text.find('-', 1) == std::string::npos) {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument("bad timestamp '" + text + "'");
    return v;
  }
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &s, &consumed) != 7 ||
      (sep != 'T' && sep != ' '))
    throw std::invalid_argument("bad timestamp '" + text + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) throw std::invalid_argument("bad timestamp '" + text + "'");
  EpochSeconds t = sys_days{ymd}.time_since_epoch().count() * 86400LL + h * 3600LL + mi * 60LL + s;
  const std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (rest.empty() || rest == "Z") return t;
  int oh = 0, om = 0;
  if ((rest[0] == '+' || rest[0] == '-') && std::sscanf(rest.c_str() + 1, "%2d:%2d", &oh, &om) == 2) {
    const EpochSeconds off = oh * 3600LL + om * 60LL;
    return rest[0] == '+' ? t - off : t + off;
  }
  throw std::invalid_argument("bad timestamp zone in '" + text + "'");
}

/// `epoch_seconds:rate;epoch_seconds:rate;...`
inline std::vector<RatePoint> parse_rate_points(const std::string& text) {
  std::vector<RatePoint> out;
  if (text.empty()) return out;
  for (const auto& item : csv::split(text, ';')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("rate point without ':' in '" + item + "'");
    out.push_back({parse_timestamp(item.substr(0, colon)), csv::to_double(item.substr(colon + 1), "rate point")});
  }
  std::stable_sort(out.begin(), out.end(), [](const RatePoint& a, const RatePoint& b) { return a.time < b.time; });
  return out;
}

/// Throws std::invalid_argument naming the violated invariant.
inline void validate_session(const SessionRecord& s) {
  if (s.done_charging_time < s.connection_time) throw std::invalid_argument("done_charging_time before connection_time");
  if (!(s.kwh_delivered >= 0.0)) throw std::invalid_argument("negative kwh_delivered");
  for (const auto& p : s.rate_signal) {
    if (p.time < s.connection_time || p.time > s.done_charging_time)
      throw std::invalid_argument("rate sample outside the session window");
    if (!(p.rate >= 0.0)) throw std::invalid_argument("negative charging rate");
  }
}

namespace detail {

inline SessionRecord session_from_json(const nlohmann::json& j) {
  auto stamp = [](const nlohmann::json& v) {
    return v.is_number() ? v.get<EpochSeconds>() : parse_timestamp(v.get<std::string>());
  };
  SessionRecord s;
  s.session_id = j.at("session_id").is_string() ? j.at("session_id").get<std::string>() : j.at("session_id").dump();
  s.station_id = j.at("station_id").get<std::string>();
  s.connection_time = stamp(j.at("connection_time"));
  s.done_charging_time = stamp(j.at("done_charging_time"));
  s.kwh_delivered = j.at("kwh_delivered").get<double>();
  const auto& rp = j.at("rate_points");
  if (rp.is_string()) {
    s.rate_signal = parse_rate_points(rp.get<std::string>());
  } else {
    for (const auto& pt : rp) s.rate_signal.push_back({stamp(pt.at(0)), pt.at(1).get<double>()});
    std::stable_sort(s.rate_signal.begin(), s.rate_signal.end(),
                     [](const RatePoint& a, const RatePoint& b) { return a.time < b.time; });
  }
  return s;
}

}  // namespace detail

/// Reads a CSV (`session_id,station_id,connection_time,done_charging_time,kwh_delivered,rate_points`)
/// or, for `.jsonl`/`.json` files, one JSON object per line with the same fields.
/// Invalid rows are skipped and reported with their line numbers.
inline SessionFile parse_sessions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read session file " + path.string());
  const auto ext = path.extension().string();
  const bool json_lines = ext == ".jsonl" || ext == ".json";

  SessionFile file;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::map<std::string, std::size_t> col;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      SessionRecord s;
      if (json_lines) {
        s = detail::session_from_json(nlohmann::json::parse(line));
      } else if (header.empty()) {
        header = csv::split(line);
        for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
        for (const char* name : {"session_id", "station_id", "connection_time", "done_charging_time", "kwh_delivered",
                                 "rate_points"})
          if (!col.contains(name)) throw std::runtime_error(path.string() + ": missing column '" + name + "'");
        continue;
      } else {
        const auto f = csv::split(line);
        if (f.size() != header.size()) throw std::invalid_argument("wrong field count");
        s.session_id = f[col["session_id"]];
        s.station_id = f[col["station_id"]];
        s.connection_time = parse_timestamp(f[col["connection_time"]]);
        s.done_charging_time = parse_timestamp(f[col["done_charging_time"]]);
        s.kwh_delivered = csv::to_double(f[col["kwh_delivered"]], "kwh_delivered");
        s.rate_signal = parse_rate_points(f[col["rate_points"]]);
      }
      validate_session(s);
      file.sessions.push_back(std::move(s));
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception& e) {
      file.skipped.push_back({line_no, e.what()});
    }
  }
  if (file.sessions.empty()) throw std::runtime_error(path.string() + ": zero valid rows");
  std::stable_sort(file.sessions.begin(), file.sessions.end(), [](const SessionRecord& a, const SessionRecord& b) {
    return std::tie(a.connection_time, a.session_id) < std::tie(b.connection_time, b.session_id);
  });
  return file;
}

/// Sample-and-hold view of a rate signal: each sample holds until the next
/// one; the final sample holds for the median sample spacing, or until the
/// end of the session when the signal has a single sample.
struct HeldSegment {
  double start = 0.0;  // seconds
  double end = 0.0;
  double rate = 0.0;
};

inline std::vector<HeldSegment> hold_segments(const SessionRecord& s) {
  std::vector<HeldSegment> out;
  const auto& pts = s.rate_signal;
  if (pts.empty()) return out;
  double tail = 0.0;
  if (pts.size() == 1) {
    tail = static_cast<double>(s.done_charging_time - pts.front().time);
  } else {
    std::vector<EpochSeconds> gaps;
    for (std::size_t i = 1; i < pts.size(); ++i) gaps.push_back(pts[i].time - pts[i - 1].time);
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    tail = static_cast<double>(gaps[gaps.size() / 2]);
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double a = static_cast<double>(pts[i].time);
    const double b = i + 1 < pts.size() ? static_cast<double>(pts[i + 1].time) : a + tail;
    if (b > a) out.push_back({a, b, pts[i].rate});
  }
  return out;
}

/// Integral of the held signal in rate-hours.
inline double signal_integral_hours(const SessionRecord& s) {
  double total = 0.0;
  for (const auto& seg : hold_segments(s)) total += seg.rate * (seg.end - seg.start) / 3600.0;
  return total;
}

namespace detail {
/// Adds `scale * (time-weighted mean over each bin)` of `segments` into `bins`,
/// where bin k covers [origin + k*width, origin + (k+1)*width).
inline void accumulate_bins(const std::vector<HeldSegment>& segments, double origin, double width, double scale,
                            std::vector<double>& bins) {
  const auto n = static_cast<std::ptrdiff_t>(bins.size());
  for (const auto& seg : segments) {
    auto first = static_cast<std::ptrdiff_t>(std::floor((seg.start - origin) / width));
    auto last = static_cast<std::ptrdiff_t>(std::ceil((seg.end - origin) / width));
    first = std::max<std::ptrdiff_t>(first, 0);
    last = std::min<std::ptrdiff_t>(last, n);
    for (std::ptrdiff_t k = first; k < last; ++k) {
      const double lo = std::max(seg.start, origin + static_cast<double>(k) * width);
      const double hi = std::min(seg.end, origin + static_cast<double>(k + 1) * width);
      if (hi > lo) bins[static_cast<std::size_t>(k)] += scale * seg.rate * (hi - lo) / width;
    }
  }
}
}  // namespace detail

struct ChargingCurve {
  std::string session_id;
  std::vector<double> values;
  int valid_len = 0;
};

struct CurveOptions {
  int resolution_seconds = 60;
  int length = 720;
};

struct CurveReport {
  std::size_t truncated = 0;
  std::size_t dropped_short = 0;
  std::size_t dropped_empty = 0;
};

/// Resamples each rate signal onto a fixed grid starting at its first sample,
/// using the time-weighted mean within each bin, then truncates or zero-pads.
inline std::vector<ChargingCurve> build_battery_curves(const std::vector<SessionRecord>& sessions,
                                                      const CurveOptions& opts = {}, CurveReport* report = nullptr) {
  CurveReport local;
  std::vector<ChargingCurve> out;
  const double width = opts.resolution_seconds;
  for (const auto& s : sessions) {
    const auto segs = hold_segments(s);
    if (segs.empty()) {
      ++local.dropped_empty;
      continue;
    }
    const double origin = segs.front().start;
    const double span = segs.back().end - origin;
    if (span < 60.0) {
      ++local.dropped_short;
      continue;
    }
    const auto needed = static_cast<long>(std::ceil(span / width - 1e-9));
    ChargingCurve c;
    c.session_id = s.session_id;
    c.values.assign(static_cast<std::size_t>(opts.length), 0.0);
    detail::accumulate_bins(segs, origin, width, 1.0, c.values);
    if (needed > opts.length) ++local.truncated;
    c.valid_len = static_cast<int>(std::clamp<long>(needed, 1, opts.length));
    out.push_back(std::move(c));
  }
  if (report) *report = local;
  return out;
}

enum class RateUnit { kAmps, kKilowatts };

struct ProfileOptions {
  int resolution_seconds = 300;
  int length = 288;
  RateUnit unit = RateUnit::kAmps;
  double nominal_voltage = 208.0;  // volts; amps * V / 1000 = kW
  int utc_offset_minutes = 0;      // local calendar days
};

struct StationProfile {
  std::string date;  // YYYY-MM-DD
  int label = 0;
  std::vector<double> values;  // kW
};

struct ProfileReport {
  std::size_t days_emitted = 0;
  std::size_t empty_days_omitted = 0;
};

inline std::string format_date(std::int64_t day_index) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{day_index}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

namespace detail {
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a / b - ((a % b != 0) && ((a < 0) != (b < 0)));
}
}  // namespace detail

/// Daily aggregate load of the sessions at `station_id`; each bin holds the
/// mean total power over its interval. Days without any load are omitted.
inline std::vector<StationProfile> build_station_profiles(const std::vector<SessionRecord>& sessions,
                                                         const std::string& station_id, int label,
                                                         const ProfileOptions& opts = {},
                                                         ProfileReport* report = nullptr) {
  const double to_kw = opts.unit == RateUnit::kAmps ? opts.nominal_voltage / 1000.0 : 1.0;
  const double offset = opts.utc_offset_minutes * 60.0;
  const std::int64_t day_seconds = static_cast<std::int64_t>(opts.resolution_seconds) * opts.length;
  std::map<std::int64_t, std::vector<double>> days;
  for (const auto& s : sessions) {
    if (s.station_id != station_id) continue;
    auto segs = hold_segments(s);
    if (segs.empty()) continue;
    for (auto& seg : segs) {
      seg.start += offset;
      seg.end += offset;
    }
    const auto first = detail::floor_div(static_cast<std::int64_t>(std::floor(segs.front().start)), day_seconds);
    const auto last = detail::floor_div(static_cast<std::int64_t>(std::ceil(segs.back().end)) - 1, day_seconds);
    for (auto d = first; d <= last; ++d) {
      auto& bins = days[d];
      if (bins.empty()) bins.assign(static_cast<std::size_t>(opts.length), 0.0);
      detail::accumulate_bins(segs, static_cast<double>(d * day_seconds), opts.resolution_seconds, to_kw, bins);
    }
  }
  std::vector<StationProfile> out;
  ProfileReport local;
  std::int64_t prev = 0;
  bool have_prev = false;
  for (auto& [d, bins] : days) {
    if (std::all_of(bins.begin(), bins.end(), [](double v) { return v == 0.0; })) continue;
    if (have_prev && d > prev + 1) local.empty_days_omitted += static_cast<std::size_t>(d - prev - 1);
    have_prev = true;
    prev = d;
    out.push_back({format_date(d * day_seconds / 86400), label, std::move(bins)});
  }
  local.days_emitted = out.size();
  if (report) *report = local;
  return out;
}

/// Minutes after local midnight at which each session connected.
inline std::vector<double> arrival_minutes(const std::vector<SessionRecord>& sessions, int utc_offset_minutes = 0) {
  std::vector<double> out;
  for (const auto& s : sessions) {
    const std::int64_t local = s.connection_time + utc_offset_minutes * 60LL;
    out.push_back(static_cast<double>(local - detail::floor_div(local, 86400) * 86400) / 60.0);
  }
  return out;
}

inline ScenarioBatch curves_to_batch(const std::vector<ChargingCurve>& curves) {
  ScenarioBatch b;
  const Eigen::Index len = curves.empty() ? 0 : static_cast<Eigen::Index>(curves.front().values.size());
  b.values.resize(static_cast<Eigen::Index>(curves.size()), len);
  for (std::size_t r = 0; r < curves.size(); ++r)
    for (Eigen::Index i = 0; i < len; ++i) b.values(static_cast<Eigen::Index>(r), i) = curves[r].values[static_cast<std::size_t>(i)];
  return b;
}

inline ScenarioBatch profiles_to_batch(const std::vector<StationProfile>& profiles) {
  ScenarioBatch b;
  const Eigen::Index len = profiles.empty() ? 0 : static_cast<Eigen::Index>(profiles.front().values.size());
  b.values.resize(static_cast<Eigen::Index>(profiles.size()), len);
  for (std::size_t r = 0; r < profiles.size(); ++r) {
    for (Eigen::Index i = 0; i < len; ++i)
      b.values(static_cast<Eigen::Index>(r), i) = profiles[r].values[static_cast<std::size_t>(i)];
    b.labels.push_back(profiles[r].label);
  }
  return b;
}

}  // namespace diffcharge
