#include "metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gvfl {

std::map<std::string, double> MetricSet::as_map() const {
  return {{"reward_per_second", reward_per_second},
          {"average_speed", average_speed},
          {"offcenteredness", offcenteredness},
          {"absolute_road_angle", absolute_road_angle},
          {"near_out_of_lane", near_out_of_lane},
          {"comfort1_steer", comfort1_steer},
          {"comfort1_speed", comfort1_speed},
          {"comfort2_steer", comfort2_steer},
          {"comfort2_speed", comfort2_speed},
          {"jerkiness_steer", jerkiness_steer},
          {"jerkiness_speed", jerkiness_speed},
          {"total_reward", total_reward},
          {"departures", departures}};
}

MetricSet compute_metrics(const std::vector<TraceRow>& trace, double dt) {
  size_t n = trace.size();
  if (n < 3)
    throw std::invalid_argument("compute_metrics: need at least 3 steps");
  if (!(dt > 0.0)) throw std::invalid_argument("compute_metrics: bad dt");
  MetricSet m;
  for (const auto& r : trace) {
    m.total_reward += r.reward;
    m.average_speed += r.speed;
    m.offcenteredness += std::abs(r.alpha);
    m.absolute_road_angle += std::abs(r.beta);
    m.near_out_of_lane += std::abs(r.alpha) > 0.75 ? 1.0 : 0.0;
  }
  double dn = static_cast<double>(n);
  m.reward_per_second = m.total_reward / dn / dt;
  m.average_speed /= dn;
  m.offcenteredness /= dn;
  m.absolute_road_angle /= dn;
  m.near_out_of_lane /= dn;

  auto first_diffs = [&](auto get) {
    std::vector<double> d(n - 1);
    for (size_t t = 0; t + 1 < n; ++t) d[t] = get(trace[t + 1]) - get(trace[t]);
    return d;
  };
  auto comfort1 = [&](const std::vector<double>& d) {
    double s = 0.0;
    for (double v : d) s += std::abs(v);
    return -s / static_cast<double>(d.size());
  };
  auto comfort2 = [&](const std::vector<double>& d) {
    double s = 0.0;
    for (size_t t = 0; t + 1 < d.size(); ++t) s += std::abs(d[t + 1] - d[t]);
    return -s / static_cast<double>(d.size() - 1);
  };
  auto pop_std = [&](const std::vector<double>& d) {
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(d.size()));
  };

  auto ds = first_diffs([](const TraceRow& r) { return r.steer; });
  auto dv = first_diffs([](const TraceRow& r) { return r.speed_cmd; });
  m.comfort1_steer = comfort1(ds);
  m.comfort1_speed = comfort1(dv);
  m.comfort2_steer = comfort2(ds);
  m.comfort2_speed = comfort2(dv);
  m.jerkiness_steer = pop_std(ds);
  m.jerkiness_speed = pop_std(dv);
  return m;
}

void write_trace_csv(const std::filesystem::path& path,
                     const std::vector<TraceRow>& trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write trace: " + path.string());
  os.precision(17);
  os << "step,reward,speed,alpha,beta,steer,speed_cmd\n";
  for (size_t t = 0; t < trace.size(); ++t) {
    const auto& r = trace[t];
    os << t << ',' << r.reward << ',' << r.speed << ',' << r.alpha << ','
       << r.beta << ',' << r.steer << ',' << r.speed_cmd << '\n';
  }
}

std::vector<TraceRow> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read trace: " + path.string());
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("empty trace: " + path.string());
  std::vector<TraceRow> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 7)
      throw std::runtime_error("bad trace row in " + path.string());
    out.push_back({vals[1], vals[2], vals[3], vals[4], vals[5], vals[6]});
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricSet& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write metrics: " + path.string());
  os.precision(17);
  os << "metric,value\n";
  for (const auto& [k, v] : m.as_map()) os << k << ',' << v << '\n';
}

std::map<std::string, double> read_metrics_csv(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read metrics: " + path.string());
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("empty metrics file: " + path.string());
  std::map<std::string, double> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("bad metrics row in " + path.string());
    out[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  return out;
}

}  // namespace gvfl
