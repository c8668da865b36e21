#include "ucfl/comm_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ucfl {

void CommModel::validate() const {
  if (!(rho > 0.0)) throw std::invalid_argument("comm.rho must be positive");
  if (!(t_dl > 0.0)) throw std::invalid_argument("comm.t_dl must be positive");
  if (!(t_min >= 0.0)) throw std::invalid_argument("comm.t_min must be non-negative");
  if (!(mu > 0.0)) throw std::invalid_argument("comm.mu must be positive or infinite");
}

std::vector<NamedCommModel> system_presets(double t_dl) {
  const double inf = std::numeric_limits<double>::infinity();
  return {
      {"wireless_slow", {4.0, t_dl, t_dl, 1.0 / t_dl, UplinkMode::Parallel}},
      {"wireless_fast", {2.0, t_dl, t_dl, inf, UplinkMode::Parallel}},
      {"wired", {1.0, t_dl, t_dl, inf, UplinkMode::Parallel}},
  };
}

CommModel system_preset(const std::string& name, double t_dl) {
  for (const auto& p : system_presets(t_dl))
    if (p.name == name) return p.model;
  throw std::invalid_argument("unknown system preset '" + name + "'");
}

double harmonic_number(std::size_t m) {
  double h = 0.0;
  for (std::size_t k = m; k >= 1; --k) h += 1.0 / static_cast<double>(k);
  return h;
}

double expected_compute_time(std::size_t m, const CommModel& cm) {
  if (m == 0) throw std::invalid_argument("expected_compute_time: m must be positive");
  if (cm.deterministic_compute()) return cm.t_min;
  return cm.t_min + harmonic_number(m) / cm.mu;
}

std::vector<double> sample_compute_times(std::size_t m, const CommModel& cm, Seed seed) {
  std::vector<double> times(m, cm.t_min);
  if (cm.deterministic_compute()) return times;
  Rng rng(derive_seed(seed, {tag("compute_times")}));
  for (auto& t : times) t = cm.t_min - std::log1p(-rng.uniform()) / cm.mu;
  return times;
}

MakespanEstimate monte_carlo_compute_time(std::size_t m, const CommModel& cm, std::size_t trials,
                                          Seed seed) {
  if (trials < 2) throw std::invalid_argument("monte_carlo_compute_time: need at least two trials");
  Rng rng(derive_seed(seed, {tag("makespan_mc")}));
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    double mx = cm.t_min;
    if (!cm.deterministic_compute())
      for (std::size_t i = 0; i < m; ++i) mx = std::max(mx, cm.t_min - std::log1p(-rng.uniform()) / cm.mu);
    sum += mx;
    sum_sq += mx * mx;
  }
  const double n = static_cast<double>(trials);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

RoundTime round_time_breakdown(std::size_t m, std::size_t num_streams, const CommModel& cm,
                               TimingMode mode, Seed seed) {
  cm.validate();
  if (num_streams == 0 || num_streams > m)
    throw std::invalid_argument("round_time: num_streams must lie in [1, m]");
  RoundTime rt;
  rt.downlink = static_cast<double>(num_streams) * cm.t_dl;
  if (mode == TimingMode::Expected) {
    rt.compute = expected_compute_time(m, cm);
  } else {
    const auto times = sample_compute_times(m, cm, seed);
    rt.compute = *std::max_element(times.begin(), times.end());
  }
  const double per_user_ul = cm.rho * cm.t_dl;
  rt.uplink = cm.uplink == UplinkMode::Parallel ? per_user_ul : static_cast<double>(m) * per_user_ul;
  return rt;
}

double round_time(std::size_t m, std::size_t num_streams, const CommModel& cm, TimingMode mode,
                  Seed seed) {
  return round_time_breakdown(m, num_streams, cm, mode, seed).total();
}

double similarity_round_time(std::size_t m, const CommModel& cm, TimingMode mode, Seed seed) {
  return round_time(m, 1, cm, mode, derive_seed(seed, {tag("similarity_round")}));
}

TimedCurve timed_curve(std::span<const RoundMetrics> metrics, std::size_t m, std::size_t num_streams,
                       const CommModel& cm, TimingMode mode, Seed seed, double upfront) {
  if (metrics.empty()) throw std::invalid_argument("timed_curve: no metrics");
  TimedCurve curve;
  double elapsed = upfront;
  for (const auto& rm : metrics) {
    if (rm.round == 0) continue;
    elapsed += round_time(m, num_streams, cm, mode, derive_seed(seed, {tag("round"), rm.round}));
    curve.push_back({elapsed / cm.t_dl, rm.mean_val_accuracy});
  }
  return curve;
}

double accuracy_at(const TimedCurve& curve, double t, double initial) {
  double acc = initial;
  for (const auto& p : curve) {
    if (p.time > t) break;
    acc = p.mean_val_accuracy;
  }
  return acc;
}

}  // namespace ucfl
