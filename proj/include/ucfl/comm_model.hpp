#pragma once

// Round timing: downlink broadcasts per personalized stream, straggler-limited
// compute with shifted-exponential per-user times, and the uplink.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ucfl/orchestrator.hpp"
#include "ucfl/rng.hpp"

namespace ucfl {

enum class UplinkMode { Parallel, Serial };
enum class TimingMode { Expected, Sampled };

struct CommModel {
  double rho = 1.0;   // T_ul / T_dl
  double t_dl = 1.0;  // seconds per model broadcast
  double t_min = 0.0;
  double mu = std::numeric_limits<double>::infinity();  // infinity: deterministic compute
  UplinkMode uplink = UplinkMode::Parallel;

  void validate() const;
  bool deterministic_compute() const { return std::isinf(mu); }
};

struct NamedCommModel {
  std::string name;
  CommModel model;
};

/// wireless_slow (rho=4, T_min=T_dl=1/mu), wireless_fast (rho=2, T_min=T_dl,
/// 1/mu=0), wired (rho=1, T_min=T_dl, 1/mu=0); all with T_dl = t_dl.
std::vector<NamedCommModel> system_presets(double t_dl = 1.0);
CommModel system_preset(const std::string& name, double t_dl = 1.0);

double harmonic_number(std::size_t m);

/// E[max of m shifted exponentials] = T_min + H_m / mu.
double expected_compute_time(std::size_t m, const CommModel& cm);

/// T_i = T_min - ln(1 - U_i) / mu.
std::vector<double> sample_compute_times(std::size_t m, const CommModel& cm, Seed seed);

struct MakespanEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Monte Carlo mean of max_i T_i over `trials` rounds.
MakespanEstimate monte_carlo_compute_time(std::size_t m, const CommModel& cm, std::size_t trials,
                                          Seed seed);

struct RoundTime {
  double downlink = 0.0;
  double compute = 0.0;
  double uplink = 0.0;
  double total() const { return downlink + compute + uplink; }
};

RoundTime round_time_breakdown(std::size_t m, std::size_t num_streams, const CommModel& cm,
                               TimingMode mode, Seed seed);

double round_time(std::size_t m, std::size_t num_streams, const CommModel& cm, TimingMode mode,
                  Seed seed);

/// One broadcast, one compute and one upload, charged before the first round.
double similarity_round_time(std::size_t m, const CommModel& cm, TimingMode mode, Seed seed);

struct TimedPoint {
  double time = 0.0;  // in units of t_dl
  double mean_val_accuracy = 0.0;
  bool operator==(const TimedPoint&) const = default;
};

using TimedCurve = std::vector<TimedPoint>;

/// Cumulative round times paired with each round's mean accuracy. Round-0
/// entries (the untrained init) carry no time and are skipped; `upfront` is
/// added before the first round.
TimedCurve timed_curve(std::span<const RoundMetrics> metrics, std::size_t m, std::size_t num_streams,
                       const CommModel& cm, TimingMode mode, Seed seed, double upfront = 0.0);

/// Accuracy of the last round completed by time t (t in t_dl units); the
/// value before the first point is `initial`.
double accuracy_at(const TimedCurve& curve, double t, double initial);

}  // namespace ucfl
