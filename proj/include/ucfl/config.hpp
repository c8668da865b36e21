#pragma once

// Run configuration: a single JSON document with an explicit seed block.
// Parsing is strict; unknown keys and bad values raise ConfigError naming the
// offending field.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ucfl/comm_model.hpp"
#include "ucfl/orchestrator.hpp"
#include "ucfl/theory.hpp"

namespace ucfl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary task on the grid x_k = (k + 0.5) / 10, k = 0..9, with
/// P(x_k) proportional to exp(x_skew * x_k), y = 1[x >= tau] flipped with
/// probability `noise`.
struct ThresholdTask {
  double tau = 0.5;
  double noise = 0.0;
  double x_skew = 0.0;
};

theory::DiscreteDistribution threshold_task_distribution(const ThresholdTask& task);

struct BoundCase {
  std::string name;
  std::vector<ThresholdTask> clients;
  std::vector<std::size_t> ns;
  std::vector<double> weights;
  std::size_t target = 0;
  double delta = 0.05;
};

struct BoundGrid {
  static constexpr std::size_t kMinTrials = 1000;

  std::size_t trials = 10000;
  Seed seed = 17;
  std::vector<double> taus;  // hypothesis thresholds
  std::vector<BoundCase> cases;
};

struct TimingConfig {
  TimingMode mode = TimingMode::Expected;
  Seed seed = 29;
  double t_dl = 1.0;  // used by the three system presets
  std::optional<NamedCommModel> custom;
};

struct RunConfig {
  std::string name = "custom";
  ExperimentConfig experiment;
  bool streams_auto = false;  // STREAMED with m_t picked by silhouette
  std::vector<Method> baselines;
  TimingConfig timing;
  BoundGrid bound;

  /// Throws ConfigError.
  void validate() const;
};

RunConfig parse_config(const nlohmann::json& doc);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

/// Complete, explicit form of the config (every default spelled out).
nlohmann::json to_json(const RunConfig& cfg);
/// Sorted-key compact dump of to_json; stable across platforms.
std::string canonical_json(const RunConfig& cfg);
/// Hex SHA-256 of canonical_json.
std::string config_digest(const RunConfig& cfg);

/// data = s, init = s + 1, training = s + 2, probe = s + 3; the timing and
/// bound seeds become s.
void apply_seed_override(RunConfig& cfg, Seed s);

std::vector<std::string> preset_names();
RunConfig preset(const std::string& name);

BoundGrid default_bound_grid();

}  // namespace ucfl
