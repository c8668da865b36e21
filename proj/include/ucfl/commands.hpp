#pragma once

// Subcommand implementations behind the `ucfl` executable. Each returns a
// process exit code and writes diagnostics to `log`.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ucfl/comm_model.hpp"
#include "ucfl/config.hpp"
#include "ucfl/orchestrator.hpp"

namespace ucfl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidConfig = 1;
inline constexpr int kExitRuntimeFailure = 2;
inline constexpr int kExitBoundViolation = 3;

inline constexpr const char* kToolVersion = "0.1.0";

struct CommandOptions {
  std::string config_path;  // exactly one of config_path / preset
  std::string preset;
  std::string out_dir = ".";
  std::optional<Seed> seed_override;
  std::string streams;       // "", "auto" or a positive integer
  std::string metrics_path;  // timing only
};

int cmd_run(const CommandOptions& opts, std::ostream& log);
int cmd_similarity(const CommandOptions& opts, std::ostream& log);
int cmd_timing(const CommandOptions& opts, std::ostream& log);
int cmd_validate_bound(const CommandOptions& opts, std::ostream& log);
int cmd_presets_list(std::ostream& out);
int cmd_presets_show(const std::string& name, std::ostream& out, std::ostream& log);

/// Loads the config or preset and applies --seed-override / --streams.
/// Throws ConfigError.
RunConfig resolve_config(const CommandOptions& opts);

/// `round,user,val_acc,train_loss`, one row per (round, user).
std::string metrics_csv(const std::vector<RoundMetrics>& metrics);
/// Inverse of metrics_csv for the accuracy and loss columns. Throws
/// std::runtime_error on malformed input.
std::vector<RoundMetrics> parse_metrics_csv(std::istream& in);

/// `time_in_tdl,mean_val_acc`.
std::string timed_curve_csv(const TimedCurve& curve);

/// Number of personalized models broadcast per round for a finished run;
/// empty for LOCAL, which broadcasts nothing.
std::optional<std::size_t> streams_used(const ExperimentConfig& cfg, const ExperimentResult& result);

struct BoundReport {
  nlohmann::json records = nlohmann::json::array();
  bool all_within_delta = true;
};

BoundReport run_bound_grid(const BoundGrid& grid);

}  // namespace ucfl::cli
