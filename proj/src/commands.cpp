#include "ucfl/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "ucfl/format.hpp"

namespace ucfl::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    fs::create_directories(dir_);
    const auto path = fs::path(dir_) / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    paths_.push_back(path.string());
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  void manifest(const std::string& digest, const std::string& command,
                std::chrono::steady_clock::time_point start) {
    paths_.push_back((fs::path(dir_) / "manifest.json").string());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json m{{"config_digest", digest},
           {"command", command},
           {"output_paths", paths_},
           {"wall_clock_seconds", secs},
           {"tool_version", kToolVersion}};
    fs::create_directories(dir_);
    std::ofstream out(fs::path(dir_) / "manifest.json", std::ios::binary);
    out << m.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write manifest.json");
  }

 private:
  std::string dir_;
  std::vector<std::string> paths_;
};

// Maps exceptions onto exit codes; config problems are reported before any
// file is written.
template <typename Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    log << "error: invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitRuntimeFailure;
  }
}

json curve(const std::vector<RoundMetrics>& metrics, bool worst) {
  json out = json::array();
  for (const auto& rm : metrics) out.push_back(worst ? rm.worst_user_accuracy : rm.mean_val_accuracy);
  return out;
}

json plan_json(const StreamPlan& plan) {
  return {{"m_t", plan.num_streams}, {"assignment", plan.assignment}, {"centroids", plan.centroids}};
}

json matrix_json(const SquareMatrix& a) {
  json rows = json::array();
  for (std::size_t i = 0; i < a.m; ++i) {
    const auto r = a.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

std::size_t parse_streams(const std::string& s) {
  std::size_t k = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), k);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || k == 0)
    throw ConfigError("--streams: expected a positive integer or \"auto\", got '" + s + "'");
  return k;
}

}  // namespace

RunConfig resolve_config(const CommandOptions& opts) {
  if (opts.config_path.empty() == opts.preset.empty())
    throw ConfigError("config: pass exactly one of --config or --preset");
  RunConfig cfg = opts.preset.empty() ? load_config(opts.config_path) : preset(opts.preset);
  if (opts.seed_override) apply_seed_override(cfg, *opts.seed_override);
  if (!opts.streams.empty()) {
    auto& e = cfg.experiment;
    if (e.method == Method::UserCentric) e.method = Method::Streamed;
    if (e.method != Method::Streamed)
      throw ConfigError("--streams: applies only to USER_CENTRIC or STREAMED rules");
    if (opts.streams == "auto") {
      cfg.streams_auto = true;
      e.streams = 0;
    } else {
      cfg.streams_auto = false;
      e.streams = parse_streams(opts.streams);
    }
  }
  cfg.validate();
  return cfg;
}

std::string metrics_csv(const std::vector<RoundMetrics>& metrics) {
  std::string out = "round,user,val_acc,train_loss\n";
  for (const auto& rm : metrics)
    for (std::size_t i = 0; i < rm.per_user_val_accuracy.size(); ++i) {
      out += std::to_string(rm.round);
      out += ',';
      out += std::to_string(i);
      out += ',';
      out += format_double(rm.per_user_val_accuracy[i]);
      out += ',';
      out += format_double(rm.per_user_train_loss[i]);
      out += '\n';
    }
  return out;
}

std::vector<RoundMetrics> parse_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "round,user,val_acc,train_loss")
    throw std::runtime_error("metrics: missing header 'round,user,val_acc,train_loss'");
  std::vector<RoundMetrics> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    const auto where = "metrics line " + std::to_string(line_no);
    if (cols.size() != 4) throw std::runtime_error(where + ": expected 4 columns");
    std::size_t round = 0, user = 0;
    try {
      round = std::stoul(cols[0]);
      user = std::stoul(cols[1]);
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": bad round or user index");
    }
    if (out.empty() || out.back().round != round) {
      if (round != out.size()) throw std::runtime_error(where + ": rounds must be contiguous from 0");
      out.push_back({});
      out.back().round = round;
    }
    auto& rm = out.back();
    if (user != rm.per_user_val_accuracy.size()) throw std::runtime_error(where + ": users out of order");
    try {
      rm.per_user_val_accuracy.push_back(parse_double(cols[2]));
      rm.per_user_train_loss.push_back(parse_double(cols[3]));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  if (out.empty()) throw std::runtime_error("metrics: no rows");
  const auto m = out.front().per_user_val_accuracy.size();
  for (auto& rm : out) {
    if (rm.per_user_val_accuracy.size() != m)
      throw std::runtime_error("metrics: round " + std::to_string(rm.round) + " has a different user count");
    double total = 0.0;
    double worst = rm.per_user_val_accuracy.front();
    for (double a : rm.per_user_val_accuracy) {
      total += a;
      worst = std::min(worst, a);
    }
    rm.mean_val_accuracy = total / static_cast<double>(m);
    rm.worst_user_accuracy = worst;
  }
  return out;
}

std::string timed_curve_csv(const TimedCurve& curve) {
  std::string out = "time_in_tdl,mean_val_acc\n";
  for (const auto& p : curve) out += format_double(p.time) + "," + format_double(p.mean_val_accuracy) + "\n";
  return out;
}

std::optional<std::size_t> streams_used(const ExperimentConfig& cfg, const ExperimentResult& result) {
  switch (cfg.method) {
    case Method::FedAvg: return 1;
    case Method::UserCentric: return cfg.federation.num_clients;
    case Method::Streamed: return result.plan ? result.plan->num_streams : cfg.streams;
    case Method::Oracle: return cfg.federation.num_clusters;
    case Method::Local: return std::nullopt;
  }
  return std::nullopt;
}

int cmd_run(const CommandOptions& opts, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  return guarded(log, [&] {
    const auto cfg = resolve_config(opts);
    const auto result = run_experiment(cfg.experiment);
    std::vector<std::pair<Method, std::vector<RoundMetrics>>> baselines;
    for (auto b : cfg.baselines) {
      auto bcfg = cfg.experiment;
      bcfg.method = b;
      baselines.emplace_back(b, run_experiment(bcfg).metrics);
    }

    const auto digest = config_digest(cfg);
    Outputs out(opts.out_dir);
    out.write("metrics.csv", metrics_csv(result.metrics));
    json summary{{"name", cfg.name},
                 {"method", to_string(cfg.experiment.method)},
                 {"config_digest", digest},
                 {"m", cfg.experiment.federation.num_clients},
                 {"rounds", cfg.experiment.rounds},
                 {"mean_curve", curve(result.metrics, false)},
                 {"worst_curve", curve(result.metrics, true)},
                 {"final_mean_val_accuracy", result.metrics.back().mean_val_accuracy},
                 {"worst_user_final", result.metrics.back().worst_user_accuracy}};
    const auto mt = streams_used(cfg.experiment, result);
    summary["m_t"] = mt ? json(*mt) : json(nullptr);
    json bj = json::object();
    for (const auto& [b, metrics] : baselines) {
      const std::string name = to_string(b);
      out.write("metrics_" + name + ".csv", metrics_csv(metrics));
      bj[name] = {{"mean_curve", curve(metrics, false)},
                  {"final_mean_val_accuracy", metrics.back().mean_val_accuracy},
                  {"worst_user_final", metrics.back().worst_user_accuracy}};
    }
    summary["baselines"] = bj;
    out.write_json("summary.json", summary);
    if (result.plan) out.write_json("streamplan.json", plan_json(*result.plan));
    out.manifest(digest, "run", start);
    log << "run: " << cfg.name << " final mean accuracy "
        << format_double(result.metrics.back().mean_val_accuracy) << "\n";
    return kExitOk;
  });
}

int cmd_similarity(const CommandOptions& opts, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  return guarded(log, [&] {
    const auto cfg = resolve_config(opts);
    const auto& e = cfg.experiment;
    const auto fed = prepare_federation(e);
    SimilarityOptions so;
    so.num_batches = e.variance_batches;
    so.scale = e.sigma_scale;
    const auto sim = similarity_round(fed.train, e.model, e.seeds.probe, so);
    const Seed kseed = derive_seed(e.seeds.probe, {tag("streams")});
    const auto table = silhouette_table(sim.w, default_stream_candidates(sim.w.m), kseed, e.kmeans);

    json sil = json::array();
    for (const auto& p : table) sil.push_back({{"k", p.k}, {"score", p.score}});
    json report{{"m", sim.w.m},
                {"delta", matrix_json(sim.delta)},
                {"sigma_sq", sim.sigma_sq},
                {"w", matrix_json(sim.w)},
                {"probe_seed", sim.probe_seed},
                {"silhouette", sil}};
    if (!table.empty()) {
      auto best = table.front();
      for (const auto& p : table)
        if (p.score > best.score) best = p;
      report["best_k"] = best.k;
    } else {
      report["best_k"] = nullptr;
    }
    const auto digest = config_digest(cfg);
    Outputs out(opts.out_dir);
    out.write_json("similarity.json", report);
    out.manifest(digest, "similarity", start);
    return kExitOk;
  });
}

int cmd_timing(const CommandOptions& opts, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  return guarded(log, [&] {
    auto plain = opts;
    plain.streams.clear();  // --streams sets m_t directly here
    const auto cfg = resolve_config(plain);
    const auto& e = cfg.experiment;
    if (opts.metrics_path.empty()) throw ConfigError("--metrics: required for timing");
    std::ifstream in(opts.metrics_path);
    if (!in) throw ConfigError("--metrics: cannot open '" + opts.metrics_path + "'");
    std::vector<RoundMetrics> metrics;
    try {
      metrics = parse_metrics_csv(in);
    } catch (const std::runtime_error& err) {
      throw ConfigError(std::string("--metrics: ") + err.what());
    }
    const std::size_t m = metrics.front().per_user_val_accuracy.size();
    if (m != e.federation.num_clients)
      throw ConfigError("--metrics: file has " + std::to_string(m) + " users but federation.num_clients is " +
                        std::to_string(e.federation.num_clients));
    if (e.method == Method::Local) throw ConfigError("rule.kind: LOCAL has no communication to time");

    std::size_t mt = 0;
    const auto plan_path = fs::path(opts.metrics_path).parent_path() / "streamplan.json";
    if (!opts.streams.empty() && opts.streams != "auto") {
      mt = parse_streams(opts.streams);
    } else if (e.method == Method::Streamed && fs::exists(plan_path)) {
      std::ifstream pin(plan_path);
      const auto plan = json::parse(pin);
      mt = plan.at("m_t").get<std::size_t>();
    } else if (e.method == Method::Streamed) {
      if (e.streams == 0)
        throw ConfigError("rule.streams: \"auto\" needs streamplan.json next to the metrics file or --streams");
      mt = e.streams;
    } else if (e.method == Method::FedAvg) {
      mt = 1;
    } else if (e.method == Method::UserCentric) {
      mt = m;
    } else {
      mt = e.federation.num_clusters;
    }
    if (mt == 0 || mt > m) throw ConfigError("--streams: m_t must lie in [1, " + std::to_string(m) + "]");

    const bool personalized = e.method == Method::UserCentric || e.method == Method::Streamed;
    auto models = system_presets(cfg.timing.t_dl);
    if (cfg.timing.custom) models.push_back(*cfg.timing.custom);
    Outputs out(opts.out_dir);
    for (const auto& nm : models) {
      const Seed s = derive_seed(cfg.timing.seed, {tag("timing")});
      const double upfront = personalized ? similarity_round_time(m, nm.model, cfg.timing.mode, s) : 0.0;
      const auto tc = timed_curve(metrics, m, mt, nm.model, cfg.timing.mode, s, upfront);
      out.write("timing_" + nm.name + ".csv", timed_curve_csv(tc));
    }
    out.manifest(config_digest(cfg), "timing", start);
    return kExitOk;
  });
}

BoundReport run_bound_grid(const BoundGrid& grid) {
  const auto fc = theory::FiniteHypothesisClass::thresholds(grid.taus);
  std::vector<json> records(grid.cases.size());
  std::vector<char> ok(grid.cases.size(), 0);  // not vector<bool>: workers write concurrently
  {
    std::vector<std::jthread> workers;
    for (std::size_t k = 0; k < grid.cases.size(); ++k)
      workers.emplace_back([&, k] {
        const auto& c = grid.cases[k];
        std::vector<theory::DiscreteDistribution> dists;
        for (const auto& t : c.clients) dists.push_back(threshold_task_distribution(t));
        const auto v = theory::validate_bound(fc, dists, c.ns, c.weights, c.delta, grid.trials,
                                              derive_seed(grid.seed, {tag("bound_case"), k}), c.target);
        ok[k] = v.violation_rate <= c.delta;
        records[k] = {{"config", c.name},      {"delta", c.delta},
                      {"trials", v.trials},    {"m", c.clients.size()},
                      {"ns", c.ns},            {"weights", c.weights},
                      {"target", c.target},    {"bound", v.bound},
                      {"violation_rate", v.violation_rate}, {"mean_excess_risk", v.mean_excess},
                      {"mean_slack", v.mean_slack},         {"within_delta", static_cast<bool>(ok[k])}};
      });
  }
  BoundReport report;
  for (std::size_t k = 0; k < records.size(); ++k) {
    report.records.push_back(records[k]);
    report.all_within_delta = report.all_within_delta && ok[k];
  }
  return report;
}

int cmd_validate_bound(const CommandOptions& opts, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  return guarded(log, [&] {
    const auto cfg = resolve_config(opts);
    const auto report = run_bound_grid(cfg.bound);
    const auto digest = config_digest(cfg);
    Outputs out(opts.out_dir);
    out.write_json("bound_report.json", {{"config_digest", digest},
                                         {"all_within_delta", report.all_within_delta},
                                         {"records", report.records}});
    out.manifest(digest, "validate-bound", start);
    if (!report.all_within_delta) {
      log << "validate-bound: violation rate exceeded delta in at least one configuration\n";
      return kExitBoundViolation;
    }
    return kExitOk;
  });
}

int cmd_presets_list(std::ostream& out) {
  for (const auto& n : preset_names()) out << n << "\n";
  return kExitOk;
}

int cmd_presets_show(const std::string& name, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    out << to_json(preset(name)).dump(2) << "\n";
    return kExitOk;
  });
}

}  // namespace ucfl::cli
