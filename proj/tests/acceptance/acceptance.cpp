// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>

#include "oracles.hpp"
#include "ucfl/commands.hpp"

using namespace ucfl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

constexpr int kSeeds = 5;

RunConfig seeded_preset(const std::string& name, int s) {
  auto cfg = preset(name);
  apply_seed_override(cfg, 1000 + 97 * static_cast<Seed>(s));
  return cfg;
}

// Runs are shared between criteria; key = (preset, method, streams, rounds, seed).
using RunKey = std::tuple<std::string, Method, std::size_t, std::size_t, int>;
std::map<RunKey, std::vector<RoundMetrics>> g_runs;

const std::vector<RoundMetrics>& run(const std::string& name, Method method, std::size_t streams, int s,
                                     std::size_t rounds = 0) {
  auto cfg = seeded_preset(name, s).experiment;
  if (rounds) cfg.rounds = rounds;
  const RunKey key{name, method, streams, cfg.rounds, s};
  if (auto it = g_runs.find(key); it != g_runs.end()) return it->second;
  cfg.method = method;
  cfg.streams = streams;
  return g_runs[key] = run_experiment(cfg).metrics;
}

double final_mean(const std::vector<RoundMetrics>& ms) { return ms.back().mean_val_accuracy; }
double final_worst(const std::vector<RoundMetrics>& ms) { return ms.back().worst_user_accuracy; }

// ---------------------------------------------------------------------------

Outcome ac1_gradients() {
  Rng rng(20240601);
  double worst = 0.0;
  std::size_t max_d = 0;
  for (int inst = 0; inst < 50; ++inst) {
    ModelSpec spec;
    switch (inst % 3) {
      case 0: spec = {Architecture::Linear, 2 + rng.index(15), 0, 2 + rng.index(8), Activation::Relu}; break;
      case 1: spec = {Architecture::Mlp1, 2 + rng.index(8), 2 + rng.index(10), 2 + rng.index(5), Activation::Tanh}; break;
      default: spec = {Architecture::Mlp1, 2 + rng.index(8), 2 + rng.index(10), 2 + rng.index(5), Activation::Relu}; break;
    }
    auto theta = init_parameters(spec, rng.next_u64());
    for (auto& v : theta.values) v += 0.3 * rng.normal();
    if (theta.size() > 200) {
      --inst;
      continue;
    }
    max_d = std::max(max_d, theta.size());
    LabeledData data(spec.input_dim);
    const std::size_t n = 1 + rng.index(20);
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> x(spec.input_dim);
      for (auto& v : x) v = 2.0 * rng.normal();
      data.push_back(x, static_cast<int>(rng.index(spec.num_classes)));
    }
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < n; ++r)
      if (rng.uniform() < 0.7 || rows.empty()) rows.push_back(r);
    const auto g = loss_and_gradient(theta, spec, data, rows).gradient.values;
    worst = std::max(worst, oracle::max_relative_error(g, oracle::fd_gradient(theta, spec, data, rows)));
  }
  return {worst < 1e-4, fmt("max relative error %.2e over 50 instances (d <= %zu), limit 1e-4", worst, max_d)};
}

Outcome ac2_fedavg_degeneration() {
  ExperimentConfig cfg = seeded_preset("covariate_shift_small", 0).experiment;
  cfg.federation.client_sizes.clear();
  for (std::size_t i = 0; i < cfg.federation.num_clients; ++i) cfg.federation.client_sizes.push_back(100 + 15 * i);
  cfg.rounds = 10;
  const auto fed = prepare_federation(cfg);
  const auto ns = fed.train_sizes();
  const double total = static_cast<double>(std::accumulate(ns.begin(), ns.end(), std::size_t{0}));

  const auto sim = similarity_round(fed.train, cfg.model, cfg.seeds.probe);
  std::vector<GradientVarianceEstimate> sigmas;
  for (std::size_t i = 0; i < ns.size(); ++i)
    sigmas.push_back({static_cast<int>(i), std::max(sim.sigma_sq[i], kSigmaSqFloor), cfg.variance_batches});
  const SimilarityMatrix zero(ns.size(), 0.0);
  const auto w = mixing_matrix(zero, sigmas, ns);
  double w_err = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i)
    for (std::size_t j = 0; j < ns.size(); ++j) w_err = std::max(w_err, std::abs(w(i, j) - ns[j] / total));

  AggregationRule uc{Method::UserCentric, w, {}};
  AggregationRule fa{Method::FedAvg, {}, {}};
  const auto a = run_federated(fed, cfg, uc, true);
  const auto b = run_federated(fed, cfg, fa, true);
  double model_err = 0.0;
  for (std::size_t t = 0; t < a.models.size(); ++t)
    for (std::size_t i = 0; i < ns.size(); ++i)
      for (std::size_t k = 0; k < a.models[t][i].size(); ++k)
        model_err = std::max(model_err, std::abs(a.models[t][i].values[k] - b.models[t][i].values[k]));
  return {w_err <= 1e-12 && model_err <= 1e-9 && a.models.size() == 11,
          fmt("max |w - n_j/N| = %.1e (limit 1e-12), max model gap over 10 rounds = %.1e (limit 1e-9)", w_err, model_err)};
}

Outcome ac3_row_stochastic() {
  Rng rng(77);
  double worst = 0.0;
  bool finite = true, nonneg = true;
  for (int inst = 0; inst < 100; ++inst) {
    MixingMatrix w;
    if (inst < 40) {
      FederationSpec f;
      f.num_clients = 3 + rng.index(10);
      f.scenario = static_cast<Scenario>(rng.index(3));
      f.num_clusters = f.scenario == Scenario::LabelShift ? 1 : std::min<std::size_t>(f.num_clients, 2 + rng.index(3));
      f.samples_per_client = 20 + rng.index(60);
      f.input_dim = 2 + rng.index(4);
      f.num_classes = 4;
      f.seed = rng.next_u64();
      const ModelSpec spec{Architecture::Linear, f.input_dim, 0, 4, Activation::Relu};
      SimilarityOptions opts;
      opts.num_batches = 1 + rng.index(10);
      opts.scale = rng.index(2) ? SigmaScale::StdDev : SigmaScale::Variance;
      w = similarity_round(generate_federation(f), spec, rng.next_u64(), opts).w;
    } else {
      // Adversarial: deltas up to 1e300 and variances down to the floor.
      const std::size_t m = 2 + rng.index(30);
      SimilarityMatrix d(m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) d(i, j) = d(j, i) = std::pow(10.0, rng.uniform(-5.0, 300.0));
      std::vector<GradientVarianceEstimate> s;
      std::vector<std::size_t> ns;
      for (std::size_t i = 0; i < m; ++i) {
        s.push_back({static_cast<int>(i), std::max(kSigmaSqFloor, std::pow(10.0, rng.uniform(-12.0, 3.0))), 1});
        ns.push_back(1 + rng.index(100000));
      }
      w = mixing_matrix(d, s, ns, rng.index(2) ? SigmaScale::StdDev : SigmaScale::Variance);
    }
    for (std::size_t i = 0; i < w.m; ++i) {
      double sum = 0.0;
      for (double v : w.row(i)) {
        finite = finite && std::isfinite(v);
        nonneg = nonneg && v >= 0.0;
        sum += v;
      }
      nonneg = nonneg && w(i, i) > 0.0;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  return {finite && nonneg && worst <= 1e-9,
          fmt("100 instances (60 adversarial): max |row sum - 1| = %.1e, all finite: %s, non-negative with positive diagonal: %s",
              worst, finite ? "yes" : "no", nonneg ? "yes" : "no")};
}

Outcome ac4_cluster_recovery() {
  int ari_ok = 0, peak_ok = 0;
  std::string peaks;
  for (int s = 0; s < kSeeds; ++s) {
    const auto cfg = seeded_preset("concept_shift_small", s).experiment;
    const auto fed = prepare_federation(cfg);
    SimilarityOptions so;
    so.num_batches = cfg.variance_batches;
    const auto w = similarity_round(fed.train, cfg.model, cfg.seeds.probe, so).w;
    const Seed kseed = derive_seed(cfg.seeds.probe, {tag("streams")});
    const auto plan = kmeans_streams(w, 4, kseed);
    std::vector<int> truth;
    for (const auto& c : fed.train) truth.push_back(c.true_cluster);
    if (oracle::adjusted_rand_index(plan.assignment, truth) == 1.0) ++ari_ok;
    const auto table = silhouette_table(w, default_stream_candidates(w.m), kseed, cfg.kmeans);
    auto best = table.front();
    for (const auto& p : table)
      if (p.score > best.score) best = p;
    if (best.k == 4) ++peak_ok;
    peaks += (s ? "," : "") + std::to_string(best.k);
  }
  return {ari_ok >= 4 && peak_ok >= 4,
          fmt("ARI = 1 in %d/5 seeds, silhouette peak at k=4 in %d/5 seeds (peaks: %s)", ari_ok, peak_ok, peaks.c_str())};
}

Outcome ac5_concept_ordering() {
  std::vector<double> uc, local, fedavg, orc;
  for (int s = 0; s < kSeeds; ++s) {
    uc.push_back(final_mean(run("concept_shift_small", Method::Streamed, 4, s)));
    local.push_back(final_mean(run("concept_shift_small", Method::Local, 0, s)));
    fedavg.push_back(final_mean(run("concept_shift_small", Method::FedAvg, 0, s)));
    orc.push_back(final_mean(run("concept_shift_small", Method::Oracle, 0, s)));
  }
  const double u = mean(uc), l = mean(local), f = mean(fedavg), o = mean(orc);
  return {u >= l && l > f && std::abs(u - o) <= 0.02,
          fmt("UC(m_t=4) %.4f >= LOCAL %.4f > FEDAVG %.4f; |UC - ORACLE %.4f| = %.4f <= 0.02", u, l, f, o, std::abs(u - o))};
}

Outcome ac6_label_ordering() {
  std::vector<double> uc, local, fedavg;
  for (int s = 0; s < kSeeds; ++s) {
    uc.push_back(final_mean(run("label_shift_small", Method::UserCentric, 0, s)));
    local.push_back(final_mean(run("label_shift_small", Method::Local, 0, s)));
    fedavg.push_back(final_mean(run("label_shift_small", Method::FedAvg, 0, s)));
  }
  const double u = mean(uc), l = mean(local), f = mean(fedavg);
  return {f > l && u >= f, fmt("FEDAVG %.4f > LOCAL %.4f; UC(m_t=m) %.4f >= FEDAVG", f, l, u)};
}

Outcome ac7_worst_user() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"label_shift_small", "covariate_shift_small", "concept_shift_small"}) {
    std::vector<double> uc, fedavg;
    for (int s = 0; s < kSeeds; ++s) {
      uc.push_back(final_worst(run(name, Method::UserCentric, 0, s)));
      fedavg.push_back(final_worst(run(name, Method::FedAvg, 0, s)));
    }
    ok = ok && mean(uc) >= mean(fedavg);
    detail += fmt("%s%s UC %.3f vs FEDAVG %.3f", detail.empty() ? "" : "; ", name, mean(uc), mean(fedavg));
  }
  return {ok, "worst-user final accuracy, " + detail};
}

Outcome ac8_makespan() {
  bool ok = true;
  std::string detail;
  for (std::size_t m : {3u, 20u, 50u}) {
    const CommModel cm{1.0, 1.0, 2.0, 1.0, UplinkMode::Parallel};
    const auto est = monte_carlo_compute_time(m, cm, 1000000, 8000 + m);
    const double expect = 2.0 + oracle::harmonic(m);
    const double z = std::abs(est.mean - expect) / est.standard_error;
    ok = ok && z <= 3.0 && std::abs(expected_compute_time(m, cm) - expect) <= 1e-12;
    if (m == 3) ok = ok && std::abs(est.mean - 3.8333) <= 0.01;
    detail += fmt("%sm=%zu: %.4f vs %.4f (%.2f SE)", detail.empty() ? "" : ", ", m, est.mean, expect, z);
  }
  return {ok, detail};
}

// Mean-over-seeds accuracy curve in time, with the similarity round charged
// upfront for personalized methods.
TimedCurve averaged_curve(const std::string& name, Method method, std::size_t streams, std::size_t mt,
                          const CommModel& cm, std::size_t rounds) {
  TimedCurve out;
  for (int s = 0; s < kSeeds; ++s) {
    const auto& ms = run(name, method, streams, s, rounds);
    const bool personalized = method == Method::UserCentric || method == Method::Streamed;
    const std::size_t m = ms.front().per_user_val_accuracy.size();
    const double upfront = personalized ? similarity_round_time(m, cm, TimingMode::Expected, 0) : 0.0;
    const auto c = timed_curve(ms, m, mt, cm, TimingMode::Expected, 0, upfront);
    if (out.empty()) out.assign(c.size(), {});
    for (std::size_t k = 0; k < c.size(); ++k) {
      out[k].time = c[k].time;
      out[k].mean_val_accuracy += c[k].mean_val_accuracy / kSeeds;
    }
  }
  return out;
}

double initial_accuracy(const std::string& name, Method method, std::size_t streams, std::size_t rounds) {
  double a = 0.0;
  for (int s = 0; s < kSeeds; ++s) a += run(name, method, streams, s, rounds).front().mean_val_accuracy / kSeeds;
  return a;
}

Outcome ac9_timing() {
  const std::string name = "covariate_shift_small";
  const std::size_t m = preset(name).experiment.federation.num_clients;
  const std::size_t rounds = preset(name).experiment.rounds;

  // wireless_slow: full personalization against FedAvg, FedAvg run long enough
  // to cover the personalized curve's horizon.
  const auto slow = system_preset("wireless_slow");
  const auto uc = averaged_curve(name, Method::UserCentric, 0, m, slow, rounds);
  const double horizon = uc.back().time;
  const double fa_round = round_time(m, 1, slow, TimingMode::Expected, 0);
  const auto fa_rounds = static_cast<std::size_t>(std::ceil(horizon / fa_round));
  const auto fa = averaged_curve(name, Method::FedAvg, 0, 1, slow, std::max(rounds, fa_rounds));
  const double uc0 = initial_accuracy(name, Method::UserCentric, 0, rounds);
  const double fa0 = initial_accuracy(name, Method::FedAvg, 0, std::max(rounds, fa_rounds));

  std::vector<double> events;
  for (const auto& p : uc) events.push_back(p.time);
  for (const auto& p : fa)
    if (p.time <= horizon) events.push_back(p.time);
  std::sort(events.begin(), events.end());
  // Crossover: earliest event after which the personalized curve never falls below FedAvg.
  double crossover = NAN;
  for (auto it = events.rbegin(); it != events.rend(); ++it) {
    if (accuracy_at(uc, *it, uc0) < accuracy_at(fa, *it, fa0)) break;
    crossover = *it;
  }
  const bool slow_ok = !std::isnan(crossover) && crossover < horizon &&
                       accuracy_at(uc, horizon, uc0) > accuracy_at(fa, horizon, fa0);

  // wired: m_t = 4 against m_t = m in time to reach FedAvg's final accuracy.
  const auto wired = system_preset("wired");
  const double target = averaged_curve(name, Method::FedAvg, 0, 1, wired, rounds).back().mean_val_accuracy;
  auto time_to = [&](const TimedCurve& c) {
    for (const auto& p : c)
      if (p.mean_val_accuracy >= target) return p.time;
    return std::numeric_limits<double>::infinity();
  };
  const double t4 = time_to(averaged_curve(name, Method::Streamed, 4, 4, wired, rounds));
  const double tm = time_to(averaged_curve(name, Method::UserCentric, 0, m, wired, rounds));
  const bool wired_ok = t4 < tm;

  return {slow_ok && wired_ok,
          fmt("wireless_slow: m_t=m at or above FEDAVG from t=%.1f to horizon %.1f (final %.3f vs %.3f); "
              "wired: FEDAVG final %.3f reached at t=%.1f with m_t=4 vs t=%.1f with m_t=m",
              crossover, horizon, accuracy_at(uc, horizon, uc0), accuracy_at(fa, horizon, fa0), target, t4, tm)};
}

Outcome ac10_bound() {
  auto grid = default_bound_grid();
  grid.trials = 10000;
  const auto report = cli::run_bound_grid(grid);
  std::set<double> deltas;
  double worst = 0.0;
  bool ok = report.all_within_delta && grid.cases.size() >= 5;
  for (const auto& r : report.records) {
    deltas.insert(r["delta"].get<double>());
    worst = std::max(worst, r["violation_rate"].get<double>());
    ok = ok && r["violation_rate"].get<double>() <= r["delta"].get<double>() && r["trials"] == 10000;
  }
  ok = ok && deltas == std::set<double>{0.05, 0.1};
  return {ok, fmt("%zu configurations x 10^4 trials, worst violation rate %.4f", grid.cases.size(), worst)};
}

Outcome ac11_determinism() {
  const auto root = fs::temp_directory_path() / "ucfl_acceptance_determinism";
  fs::remove_all(root);
  bool ok = true;
  std::ostringstream log;
  for (const auto& name : preset_names()) {
    std::string bytes[2];
    for (int rep = 0; rep < 2; ++rep) {
      cli::CommandOptions o;
      o.preset = name;
      o.out_dir = (root / (name + std::to_string(rep))).string();
      ok = ok && cli::cmd_run(o, log) == cli::kExitOk;
      std::ifstream in(fs::path(o.out_dir) / "metrics.csv", std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      bytes[rep] = ss.str();
    }
    ok = ok && !bytes[0].empty() && bytes[0] == bytes[1];
  }
  fs::remove_all(root);
  return {ok, fmt("metrics.csv byte-identical across two runs of each of %zu presets", preset_names().size())};
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* title;
    double limit_s;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria{
      {"AC1", "gradient correctness", 10, ac1_gradients},
      {"AC2", "FedAvg degeneration", 30, ac2_fedavg_degeneration},
      {"AC3", "mixing matrix row-stochastic", 60, ac3_row_stochastic},
      {"AC4", "cluster recovery", 120, ac4_cluster_recovery},
      {"AC5", "concept-shift ordering", 300, ac5_concept_ordering},
      {"AC6", "label-shift ordering", 300, ac6_label_ordering},
      {"AC7", "worst-user fairness", 600, ac7_worst_user},
      {"AC8", "makespan formula", 30, ac8_makespan},
      {"AC9", "timing presets", 300, ac9_timing},
      {"AC10", "bound validity", 120, ac10_bound},
      {"AC11", "determinism", 60, ac11_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs <= c.limit_s;
    failures += !pass;
    std::printf("[%s] %s %s: %s (%.1f s, limit %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), secs,
                c.limit_s);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
