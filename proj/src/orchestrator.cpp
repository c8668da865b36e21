#include "ucfl/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace ucfl {

namespace {

// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so
// the result does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
}

double l2_distance(const ParameterVector& a, const ParameterVector& b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a.values[k] - b.values[k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

RoundMetrics measure(std::size_t round, const Federation& fed, const ModelSpec& spec,
                     const std::vector<ParameterVector>& models) {
  const std::size_t m = models.size();
  RoundMetrics rm;
  rm.round = round;
  rm.per_user_val_accuracy.resize(m);
  rm.per_user_train_loss.resize(m);
  parallel_for(m, [&](std::size_t i) {
    rm.per_user_val_accuracy[i] = evaluate(models[i], spec, fed.val[i]);
    rm.per_user_train_loss[i] = mean_loss(models[i], spec, fed.train[i].samples);
  });
  double total = 0.0;
  for (double a : rm.per_user_val_accuracy) total += a;
  rm.mean_val_accuracy = total / static_cast<double>(m);
  rm.worst_user_accuracy =
      *std::min_element(rm.per_user_val_accuracy.begin(), rm.per_user_val_accuracy.end());

  double spread = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      if (fed.train[i].true_cluster == fed.train[j].true_cluster) {
        spread += l2_distance(models[i], models[j]);
        ++pairs;
      }
  rm.intra_cluster_spread = pairs ? spread / static_cast<double>(pairs) : 0.0;
  return rm;
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::FedAvg: return "FEDAVG";
    case Method::UserCentric: return "USER_CENTRIC";
    case Method::Streamed: return "STREAMED";
    case Method::Local: return "LOCAL";
    case Method::Oracle: return "ORACLE";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "FEDAVG") return Method::FedAvg;
  if (s == "USER_CENTRIC") return Method::UserCentric;
  if (s == "STREAMED") return Method::Streamed;
  if (s == "LOCAL") return Method::Local;
  if (s == "ORACLE") return Method::Oracle;
  throw std::invalid_argument("rule.kind: unknown value '" + s + "'");
}

void ExperimentConfig::validate() const {
  federation.validate();
  model.validate();
  optimizer.validate();
  if (model.input_dim != federation.input_dim)
    throw std::invalid_argument("model.input_dim must equal federation.input_dim");
  if (model.num_classes != federation.num_classes)
    throw std::invalid_argument("model.num_classes must equal federation.num_classes");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("val_fraction must lie in (0, 1)");
  if (variance_batches == 0) throw std::invalid_argument("variance_batches must be positive");
  if (method == Method::Streamed && streams > federation.num_clients)
    throw std::invalid_argument("rule.streams must not exceed federation.num_clients");
  if (kmeans.max_iters == 0) throw std::invalid_argument("rule.kmeans_max_iters must be positive");
  if (kmeans.restarts == 0) throw std::invalid_argument("rule.kmeans_restarts must be positive");
  for (std::size_t i = 0; i < federation.num_clients; ++i)
    if (federation.client_size(i) < 2)
      throw std::invalid_argument("federation.samples_per_client must be at least 2 for a validation split");
}

std::vector<std::size_t> Federation::train_sizes() const {
  std::vector<std::size_t> ns;
  ns.reserve(train.size());
  for (const auto& c : train) ns.push_back(c.n());
  return ns;
}

Federation prepare_federation(const ExperimentConfig& cfg) {
  cfg.validate();
  FederationSpec spec = cfg.federation;
  spec.seed = cfg.seeds.data;
  const auto clients = generate_federation(spec);
  Federation fed;
  for (const auto& c : clients) {
    auto split = train_val_split(c, cfg.val_fraction,
                                 derive_seed(cfg.seeds.data, {tag("split"), static_cast<std::uint64_t>(c.client_id)}));
    fed.train.push_back(std::move(split.train));
    fed.val.push_back(std::move(split.val));
  }
  return fed;
}

double evaluate(const ParameterVector& theta, const ModelSpec& spec, const ClientDataset& data) {
  if (data.n() == 0) throw std::invalid_argument("evaluate: empty dataset");
  std::size_t correct = 0;
  for (std::size_t r = 0; r < data.n(); ++r)
    if (predict(theta, spec, data.samples.row(r)) == static_cast<std::size_t>(data.samples.labels[r]))
      ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.n());
}

std::vector<std::size_t> default_stream_candidates(std::size_t m) {
  std::vector<std::size_t> ks;
  for (std::size_t k = 2; k <= std::min<std::size_t>(m, 10); ++k) ks.push_back(k);
  return ks;
}

Seed local_training_seed(const SeedBlock& seeds, std::size_t round, std::size_t user) {
  return derive_seed(seeds.training, {tag("round"), round, user});
}

AggregationRule build_rule(const Federation& fed, const ExperimentConfig& cfg,
                           std::optional<SimilarityReport>* report) {
  AggregationRule rule;
  rule.kind = cfg.method;
  if (cfg.method != Method::UserCentric && cfg.method != Method::Streamed) return rule;

  SimilarityOptions opts;
  opts.num_batches = cfg.variance_batches;
  opts.scale = cfg.sigma_scale;
  auto sim = similarity_round(fed.train, cfg.model, cfg.seeds.probe, opts);
  rule.w = sim.w;
  if (cfg.method == Method::Streamed) {
    const Seed kseed = derive_seed(cfg.seeds.probe, {tag("streams")});
    std::size_t k = cfg.streams;
    if (k == 0) {
      const auto candidates = default_stream_candidates(rule.w.m);
      k = candidates.empty() ? 1 : select_num_streams(rule.w, candidates, kseed, cfg.kmeans);
    }
    rule.plan = kmeans_streams_traced(rule.w, k, kseed, cfg.kmeans).plan;
  }
  if (report) *report = std::move(sim);
  return rule;
}

ExperimentResult run_federated(const Federation& fed, const ExperimentConfig& cfg,
                               const AggregationRule& rule, bool record_models) {
  const std::size_t m = fed.train.size();
  if (fed.val.size() != m) throw std::invalid_argument("run_federated: train/val size mismatch");
  const auto ns = fed.train_sizes();

  std::map<int, std::vector<std::size_t>> groups;
  if (rule.kind == Method::Oracle) {
    for (std::size_t i = 0; i < m; ++i) {
      if (fed.train[i].true_cluster < 0)
        throw std::invalid_argument("run_oracle_baseline: client " + std::to_string(i) +
                                    " has no ground-truth cluster label");
      groups[fed.train[i].true_cluster].push_back(i);
    }
  }
  if (rule.kind == Method::UserCentric && rule.w.m != m)
    throw std::invalid_argument("run_federated: mixing matrix size does not match federation");
  if (rule.kind == Method::Streamed) rule.plan.validate(m);

  ExperimentResult result;
  std::vector<ParameterVector> models(m, init_parameters(cfg.model, cfg.seeds.init));
  result.metrics.push_back(measure(0, fed, cfg.model, models));
  if (record_models) result.models.push_back(models);

  std::vector<ParameterVector> local(m);
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    parallel_for(m, [&](std::size_t i) {
      local[i] = local_train(models[i], cfg.model, fed.train[i].samples, cfg.optimizer,
                             local_training_seed(cfg.seeds, t, i));
    });

    switch (rule.kind) {
      case Method::FedAvg: {
        const auto global = fedavg_aggregate(local, ns);
        std::fill(models.begin(), models.end(), global);
        break;
      }
      case Method::Oracle:
        for (const auto& [cluster, members] : groups) {
          std::vector<ParameterVector> sub;
          std::vector<std::size_t> sub_ns;
          for (auto i : members) {
            sub.push_back(local[i]);
            sub_ns.push_back(ns[i]);
          }
          const auto g = fedavg_aggregate(sub, sub_ns);
          for (auto i : members) models[i] = g;
        }
        break;
      case Method::UserCentric:
        models = user_centric_aggregate(local, rule.w);
        break;
      case Method::Streamed: {
        const auto streams = streamed_aggregate(local, rule.plan);
        for (std::size_t i = 0; i < m; ++i) models[i] = streams[rule.plan.assignment[i]];
        break;
      }
      case Method::Local:
        models = local;
        break;
    }

    result.metrics.push_back(measure(t, fed, cfg.model, models));
    if (record_models) result.models.push_back(models);
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool record_models) {
  const auto fed = prepare_federation(cfg);
  std::optional<SimilarityReport> report;
  const auto rule = build_rule(fed, cfg, &report);
  auto result = run_federated(fed, cfg, rule, record_models);
  result.similarity = std::move(report);
  if (rule.kind == Method::Streamed) result.plan = rule.plan;
  if (rule.kind == Method::UserCentric) result.plan = identity_plan(rule.w);
  return result;
}

std::vector<RoundMetrics> run_local_baseline(const ExperimentConfig& cfg) {
  auto local_cfg = cfg;
  local_cfg.method = Method::Local;
  return run_experiment(local_cfg).metrics;
}

std::vector<RoundMetrics> run_oracle_baseline(const ExperimentConfig& cfg) {
  auto oracle_cfg = cfg;
  oracle_cfg.method = Method::Oracle;
  return run_experiment(oracle_cfg).metrics;
}

}  // namespace ucfl
