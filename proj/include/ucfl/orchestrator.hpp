#pragma once

// Federated training loop with full participation: broadcast, local training,
// server aggregation under one rule, and per-user validation every round.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ucfl/aggregation.hpp"
#include "ucfl/data.hpp"
#include "ucfl/model.hpp"
#include "ucfl/similarity.hpp"

namespace ucfl {

enum class Method { FedAvg, UserCentric, Streamed, Local, Oracle };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct SeedBlock {
  Seed data = 1;
  Seed init = 2;
  Seed training = 3;
  Seed probe = 4;

  bool operator==(const SeedBlock&) const = default;
};

struct ExperimentConfig {
  FederationSpec federation;
  ModelSpec model;
  OptimizerConfig optimizer;
  Method method = Method::UserCentric;
  std::size_t streams = 0;  // STREAMED only; 0 selects m_t by silhouette
  KMeansOptions kmeans;
  std::size_t rounds = 20;
  double val_fraction = 0.2;
  SeedBlock seeds;
  std::size_t variance_batches = kDefaultVarianceBatches;
  SigmaScale sigma_scale = SigmaScale::StdDev;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct RoundMetrics {
  std::size_t round = 0;
  std::vector<double> per_user_val_accuracy;
  double mean_val_accuracy = 0.0;
  double worst_user_accuracy = 0.0;
  std::vector<double> per_user_train_loss;
  /// Mean pairwise L2 distance between the models held by users of the same
  /// ground-truth cluster. Diagnostic only.
  double intra_cluster_spread = 0.0;
};

struct Federation {
  std::vector<ClientDataset> train;
  std::vector<ClientDataset> val;

  std::vector<std::size_t> train_sizes() const;
};

struct AggregationRule {
  Method kind = Method::FedAvg;
  MixingMatrix w;   // USER_CENTRIC
  StreamPlan plan;  // STREAMED
};

struct ExperimentResult {
  std::vector<RoundMetrics> metrics;  // round 0 (shared init) through round T
  std::optional<SimilarityReport> similarity;
  std::optional<StreamPlan> plan;
  /// models[t][i]: model held by user i after round t; filled on request.
  std::vector<std::vector<ParameterVector>> models;
};

/// Generates the federation and splits every client into train/validation.
Federation prepare_federation(const ExperimentConfig& cfg);

/// Fraction of argmax-correct predictions (ties resolve to the lowest class).
double evaluate(const ParameterVector& theta, const ModelSpec& spec, const ClientDataset& data);

/// Candidate stream counts for automatic selection: [2, min(m, 10)].
std::vector<std::size_t> default_stream_candidates(std::size_t m);

/// Runs the similarity round (when the method needs one) and stream planning.
AggregationRule build_rule(const Federation& fed, const ExperimentConfig& cfg,
                           std::optional<SimilarityReport>* report = nullptr);

/// The round loop for an already prepared federation and rule.
ExperimentResult run_federated(const Federation& fed, const ExperimentConfig& cfg,
                               const AggregationRule& rule, bool record_models = false);

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool record_models = false);

/// Each user trains alone for rounds * local_epochs epochs.
std::vector<RoundMetrics> run_local_baseline(const ExperimentConfig& cfg);

/// Independent FedAvg per ground-truth cluster.
std::vector<RoundMetrics> run_oracle_baseline(const ExperimentConfig& cfg);

/// Seed used by user `user` for its local training in round `round`.
Seed local_training_seed(const SeedBlock& seeds, std::size_t round, std::size_t user);

}  // namespace ucfl
