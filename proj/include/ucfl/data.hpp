#pragma once

// Synthetic federations reproducing three heterogeneity regimes: Dirichlet
// label shift, label shift plus per-group feature rotation (covariate shift),
// and per-group label permutation (concept shift).

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "ucfl/dataset.hpp"
#include "ucfl/rng.hpp"

namespace ucfl {

enum class Scenario { LabelShift, LabelAndCovariateShift, ConceptShift };

const char* to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct ClientDataset {
  int client_id = 0;
  int true_cluster = 0;
  LabeledData samples;

  std::size_t n() const { return samples.size(); }
  bool operator==(const ClientDataset&) const = default;
};

struct FederationSpec {
  std::size_t num_clients = 20;
  Scenario scenario = Scenario::LabelShift;
  double dirichlet_alpha = 0.4;
  std::size_t num_clusters = 1;
  std::size_t samples_per_client = 500;
  std::vector<std::size_t> client_sizes;  // optional per-client override of samples_per_client
  std::size_t input_dim = 2;
  std::size_t num_classes = 4;
  double mean_radius = 3.0;
  double pool_factor = 3.0;  // pool holds pool_factor * sum(n_i) samples
  Seed seed = 0;

  void validate() const;
  std::size_t client_size(std::size_t i) const;
  std::size_t total_samples() const;
  std::size_t pool_size() const;
};

/// Gaussian class-conditional pool with unit covariance and means on a sphere.
struct SamplePool {
  std::vector<std::vector<double>> class_means;
  LabeledData data;
};

inline constexpr std::size_t kMeanCandidates = 64;

/// Class means: of kMeanCandidates uniform draws on the radius sphere, the
/// set with the largest minimum pairwise distance. Labels are balanced
/// (counts differ by at most one) and shuffled.
SamplePool generate_base_task(const FederationSpec& spec);

/// Dirichlet(alpha) label proportions per client; features drawn from the
/// pool without replacement.
std::vector<ClientDataset> partition_label_shift(const SamplePool& pool, const FederationSpec& spec);

/// Label shift, then round-robin groups whose features are rotated by
/// 2*pi*g/num_clusters in the first two coordinates.
std::vector<ClientDataset> partition_covariate_shift(const SamplePool& pool,
                                                     const FederationSpec& spec);

/// IID split, round-robin groups, group g relabels through permutation g
/// (group 0 keeps the identity).
std::vector<ClientDataset> partition_concept_shift(const SamplePool& pool,
                                                   const FederationSpec& spec);

/// Permutations used by partition_concept_shift; entry 0 is the identity.
std::vector<std::vector<int>> concept_permutations(const FederationSpec& spec);

/// Applies the in-plane rotation used for group `group` of `num_groups`.
void rotate_first_plane(std::span<double> x, std::size_t group, std::size_t num_groups);

/// Dispatches on spec.scenario.
std::vector<ClientDataset> generate_federation(const FederationSpec& spec);

struct TrainValSplit {
  ClientDataset train;
  ClientDataset val;
};

/// Seeded shuffle then split; the validation part receives round(fraction * n)
/// samples clamped so both parts are non-empty.
TrainValSplit train_val_split(const ClientDataset& data, double fraction, Seed seed);

/// JSON-lines dump, one record per sample: {"client", "x", "y", "cluster"}.
void write_jsonl(std::ostream& os, const std::vector<ClientDataset>& clients);
std::vector<ClientDataset> read_jsonl(std::istream& is);

}  // namespace ucfl
