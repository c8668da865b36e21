#pragma once

// Server-side aggregation: FedAvg, per-user mixing, and stream-reduced mixing
// where k-means over the mixing rows picks m_t centroid weight vectors.

#include <cstddef>
#include <span>
#include <vector>

#include "ucfl/model.hpp"
#include "ucfl/rng.hpp"
#include "ucfl/similarity.hpp"

namespace ucfl {

struct StreamPlan {
  std::size_t num_streams = 0;
  std::vector<std::size_t> assignment;        // user -> stream id
  std::vector<std::vector<double>> centroids;  // num_streams rows of length m, each on the simplex

  /// Throws std::invalid_argument if a stream is empty or a centroid is off the simplex.
  void validate(std::size_t m) const;
  bool operator==(const StreamPlan&) const = default;
};

/// One stream per user with the user's own mixing row.
StreamPlan identity_plan(const MixingMatrix& w);

struct KMeansOptions {
  std::size_t max_iters = 100;
  std::size_t restarts = 10;
};

struct KMeansTrace {
  StreamPlan plan;
  double objective = 0.0;           // sum of squared distances to assigned centroids
  std::size_t best_restart = 0;
  std::vector<double> history;      // objective after each Lloyd iteration of the best restart
};

ParameterVector fedavg_aggregate(const std::vector<ParameterVector>& models,
                                 std::span<const std::size_t> ns);

std::vector<ParameterVector> user_centric_aggregate(const std::vector<ParameterVector>& models,
                                                    const MixingMatrix& w);

/// Output c = sum_j centroid[c][j] * models[j].
std::vector<ParameterVector> streamed_aggregate(const std::vector<ParameterVector>& models,
                                                const StreamPlan& plan);

/// Lloyd's algorithm on the rows of `w` with k-means++ seeding and restarts;
/// the best restart is chosen by (objective, restart index).
KMeansTrace kmeans_streams_traced(const MixingMatrix& w, std::size_t num_streams, Seed seed,
                                  const KMeansOptions& options = {});

StreamPlan kmeans_streams(const MixingMatrix& w, std::size_t num_streams, Seed seed,
                          std::size_t max_iters = 100);

/// Mean silhouette over users, Euclidean distance on mixing rows; singleton
/// clusters and a = b = 0 contribute 0.
double silhouette_score(const MixingMatrix& w, const StreamPlan& plan);

struct SilhouettePoint {
  std::size_t k = 0;
  double score = 0.0;
};

/// Silhouette of kmeans_streams(w, k, seed) for each candidate k.
std::vector<SilhouettePoint> silhouette_table(const MixingMatrix& w,
                                              std::vector<std::size_t> candidates, Seed seed,
                                              const KMeansOptions& options = {});

/// Candidate with the highest silhouette; ties go to the smallest k.
std::size_t select_num_streams(const MixingMatrix& w, std::vector<std::size_t> candidates, Seed seed,
                               const KMeansOptions& options = {});

}  // namespace ucfl
