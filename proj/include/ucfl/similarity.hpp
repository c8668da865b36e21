#pragma once

// The similarity round run once before federated training: every client
// reports its full-data gradient at a shared probe model and a K-batch
// gradient-variance estimate; the server turns them into the row-stochastic
// mixing matrix used by user-centric aggregation.

#include <cstddef>
#include <span>
#include <vector>

#include "ucfl/data.hpp"
#include "ucfl/model.hpp"
#include "ucfl/rng.hpp"

namespace ucfl {

struct GradientFingerprint {
  int client_id = 0;
  std::vector<double> full_gradient;
  std::size_t n = 0;
};

struct GradientVarianceEstimate {
  int client_id = 0;
  double sigma_sq = 0.0;
  std::size_t num_batches = 1;
};

/// Dense row-major square matrix.
struct SquareMatrix {
  std::size_t m = 0;
  std::vector<double> data;

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t size, double fill = 0.0) : m(size), data(size * size, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * m + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * m + j]; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * m, m}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * m, m}; }

  static SquareMatrix identity(std::size_t size);
  bool operator==(const SquareMatrix&) const = default;
};

/// Symmetric, zero-diagonal matrix of squared fingerprint distances.
using SimilarityMatrix = SquareMatrix;
/// Row-stochastic collaboration coefficients.
using MixingMatrix = SquareMatrix;

/// How the exponent's scale sigma_i * sigma_j is formed from the variance
/// estimates: product of standard deviations (default) or of raw variances.
enum class SigmaScale { StdDev, Variance };

inline constexpr double kSigmaSqFloor = 1e-12;
inline constexpr std::size_t kDefaultVarianceBatches = 10;

std::vector<GradientFingerprint> probe_gradients(const ParameterVector& theta_hat,
                                                 const ModelSpec& spec,
                                                 const std::vector<ClientDataset>& clients);

/// delta(i, j) = ||g_i - g_j||^2, upper triangle computed and mirrored.
SimilarityMatrix pairwise_delta(const std::vector<GradientFingerprint>& fps);

/// (1/K) sum_k ||mean-grad(batch k) - mean-grad(full)||^2 over K near-equal
/// batches of a seeded shuffle.
GradientVarianceEstimate estimate_sigma_sq(const ParameterVector& theta_hat, const ModelSpec& spec,
                                           const ClientDataset& data, std::size_t num_batches,
                                           Seed seed);

/// w(i, j) proportional to (n_j / n_i) exp(-delta(i, j) / (2 s_i s_j)),
/// evaluated per row with a log-sum-exp shift. Throws if any sigma_sq is zero
/// or any input is NaN.
MixingMatrix mixing_matrix(const SimilarityMatrix& deltas,
                           const std::vector<GradientVarianceEstimate>& sigmas,
                           std::span<const std::size_t> ns,
                           SigmaScale scale = SigmaScale::StdDev);

struct SimilarityOptions {
  std::size_t num_batches = kDefaultVarianceBatches;
  SigmaScale scale = SigmaScale::StdDev;
  double sigma_sq_floor = kSigmaSqFloor;
};

struct SimilarityReport {
  MixingMatrix w;
  SimilarityMatrix delta;
  std::vector<double> sigma_sq;  // raw estimates, before the floor
  Seed probe_seed = 0;
};

/// Probe model from init_parameters(spec, probe_seed), then fingerprints,
/// deltas, floored variance estimates and the mixing matrix.
SimilarityReport similarity_round(const std::vector<ClientDataset>& clients, const ModelSpec& spec,
                                  Seed probe_seed, const SimilarityOptions& options = {});

}  // namespace ucfl
