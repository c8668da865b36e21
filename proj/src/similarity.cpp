#include "ucfl/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ucfl {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return acc;
}

}  // namespace

SquareMatrix SquareMatrix::identity(std::size_t size) {
  SquareMatrix id(size);
  for (std::size_t i = 0; i < size; ++i) id(i, i) = 1.0;
  return id;
}

std::vector<GradientFingerprint> probe_gradients(const ParameterVector& theta_hat,
                                                 const ModelSpec& spec,
                                                 const std::vector<ClientDataset>& clients) {
  std::vector<GradientFingerprint> fps;
  fps.reserve(clients.size());
  for (const auto& c : clients) {
    if (c.n() == 0)
      throw std::invalid_argument("probe_gradients: client " + std::to_string(c.client_id) +
                                  " has no samples");
    auto lg = loss_and_gradient(theta_hat, spec, c.samples);
    fps.push_back({c.client_id, std::move(lg.gradient.values), c.n()});
  }
  return fps;
}

SimilarityMatrix pairwise_delta(const std::vector<GradientFingerprint>& fps) {
  if (fps.size() < 2) throw std::invalid_argument("pairwise_delta: need at least two fingerprints");
  const std::size_t d = fps.front().full_gradient.size();
  for (const auto& f : fps)
    if (f.full_gradient.size() != d)
      throw std::invalid_argument("pairwise_delta: fingerprint length mismatch");

  SimilarityMatrix delta(fps.size());
  for (std::size_t i = 0; i < fps.size(); ++i) {
    for (std::size_t j = i + 1; j < fps.size(); ++j) {
      const double v = squared_distance(fps[i].full_gradient, fps[j].full_gradient);
      delta(i, j) = v;
      delta(j, i) = v;
    }
  }
  return delta;
}

GradientVarianceEstimate estimate_sigma_sq(const ParameterVector& theta_hat, const ModelSpec& spec,
                                           const ClientDataset& data, std::size_t num_batches,
                                           Seed seed) {
  const std::size_t n = data.n();
  if (num_batches == 0) throw std::invalid_argument("estimate_sigma_sq: K must be positive");
  if (num_batches > n)
    throw std::invalid_argument("estimate_sigma_sq: K = " + std::to_string(num_batches) +
                                " exceeds the client's " + std::to_string(n) + " samples");

  const auto full = loss_and_gradient(theta_hat, spec, data.samples);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {tag("sigma_batches"), static_cast<std::uint64_t>(data.client_id)}));
  rng.shuffle(order);

  // Near-equal batches: the first n % K batches carry one extra sample.
  const std::size_t base = n / num_batches;
  const std::size_t extra = n % num_batches;
  double acc = 0.0;
  std::size_t start = 0;
  for (std::size_t k = 0; k < num_batches; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    const auto batch = std::span<const std::size_t>(order).subspan(start, len);
    start += len;
    if (num_batches == 1) break;  // the single batch is the full set
    const auto g = loss_and_gradient(theta_hat, spec, data.samples, batch);
    acc += squared_distance(g.gradient.values, full.gradient.values);
  }
  return {data.client_id, acc / static_cast<double>(num_batches), num_batches};
}

MixingMatrix mixing_matrix(const SimilarityMatrix& deltas,
                           const std::vector<GradientVarianceEstimate>& sigmas,
                           std::span<const std::size_t> ns, SigmaScale scale) {
  const std::size_t m = deltas.m;
  if (sigmas.size() != m || ns.size() != m)
    throw std::invalid_argument("mixing_matrix: inconsistent dimensions");
  for (double v : deltas.data)
    if (std::isnan(v)) throw std::invalid_argument("mixing_matrix: NaN in delta");
  std::vector<double> s(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double v = sigmas[i].sigma_sq;
    if (std::isnan(v)) throw std::invalid_argument("mixing_matrix: NaN in sigma_sq");
    if (!(v > 0.0))
      throw std::invalid_argument("mixing_matrix: sigma_sq of client " + std::to_string(i) +
                                  " is zero; apply the variance floor before mixing");
    if (ns[i] == 0) throw std::invalid_argument("mixing_matrix: sample counts must be positive");
    s[i] = scale == SigmaScale::StdDev ? std::sqrt(v) : v;
  }

  MixingMatrix w(m);
  std::vector<double> logit(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double log_ni = std::log(static_cast<double>(ns[i]));
    for (std::size_t j = 0; j < m; ++j)
      logit[j] = std::log(static_cast<double>(ns[j])) - log_ni - deltas(i, j) / (2.0 * s[i] * s[j]);
    const double mx = *std::max_element(logit.begin(), logit.end());
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      w(i, j) = std::exp(logit[j] - mx);
      total += w(i, j);
    }
    for (std::size_t j = 0; j < m; ++j) w(i, j) /= total;
  }
  return w;
}

SimilarityReport similarity_round(const std::vector<ClientDataset>& clients, const ModelSpec& spec,
                                  Seed probe_seed, const SimilarityOptions& options) {
  SimilarityReport report;
  report.probe_seed = probe_seed;
  const auto theta_hat = init_parameters(spec, probe_seed);
  const auto fps = probe_gradients(theta_hat, spec, clients);
  report.delta = pairwise_delta(fps);

  std::vector<GradientVarianceEstimate> sigmas;
  std::vector<std::size_t> ns;
  for (const auto& c : clients) {
    auto est = estimate_sigma_sq(theta_hat, spec, c, options.num_batches, probe_seed);
    report.sigma_sq.push_back(est.sigma_sq);
    est.sigma_sq = std::max(est.sigma_sq, options.sigma_sq_floor);
    sigmas.push_back(est);
    ns.push_back(c.n());
  }
  report.w = mixing_matrix(report.delta, sigmas, ns, options.scale);
  return report;
}

}  // namespace ucfl
