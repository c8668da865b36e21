#include "ucfl/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ucfl {

namespace {

void check_models(const std::vector<ParameterVector>& models) {
  if (models.empty()) throw std::invalid_argument("aggregation: no models");
  const std::size_t d = models.front().size();
  for (const auto& m : models)
    if (m.size() != d) throw std::invalid_argument("aggregation: model dimension mismatch");
}

// sum_j weights[j] * models[j], accumulated left to right.
ParameterVector mix(const std::vector<ParameterVector>& models, std::span<const double> weights) {
  ParameterVector out(models.front().shape);
  for (std::size_t j = 0; j < models.size(); ++j) {
    const double wj = weights[j];
    const auto& src = models[j].values;
    for (std::size_t k = 0; k < out.size(); ++k) out.values[k] += wj * src[k];
  }
  return out;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return acc;
}

struct Clustering {
  std::vector<std::size_t> assignment;
  std::vector<std::vector<double>> centroids;
  double objective = 0.0;
  std::vector<double> history;
};

double objective_of(const MixingMatrix& w, const Clustering& c) {
  double total = 0.0;
  for (std::size_t i = 0; i < w.m; ++i) total += sq_dist(w.row(i), c.centroids[c.assignment[i]]);
  return total;
}

std::vector<std::vector<double>> kmeanspp_seed(const MixingMatrix& w, std::size_t k, Rng& rng) {
  const std::size_t m = w.m;
  std::vector<std::vector<double>> centers;
  std::vector<bool> chosen(m, false);
  std::size_t first = rng.index(m);
  chosen[first] = true;
  centers.emplace_back(w.row(first).begin(), w.row(first).end());

  std::vector<double> d2(m);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(w.row(i), c));
      d2[i] = chosen[i] ? 0.0 : best;
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      pick = rng.categorical(d2);
    } else {
      // All remaining points coincide with a center; pick an unused point uniformly.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < m; ++i)
        if (!chosen[i]) free.push_back(i);
      pick = free[rng.index(free.size())];
    }
    chosen[pick] = true;
    centers.emplace_back(w.row(pick).begin(), w.row(pick).end());
  }
  return centers;
}

void assign(const MixingMatrix& w, Clustering& c) {
  for (std::size_t i = 0; i < w.m; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c.centroids.size(); ++j) {
      const double d = sq_dist(w.row(i), c.centroids[j]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    c.assignment[i] = best;
  }
}

// Moves the point farthest from its centroid (among clusters with more than
// one member) into each empty cluster.
void repair_empty(const MixingMatrix& w, Clustering& c) {
  const std::size_t k = c.centroids.size();
  for (;;) {
    std::vector<std::size_t> counts(k, 0);
    for (auto a : c.assignment) ++counts[a];
    const auto empty = std::find(counts.begin(), counts.end(), std::size_t{0});
    if (empty == counts.end()) return;
    std::size_t far = w.m;
    double far_d = -1.0;
    for (std::size_t i = 0; i < w.m; ++i) {
      if (counts[c.assignment[i]] < 2) continue;
      const double d = sq_dist(w.row(i), c.centroids[c.assignment[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    const auto target = static_cast<std::size_t>(empty - counts.begin());
    c.assignment[far] = target;
    c.centroids[target].assign(w.row(far).begin(), w.row(far).end());
  }
}

void update_centroids(const MixingMatrix& w, Clustering& c) {
  const std::size_t k = c.centroids.size();
  std::vector<std::size_t> counts(k, 0);
  for (auto& ctr : c.centroids) std::fill(ctr.begin(), ctr.end(), 0.0);
  for (std::size_t i = 0; i < w.m; ++i) {
    auto& ctr = c.centroids[c.assignment[i]];
    const auto row = w.row(i);
    for (std::size_t j = 0; j < w.m; ++j) ctr[j] += row[j];
    ++counts[c.assignment[i]];
  }
  for (std::size_t j = 0; j < k; ++j)
    for (auto& v : c.centroids[j]) v /= static_cast<double>(counts[j]);
}

Clustering lloyd(const MixingMatrix& w, std::size_t k, Rng& rng, std::size_t max_iters) {
  Clustering c;
  c.centroids = kmeanspp_seed(w, k, rng);
  c.assignment.assign(w.m, 0);
  assign(w, c);
  repair_empty(w, c);
  for (std::size_t it = 0; it < max_iters; ++it) {
    update_centroids(w, c);
    c.history.push_back(objective_of(w, c));
    const auto before = c.assignment;
    assign(w, c);
    repair_empty(w, c);
    if (c.assignment == before) break;
  }
  update_centroids(w, c);
  c.objective = objective_of(w, c);
  return c;
}

}  // namespace

void StreamPlan::validate(std::size_t m) const {
  if (num_streams == 0 || num_streams > m)
    throw std::invalid_argument("StreamPlan: num_streams must lie in [1, m]");
  if (assignment.size() != m) throw std::invalid_argument("StreamPlan: assignment length must be m");
  if (centroids.size() != num_streams)
    throw std::invalid_argument("StreamPlan: need one centroid per stream");
  std::vector<std::size_t> counts(num_streams, 0);
  for (auto a : assignment) {
    if (a >= num_streams) throw std::invalid_argument("StreamPlan: stream id out of range");
    ++counts[a];
  }
  for (std::size_t c = 0; c < num_streams; ++c) {
    if (counts[c] == 0)
      throw std::invalid_argument("StreamPlan: stream " + std::to_string(c) + " has no users");
    if (centroids[c].size() != m) throw std::invalid_argument("StreamPlan: centroid length must be m");
    const double s = std::accumulate(centroids[c].begin(), centroids[c].end(), 0.0);
    if (std::abs(s - 1.0) > 1e-9)
      throw std::invalid_argument("StreamPlan: centroid " + std::to_string(c) + " does not sum to 1");
  }
}

StreamPlan identity_plan(const MixingMatrix& w) {
  StreamPlan plan;
  plan.num_streams = w.m;
  for (std::size_t i = 0; i < w.m; ++i) {
    plan.assignment.push_back(i);
    plan.centroids.emplace_back(w.row(i).begin(), w.row(i).end());
  }
  return plan;
}

ParameterVector fedavg_aggregate(const std::vector<ParameterVector>& models,
                                 std::span<const std::size_t> ns) {
  check_models(models);
  if (ns.size() != models.size()) throw std::invalid_argument("fedavg_aggregate: need one count per model");
  double total = 0.0;
  for (auto n : ns) {
    if (n == 0) throw std::invalid_argument("fedavg_aggregate: sample counts must be positive");
    total += static_cast<double>(n);
  }
  std::vector<double> weights(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) weights[i] = static_cast<double>(ns[i]) / total;
  return mix(models, weights);
}

std::vector<ParameterVector> user_centric_aggregate(const std::vector<ParameterVector>& models,
                                                    const MixingMatrix& w) {
  check_models(models);
  if (w.m != models.size())
    throw std::invalid_argument("user_centric_aggregate: mixing matrix size does not match models");
  std::vector<ParameterVector> out;
  out.reserve(w.m);
  for (std::size_t i = 0; i < w.m; ++i) out.push_back(mix(models, w.row(i)));
  return out;
}

std::vector<ParameterVector> streamed_aggregate(const std::vector<ParameterVector>& models,
                                                const StreamPlan& plan) {
  check_models(models);
  if (plan.assignment.size() != models.size())
    throw std::invalid_argument("streamed_aggregate: plan size does not match models");
  std::vector<ParameterVector> out;
  out.reserve(plan.num_streams);
  for (const auto& c : plan.centroids) {
    if (c.size() != models.size())
      throw std::invalid_argument("streamed_aggregate: centroid length does not match models");
    out.push_back(mix(models, c));
  }
  return out;
}

KMeansTrace kmeans_streams_traced(const MixingMatrix& w, std::size_t num_streams, Seed seed,
                                  const KMeansOptions& options) {
  if (num_streams == 0) throw std::invalid_argument("kmeans_streams: m_t must be positive");
  if (num_streams > w.m)
    throw std::invalid_argument("kmeans_streams: m_t = " + std::to_string(num_streams) +
                                " exceeds the number of users " + std::to_string(w.m));
  if (options.max_iters == 0 || options.restarts == 0)
    throw std::invalid_argument("kmeans_streams: max_iters and restarts must be positive");

  Clustering best;
  std::size_t best_restart = 0;
  for (std::size_t r = 0; r < options.restarts; ++r) {
    Rng rng(derive_seed(seed, {tag("kmeans"), num_streams, r}));
    auto c = lloyd(w, num_streams, rng, options.max_iters);
    // Strict improvement only, so equal objectives keep the lower restart index.
    if (r == 0 || c.objective < best.objective) {
      best = std::move(c);
      best_restart = r;
    }
  }

  KMeansTrace trace;
  trace.objective = best.objective;
  trace.best_restart = best_restart;
  trace.history = std::move(best.history);
  trace.plan.num_streams = num_streams;
  trace.plan.assignment = std::move(best.assignment);
  for (auto& ctr : best.centroids) {
    const double s = std::accumulate(ctr.begin(), ctr.end(), 0.0);
    for (auto& v : ctr) v /= s;
  }
  trace.plan.centroids = std::move(best.centroids);
  return trace;
}

StreamPlan kmeans_streams(const MixingMatrix& w, std::size_t num_streams, Seed seed,
                          std::size_t max_iters) {
  KMeansOptions opts;
  opts.max_iters = max_iters;
  return kmeans_streams_traced(w, num_streams, seed, opts).plan;
}

double silhouette_score(const MixingMatrix& w, const StreamPlan& plan) {
  if (plan.num_streams < 2) throw std::invalid_argument("silhouette_score: need at least two clusters");
  plan.validate(w.m);
  const std::size_t m = w.m;
  const std::size_t k = plan.num_streams;
  std::vector<std::size_t> counts(k, 0);
  for (auto a : plan.assignment) ++counts[a];

  double total = 0.0;
  std::vector<double> sums(k);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t own = plan.assignment[i];
    if (counts[own] == 1) continue;  // singleton contributes 0
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      sums[plan.assignment[j]] += std::sqrt(sq_dist(w.row(i), w.row(j)));
    }
    const double a = sums[own] / static_cast<double>(counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != own) b = std::min(b, sums[c] / static_cast<double>(counts[c]));
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(m);
}

std::vector<SilhouettePoint> silhouette_table(const MixingMatrix& w,
                                              std::vector<std::size_t> candidates, Seed seed,
                                              const KMeansOptions& options) {
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  std::vector<SilhouettePoint> table;
  for (auto k : candidates) {
    if (k < 2 || k > w.m)
      throw std::invalid_argument("silhouette_table: candidate " + std::to_string(k) +
                                  " outside [2, m]");
    const auto plan = kmeans_streams_traced(w, k, seed, options).plan;
    table.push_back({k, silhouette_score(w, plan)});
  }
  return table;
}

std::size_t select_num_streams(const MixingMatrix& w, std::vector<std::size_t> candidates, Seed seed,
                               const KMeansOptions& options) {
  if (candidates.empty()) throw std::invalid_argument("select_num_streams: empty candidate list");
  const auto table = silhouette_table(w, std::move(candidates), seed, options);
  SilhouettePoint best = table.front();
  for (const auto& p : table)
    if (p.score > best.score) best = p;
  return best.k;
}

}  // namespace ucfl
