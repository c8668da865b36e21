#include "ucfl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ucfl::theory {

FiniteHypothesisClass FiniteHypothesisClass::thresholds(std::span<const double> taus) {
  FiniteHypothesisClass fc;
  for (double t : taus) {
    fc.hypotheses.push_back({t, true});
    fc.hypotheses.push_back({t, false});
  }
  fc.vc_dim = 1;
  return fc;
}

void FiniteHypothesisClass::validate() const {
  if (hypotheses.empty()) throw std::invalid_argument("hypothesis class is empty");
  if (vc_dim == 0) throw std::invalid_argument("hypothesis class vc_dim must be positive");
}

void DiscreteDistribution::validate() const {
  if (support.size() != probs.size())
    throw std::invalid_argument("DiscreteDistribution: support and probs differ in length");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("DiscreteDistribution: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("DiscreteDistribution: probabilities must sum to 1");
  for (const auto& s : support)
    if (s.y != 0 && s.y != 1) throw std::invalid_argument("DiscreteDistribution: labels must be 0 or 1");
}

DiscreteDistribution DiscreteDistribution::mixture(std::span<const DiscreteDistribution> parts,
                                                   std::span<const double> weights) {
  if (parts.size() != weights.size())
    throw std::invalid_argument("mixture: need one weight per component");
  DiscreteDistribution out;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    for (std::size_t k = 0; k < parts[j].support.size(); ++k) {
      out.support.push_back(parts[j].support[k]);
      out.probs.push_back(weights[j] * parts[j].probs[k]);
    }
  }
  return out;
}

void BoundInputs::validate() const {
  if (!(loss_bound > 0.0)) throw std::invalid_argument("bound: B must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("bound: delta must lie in (0, 1)");
  if (weights.size() != ns.size() || weights.size() != discrepancies.size())
    throw std::invalid_argument("bound: weights, ns and discrepancies must have equal length");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("bound: weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("bound: weights must sum to 1");
  for (double d : discrepancies)
    if (!(d >= 0.0)) throw std::invalid_argument("bound: discrepancies must be non-negative");
  for (auto n : ns)
    if (n == 0) throw std::invalid_argument("bound: sample counts must be positive");
  if (!(lambda >= 0.0)) throw std::invalid_argument("bound: lambda must be non-negative");
}

double discrepancy_distance(const DiscreteDistribution& p, const DiscreteDistribution& q,
                            const FiniteHypothesisClass& fc) {
  fc.validate();
  double best = 0.0;
  const auto& hs = fc.hypotheses;
  for (std::size_t a = 0; a < hs.size(); ++a) {
    for (std::size_t b = 0; b < hs.size(); ++b) {
      double ep = 0.0;
      for (std::size_t k = 0; k < p.support.size(); ++k)
        if (hs[a](p.support[k].x) != hs[b](p.support[k].x)) ep += p.probs[k];
      double eq = 0.0;
      for (std::size_t k = 0; k < q.support.size(); ++k)
        if (hs[a](q.support[k].x) != hs[b](q.support[k].x)) eq += q.probs[k];
      best = std::max(best, std::abs(ep - eq));
    }
  }
  return best;
}

double risk(const Threshold& h, const DiscreteDistribution& d) {
  double r = 0.0;
  for (std::size_t k = 0; k < d.support.size(); ++k)
    if (h(d.support[k].x) != d.support[k].y) r += d.probs[k];
  return r;
}

double empirical_risk(const Threshold& h, const Sample& s) {
  if (s.empty()) throw std::invalid_argument("empirical_risk: empty sample");
  std::size_t errors = 0;
  for (const auto& pt : s)
    if (h(pt.x) != pt.y) ++errors;
  return static_cast<double>(errors) / static_cast<double>(s.size());
}

std::size_t weighted_erm(const FiniteHypothesisClass& fc, std::span<const Sample> datasets,
                         std::span<const double> weights) {
  fc.validate();
  if (datasets.size() != weights.size())
    throw std::invalid_argument("weighted_erm: need one weight per dataset");
  double mass = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] < 0.0) throw std::invalid_argument("weighted_erm: negative weight");
    if (weights[j] > 0.0) {
      if (datasets[j].empty())
        throw std::invalid_argument("weighted_erm: dataset " + std::to_string(j) +
                                    " is empty but carries weight");
      mass += weights[j];
    }
  }
  if (!(mass > 0.0)) throw std::invalid_argument("weighted_erm: all weights are zero");

  std::size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < fc.hypotheses.size(); ++h) {
    double loss = 0.0;
    for (std::size_t j = 0; j < datasets.size(); ++j)
      if (weights[j] > 0.0) loss += weights[j] * empirical_risk(fc.hypotheses[h], datasets[j]);
    if (loss < best_loss) {
      best_loss = loss;
      best = h;
    }
  }
  return best;
}

double lambda_term(const FiniteHypothesisClass& fc, const DiscreteDistribution& target,
                   const DiscreteDistribution& mixture) {
  fc.validate();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& h : fc.hypotheses) best = std::min(best, risk(h, target) + risk(h, mixture));
  return best;
}

double risk_bound(const BoundInputs& inputs, std::size_t total_n, std::size_t vc_dim) {
  inputs.validate();
  if (total_n == 0 || vc_dim == 0) throw std::invalid_argument("bound: total_n and vc_dim must be positive");
  double weight_norm = 0.0;
  for (std::size_t j = 0; j < inputs.weights.size(); ++j)
    weight_norm += inputs.weights[j] * inputs.weights[j] / static_cast<double>(inputs.ns[j]);
  const double n = static_cast<double>(total_n);
  const double d = static_cast<double>(vc_dim);
  const double complexity = std::sqrt(2.0 * d / n * std::log(std::numbers::e * n / d));
  const double confidence = std::sqrt(std::log(2.0 / inputs.delta));
  double bias = 0.0;
  for (std::size_t j = 0; j < inputs.weights.size(); ++j) bias += inputs.weights[j] * inputs.discrepancies[j];
  return inputs.loss_bound * std::sqrt(weight_norm) * (complexity + confidence) + 2.0 * bias +
         2.0 * inputs.lambda;
}

Sample draw_sample(const DiscreteDistribution& d, std::size_t n, Rng& rng) {
  std::vector<double> cdf(d.probs.size());
  std::partial_sum(d.probs.begin(), d.probs.end(), cdf.begin());
  Sample s;
  s.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rng.uniform() * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    s.push_back(d.support[static_cast<std::size_t>(it - cdf.begin())]);
  }
  return s;
}

BoundValidation validate_bound(const FiniteHypothesisClass& fc,
                               std::span<const DiscreteDistribution> distributions,
                               std::span<const std::size_t> ns, std::span<const double> weights,
                               double delta, std::size_t trials, Seed seed, std::size_t target) {
  fc.validate();
  const std::size_t m = distributions.size();
  if (ns.size() != m || weights.size() != m)
    throw std::invalid_argument("validate_bound: distributions, ns and weights must have equal length");
  if (target >= m) throw std::invalid_argument("validate_bound: target index out of range");
  if (trials == 0) throw std::invalid_argument("validate_bound: trials must be positive");
  for (const auto& d : distributions) d.validate();

  const auto& p_target = distributions[target];
  BoundInputs inputs;
  inputs.loss_bound = 1.0;
  inputs.delta = delta;
  inputs.weights.assign(weights.begin(), weights.end());
  inputs.ns.assign(ns.begin(), ns.end());
  for (const auto& d : distributions) inputs.discrepancies.push_back(discrepancy_distance(p_target, d, fc));
  inputs.lambda = lambda_term(fc, p_target, DiscreteDistribution::mixture(distributions, weights));
  const std::size_t total_n = std::accumulate(ns.begin(), ns.end(), std::size_t{0});
  const double bound = risk_bound(inputs, total_n, fc.vc_dim);

  double best_risk = std::numeric_limits<double>::infinity();
  for (const auto& h : fc.hypotheses) best_risk = std::min(best_risk, risk(h, p_target));

  BoundValidation out;
  out.bound = bound;
  out.trials = trials;
  std::size_t violations = 0;
  double slack_sum = 0.0;
  double excess_sum = 0.0;
  std::vector<Sample> datasets(m);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, {tag("bound_trial"), t}));
    for (std::size_t j = 0; j < m; ++j) datasets[j] = draw_sample(distributions[j], ns[j], rng);
    const auto h = weighted_erm(fc, datasets, weights);
    const double excess = risk(fc.hypotheses[h], p_target) - best_risk;
    if (excess > bound) ++violations;
    slack_sum += bound - excess;
    excess_sum += excess;
  }
  out.violation_rate = static_cast<double>(violations) / static_cast<double>(trials);
  out.mean_slack = slack_sum / static_cast<double>(trials);
  out.mean_excess = excess_sum / static_cast<double>(trials);
  return out;
}

}  // namespace ucfl::theory
