#pragma once

// Finite-class checks of the weighted-ERM risk bound: exact discrepancy
// distances between discrete distributions over 1-D threshold classifiers,
// weighted empirical risk minimization under 0-1 loss, and a Monte Carlo
// estimate of how often the bound is violated.

#include <cstddef>
#include <span>
#include <vector>

#include "ucfl/rng.hpp"

namespace ucfl::theory {

/// h(x) = 1[x >= tau] (positive) or 1[x < tau] (negative).
struct Threshold {
  double tau = 0.0;
  bool positive = true;

  int operator()(double x) const { return (x >= tau) == positive ? 1 : 0; }
  bool operator==(const Threshold&) const = default;
};

struct FiniteHypothesisClass {
  std::vector<Threshold> hypotheses;
  std::size_t vc_dim = 1;

  /// Both orientations for every tau in the grid.
  static FiniteHypothesisClass thresholds(std::span<const double> taus);
  void validate() const;
};

struct LabeledPoint {
  double x = 0.0;
  int y = 0;  // {0, 1}
  bool operator==(const LabeledPoint&) const = default;
};

struct DiscreteDistribution {
  std::vector<LabeledPoint> support;
  std::vector<double> probs;

  void validate() const;
  /// Mixture sum_j weights[j] * parts[j] over the concatenated supports.
  static DiscreteDistribution mixture(std::span<const DiscreteDistribution> parts,
                                      std::span<const double> weights);
};

struct BoundInputs {
  double loss_bound = 1.0;  // B
  double delta = 0.1;
  std::vector<double> weights;        // w_i over the m clients
  std::vector<std::size_t> ns;        // n_j
  std::vector<double> discrepancies;  // d_F(P_i, P_j)
  double lambda = 0.0;

  void validate() const;
};

using Sample = std::vector<LabeledPoint>;

/// max over (f, f') of |E_P[1(f != f')] - E_Q[1(f != f')]| by enumeration.
double discrepancy_distance(const DiscreteDistribution& p, const DiscreteDistribution& q,
                            const FiniteHypothesisClass& fc);

/// Exact 0-1 risk of h under d.
double risk(const Threshold& h, const DiscreteDistribution& d);

/// 0-1 empirical risk of h on a sample.
double empirical_risk(const Threshold& h, const Sample& s);

/// Index of argmin_f sum_j (w_j / n_j) sum_{(x,y) in D_j} 1(f(x) != y); ties
/// resolve to the lowest index.
std::size_t weighted_erm(const FiniteHypothesisClass& fc, std::span<const Sample> datasets,
                         std::span<const double> weights);

/// min over the class of risk under the target plus risk under the mixture.
double lambda_term(const FiniteHypothesisClass& fc, const DiscreteDistribution& target,
                   const DiscreteDistribution& mixture);

/// Estimation term + 2 sum_j w_j d_F(P_i, P_j) + 2 lambda, where the
/// estimation term is B sqrt(sum_j w_j^2 / n_j) (sqrt((2d / N) ln(e N / d)) + sqrt(ln(2 / delta)))
/// with N = total_n.
double risk_bound(const BoundInputs& inputs, std::size_t total_n, std::size_t vc_dim);

Sample draw_sample(const DiscreteDistribution& d, std::size_t n, Rng& rng);

struct BoundValidation {
  double violation_rate = 0.0;
  double mean_slack = 0.0;  // mean of (bound - excess risk)
  double bound = 0.0;
  double mean_excess = 0.0;
  std::size_t trials = 0;
};

/// Repeatedly samples n_j points from every P_j, fits weighted ERM, and
/// compares its excess risk on P_target against the bound.
BoundValidation validate_bound(const FiniteHypothesisClass& fc,
                               std::span<const DiscreteDistribution> distributions,
                               std::span<const std::size_t> ns, std::span<const double> weights,
                               double delta, std::size_t trials, Seed seed, std::size_t target = 0);

}  // namespace ucfl::theory
