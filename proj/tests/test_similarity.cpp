#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "ucfl/data.hpp"
#include "ucfl/similarity.hpp"

using namespace ucfl;

namespace {

ModelSpec linear(std::size_t in, std::size_t c) { return {Architecture::Linear, in, 0, c, Activation::Relu}; }

ClientDataset random_client(int id, std::size_t n, std::size_t dim, std::size_t classes, Rng& rng) {
  ClientDataset c{id, 0, LabeledData(dim)};
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = rng.normal();
    c.samples.push_back(x, static_cast<int>(rng.index(classes)));
  }
  return c;
}

std::vector<GradientVarianceEstimate> sigmas(std::vector<double> s2) {
  std::vector<GradientVarianceEstimate> out;
  for (std::size_t i = 0; i < s2.size(); ++i) out.push_back({static_cast<int>(i), s2[i], 10});
  return out;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

double sq_norm(const std::vector<double>& a) { return std::inner_product(a.begin(), a.end(), a.begin(), 0.0); }

FederationSpec concept_spec(std::size_t clusters, std::size_t n) {
  FederationSpec f;
  f.num_clients = 20;
  f.scenario = Scenario::ConceptShift;
  f.num_clusters = clusters;
  f.samples_per_client = n;
  f.input_dim = 10;
  f.num_classes = 4;
  f.seed = 5;
  return f;
}

}  // namespace

TEST_CASE("identical datasets give identical fingerprints") {
  Rng rng(1);
  const auto spec = linear(3, 3);
  auto a = random_client(0, 30, 3, 3, rng);
  auto b = a;
  b.client_id = 1;
  const auto fps = probe_gradients(init_parameters(spec, 4), spec, {a, b});
  CHECK(fps[0].full_gradient == fps[1].full_gradient);
  CHECK(fps[0].n == 30);
  const auto d = pairwise_delta(fps);
  CHECK(d(0, 1) == 0.0);
}

TEST_CASE("fingerprint of a union is the size-weighted mean of its parts") {
  Rng rng(2);
  const auto spec = linear(4, 3);
  const auto theta = init_parameters(spec, 9);
  const auto a = random_client(0, 13, 4, 3, rng);
  const auto b = random_client(1, 29, 4, 3, rng);
  ClientDataset joined{2, 0, a.samples};
  for (std::size_t r = 0; r < b.n(); ++r) joined.samples.push_back(b.samples.row(r), b.samples.labels[r]);
  const auto fps = probe_gradients(theta, spec, {a, b, joined});
  for (std::size_t k = 0; k < fps[2].full_gradient.size(); ++k) {
    const double expect = (13.0 * fps[0].full_gradient[k] + 29.0 * fps[1].full_gradient[k]) / 42.0;
    CHECK(fps[2].full_gradient[k] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("fingerprint at zero parameters has the closed form") {
  Rng rng(3);
  const std::size_t dim = 3, classes = 4;
  const auto spec = linear(dim, classes);
  const auto c = random_client(0, 25, dim, classes, rng);
  const auto fp = probe_gradients(ParameterVector::zeros(spec), spec, {c})[0];
  for (std::size_t cls = 0; cls < classes; ++cls)
    for (std::size_t k = 0; k < dim; ++k) {
      double g = 0.0;
      for (std::size_t i = 0; i < c.n(); ++i)
        g += (1.0 / classes - (c.samples.labels[i] == static_cast<int>(cls))) * c.samples.row(i)[k];
      CHECK(fp.full_gradient[cls * dim + k] == doctest::Approx(g / c.n()).epsilon(1e-12));
    }
}

TEST_CASE("pairwise delta hand values and symmetry") {
  std::vector<GradientFingerprint> fps{{0, {1.0, 0.0}, 1}, {1, {0.0, 1.0}, 1}, {2, {1.0, 0.0}, 1}};
  const auto d = pairwise_delta(fps);
  CHECK(d(0, 1) == 2.0);
  CHECK(d(0, 2) == 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(d(i, i) == 0.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(d(i, j) == d(j, i));
  }
  CHECK_THROWS(pairwise_delta({{0, {1.0}, 1}, {1, {1.0, 2.0}, 1}}));
  CHECK_THROWS(pairwise_delta({{0, {1.0}, 1}}));
}

TEST_CASE("delta is bounded by twice the summed squared norms") {
  Rng rng(4);
  std::vector<GradientFingerprint> fps;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> g(5);
    for (auto& v : g) v = rng.normal();
    fps.push_back({i, g, 10});
  }
  fps.push_back(fps[2]);
  const auto d = pairwise_delta(fps);
  for (std::size_t i = 0; i < fps.size(); ++i)
    for (std::size_t j = 0; j < fps.size(); ++j) {
      CHECK(d(i, j) <= 2.0 * (sq_norm(fps[i].full_gradient) + sq_norm(fps[j].full_gradient)));
      CHECK((d(i, j) == 0.0) == (fps[i].full_gradient == fps[j].full_gradient));
    }
}

TEST_CASE("sigma estimate edge cases") {
  Rng rng(5);
  const auto spec = linear(2, 3);
  const auto theta = init_parameters(spec, 2);
  const auto c = random_client(0, 20, 2, 3, rng);
  CHECK(estimate_sigma_sq(theta, spec, c, 1, 7).sigma_sq == 0.0);
  CHECK_THROWS(estimate_sigma_sq(theta, spec, c, 21, 7));
  CHECK_THROWS(estimate_sigma_sq(theta, spec, c, 0, 7));

  ClientDataset copies{1, 0, LabeledData(2)};
  for (int i = 0; i < 12; ++i) copies.samples.push_back(c.samples.row(0), c.samples.labels[0]);
  for (std::size_t k : {2u, 3u, 5u, 12u}) CHECK(estimate_sigma_sq(theta, spec, copies, k, 7).sigma_sq <= 1e-12);

  const auto est = estimate_sigma_sq(theta, spec, c, 4, 7);
  CHECK(est.num_batches == 4);
  CHECK(est.sigma_sq == estimate_sigma_sq(theta, spec, c, 4, 7).sigma_sq);
}

TEST_CASE("sigma with two singleton batches is a quarter of the squared gap") {
  Rng rng(6);
  const auto spec = linear(3, 2);
  const auto theta = init_parameters(spec, 3);
  const auto c = random_client(0, 2, 3, 2, rng);
  const std::vector<std::size_t> ra{0}, rb{1};
  const auto ga = loss_and_gradient(theta, spec, c.samples, ra).gradient.values;
  const auto gb = loss_and_gradient(theta, spec, c.samples, rb).gradient.values;
  CHECK(estimate_sigma_sq(theta, spec, c, 2, 11).sigma_sq == doctest::Approx(sq_dist(ga, gb) / 4.0).epsilon(1e-12));
}

TEST_CASE("zero delta falls back to FedAvg weights") {
  SimilarityMatrix d(2);
  const std::vector<std::size_t> ns{100, 300};
  const auto w = mixing_matrix(d, sigmas({0.3, 2.0}), ns);
  CHECK(w(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(w(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(w(1, 0) == doctest::Approx(0.25).epsilon(1e-12));

  SimilarityMatrix d5(5);
  const std::vector<std::size_t> n5{3, 1, 4, 1, 5};
  const auto w5 = mixing_matrix(d5, sigmas({1, 2, 3, 4, 5}), n5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(w5(i, j) - n5[j] / 14.0) <= 1e-12);
}

TEST_CASE("exponent ln 3 gives a 3:1 split") {
  SimilarityMatrix d(2);
  d(0, 1) = d(1, 0) = 2.0 * std::log(3.0);
  const std::vector<std::size_t> ns{50, 50};
  const auto w = mixing_matrix(d, sigmas({1.0, 1.0}), ns);
  CHECK(w(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(w(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("variance scale uses raw sigma squared") {
  SimilarityMatrix d(2);
  d(0, 1) = d(1, 0) = 2.0 * std::log(3.0) * 4.0;
  const std::vector<std::size_t> ns{50, 50};
  // sigma_i^2 = 2: StdDev scale uses s_i s_j = 2, Variance scale uses 4.
  const auto w_var = mixing_matrix(d, sigmas({2.0, 2.0}), ns, SigmaScale::Variance);
  CHECK(w_var(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  const auto w_sd = mixing_matrix(d, sigmas({2.0, 2.0}), ns, SigmaScale::StdDev);
  CHECK(w_sd(0, 0) == doctest::Approx(9.0 / 10.0).epsilon(1e-12));
}

TEST_CASE("mixing_matrix rejects degenerate input") {
  SimilarityMatrix d(2);
  const std::vector<std::size_t> ns{1, 1};
  CHECK_THROWS(mixing_matrix(d, sigmas({0.0, 1.0}), ns));
  d(0, 1) = d(1, 0) = NAN;
  CHECK_THROWS(mixing_matrix(d, sigmas({1.0, 1.0}), ns));
  CHECK_THROWS(mixing_matrix(SimilarityMatrix(2), sigmas({1.0}), ns));
}

TEST_CASE("huge exponents stay finite and row-stochastic") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + rng.index(8);
    SimilarityMatrix d(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) d(i, j) = d(j, i) = std::pow(10.0, rng.uniform(-3, 8));
    std::vector<double> s2(m);
    for (auto& v : s2) v = std::pow(10.0, rng.uniform(-12, 2));
    std::vector<std::size_t> ns(m);
    for (auto& n : ns) n = 1 + rng.index(1000);
    const auto w = mixing_matrix(d, sigmas(s2), ns);
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        CHECK(std::isfinite(w(i, j)));
        CHECK(w(i, j) >= 0.0);
        row += w(i, j);
      }
      CHECK(std::abs(row - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("small sigma concentrates a row on itself") {
  SimilarityMatrix d(3);
  d(0, 1) = d(1, 0) = 0.5;
  d(0, 2) = d(2, 0) = 1.0;
  d(1, 2) = d(2, 1) = 0.7;
  const std::vector<std::size_t> ns{10, 10, 10};
  const auto w = mixing_matrix(d, sigmas({1e-6, 1.0, 1.0}), ns);
  CHECK(w(0, 0) > 0.99);
}

TEST_CASE("scaling delta up sharpens every row") {
  Rng rng(8);
  const std::size_t m = 6;
  SimilarityMatrix d(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) d(i, j) = d(j, i) = rng.uniform(0.1, 3.0);
  const auto s = sigmas({0.5, 1.0, 1.5, 0.7, 2.0, 1.1});
  const std::vector<std::size_t> ns{5, 10, 15, 20, 25, 30};
  const auto w1 = mixing_matrix(d, s, ns);
  for (double c : {1.5, 3.0, 10.0}) {
    SimilarityMatrix dc = d;
    for (auto& v : dc.data) v *= c;
    const auto wc = mixing_matrix(dc, s, ns);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) CHECK(wc(i, j) / wc(i, i) <= w1(i, j) / w1(i, i) * (1.0 + 1e-12));
  }
}

TEST_CASE("identical clients give uniform rows") {
  Rng rng(9);
  const auto spec = linear(3, 3);
  const auto c = random_client(0, 40, 3, 3, rng);
  std::vector<ClientDataset> clients;
  for (int i = 0; i < 5; ++i) {
    clients.push_back(c);
    clients.back().client_id = i;
  }
  const auto rep = similarity_round(clients, spec, 17);
  for (double v : rep.w.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("IID federation gives near-uniform rows") {
  const auto spec = linear(10, 4);
  const auto clients = generate_federation(concept_spec(1, 500));
  const auto rep = similarity_round(clients, spec, 23);
  double worst = 0.0;
  for (double v : rep.w.data) worst = std::max(worst, std::abs(v - 1.0 / 20.0));
  CHECK(worst < 0.05);
}

TEST_CASE("concept-shift groups weight each other more") {
  const auto spec = linear(10, 4);
  const auto clients = generate_federation(concept_spec(4, 300));
  const auto rep = similarity_round(clients, spec, 23);
  double within = 0.0, across = 0.0;
  std::size_t nw = 0, na = 0;
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j) {
      if (i == j) continue;
      if (clients[i].true_cluster == clients[j].true_cluster)
        within += rep.w(i, j), ++nw;
      else
        across += rep.w(i, j), ++na;
    }
  CHECK(within / nw > across / na);
  CHECK(rep.delta.m == 20);
  CHECK(rep.sigma_sq.size() == 20);
  CHECK(rep.probe_seed == 23);
}

TEST_CASE("similarity_round is deterministic and floors zero variance") {
  Rng rng(10);
  const auto spec = linear(2, 2);
  ClientDataset constant{0, 0, LabeledData(2)};
  for (int i = 0; i < 10; ++i) constant.samples.push_back(std::vector<double>{1.0, 1.0}, 1);
  const auto other = random_client(1, 10, 2, 2, rng);
  const std::vector<ClientDataset> clients{constant, other};
  const auto a = similarity_round(clients, spec, 3);
  const auto b = similarity_round(clients, spec, 3);
  CHECK(a.w == b.w);
  CHECK(a.sigma_sq[0] <= 1e-12);
  for (std::size_t i = 0; i < 2; ++i) CHECK(a.w(i, 0) + a.w(i, 1) == doctest::Approx(1.0).epsilon(1e-12));
}
