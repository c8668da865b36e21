#include "ucfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace ucfl {

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::LabelShift: return "LABEL_SHIFT";
    case Scenario::LabelAndCovariateShift: return "LABEL_AND_COVARIATE_SHIFT";
    case Scenario::ConceptShift: return "CONCEPT_SHIFT";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "LABEL_SHIFT") return Scenario::LabelShift;
  if (s == "LABEL_AND_COVARIATE_SHIFT") return Scenario::LabelAndCovariateShift;
  if (s == "CONCEPT_SHIFT") return Scenario::ConceptShift;
  throw std::invalid_argument("federation.scenario: unknown value '" + s + "'");
}

void FederationSpec::validate() const {
  if (num_clients == 0) throw std::invalid_argument("federation.num_clients must be positive");
  if (!(dirichlet_alpha > 0.0)) throw std::invalid_argument("federation.dirichlet_alpha must be positive");
  if (num_clusters == 0) throw std::invalid_argument("federation.num_clusters must be positive");
  if (num_clusters > num_clients)
    throw std::invalid_argument("federation.num_clusters must not exceed num_clients");
  if (input_dim == 0) throw std::invalid_argument("federation.input_dim must be positive");
  if (num_classes < 2) throw std::invalid_argument("federation.num_classes must be at least 2");
  if (!(mean_radius > 0.0)) throw std::invalid_argument("federation.mean_radius must be positive");
  if (!(pool_factor >= 1.0)) throw std::invalid_argument("federation.pool_factor must be >= 1");
  if (!client_sizes.empty() && client_sizes.size() != num_clients)
    throw std::invalid_argument("federation.samples_per_client list must have num_clients entries");
  for (std::size_t i = 0; i < num_clients; ++i)
    if (client_size(i) == 0) throw std::invalid_argument("federation.samples_per_client must be positive");
  if (scenario == Scenario::LabelAndCovariateShift && input_dim < 2)
    throw std::invalid_argument("federation.input_dim must be >= 2 for covariate shift");
  if (scenario == Scenario::ConceptShift) {
    double perms = 1.0;
    for (std::size_t k = 2; k <= num_classes && perms < 1e18; ++k) perms *= static_cast<double>(k);
    if (static_cast<double>(num_clusters) > perms)
      throw std::invalid_argument("federation.num_clusters exceeds the number of label permutations");
  }
}

std::size_t FederationSpec::client_size(std::size_t i) const {
  return client_sizes.empty() ? samples_per_client : client_sizes.at(i);
}

std::size_t FederationSpec::total_samples() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < num_clients; ++i) total += client_size(i);
  return total;
}

std::size_t FederationSpec::pool_size() const {
  return static_cast<std::size_t>(std::ceil(pool_factor * static_cast<double>(total_samples())));
}

SamplePool generate_base_task(const FederationSpec& spec) {
  spec.validate();
  SamplePool pool;
  // Several candidate sets of means on the sphere; keep the one whose closest
  // pair is farthest apart so no two classes land on top of each other.
  Rng mean_rng(derive_seed(spec.seed, {tag("class_means")}));
  double best_gap = -1.0;
  for (std::size_t attempt = 0; attempt < kMeanCandidates; ++attempt) {
    std::vector<std::vector<double>> means;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      std::vector<double> mu(spec.input_dim);
      double norm = 0.0;
      do {
        for (auto& v : mu) v = mean_rng.normal();
        norm = std::sqrt(std::inner_product(mu.begin(), mu.end(), mu.begin(), 0.0));
      } while (norm == 0.0);
      for (auto& v : mu) v *= spec.mean_radius / norm;
      means.push_back(std::move(mu));
    }
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < means.size(); ++a)
      for (std::size_t b = a + 1; b < means.size(); ++b) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < spec.input_dim; ++j) d2 += (means[a][j] - means[b][j]) * (means[a][j] - means[b][j]);
        gap = std::min(gap, d2);
      }
    if (gap > best_gap) {
      best_gap = gap;
      pool.class_means = std::move(means);
    }
  }

  // Balanced labels (class k mod C), shuffled so the pool order is random.
  const std::size_t total = spec.pool_size();
  std::vector<int> labels(total);
  for (std::size_t k = 0; k < total; ++k) labels[k] = static_cast<int>(k % spec.num_classes);
  Rng rng(derive_seed(spec.seed, {tag("pool")}));
  rng.shuffle(labels);

  pool.data = LabeledData(spec.input_dim);
  pool.data.features.reserve(total * spec.input_dim);
  std::vector<double> x(spec.input_dim);
  for (int y : labels) {
    const auto& mu = pool.class_means[static_cast<std::size_t>(y)];
    for (std::size_t j = 0; j < spec.input_dim; ++j) x[j] = mu[j] + rng.normal();
    pool.data.push_back(x, y);
  }
  return pool;
}

std::vector<ClientDataset> partition_label_shift(const SamplePool& pool, const FederationSpec& spec) {
  spec.validate();
  const std::size_t classes = spec.num_classes;

  // Pool rows grouped by class, in pool order.
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t r = 0; r < pool.data.size(); ++r)
    by_class.at(static_cast<std::size_t>(pool.data.labels[r])).push_back(r);
  std::vector<std::size_t> cursor(classes, 0);

  Rng rng(derive_seed(spec.seed, {tag("dirichlet")}));
  const std::vector<double> alpha(classes, spec.dirichlet_alpha);

  std::vector<ClientDataset> clients;
  clients.reserve(spec.num_clients);
  for (std::size_t i = 0; i < spec.num_clients; ++i) {
    const auto p = rng.dirichlet(alpha);
    ClientDataset client{static_cast<int>(i), 0, LabeledData(pool.data.dim)};
    const std::size_t n = spec.client_size(i);
    client.samples.features.reserve(n * pool.data.dim);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t c = rng.categorical(p);
      if (cursor[c] >= by_class[c].size())
        throw std::runtime_error("partition_label_shift: pool exhausted for class " +
                                 std::to_string(c));
      const std::size_t r = by_class[c][cursor[c]++];
      client.samples.push_back(pool.data.row(r), pool.data.labels[r]);
    }
    clients.push_back(std::move(client));
  }
  return clients;
}

void rotate_first_plane(std::span<double> x, std::size_t group, std::size_t num_groups) {
  if (x.size() < 2) throw std::invalid_argument("rotate_first_plane: need at least two coordinates");
  const std::size_t g = group % num_groups;
  if (g == 0) return;
  const double a = x[0];
  const double b = x[1];
  // Quarter turns are applied exactly.
  if (4 * g % num_groups == 0) {
    switch (4 * g / num_groups) {
      case 1: x[0] = -b; x[1] = a; return;
      case 2: x[0] = -a; x[1] = -b; return;
      case 3: x[0] = b; x[1] = -a; return;
      default: break;
    }
  }
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(g) / static_cast<double>(num_groups);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  x[0] = c * a - s * b;
  x[1] = s * a + c * b;
}

std::vector<ClientDataset> partition_covariate_shift(const SamplePool& pool,
                                                     const FederationSpec& spec) {
  auto clients = partition_label_shift(pool, spec);
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const std::size_t g = i % spec.num_clusters;
    clients[i].true_cluster = static_cast<int>(g);
    for (std::size_t r = 0; r < clients[i].n(); ++r)
      rotate_first_plane(clients[i].samples.row(r), g, spec.num_clusters);
  }
  return clients;
}

std::vector<std::vector<int>> concept_permutations(const FederationSpec& spec) {
  spec.validate();
  std::vector<int> identity(spec.num_classes);
  std::iota(identity.begin(), identity.end(), 0);
  std::vector<std::vector<int>> perms{identity};
  Rng rng(derive_seed(spec.seed, {tag("permutations")}));
  while (perms.size() < spec.num_clusters) {
    auto p = identity;
    rng.shuffle(p);
    if (std::find(perms.begin(), perms.end(), p) == perms.end()) perms.push_back(std::move(p));
  }
  return perms;
}

std::vector<ClientDataset> partition_concept_shift(const SamplePool& pool,
                                                   const FederationSpec& spec) {
  spec.validate();
  if (spec.total_samples() > pool.data.size())
    throw std::runtime_error("partition_concept_shift: pool exhausted");
  std::vector<std::size_t> order(pool.data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(spec.seed, {tag("iid_split")}));
  rng.shuffle(order);

  const auto perms = concept_permutations(spec);
  std::vector<ClientDataset> clients;
  std::size_t next = 0;
  for (std::size_t i = 0; i < spec.num_clients; ++i) {
    const std::size_t g = i % spec.num_clusters;
    ClientDataset client{static_cast<int>(i), static_cast<int>(g), LabeledData(pool.data.dim)};
    const std::size_t n = spec.client_size(i);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t r = order[next++];
      const int y = perms[g][static_cast<std::size_t>(pool.data.labels[r])];
      client.samples.push_back(pool.data.row(r), y);
    }
    clients.push_back(std::move(client));
  }
  return clients;
}

std::vector<ClientDataset> generate_federation(const FederationSpec& spec) {
  const auto pool = generate_base_task(spec);
  switch (spec.scenario) {
    case Scenario::LabelShift: return partition_label_shift(pool, spec);
    case Scenario::LabelAndCovariateShift: return partition_covariate_shift(pool, spec);
    case Scenario::ConceptShift: return partition_concept_shift(pool, spec);
  }
  throw std::invalid_argument("generate_federation: unknown scenario");
}

TrainValSplit train_val_split(const ClientDataset& data, double fraction, Seed seed) {
  if (data.n() < 2) throw std::invalid_argument("train_val_split: need at least 2 samples");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("train_val_split: fraction must lie in (0, 1)");
  std::vector<std::size_t> order(data.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {tag("train_val_split")}));
  rng.shuffle(order);

  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.n())));
  n_val = std::clamp<std::size_t>(n_val, 1, data.n() - 1);
  const auto rows = std::span<const std::size_t>(order);
  TrainValSplit split;
  split.val = {data.client_id, data.true_cluster, data.samples.subset(rows.first(n_val))};
  split.train = {data.client_id, data.true_cluster, data.samples.subset(rows.subspan(n_val))};
  return split;
}

void write_jsonl(std::ostream& os, const std::vector<ClientDataset>& clients) {
  for (const auto& c : clients) {
    for (std::size_t r = 0; r < c.n(); ++r) {
      const auto x = c.samples.row(r);
      nlohmann::json rec{{"client", c.client_id},
                         {"x", std::vector<double>(x.begin(), x.end())},
                         {"y", c.samples.labels[r]},
                         {"cluster", c.true_cluster}};
      os << rec.dump() << '\n';
    }
  }
}

std::vector<ClientDataset> read_jsonl(std::istream& is) {
  std::vector<ClientDataset> clients;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    const int id = rec.at("client").get<int>();
    const auto x = rec.at("x").get<std::vector<double>>();
    if (id < 0) throw std::runtime_error("read_jsonl: negative client id on line " + std::to_string(line_no));
    if (clients.size() <= static_cast<std::size_t>(id)) {
      const std::size_t old = clients.size();
      clients.resize(static_cast<std::size_t>(id) + 1);
      for (std::size_t k = old; k < clients.size(); ++k) {
        clients[k].client_id = static_cast<int>(k);
        clients[k].samples.dim = x.size();
      }
    }
    auto& c = clients[static_cast<std::size_t>(id)];
    c.true_cluster = rec.at("cluster").get<int>();
    c.samples.push_back(x, rec.at("y").get<int>());
  }
  return clients;
}

}  // namespace ucfl
