#include "ucfl/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace ucfl {

using nlohmann::json;

namespace {

// Tracks which keys of one JSON object were consumed so leftovers can be
// reported by their full dotted path.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& field, const std::string& what) {
    throw ConfigError(field + ": " + what);
  }

  static bool is_uint(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  template <typename T>
  void read_uint(const std::string& key, T& out) {
    if (const auto* v = get(key)) {
      if (!is_uint(*v)) fail(field(key), "expected a non-negative integer");
      out = static_cast<T>(v->get<std::uint64_t>());
    }
  }

  void read_double(const std::string& key, double& out) {
    if (const auto* v = get(key)) {
      if (!v->is_number()) fail(field(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) fail(field(key), "must be finite");
    }
  }

  void read_string(const std::string& key, std::string& out) {
    if (const auto* v = get(key)) {
      if (!v->is_string()) fail(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <typename E, typename Fn>
  void read_enum(const std::string& key, E& out, Fn&& from_string) {
    std::string s;
    read_string(key, s);
    if (s.empty()) return;
    try {
      out = from_string(s);
    } catch (const std::exception&) {
      fail(field(key), "unknown value '" + s + "'");
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) fail(field(it.key()), "unknown field");
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

const json& expect_array(const json* v, const std::string& field) {
  if (!v->is_array()) Reader::fail(field, "expected an array");
  return *v;
}

std::vector<double> read_double_array(const json& arr, const std::string& field) {
  std::vector<double> out;
  for (std::size_t k = 0; k < arr.size(); ++k) {
    if (!arr[k].is_number()) Reader::fail(field + "[" + std::to_string(k) + "]", "expected a number");
    out.push_back(arr[k].get<double>());
  }
  return out;
}

std::vector<std::size_t> read_uint_array(const json& arr, const std::string& field) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < arr.size(); ++k) {
    if (!Reader::is_uint(arr[k]))
      Reader::fail(field + "[" + std::to_string(k) + "]", "expected a non-negative integer");
    out.push_back(arr[k].get<std::size_t>());
  }
  return out;
}

TimingMode timing_mode_from_string(const std::string& s) {
  if (s == "EXPECTED") return TimingMode::Expected;
  if (s == "SAMPLED") return TimingMode::Sampled;
  throw std::invalid_argument(s);
}

const char* to_string(TimingMode m) { return m == TimingMode::Expected ? "EXPECTED" : "SAMPLED"; }

UplinkMode uplink_from_string(const std::string& s) {
  if (s == "PARALLEL") return UplinkMode::Parallel;
  if (s == "SERIAL") return UplinkMode::Serial;
  throw std::invalid_argument(s);
}

const char* to_string(UplinkMode m) { return m == UplinkMode::Parallel ? "PARALLEL" : "SERIAL"; }

SigmaScale sigma_scale_from_string(const std::string& s) {
  if (s == "STDDEV") return SigmaScale::StdDev;
  if (s == "VARIANCE") return SigmaScale::Variance;
  throw std::invalid_argument(s);
}

const char* to_string(SigmaScale s) { return s == SigmaScale::StdDev ? "STDDEV" : "VARIANCE"; }

void parse_federation(const json& v, FederationSpec& f) {
  Reader r(v, "federation");
  r.read_uint("num_clients", f.num_clients);
  r.read_enum("scenario", f.scenario, scenario_from_string);
  r.read_double("dirichlet_alpha", f.dirichlet_alpha);
  r.read_uint("num_clusters", f.num_clusters);
  if (const auto* s = r.get("samples_per_client")) {
    if (s->is_array()) {
      f.client_sizes = read_uint_array(*s, "federation.samples_per_client");
    } else if (Reader::is_uint(*s)) {
      f.samples_per_client = s->get<std::size_t>();
      f.client_sizes.clear();
    } else {
      Reader::fail("federation.samples_per_client", "expected a non-negative integer or a per-client list");
    }
  }
  r.read_uint("input_dim", f.input_dim);
  r.read_uint("num_classes", f.num_classes);
  r.read_double("mean_radius", f.mean_radius);
  r.read_double("pool_factor", f.pool_factor);
  r.finish();
}

void parse_model(const json& v, ModelSpec& m) {
  Reader r(v, "model");
  r.read_enum("architecture", m.architecture, architecture_from_string);
  r.read_uint("hidden_dim", m.hidden_dim);
  r.read_enum("activation", m.activation, activation_from_string);
  r.finish();
}

void parse_optimizer(const json& v, OptimizerConfig& o) {
  Reader r(v, "optimizer");
  r.read_double("learning_rate", o.learning_rate);
  r.read_double("momentum", o.momentum);
  r.read_uint("batch_size", o.batch_size);
  r.read_uint("local_epochs", o.local_epochs);
  r.finish();
}

void parse_rule(const json& v, RunConfig& cfg) {
  Reader r(v, "rule");
  auto& e = cfg.experiment;
  r.read_enum("kind", e.method, method_from_string);
  if (const auto* s = r.get("streams")) {
    if (s->is_string() && s->get<std::string>() == "auto") {
      cfg.streams_auto = true;
      e.streams = 0;
    } else if (Reader::is_uint(*s)) {
      cfg.streams_auto = false;
      e.streams = s->get<std::size_t>();
    } else {
      Reader::fail("rule.streams", "expected a positive integer or \"auto\"");
    }
  }
  r.read_uint("kmeans_restarts", e.kmeans.restarts);
  r.read_uint("kmeans_max_iters", e.kmeans.max_iters);
  r.finish();
}

void parse_seeds(const json& v, SeedBlock& s) {
  Reader r(v, "seeds");
  r.read_uint("data", s.data);
  r.read_uint("init", s.init);
  r.read_uint("training", s.training);
  r.read_uint("probe", s.probe);
  r.finish();
}

NamedCommModel parse_comm(const json& v, const std::string& path) {
  Reader r(v, path);
  NamedCommModel nm;
  nm.name = "custom";
  r.read_string("name", nm.name);
  auto& cm = nm.model;
  r.read_double("rho", cm.rho);
  r.read_double("t_dl", cm.t_dl);
  r.read_double("t_min", cm.t_min);
  if (const auto* mu = r.get("mu")) {
    if (mu->is_string() && mu->get<std::string>() == "inf")
      cm.mu = std::numeric_limits<double>::infinity();
    else if (mu->is_number())
      cm.mu = mu->get<double>();
    else
      Reader::fail(r.field("mu"), "expected a positive number or \"inf\"");
  }
  r.read_enum("uplink", cm.uplink, uplink_from_string);
  r.finish();
  return nm;
}

void parse_timing(const json& v, TimingConfig& t) {
  Reader r(v, "timing");
  r.read_enum("mode", t.mode, timing_mode_from_string);
  r.read_uint("seed", t.seed);
  r.read_double("t_dl", t.t_dl);
  if (const auto* c = r.get("custom")) {
    if (c->is_null())
      t.custom.reset();
    else
      t.custom = parse_comm(*c, "timing.custom");
  }
  r.finish();
}

BoundCase parse_bound_case(const json& v, const std::string& path) {
  Reader r(v, path);
  BoundCase bc;
  r.read_string("name", bc.name);
  if (const auto* cs = r.get("clients")) {
    const auto& arr = expect_array(cs, path + ".clients");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      Reader cr(arr[k], path + ".clients[" + std::to_string(k) + "]");
      ThresholdTask task;
      cr.read_double("tau", task.tau);
      cr.read_double("noise", task.noise);
      cr.read_double("x_skew", task.x_skew);
      cr.finish();
      bc.clients.push_back(task);
    }
  }
  if (const auto* ns = r.get("ns")) bc.ns = read_uint_array(expect_array(ns, path + ".ns"), path + ".ns");
  if (const auto* ws = r.get("weights"))
    bc.weights = read_double_array(expect_array(ws, path + ".weights"), path + ".weights");
  r.read_uint("target", bc.target);
  r.read_double("delta", bc.delta);
  r.finish();
  return bc;
}

void parse_bound(const json& v, BoundGrid& g) {
  Reader r(v, "bound");
  r.read_uint("trials", g.trials);
  r.read_uint("seed", g.seed);
  if (const auto* t = r.get("taus")) g.taus = read_double_array(expect_array(t, "bound.taus"), "bound.taus");
  if (const auto* cs = r.get("cases")) {
    const auto& arr = expect_array(cs, "bound.cases");
    g.cases.clear();
    for (std::size_t k = 0; k < arr.size(); ++k)
      g.cases.push_back(parse_bound_case(arr[k], "bound.cases[" + std::to_string(k) + "]"));
  }
  r.finish();
}

void validate_bound_grid(const BoundGrid& g) {
  if (g.trials < BoundGrid::kMinTrials)
    Reader::fail("bound.trials", "must be at least " + std::to_string(BoundGrid::kMinTrials));
  if (g.taus.empty()) Reader::fail("bound.taus", "must not be empty");
  if (g.cases.empty()) Reader::fail("bound.cases", "must not be empty");
  for (std::size_t k = 0; k < g.cases.size(); ++k) {
    const auto& c = g.cases[k];
    const std::string p = "bound.cases[" + std::to_string(k) + "]";
    const std::size_t m = c.clients.size();
    if (m == 0) Reader::fail(p + ".clients", "must not be empty");
    if (c.ns.size() != m) Reader::fail(p + ".ns", "needs one entry per client");
    if (c.weights.size() != m) Reader::fail(p + ".weights", "needs one entry per client");
    if (c.target >= m) Reader::fail(p + ".target", "out of range");
    if (!(c.delta > 0.0 && c.delta < 1.0)) Reader::fail(p + ".delta", "must lie in (0, 1)");
    for (auto n : c.ns)
      if (n == 0) Reader::fail(p + ".ns", "entries must be positive");
    double total = 0.0;
    for (double w : c.weights) {
      if (!(w >= 0.0)) Reader::fail(p + ".weights", "entries must be non-negative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) Reader::fail(p + ".weights", "must sum to 1");
    for (const auto& t : c.clients)
      if (!(t.noise >= 0.0 && t.noise <= 0.5)) Reader::fail(p + ".clients", "noise must lie in [0, 0.5]");
  }
}

json comm_to_json(const NamedCommModel& nm) {
  json mu;
  if (std::isinf(nm.model.mu))
    mu = "inf";
  else
    mu = nm.model.mu;
  return {{"name", nm.name},         {"rho", nm.model.rho}, {"t_dl", nm.model.t_dl},
          {"t_min", nm.model.t_min}, {"mu", mu},            {"uplink", to_string(nm.model.uplink)}};
}

}  // namespace

theory::DiscreteDistribution threshold_task_distribution(const ThresholdTask& task) {
  theory::DiscreteDistribution d;
  std::vector<double> px(10);
  for (int k = 0; k < 10; ++k) px[k] = std::exp(task.x_skew * (k + 0.5) / 10.0);
  const double z = std::accumulate(px.begin(), px.end(), 0.0);
  for (int k = 0; k < 10; ++k) {
    const double x = (k + 0.5) / 10.0;
    const int y = x >= task.tau ? 1 : 0;
    d.support.push_back({x, y});
    d.probs.push_back(px[k] / z * (1.0 - task.noise));
    if (task.noise > 0.0) {
      d.support.push_back({x, 1 - y});
      d.probs.push_back(px[k] / z * task.noise);
    }
  }
  return d;
}

void RunConfig::validate() const {
  if (name.empty()) Reader::fail("name", "must not be empty");
  try {
    experiment.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (experiment.method == Method::Streamed && !streams_auto && experiment.streams == 0)
    Reader::fail("rule.streams", "must be positive or \"auto\" for STREAMED");
  for (auto b : baselines)
    if (b == experiment.method) Reader::fail("baselines", std::string("duplicates rule.kind ") + to_string(b));
  if (!(timing.t_dl > 0.0)) Reader::fail("timing.t_dl", "must be positive");
  if (timing.custom) {
    if (timing.custom->name.empty()) Reader::fail("timing.custom.name", "must not be empty");
    for (const auto& p : system_presets())
      if (p.name == timing.custom->name) Reader::fail("timing.custom.name", "collides with a system preset");
    try {
      timing.custom->model.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("timing.custom: ") + e.what());
    }
  }
  validate_bound_grid(bound);
}

RunConfig parse_config(const json& doc) {
  RunConfig cfg;
  cfg.bound = default_bound_grid();
  Reader r(doc, "");
  r.read_string("name", cfg.name);
  auto& e = cfg.experiment;
  if (const auto* v = r.get("federation")) parse_federation(*v, e.federation);
  if (const auto* v = r.get("model")) parse_model(*v, e.model);
  if (const auto* v = r.get("optimizer")) parse_optimizer(*v, e.optimizer);
  if (const auto* v = r.get("rule")) parse_rule(*v, cfg);
  if (const auto* v = r.get("baselines")) {
    const auto& arr = expect_array(v, "baselines");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string f = "baselines[" + std::to_string(k) + "]";
      if (!arr[k].is_string()) Reader::fail(f, "expected a string");
      try {
        cfg.baselines.push_back(method_from_string(arr[k].get<std::string>()));
      } catch (const std::exception&) {
        Reader::fail(f, "unknown value '" + arr[k].get<std::string>() + "'");
      }
    }
  }
  r.read_uint("rounds", e.rounds);
  r.read_double("val_fraction", e.val_fraction);
  r.read_uint("variance_batches", e.variance_batches);
  r.read_enum("sigma_scale", e.sigma_scale, sigma_scale_from_string);
  if (const auto* v = r.get("seeds")) parse_seeds(*v, e.seeds);
  if (const auto* v = r.get("timing")) parse_timing(*v, cfg.timing);
  if (const auto* v = r.get("bound")) parse_bound(*v, cfg.bound);
  r.finish();

  e.model.input_dim = e.federation.input_dim;
  e.model.num_classes = e.federation.num_classes;
  cfg.validate();
  return cfg;
}

RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const RunConfig& cfg) {
  const auto& e = cfg.experiment;
  const auto& f = e.federation;
  json spc = f.client_sizes.empty() ? json(f.samples_per_client) : json(f.client_sizes);
  json baselines = json::array();
  for (auto b : cfg.baselines) baselines.push_back(to_string(b));
  json streams = cfg.streams_auto ? json("auto") : json(e.streams);

  json cases = json::array();
  for (const auto& c : cfg.bound.cases) {
    json clients = json::array();
    for (const auto& t : c.clients) clients.push_back({{"tau", t.tau}, {"noise", t.noise}, {"x_skew", t.x_skew}});
    cases.push_back({{"name", c.name},
                     {"clients", clients},
                     {"ns", c.ns},
                     {"weights", c.weights},
                     {"target", c.target},
                     {"delta", c.delta}});
  }

  return {
      {"name", cfg.name},
      {"federation",
       {{"num_clients", f.num_clients},
        {"scenario", to_string(f.scenario)},
        {"dirichlet_alpha", f.dirichlet_alpha},
        {"num_clusters", f.num_clusters},
        {"samples_per_client", spc},
        {"input_dim", f.input_dim},
        {"num_classes", f.num_classes},
        {"mean_radius", f.mean_radius},
        {"pool_factor", f.pool_factor}}},
      {"model",
       {{"architecture", to_string(e.model.architecture)},
        {"hidden_dim", e.model.hidden_dim},
        {"activation", to_string(e.model.activation)}}},
      {"optimizer",
       {{"learning_rate", e.optimizer.learning_rate},
        {"momentum", e.optimizer.momentum},
        {"batch_size", e.optimizer.batch_size},
        {"local_epochs", e.optimizer.local_epochs}}},
      {"rule",
       {{"kind", to_string(e.method)},
        {"streams", streams},
        {"kmeans_restarts", e.kmeans.restarts},
        {"kmeans_max_iters", e.kmeans.max_iters}}},
      {"baselines", baselines},
      {"rounds", e.rounds},
      {"val_fraction", e.val_fraction},
      {"variance_batches", e.variance_batches},
      {"sigma_scale", to_string(e.sigma_scale)},
      {"seeds",
       {{"data", e.seeds.data}, {"init", e.seeds.init}, {"training", e.seeds.training}, {"probe", e.seeds.probe}}},
      {"timing",
       {{"mode", to_string(cfg.timing.mode)},
        {"seed", cfg.timing.seed},
        {"t_dl", cfg.timing.t_dl},
        {"custom", cfg.timing.custom ? comm_to_json(*cfg.timing.custom) : json(nullptr)}}},
      {"bound", {{"trials", cfg.bound.trials}, {"seed", cfg.bound.seed}, {"taus", cfg.bound.taus}, {"cases", cases}}},
  };
}

std::string canonical_json(const RunConfig& cfg) { return to_json(cfg).dump(); }

std::string config_digest(const RunConfig& cfg) {
  const std::string text = canonical_json(cfg);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("config_digest: SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out.push_back(hex[md[k] >> 4]);
    out.push_back(hex[md[k] & 0xF]);
  }
  return out;
}

void apply_seed_override(RunConfig& cfg, Seed s) {
  cfg.experiment.seeds = {s, s + 1, s + 2, s + 3};
  cfg.timing.seed = s;
  cfg.bound.seed = s;
}

BoundGrid default_bound_grid() {
  BoundGrid g;
  for (int k = 0; k <= 10; ++k) g.taus.push_back(k / 10.0);
  g.cases = {
      {"iid_pair", {{0.5, 0.1, 0.0}, {0.5, 0.1, 0.0}}, {50, 50}, {0.5, 0.5}, 0, 0.05},
      {"input_skew", {{0.5, 0.1, 0.0}, {0.5, 0.1, 2.0}}, {40, 80}, {0.5, 0.5}, 0, 0.1},
      {"concept_gap", {{0.3, 0.05, 0.0}, {0.6, 0.05, 0.0}}, {60, 60}, {0.8, 0.2}, 0, 0.05},
      {"local_only", {{0.4, 0.0, 0.0}, {0.8, 0.0, 0.0}}, {30, 100}, {1.0, 0.0}, 0, 0.1},
      {"three_clients", {{0.5, 0.1, 0.0}, {0.5, 0.2, -1.0}, {0.7, 0.1, 1.0}}, {50, 50, 50}, {0.5, 0.3, 0.2}, 0, 0.05},
      {"noisy_four",
       {{0.5, 0.3, 0.0}, {0.5, 0.3, 0.0}, {0.5, 0.3, 0.0}, {0.5, 0.3, 0.0}},
       {25, 25, 25, 25},
       {0.25, 0.25, 0.25, 0.25},
       0,
       0.1},
  };
  return g;
}

std::vector<std::string> preset_names() {
  return {"label_shift_small", "covariate_shift_small", "concept_shift_small"};
}

RunConfig preset(const std::string& name) {
  RunConfig cfg;
  cfg.name = name;
  cfg.bound = default_bound_grid();
  auto& e = cfg.experiment;
  auto& f = e.federation;
  f.num_clients = 20;
  f.dirichlet_alpha = 0.4;
  e.optimizer = {0.1, 0.9, 32, 1};
  e.rounds = 20;
  e.val_fraction = 0.2;
  e.seeds = {101, 102, 103, 104};
  e.model.architecture = Architecture::Linear;
  e.model.hidden_dim = 0;

  if (name == "label_shift_small") {
    // Many classes in a wide feature space with few samples per client, so a
    // client alone cannot fit its model well.
    f.scenario = Scenario::LabelShift;
    f.num_clusters = 1;
    f.samples_per_client = 100;
    f.input_dim = 50;
    f.num_classes = 10;
    e.method = Method::UserCentric;
    e.variance_batches = 2;
  } else if (name == "covariate_shift_small") {
    f.scenario = Scenario::LabelAndCovariateShift;
    f.num_clusters = 4;
    f.samples_per_client = 200;
    f.input_dim = 2;
    f.num_classes = 4;
    e.method = Method::UserCentric;
  } else if (name == "concept_shift_small") {
    f.scenario = Scenario::ConceptShift;
    f.num_clusters = 4;
    f.samples_per_client = 625;
    f.input_dim = 10;
    f.num_classes = 4;
    e.method = Method::Streamed;
    e.streams = 4;
  } else {
    throw ConfigError("preset: unknown name '" + name + "'");
  }
  e.model.input_dim = f.input_dim;
  e.model.num_classes = f.num_classes;
  cfg.validate();
  return cfg;
}

}  // namespace ucfl
