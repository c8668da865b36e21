#include "ucfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ucfl {

namespace {

struct Workspace {
  std::vector<double> hidden_pre;
  std::vector<double> hidden;
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<double> dlogits;
  std::vector<double> dhidden;
};

double activate(Activation a, double z) {
  return a == Activation::Relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_derivative(Activation a, double z, double out) {
  if (a == Activation::Relu) return z > 0.0 ? 1.0 : 0.0;
  return 1.0 - out * out;
}

// y = W x + b for a row-major (rows x cols) W.
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
            std::vector<double>& y) {
  const std::size_t rows = b.size();
  const std::size_t cols = x.size();
  y.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data() + r * cols;
    double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

// Fills ws.logits (and hidden activations) for one sample.
void compute_logits(const ParameterVector& theta, const ModelSpec& spec, std::span<const double> x,
                    Workspace& ws) {
  if (spec.architecture == Architecture::Linear) {
    affine(theta.layer(0), theta.layer(1), x, ws.logits);
    return;
  }
  affine(theta.layer(0), theta.layer(1), x, ws.hidden_pre);
  ws.hidden.resize(ws.hidden_pre.size());
  for (std::size_t k = 0; k < ws.hidden.size(); ++k)
    ws.hidden[k] = activate(spec.activation, ws.hidden_pre[k]);
  affine(theta.layer(2), theta.layer(3), ws.hidden, ws.logits);
}

// Returns log-sum-exp of the logits and writes the softmax into `probs`.
double softmax(const std::vector<double>& logits, std::vector<double>& probs) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  probs.resize(logits.size());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    probs[c] = std::exp(logits[c] - mx);
    total += probs[c];
  }
  for (auto& p : probs) p /= total;
  return mx + std::log(total);
}

void check_theta(const ParameterVector& theta, const ModelSpec& spec) {
  if (theta.size() != spec.parameter_count())
    throw std::invalid_argument("parameter vector length " + std::to_string(theta.size()) +
                                " does not match model size " +
                                std::to_string(spec.parameter_count()));
}

void check_input(const ModelSpec& spec, std::size_t dim) {
  if (dim != spec.input_dim)
    throw std::invalid_argument("feature dimension " + std::to_string(dim) +
                                " does not match model input_dim " +
                                std::to_string(spec.input_dim));
}

}  // namespace

void ModelSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("model.input_dim must be positive");
  if (num_classes < 2) throw std::invalid_argument("model.num_classes must be at least 2");
  if (architecture == Architecture::Linear && hidden_dim != 0)
    throw std::invalid_argument("model.hidden_dim must be 0 for LINEAR");
  if (architecture == Architecture::Mlp1 && hidden_dim == 0)
    throw std::invalid_argument("model.hidden_dim must be positive for MLP1");
}

std::vector<LayerShape> ModelSpec::layout() const {
  if (architecture == Architecture::Linear)
    return {{"W", num_classes, input_dim}, {"b", num_classes, 1}};
  return {{"W1", hidden_dim, input_dim},
          {"b1", hidden_dim, 1},
          {"W2", num_classes, hidden_dim},
          {"b2", num_classes, 1}};
}

std::size_t ModelSpec::parameter_count() const {
  std::size_t d = 0;
  for (const auto& l : layout()) d += l.size();
  return d;
}

ParameterVector::ParameterVector(std::vector<LayerShape> layers) : shape(std::move(layers)) {
  std::size_t d = 0;
  for (const auto& l : shape) d += l.size();
  values.assign(d, 0.0);
}

ParameterVector::ParameterVector(std::vector<LayerShape> layers, std::vector<double> v)
    : values(std::move(v)), shape(std::move(layers)) {
  std::size_t d = 0;
  for (const auto& l : shape) d += l.size();
  if (d != values.size())
    throw std::invalid_argument("ParameterVector: values length does not match layer layout");
}

std::span<double> ParameterVector::layer(std::size_t index) {
  std::size_t offset = 0;
  for (std::size_t k = 0; k < index; ++k) offset += shape.at(k).size();
  return {values.data() + offset, shape.at(index).size()};
}

std::span<const double> ParameterVector::layer(std::size_t index) const {
  std::size_t offset = 0;
  for (std::size_t k = 0; k < index; ++k) offset += shape.at(k).size();
  return {values.data() + offset, shape.at(index).size()};
}

bool ParameterVector::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("optimizer.learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("optimizer.momentum must lie in [0, 1)");
  if (batch_size == 0) throw std::invalid_argument("optimizer.batch_size must be positive");
  if (local_epochs == 0) throw std::invalid_argument("optimizer.local_epochs must be positive");
}

ParameterVector init_parameters(const ModelSpec& spec, Seed seed) {
  spec.validate();
  ParameterVector theta = ParameterVector::zeros(spec);
  Rng rng(derive_seed(seed, {tag("init")}));
  for (std::size_t k = 0; k < theta.shape.size(); ++k) {
    const LayerShape& l = theta.shape[k];
    if (l.cols == 1) continue;  // bias block
    const double a = std::sqrt(6.0 / static_cast<double>(l.cols + l.rows));
    for (double& v : theta.layer(k)) v = rng.uniform(-a, a);
  }
  return theta;
}

std::vector<double> forward(const ParameterVector& theta, const ModelSpec& spec,
                            std::span<const double> x) {
  check_theta(theta, spec);
  check_input(spec, x.size());
  Workspace ws;
  compute_logits(theta, spec, x, ws);
  softmax(ws.logits, ws.probs);
  return ws.probs;
}

std::size_t predict(const ParameterVector& theta, const ModelSpec& spec, std::span<const double> x) {
  check_theta(theta, spec);
  check_input(spec, x.size());
  Workspace ws;
  compute_logits(theta, spec, x, ws);
  // max_element returns the first maximum.
  return static_cast<std::size_t>(std::max_element(ws.logits.begin(), ws.logits.end()) -
                                  ws.logits.begin());
}

LossGradient loss_and_gradient(const ParameterVector& theta, const ModelSpec& spec,
                               const LabeledData& data, std::span<const std::size_t> rows) {
  check_theta(theta, spec);
  check_input(spec, data.dim);
  if (rows.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");

  LossGradient out{0.0, ParameterVector(theta.shape)};
  const double inv_b = 1.0 / static_cast<double>(rows.size());
  const std::size_t classes = spec.num_classes;
  const std::size_t in = spec.input_dim;
  Workspace ws;
  std::size_t seen = 0;

  for (auto r : rows) {
    const int y = data.labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw std::invalid_argument("loss_and_gradient: label " + std::to_string(y) +
                                  " outside [0, num_classes)");
    const auto x = data.row(r);
    compute_logits(theta, spec, x, ws);
    const double lse = softmax(ws.logits, ws.probs);
    // Running mean: exact when every sample has the same loss.
    out.loss += (lse - ws.logits[static_cast<std::size_t>(y)] - out.loss) / static_cast<double>(++seen);

    ws.dlogits.assign(ws.probs.begin(), ws.probs.end());
    ws.dlogits[static_cast<std::size_t>(y)] -= 1.0;
    for (auto& g : ws.dlogits) g *= inv_b;

    if (spec.architecture == Architecture::Linear) {
      auto gw = out.gradient.layer(0);
      auto gb = out.gradient.layer(1);
      for (std::size_t c = 0; c < classes; ++c) {
        const double g = ws.dlogits[c];
        double* row = gw.data() + c * in;
        for (std::size_t k = 0; k < in; ++k) row[k] += g * x[k];
        gb[c] += g;
      }
      continue;
    }

    const std::size_t hid = spec.hidden_dim;
    auto gw1 = out.gradient.layer(0);
    auto gb1 = out.gradient.layer(1);
    auto gw2 = out.gradient.layer(2);
    auto gb2 = out.gradient.layer(3);
    const auto w2 = theta.layer(2);

    ws.dhidden.assign(hid, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      const double g = ws.dlogits[c];
      double* grow = gw2.data() + c * hid;
      const double* wrow = w2.data() + c * hid;
      for (std::size_t k = 0; k < hid; ++k) {
        grow[k] += g * ws.hidden[k];
        ws.dhidden[k] += g * wrow[k];
      }
      gb2[c] += g;
    }
    for (std::size_t k = 0; k < hid; ++k) {
      const double da =
          ws.dhidden[k] * activate_derivative(spec.activation, ws.hidden_pre[k], ws.hidden[k]);
      double* row = gw1.data() + k * in;
      for (std::size_t j = 0; j < in; ++j) row[j] += da * x[j];
      gb1[k] += da;
    }
  }
  if (out.loss < 0.0) out.loss = 0.0;  // lse >= logit_y up to rounding
  return out;
}

LossGradient loss_and_gradient(const ParameterVector& theta, const ModelSpec& spec,
                               const LabeledData& data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return loss_and_gradient(theta, spec, data, rows);
}

double mean_loss(const ParameterVector& theta, const ModelSpec& spec, const LabeledData& data) {
  check_theta(theta, spec);
  check_input(spec, data.dim);
  if (data.empty()) throw std::invalid_argument("mean_loss: empty dataset");
  Workspace ws;
  double total = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    compute_logits(theta, spec, data.row(r), ws);
    const double mx = *std::max_element(ws.logits.begin(), ws.logits.end());
    double s = 0.0;
    for (double z : ws.logits) s += std::exp(z - mx);
    total += (mx + std::log(s) - ws.logits[static_cast<std::size_t>(data.labels[r])] - total) /
             static_cast<double>(r + 1);
  }
  return std::max(0.0, total);
}

SgdState sgd_step(const ParameterVector& theta, const ParameterVector& grad,
                  const ParameterVector& velocity, const OptimizerConfig& cfg) {
  if (grad.size() != theta.size() || velocity.size() != theta.size())
    throw std::invalid_argument("sgd_step: vector length mismatch");
  SgdState next{theta, velocity};
  for (std::size_t k = 0; k < theta.size(); ++k) {
    next.velocity.values[k] = cfg.momentum * velocity.values[k] + grad.values[k];
    next.theta.values[k] = theta.values[k] - cfg.learning_rate * next.velocity.values[k];
  }
  return next;
}

ParameterVector local_train(const ParameterVector& theta, const ModelSpec& spec,
                            const LabeledData& data, const OptimizerConfig& cfg, Seed seed) {
  if (data.empty()) throw std::invalid_argument("local_train: empty dataset");
  if (cfg.batch_size == 0) throw std::invalid_argument("local_train: batch_size must be positive");
  check_theta(theta, spec);

  SgdState state{theta, ParameterVector(theta.shape)};
  Rng rng(derive_seed(seed, {tag("local_train")}));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const auto batch = std::span<const std::size_t>(order).subspan(start, len);
      const auto lg = loss_and_gradient(state.theta, spec, data, batch);
      // Update in place; same arithmetic as sgd_step without the copies.
      for (std::size_t k = 0; k < state.theta.size(); ++k) {
        double& v = state.velocity.values[k];
        v = cfg.momentum * v + lg.gradient.values[k];
        state.theta.values[k] -= cfg.learning_rate * v;
      }
    }
  }
  return state.theta;
}

const char* to_string(Architecture a) { return a == Architecture::Linear ? "LINEAR" : "MLP1"; }
const char* to_string(Activation a) { return a == Activation::Relu ? "RELU" : "TANH"; }

Architecture architecture_from_string(const std::string& s) {
  if (s == "LINEAR") return Architecture::Linear;
  if (s == "MLP1") return Architecture::Mlp1;
  throw std::invalid_argument("model.architecture: unknown value '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
  if (s == "RELU") return Activation::Relu;
  if (s == "TANH") return Activation::Tanh;
  throw std::invalid_argument("model.activation: unknown value '" + s + "'");
}

}  // namespace ucfl
