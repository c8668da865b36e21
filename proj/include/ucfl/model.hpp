#pragma once

// Differentiable model family over flat parameter vectors: multinomial
// logistic regression (LINEAR) and a one-hidden-layer perceptron (MLP1),
// mean cross-entropy loss with analytic gradients, and SGD with momentum.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ucfl/dataset.hpp"
#include "ucfl/rng.hpp"

namespace ucfl {

enum class Architecture { Linear, Mlp1 };
enum class Activation { Relu, Tanh };

struct LayerShape {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
  bool operator==(const LayerShape&) const = default;
};

struct ModelSpec {
  Architecture architecture = Architecture::Linear;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;  // 0 for LINEAR
  std::size_t num_classes = 2;
  Activation activation = Activation::Relu;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Layer layout: LINEAR = {W (C x in), b (C)};
  /// MLP1 = {W1 (h x in), b1 (h), W2 (C x h), b2 (C)}. Matrices are row-major.
  std::vector<LayerShape> layout() const;

  std::size_t parameter_count() const;
};

/// Flat model parameters with a structured layer partition.
struct ParameterVector {
  std::vector<double> values;
  std::vector<LayerShape> shape;

  ParameterVector() = default;
  explicit ParameterVector(std::vector<LayerShape> layers);
  ParameterVector(std::vector<LayerShape> layers, std::vector<double> v);

  static ParameterVector zeros(const ModelSpec& spec) { return ParameterVector(spec.layout()); }

  std::size_t size() const { return values.size(); }
  std::span<double> layer(std::size_t index);
  std::span<const double> layer(std::size_t index) const;

  bool all_finite() const;
  bool operator==(const ParameterVector&) const = default;
};

struct OptimizerConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t local_epochs = 1;

  void validate() const;
};

struct LossGradient {
  double loss = 0.0;  // mean cross-entropy, >= 0
  ParameterVector gradient;
};

struct SgdState {
  ParameterVector theta;
  ParameterVector velocity;
};

/// Glorot-uniform weights, zero biases. Deterministic in (spec, seed).
ParameterVector init_parameters(const ModelSpec& spec, Seed seed);

/// Softmax class probabilities for one feature vector.
std::vector<double> forward(const ParameterVector& theta, const ModelSpec& spec,
                            std::span<const double> x);

/// Mean cross-entropy over the selected rows of `data` and its exact gradient.
LossGradient loss_and_gradient(const ParameterVector& theta, const ModelSpec& spec,
                               const LabeledData& data, std::span<const std::size_t> rows);

/// Same, over every row of `data`.
LossGradient loss_and_gradient(const ParameterVector& theta, const ModelSpec& spec,
                               const LabeledData& data);

/// Mean cross-entropy over the whole dataset, without the gradient.
double mean_loss(const ParameterVector& theta, const ModelSpec& spec, const LabeledData& data);

/// velocity' = momentum * velocity + grad;  theta' = theta - lr * velocity'.
SgdState sgd_step(const ParameterVector& theta, const ParameterVector& grad,
                  const ParameterVector& velocity, const OptimizerConfig& cfg);

/// `local_epochs` passes of mini-batch SGD with a fresh velocity buffer.
/// Batches come from a seeded Fisher-Yates shuffle per epoch; the last short
/// batch is kept.
ParameterVector local_train(const ParameterVector& theta, const ModelSpec& spec,
                            const LabeledData& data, const OptimizerConfig& cfg, Seed seed);

/// Argmax class (ties resolved to the lowest index).
std::size_t predict(const ParameterVector& theta, const ModelSpec& spec, std::span<const double> x);

const char* to_string(Architecture a);
const char* to_string(Activation a);
Architecture architecture_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

}  // namespace ucfl
