#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ucfl {

/// Row-major feature matrix with integer class labels.
struct LabeledData {
  std::size_t dim = 0;
  std::vector<double> features;  // size() * dim entries
  std::vector<int> labels;

  LabeledData() = default;
  explicit LabeledData(std::size_t d) : dim(d) {}

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  std::span<double> row(std::size_t i) { return {features.data() + i * dim, dim}; }

  void push_back(std::span<const double> x, int y) {
    if (x.size() != dim) throw std::invalid_argument("LabeledData::push_back: feature dimension mismatch");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(y);
  }

  LabeledData subset(std::span<const std::size_t> rows) const {
    LabeledData out(dim);
    out.features.reserve(rows.size() * dim);
    out.labels.reserve(rows.size());
    for (auto r : rows) out.push_back(row(r), labels[r]);
    return out;
  }

  bool operator==(const LabeledData&) const = default;
};

}  // namespace ucfl
