#pragma once

#include <cstddef>

#include "tsxai/graph.hpp"
#include "tsxai/tensor.hpp"

namespace tsxai {

struct ClassifierOutputs {
  ad::NodeId logits;    // [B, K]
  ad::NodeId features;  // [B, F, T'] map consumed by class activation maps
};

/// A differentiable [B, C, T] -> [B, K] classifier evaluated in inference mode.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::size_t num_classes() const = 0;
  virtual ClassifierOutputs record(ad::Graph& graph, ad::NodeId input) const = 0;
};

/// Forward pass over a [B, C, T] batch, processed in chunks of at most `chunk` rows.
Tensor evaluate_logits(const Classifier& model, const Tensor& batch, std::size_t chunk = 64);
Tensor evaluate_probabilities(const Classifier& model, const Tensor& batch, std::size_t chunk = 64);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace tsxai
