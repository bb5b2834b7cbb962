#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tsxai/tensor.hpp"

namespace tsxai::ad {

using NodeId = std::size_t;

enum class OpKind {
  kLeaf,
  kConv1d,          // [B,Cin,T] * [Cout,Cin,K] -> [B,Cout,T], odd K, same zero padding, stride 1
  kChannelAffine,   // [B,C,T] * scale[C] + shift[C]
  kBatchNorm,       // batch statistics over (B,T) per channel, then gamma/beta
  kRelu,
  kMaxPool,         // stride 1, same padding, odd window
  kConcat,          // along the channel axis of [B,C,T]
  kAdd,
  kGlobalAvgPool,   // [B,C,T] -> [B,C]
  kFlatten,         // [B,...] -> [B,F]
  kLinear,          // [B,F] x W[O,F]^T + b[O]
  kSoftmax,         // rows of [B,K]
  kCrossEntropy,    // mean over rows of -log softmax(logits)[label]
  kWeightedSum,     // sum(w * x) with a constant w
};

const char* op_name(OpKind kind);

/// Non-tensor parameters for eval_primitive.
struct OpParams {
  std::size_t window = 3;
  double epsilon = 1e-5;
  std::vector<std::size_t> labels;
  Tensor weights;
};

class Graph;

/// Gradient of a scalar loss with respect to every node that requires one.
class GradientMap {
 public:
  bool contains(NodeId node) const noexcept { return node < grads_.size() && grads_[node].has_value(); }
  /// Throws std::out_of_range for nodes that received no gradient.
  const Tensor& operator[](NodeId node) const;

 private:
  friend class Graph;
  std::vector<std::optional<Tensor>> grads_;
};

struct BackwardOptions {
  /// When set, ReLU and max-pool use the DeepLIFT Rescale rule relative to the activations
  /// recorded in this structurally identical graph, yielding multipliers instead of gradients.
  const Graph* reference = nullptr;
  /// Below this input difference the Rescale rule falls back to the local gradient.
  double rescale_epsilon = 1e-7;
};

/// Tape of eagerly evaluated primitives. Nodes are appended in topological order; every op
/// validates shapes and rejects non-finite inputs and outputs.
class Graph {
 public:
  NodeId leaf(Tensor value, bool requires_grad = false);

  NodeId conv1d(NodeId input, NodeId kernel);
  NodeId channel_affine(NodeId input, NodeId scale, NodeId shift);
  NodeId batch_norm(NodeId input, NodeId gamma, NodeId beta, double epsilon = 1e-5);
  NodeId relu(NodeId input);
  NodeId max_pool(NodeId input, std::size_t window = 3);
  NodeId concat(std::span<const NodeId> inputs);
  NodeId add(NodeId lhs, NodeId rhs);
  NodeId global_avg_pool(NodeId input);
  NodeId flatten(NodeId input);
  NodeId linear(NodeId input, NodeId weight, NodeId bias);
  NodeId softmax(NodeId input);
  NodeId cross_entropy(NodeId logits, std::vector<std::size_t> labels);
  NodeId weighted_sum(NodeId input, Tensor weights);

  const Tensor& value(NodeId node) const;
  OpKind kind(NodeId node) const;
  std::span<const NodeId> inputs(NodeId node) const;
  bool requires_grad(NodeId node) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Per-channel batch mean / biased variance computed by a kBatchNorm node.
  std::span<const double> batch_mean(NodeId node) const;
  std::span<const double> batch_variance(NodeId node) const;

  GradientMap backward(NodeId loss, const BackwardOptions& options = {}) const;

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<NodeId> inputs;
    bool requires_grad = false;
    Tensor value;
    // op-specific caches
    std::vector<std::size_t> indices;  // max-pool argmax, cross-entropy labels
    std::vector<double> aux;           // batch-norm normalized input
    std::vector<double> mean, variance;
    Tensor weights;                    // weighted-sum coefficients
    std::size_t window = 0;
    double epsilon = 0.0;
  };

  const Node& node(NodeId id) const;
  NodeId push(Node node);
  void check_reference(const Graph& reference) const;
  void backward_node(NodeId id, const Tensor& grad_out, std::vector<std::optional<Tensor>>& grads,
                     const BackwardOptions& options) const;

  std::vector<Node> nodes_;
};

/// Evaluates one primitive on leaf inputs.
Tensor eval_primitive(OpKind kind, std::span<const Tensor> inputs, const OpParams& params = {});

}  // namespace tsxai::ad
