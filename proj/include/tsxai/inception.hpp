#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tsxai/classifier.hpp"
#include "tsxai/graph.hpp"

namespace tsxai {

struct InceptionConfig {
  std::size_t depth = 6;
  std::size_t filters = 64;             // per branch; a block emits 4 * filters channels
  std::size_t bottleneck_channels = 32;
  std::array<std::size_t, 3> kernel_lengths = {39, 19, 9};
  std::size_t num_classes = 2;
  std::size_t input_channels = 19;
  std::size_t input_length = 400;
  bool residual = true;

  /// Throws ConfigError on an invalid configuration.
  void validate() const;
  std::size_t block_channels() const { return 4 * filters; }
  friend bool operator==(const InceptionConfig&, const InceptionConfig&) = default;
};

/// Named tensors in insertion order. Non-trainable entries hold batch-norm running statistics.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  Tensor& add(std::string name, Tensor value, bool trainable = true);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t trainable_count() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// InceptionTime: blocks of bottleneck -> three parallel convolutions + (max-pool -> 1x1 conv)
/// -> concat -> batch-norm -> ReLU, with a residual shortcut closing every third block, then
/// global average pooling and a fully connected head.
class InceptionNetwork final : public Classifier {
 public:
  enum class Mode { kTrain, kEval };

  struct Recorded {
    ad::NodeId logits = 0;
    ad::NodeId features = 0;
    std::vector<std::pair<std::string, ad::NodeId>> trainable;  // parameter name -> leaf
    std::vector<std::pair<std::string, ad::NodeId>> batch_norms;  // parameter prefix -> batch-norm node
  };

  /// Fresh network with seeded He-uniform weights.
  InceptionNetwork(InceptionConfig config, std::uint64_t seed);
  /// Network over existing parameters; throws ConfigError if names or shapes do not match.
  InceptionNetwork(InceptionConfig config, ParameterSet parameters);

  const InceptionConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

  std::size_t num_classes() const override { return config_.num_classes; }
  ClassifierOutputs record(ad::Graph& graph, ad::NodeId input) const override;

  /// Training mode uses batch statistics and makes every trainable parameter a gradient leaf.
  /// Evaluation mode folds batch-norm into a fixed per-channel affine map.
  Recorded record(ad::Graph& graph, ad::NodeId input, Mode mode) const;

  /// running = (1 - momentum) * running + momentum * batch (unbiased batch variance).
  void update_running_stats(const ad::Graph& graph, const Recorded& recorded, double momentum = 0.1);

  static constexpr double kBatchNormEpsilon = 1e-5;

 private:
  ad::NodeId param(ad::Graph& g, Recorded& rec, const std::string& name, Mode mode) const;
  ad::NodeId normalize(ad::Graph& g, Recorded& rec, ad::NodeId x, const std::string& prefix, Mode mode) const;
  ad::NodeId block(ad::Graph& g, Recorded& rec, ad::NodeId x, std::size_t d, Mode mode) const;

  InceptionConfig config_;
  ParameterSet params_;
};

/// Parameter layout for a configuration, in creation order: (name, shape, trainable).
std::vector<std::tuple<std::string, Shape, bool>> inception_layout(const InceptionConfig& config);

}  // namespace tsxai
