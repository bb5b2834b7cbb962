#include "tsxai/inception.hpp"

#include <cmath>
#include <random>
#include <tuple>

#include "tsxai/error.hpp"

namespace tsxai {
namespace {

std::string block_prefix(std::size_t d) { return "blocks." + std::to_string(d); }
std::string shortcut_prefix(std::size_t d) { return "shortcuts." + std::to_string(d); }

bool closes_residual(const InceptionConfig& c, std::size_t d) { return c.residual && d % 3 == 2; }

void add_norm(std::vector<std::tuple<std::string, Shape, bool>>& out, const std::string& prefix, std::size_t channels) {
  out.emplace_back(prefix + ".gamma", Shape{channels}, true);
  out.emplace_back(prefix + ".beta", Shape{channels}, true);
  out.emplace_back(prefix + ".running_mean", Shape{channels}, false);
  out.emplace_back(prefix + ".running_var", Shape{channels}, false);
}

}  // namespace

void InceptionConfig::validate() const {
  if (depth == 0) throw ConfigError("inception: depth must be positive");
  if (filters == 0) throw ConfigError("inception: filters must be positive");
  if (bottleneck_channels == 0) throw ConfigError("inception: bottleneck_channels must be positive");
  for (std::size_t k : kernel_lengths)
    if (k == 0 || k % 2 == 0) throw ConfigError("inception: kernel lengths must be odd, got " + std::to_string(k));
  if (!(kernel_lengths[0] > kernel_lengths[1] && kernel_lengths[1] > kernel_lengths[2]))
    throw ConfigError("inception: kernel lengths must be strictly decreasing");
  if (num_classes < 2) throw ConfigError("inception: need at least two classes");
  if (input_channels == 0) throw ConfigError("inception: input_channels must be positive");
  if (input_length == 0) throw ConfigError("inception: input_length must be positive");
}

// ---------------------------------------------------------------------------

Tensor& ParameterSet::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw std::invalid_argument("parameter set: duplicate name " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value), trainable});
  return entries_.back().value;
}

Tensor& ParameterSet::at(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("parameter set: no parameter " + std::string(name));
  return entries_[it->second].value;
}

const Tensor& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.size();
  return n;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || x.trainable != y.trainable || !(x.value == y.value)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

std::vector<std::tuple<std::string, Shape, bool>> inception_layout(const InceptionConfig& c) {
  c.validate();
  std::vector<std::tuple<std::string, Shape, bool>> out;
  const std::size_t width = c.block_channels();
  std::size_t in = c.input_channels;
  std::size_t residual_in = c.input_channels;
  for (std::size_t d = 0; d < c.depth; ++d) {
    const std::string p = block_prefix(d);
    out.emplace_back(p + ".bottleneck.weight", Shape{c.bottleneck_channels, in, 1}, true);
    for (std::size_t b = 0; b < 3; ++b)
      out.emplace_back(p + ".conv" + std::to_string(b) + ".weight",
                       Shape{c.filters, c.bottleneck_channels, c.kernel_lengths[b]}, true);
    out.emplace_back(p + ".pool_conv.weight", Shape{c.filters, in, 1}, true);
    add_norm(out, p + ".bn", width);
    if (closes_residual(c, d)) {
      const std::string s = shortcut_prefix(d);
      if (residual_in != width) out.emplace_back(s + ".conv.weight", Shape{width, residual_in, 1}, true);
      add_norm(out, s + ".bn", width);
      residual_in = width;
    }
    in = width;
  }
  out.emplace_back("head.weight", Shape{c.num_classes, width}, true);
  out.emplace_back("head.bias", Shape{c.num_classes}, true);
  return out;
}

InceptionNetwork::InceptionNetwork(InceptionConfig config, std::uint64_t seed) : config_(std::move(config)) {
  std::mt19937_64 rng(seed);
  for (auto& [name, shape, trainable] : inception_layout(config_)) {
    Tensor t(shape);
    const bool is_weight = name.ends_with(".weight");
    if (name.ends_with(".gamma") || name.ends_with(".running_var")) {
      t = Tensor(shape, 1.0);
    } else if (is_weight) {
      // He-uniform on fan-in.
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : t.values()) v = u(rng);
    }
    params_.add(name, std::move(t), trainable);
  }
}

InceptionNetwork::InceptionNetwork(InceptionConfig config, ParameterSet parameters)
    : config_(std::move(config)), params_(std::move(parameters)) {
  const auto layout = inception_layout(config_);
  if (layout.size() != params_.size())
    throw ConfigError("inception: expected " + std::to_string(layout.size()) + " parameters, got " +
                      std::to_string(params_.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape, trainable] = layout[i];
    const auto& e = params_.entries()[i];
    if (e.name != name || e.value.shape() != shape || e.trainable != trainable)
      throw ConfigError("inception: parameter " + e.name + " " + shape_string(e.value.shape()) +
                        " does not match expected " + name + " " + shape_string(shape));
    if (!e.value.all_finite()) throw NumericError("inception: parameter " + name + " is not finite");
  }
}

ad::NodeId InceptionNetwork::param(ad::Graph& g, Recorded& rec, const std::string& name, Mode mode) const {
  const bool train = mode == Mode::kTrain;
  const ad::NodeId id = g.leaf(params_.at(name), train);
  if (train) rec.trainable.emplace_back(name, id);
  return id;
}

ad::NodeId InceptionNetwork::normalize(ad::Graph& g, Recorded& rec, ad::NodeId x, const std::string& prefix,
                                       Mode mode) const {
  if (mode == Mode::kTrain) {
    const ad::NodeId gamma = param(g, rec, prefix + ".gamma", mode);
    const ad::NodeId beta = param(g, rec, prefix + ".beta", mode);
    const ad::NodeId bn = g.batch_norm(x, gamma, beta, kBatchNormEpsilon);
    rec.batch_norms.emplace_back(prefix, bn);
    return bn;
  }
  const Tensor& gamma = params_.at(prefix + ".gamma");
  const Tensor& beta = params_.at(prefix + ".beta");
  const Tensor& mean = params_.at(prefix + ".running_mean");
  const Tensor& var = params_.at(prefix + ".running_var");
  Tensor scale(gamma.shape()), shift(gamma.shape());
  for (std::size_t c = 0; c < gamma.size(); ++c) {
    scale[c] = gamma[c] / std::sqrt(var[c] + kBatchNormEpsilon);
    shift[c] = beta[c] - mean[c] * scale[c];
  }
  return g.channel_affine(x, g.leaf(std::move(scale)), g.leaf(std::move(shift)));
}

ad::NodeId InceptionNetwork::block(ad::Graph& g, Recorded& rec, ad::NodeId x, std::size_t d, Mode mode) const {
  const std::string p = block_prefix(d);
  const ad::NodeId bottleneck = g.conv1d(x, param(g, rec, p + ".bottleneck.weight", mode));
  std::vector<ad::NodeId> branches;
  for (std::size_t b = 0; b < 3; ++b)
    branches.push_back(g.conv1d(bottleneck, param(g, rec, p + ".conv" + std::to_string(b) + ".weight", mode)));
  branches.push_back(g.conv1d(g.max_pool(x, 3), param(g, rec, p + ".pool_conv.weight", mode)));
  return g.relu(normalize(g, rec, g.concat(branches), p + ".bn", mode));
}

InceptionNetwork::Recorded InceptionNetwork::record(ad::Graph& g, ad::NodeId input, Mode mode) const {
  const Tensor& x0 = g.value(input);
  if (x0.rank() != 3 || x0.dim(1) != config_.input_channels)
    throw std::invalid_argument("inception: expected input [B, " + std::to_string(config_.input_channels) +
                                ", T], got " + shape_string(x0.shape()));
  Recorded rec;
  ad::NodeId x = input;
  ad::NodeId res = input;
  for (std::size_t d = 0; d < config_.depth; ++d) {
    x = block(g, rec, x, d, mode);
    if (closes_residual(config_, d)) {
      const std::string s = shortcut_prefix(d);
      ad::NodeId shortcut = res;
      if (params_.contains(s + ".conv.weight")) shortcut = g.conv1d(res, param(g, rec, s + ".conv.weight", mode));
      shortcut = normalize(g, rec, shortcut, s + ".bn", mode);
      x = g.relu(g.add(x, shortcut));
      res = x;
    }
  }
  rec.features = x;
  const ad::NodeId pooled = g.global_avg_pool(x);
  rec.logits = g.linear(pooled, param(g, rec, "head.weight", mode), param(g, rec, "head.bias", mode));
  return rec;
}

ClassifierOutputs InceptionNetwork::record(ad::Graph& graph, ad::NodeId input) const {
  const Recorded rec = record(graph, input, Mode::kEval);
  return {rec.logits, rec.features};
}

void InceptionNetwork::update_running_stats(const ad::Graph& g, const Recorded& rec, double momentum) {
  for (const auto& [prefix, node] : rec.batch_norms) {
    const auto mean = g.batch_mean(node);
    const auto var = g.batch_variance(node);
    const Tensor& v = g.value(node);
    const double n = static_cast<double>(v.dim(0) * v.dim(2));
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    Tensor& rm = params_.at(prefix + ".running_mean");
    Tensor& rv = params_.at(prefix + ".running_var");
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = (1.0 - momentum) * rm[c] + momentum * mean[c];
      rv[c] = (1.0 - momentum) * rv[c] + momentum * var[c] * unbias;
    }
  }
}

}  // namespace tsxai
