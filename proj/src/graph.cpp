#include "tsxai/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tsxai/detail/dot.hpp"
#include "tsxai/error.hpp"

namespace tsxai::ad {
namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_string(t.shape()));
  }
}

void require_finite(const char* op, const Tensor& t) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite value");
}

using detail::dot;

struct ConvDims {
  std::size_t batch, in_channels, out_channels, length, taps, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w) {
  require_rank("conv1d", x, 3);
  require_rank("conv1d", w, 3);
  if (w.dim(1) != x.dim(1)) {
    shape_error("conv1d", "kernel " + shape_string(w.shape()) + " does not match input " + shape_string(x.shape()));
  }
  if (w.dim(2) % 2 == 0) shape_error("conv1d", "kernel length must be odd, got " + std::to_string(w.dim(2)));
  return {x.dim(0), x.dim(1), w.dim(0), x.dim(2), w.dim(2), w.dim(2) / 2};
}

constexpr std::size_t kTile = 32;

// Rows of `src` ([rows, T]) copied into zero-padded rows of length T + 2*pad + kTile.
std::vector<double> pad_rows(const double* src, std::size_t rows, std::size_t T, std::size_t pad) {
  const std::size_t width = T + 2 * pad + kTile;
  std::vector<double> out(rows * width, 0.0);
  for (std::size_t r = 0; r < rows; ++r) std::copy(src + r * T, src + (r + 1) * T, out.data() + r * width + pad);
  return out;
}

// out[o, t] += sum_i sum_j w[o, i, j] * xp[i, t + j] over padded rows xp.
void correlate(const double* xp, std::size_t in_rows, std::size_t width, const double* w, std::size_t out_rows,
               std::size_t K, std::size_t T, double* out) {
  std::size_t o = 0;
  for (; o + 2 <= out_rows; o += 2) {
    const double* w0 = w + o * in_rows * K;
    const double* w1 = w0 + in_rows * K;
    for (std::size_t t0 = 0; t0 < T; t0 += kTile) {
      double a0[kTile] = {}, a1[kTile] = {};
      for (std::size_t i = 0; i < in_rows; ++i) {
        const double* row = xp + i * width + t0;
        const double* k0 = w0 + i * K;
        const double* k1 = w1 + i * K;
        for (std::size_t j = 0; j < K; ++j) {
          const double c0 = k0[j], c1 = k1[j];
          for (std::size_t t = 0; t < kTile; ++t) {
            a0[t] += c0 * row[j + t];
            a1[t] += c1 * row[j + t];
          }
        }
      }
      const std::size_t n = std::min(kTile, T - t0);
      for (std::size_t t = 0; t < n; ++t) {
        out[o * T + t0 + t] += a0[t];
        out[(o + 1) * T + t0 + t] += a1[t];
      }
    }
  }
  for (; o < out_rows; ++o) {
    const double* w0 = w + o * in_rows * K;
    for (std::size_t t0 = 0; t0 < T; t0 += kTile) {
      double a0[kTile] = {};
      for (std::size_t i = 0; i < in_rows; ++i) {
        const double* row = xp + i * width + t0;
        const double* k0 = w0 + i * K;
        for (std::size_t j = 0; j < K; ++j) {
          const double c0 = k0[j];
          for (std::size_t t = 0; t < kTile; ++t) a0[t] += c0 * row[j + t];
        }
      }
      const std::size_t n = std::min(kTile, T - t0);
      for (std::size_t t = 0; t < n; ++t) out[o * T + t0 + t] += a0[t];
    }
  }
}

void conv_forward(const Tensor& x, const Tensor& w, Tensor& y, const ConvDims& d) {
  const std::size_t T = d.length, width = T + 2 * d.pad + kTile;
  for (std::size_t b = 0; b < d.batch; ++b) {
    const auto xp = pad_rows(x.data() + b * d.in_channels * T, d.in_channels, T, d.pad);
    correlate(xp.data(), d.in_channels, width, w.data(), d.out_channels, d.taps, T, y.data() + b * d.out_channels * T);
  }
}

// Input gradient: correlation of the padded output gradient with flipped, transposed taps.
void conv_backward_input(const Tensor& w, const Tensor& gy, Tensor& gx, const ConvDims& d) {
  const std::size_t T = d.length, K = d.taps, width = T + 2 * d.pad + kTile;
  std::vector<double> flipped(w.size());
  for (std::size_t co = 0; co < d.out_channels; ++co)
    for (std::size_t ci = 0; ci < d.in_channels; ++ci)
      for (std::size_t j = 0; j < K; ++j)
        flipped[(ci * d.out_channels + co) * K + (K - 1 - j)] = w[(co * d.in_channels + ci) * K + j];
  for (std::size_t b = 0; b < d.batch; ++b) {
    const auto gp = pad_rows(gy.data() + b * d.out_channels * T, d.out_channels, T, d.pad);
    correlate(gp.data(), d.out_channels, width, flipped.data(), d.in_channels, K, T,
              gx.data() + b * d.in_channels * T);
  }
}

void conv_backward_kernel(const Tensor& x, const Tensor& gy, Tensor& gw, const ConvDims& d) {
  const std::size_t T = d.length, K = d.taps, width = T + 2 * d.pad + kTile;
  for (std::size_t b = 0; b < d.batch; ++b) {
    const auto xp = pad_rows(x.data() + b * d.in_channels * T, d.in_channels, T, d.pad);
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      const double* g = gy.data() + (b * d.out_channels + co) * T;
      for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
        double* taps = gw.data() + (co * d.in_channels + ci) * K;
        const double* row = xp.data() + ci * width;
        for (std::size_t j = 0; j < K; ++j) taps[j] += dot(g, row + j, T);
      }
    }
  }
}

void accumulate(std::vector<std::optional<Tensor>>& grads, NodeId id, const Tensor& delta) {
  if (!grads[id]) {
    grads[id] = delta;
    return;
  }
  Tensor& g = *grads[id];
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

Tensor& slot(std::vector<std::optional<Tensor>>& grads, NodeId id, const Shape& shape) {
  if (!grads[id]) grads[id] = Tensor(shape);
  return *grads[id];
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConv1d: return "conv1d";
    case OpKind::kChannelAffine: return "channel_affine";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kRelu: return "relu";
    case OpKind::kMaxPool: return "max_pool";
    case OpKind::kConcat: return "concat";
    case OpKind::kAdd: return "add";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kFlatten: return "flatten";
    case OpKind::kLinear: return "linear";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kWeightedSum: return "weighted_sum";
  }
  return "unknown";
}

const Tensor& GradientMap::operator[](NodeId node) const {
  if (!contains(node)) throw std::out_of_range("gradient map: node " + std::to_string(node) + " has no gradient");
  return *grads_[node];
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id >= nodes_.size()) throw std::out_of_range("graph: unknown node " + std::to_string(id));
  return nodes_[id];
}

NodeId Graph::push(Node n) {
  require_finite(op_name(n.kind), n.value);
  for (NodeId in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }
OpKind Graph::kind(NodeId id) const { return node(id).kind; }
std::span<const NodeId> Graph::inputs(NodeId id) const { return node(id).inputs; }
bool Graph::requires_grad(NodeId id) const { return node(id).requires_grad; }

std::span<const double> Graph::batch_mean(NodeId id) const {
  if (kind(id) != OpKind::kBatchNorm) throw std::invalid_argument("graph: batch_mean on non batch-norm node");
  return nodes_[id].mean;
}

std::span<const double> Graph::batch_variance(NodeId id) const {
  if (kind(id) != OpKind::kBatchNorm) throw std::invalid_argument("graph: batch_variance on non batch-norm node");
  return nodes_[id].variance;
}

NodeId Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Graph::conv1d(NodeId input, NodeId kernel) {
  const Tensor& x = value(input);
  const Tensor& w = value(kernel);
  const ConvDims d = conv_dims(x, w);
  Node n;
  n.kind = OpKind::kConv1d;
  n.inputs = {input, kernel};
  n.value = Tensor({d.batch, d.out_channels, d.length});
  conv_forward(x, w, n.value, d);
  return push(std::move(n));
}

NodeId Graph::channel_affine(NodeId input, NodeId scale, NodeId shift) {
  const Tensor& x = value(input);
  const Tensor& s = value(scale);
  const Tensor& h = value(shift);
  require_rank("channel_affine", x, 3);
  if (s.shape() != Shape{x.dim(1)} || h.shape() != Shape{x.dim(1)}) {
    shape_error("channel_affine", "scale/shift must be [" + std::to_string(x.dim(1)) + "]");
  }
  Node n;
  n.kind = OpKind::kChannelAffine;
  n.inputs = {input, scale, shift};
  n.value = Tensor(x.shape());
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* in = x.data() + (b * C + c) * T;
      double* out = n.value.data() + (b * C + c) * T;
      for (std::size_t t = 0; t < T; ++t) out[t] = in[t] * s[c] + h[c];
    }
  }
  return push(std::move(n));
}

NodeId Graph::batch_norm(NodeId input, NodeId gamma, NodeId beta, double epsilon) {
  const Tensor& x = value(input);
  const Tensor& g = value(gamma);
  const Tensor& bt = value(beta);
  require_rank("batch_norm", x, 3);
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  if (g.shape() != Shape{C} || bt.shape() != Shape{C}) shape_error("batch_norm", "gamma/beta must be [C]");
  if (!(epsilon > 0.0)) shape_error("batch_norm", "epsilon must be positive");
  Node n;
  n.kind = OpKind::kBatchNorm;
  n.inputs = {input, gamma, beta};
  n.epsilon = epsilon;
  n.value = Tensor(x.shape());
  n.aux.assign(x.size(), 0.0);
  n.mean.assign(C, 0.0);
  n.variance.assign(C, 0.0);
  const double count = static_cast<double>(B * T);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double* in = x.data() + (b * C + c) * T;
      for (std::size_t t = 0; t < T; ++t) sum += in[t];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double* in = x.data() + (b * C + c) * T;
      for (std::size_t t = 0; t < T; ++t) sq += (in[t] - mean) * (in[t] - mean);
    }
    const double var = sq / count;
    const double inv = 1.0 / std::sqrt(var + epsilon);
    n.mean[c] = mean;
    n.variance[c] = var;
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t off = (b * C + c) * T;
      for (std::size_t t = 0; t < T; ++t) {
        const double xh = (x[off + t] - mean) * inv;
        n.aux[off + t] = xh;
        n.value[off + t] = g[c] * xh + bt[c];
      }
    }
  }
  return push(std::move(n));
}

NodeId Graph::relu(NodeId input) {
  const Tensor& x = value(input);
  Node n;
  n.kind = OpKind::kRelu;
  n.inputs = {input};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] > 0.0 ? x[i] : 0.0;
  return push(std::move(n));
}

NodeId Graph::max_pool(NodeId input, std::size_t window) {
  const Tensor& x = value(input);
  require_rank("max_pool", x, 3);
  if (window == 0 || window % 2 == 0) shape_error("max_pool", "window must be odd");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2), half = window / 2;
  Node n;
  n.kind = OpKind::kMaxPool;
  n.inputs = {input};
  n.window = window;
  n.value = Tensor(x.shape());
  n.indices.assign(x.size(), 0);
  for (std::size_t row = 0; row < B * C; ++row) {
    const double* in = x.data() + row * T;
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t lo = t >= half ? t - half : 0;
      const std::size_t hi = std::min(T, t + half + 1);
      std::size_t best = lo;
      for (std::size_t s = lo + 1; s < hi; ++s) {
        if (in[s] > in[best]) best = s;  // strict: ties keep the lowest index
      }
      n.value[row * T + t] = in[best];
      n.indices[row * T + t] = best;
    }
  }
  return push(std::move(n));
}

NodeId Graph::concat(std::span<const NodeId> parts) {
  if (parts.empty()) shape_error("concat", "no inputs");
  const Tensor& first = value(parts.front());
  require_rank("concat", first, 3);
  const std::size_t B = first.dim(0), T = first.dim(2);
  std::size_t channels = 0;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    require_rank("concat", t, 3);
    if (t.dim(0) != B || t.dim(2) != T) shape_error("concat", "batch/length mismatch");
    channels += t.dim(1);
  }
  Node n;
  n.kind = OpKind::kConcat;
  n.inputs.assign(parts.begin(), parts.end());
  n.value = Tensor({B, channels, T});
  for (std::size_t b = 0; b < B; ++b) {
    double* out = n.value.data() + b * channels * T;
    for (NodeId p : parts) {
      const Tensor& t = value(p);
      const std::size_t block = t.dim(1) * T;
      std::copy_n(t.data() + b * block, block, out);
      out += block;
    }
  }
  return push(std::move(n));
}

NodeId Graph::add(NodeId lhs, NodeId rhs) {
  const Tensor& a = value(lhs);
  const Tensor& b = value(rhs);
  if (a.shape() != b.shape()) shape_error("add", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {lhs, rhs};
  n.value = Tensor(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] + b[i];
  return push(std::move(n));
}

NodeId Graph::global_avg_pool(NodeId input) {
  const Tensor& x = value(input);
  require_rank("global_avg_pool", x, 3);
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  Node n;
  n.kind = OpKind::kGlobalAvgPool;
  n.inputs = {input};
  n.value = Tensor({B, C});
  for (std::size_t row = 0; row < B * C; ++row) {
    double sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) sum += x[row * T + t];
    n.value[row] = sum / static_cast<double>(T);
  }
  return push(std::move(n));
}

NodeId Graph::flatten(NodeId input) {
  const Tensor& x = value(input);
  if (x.rank() < 1) shape_error("flatten", "expected a batch axis");
  Node n;
  n.kind = OpKind::kFlatten;
  n.inputs = {input};
  n.value = x.reshaped({x.dim(0), x.size() / std::max<std::size_t>(x.dim(0), 1)});
  return push(std::move(n));
}

NodeId Graph::linear(NodeId input, NodeId weight, NodeId bias) {
  const Tensor& x = value(input);
  const Tensor& w = value(weight);
  const Tensor& bs = value(bias);
  require_rank("linear", x, 2);
  require_rank("linear", w, 2);
  const std::size_t B = x.dim(0), F = x.dim(1), O = w.dim(0);
  if (w.dim(1) != F || bs.shape() != Shape{O}) {
    shape_error("linear", "weight " + shape_string(w.shape()) + " / bias " + shape_string(bs.shape()) +
                              " incompatible with input " + shape_string(x.shape()));
  }
  Node n;
  n.kind = OpKind::kLinear;
  n.inputs = {input, weight, bias};
  n.value = Tensor({B, O});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) n.value[b * O + o] = dot(x.data() + b * F, w.data() + o * F, F) + bs[o];
  }
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId input) {
  const Tensor& x = value(input);
  require_rank("softmax", x, 2);
  Node n;
  n.kind = OpKind::kSoftmax;
  n.inputs = {input};
  n.value = softmax_rows(x);
  return push(std::move(n));
}

NodeId Graph::cross_entropy(NodeId logits, std::vector<std::size_t> labels) {
  const Tensor& z = value(logits);
  require_rank("cross_entropy", z, 2);
  const std::size_t B = z.dim(0), K = z.dim(1);
  if (labels.size() != B) shape_error("cross_entropy", "one label per row required");
  if (B == 0) shape_error("cross_entropy", "empty batch");
  Node n;
  n.kind = OpKind::kCrossEntropy;
  n.inputs = {logits};
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] >= K) shape_error("cross_entropy", "label out of range");
    const double* row = z.data() + b * K;
    const double peak = *std::max_element(row, row + K);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - peak);
    total += peak + std::log(sum) - row[labels[b]];
  }
  n.value = Tensor::scalar(total / static_cast<double>(B));
  n.indices = std::move(labels);
  return push(std::move(n));
}

NodeId Graph::weighted_sum(NodeId input, Tensor weights) {
  const Tensor& x = value(input);
  if (weights.shape() != x.shape()) {
    shape_error("weighted_sum", "weights " + shape_string(weights.shape()) + " vs input " + shape_string(x.shape()));
  }
  require_finite("weighted_sum", weights);
  Node n;
  n.kind = OpKind::kWeightedSum;
  n.inputs = {input};
  n.value = Tensor::scalar(dot(x.data(), weights.data(), x.size()));
  n.weights = std::move(weights);
  return push(std::move(n));
}

void Graph::check_reference(const Graph& reference) const {
  if (reference.nodes_.size() != nodes_.size()) {
    throw std::invalid_argument("backward: reference graph has a different node count");
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (reference.nodes_[i].kind != nodes_[i].kind || reference.nodes_[i].value.shape() != nodes_[i].value.shape()) {
      throw std::invalid_argument("backward: reference graph differs at node " + std::to_string(i));
    }
  }
}

GradientMap Graph::backward(NodeId loss, const BackwardOptions& options) const {
  const Node& root = node(loss);
  if (root.value.size() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + shape_string(root.value.shape()));
  if (options.reference) check_reference(*options.reference);

  GradientMap result;
  result.grads_.resize(nodes_.size());
  if (!root.requires_grad) return result;
  result.grads_[loss] = Tensor(root.value.shape(), 1.0);
  for (NodeId id = loss + 1; id-- > 0;) {
    if (!result.grads_[id] || nodes_[id].kind == OpKind::kLeaf) continue;
    backward_node(id, *result.grads_[id], result.grads_, options);
  }
  // Interior nodes keep their gradients; nodes not requiring one never receive any.
  return result;
}

void Graph::backward_node(NodeId id, const Tensor& gy, std::vector<std::optional<Tensor>>& grads,
                          const BackwardOptions& options) const {
  const Node& n = nodes_[id];
  const Graph* ref = options.reference;
  auto wants = [&](std::size_t which) { return nodes_[n.inputs[which]].requires_grad; };

  switch (n.kind) {
    case OpKind::kLeaf:
      return;

    case OpKind::kConv1d: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      const Tensor& w = nodes_[n.inputs[1]].value;
      const ConvDims d = conv_dims(x, w);
      if (wants(0)) conv_backward_input(w, gy, slot(grads, n.inputs[0], x.shape()), d);
      if (wants(1)) conv_backward_kernel(x, gy, slot(grads, n.inputs[1], w.shape()), d);
      return;
    }

    case OpKind::kChannelAffine: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      const Tensor& s = nodes_[n.inputs[1]].value;
      const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
      Tensor* gx = wants(0) ? &slot(grads, n.inputs[0], x.shape()) : nullptr;
      Tensor* gs = wants(1) ? &slot(grads, n.inputs[1], s.shape()) : nullptr;
      Tensor* gh = wants(2) ? &slot(grads, n.inputs[2], s.shape()) : nullptr;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t off = (b * C + c) * T;
          for (std::size_t t = 0; t < T; ++t) {
            if (gx) (*gx)[off + t] += gy[off + t] * s[c];
            if (gs) (*gs)[c] += gy[off + t] * x[off + t];
            if (gh) (*gh)[c] += gy[off + t];
          }
        }
      }
      return;
    }

    case OpKind::kBatchNorm: {
      if (ref) throw std::invalid_argument("backward: batch_norm has no DeepLIFT rule; fold it to channel_affine");
      const Tensor& x = nodes_[n.inputs[0]].value;
      const Tensor& g = nodes_[n.inputs[1]].value;
      const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
      const double count = static_cast<double>(B * T);
      Tensor* gx = wants(0) ? &slot(grads, n.inputs[0], x.shape()) : nullptr;
      Tensor* gg = wants(1) ? &slot(grads, n.inputs[1], g.shape()) : nullptr;
      Tensor* gb = wants(2) ? &slot(grads, n.inputs[2], g.shape()) : nullptr;
      for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * T;
          for (std::size_t t = 0; t < T; ++t) {
            sum_dy += gy[off + t];
            sum_dy_xh += gy[off + t] * n.aux[off + t];
          }
        }
        if (gg) (*gg)[c] += sum_dy_xh;
        if (gb) (*gb)[c] += sum_dy;
        if (gx) {
          const double scale = g[c] / std::sqrt(n.variance[c] + n.epsilon) / count;
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t off = (b * C + c) * T;
            for (std::size_t t = 0; t < T; ++t) {
              (*gx)[off + t] += scale * (count * gy[off + t] - sum_dy - n.aux[off + t] * sum_dy_xh);
            }
          }
        }
      }
      return;
    }

    case OpKind::kRelu: {
      if (!wants(0)) return;
      const Tensor& x = nodes_[n.inputs[0]].value;
      Tensor& gx = slot(grads, n.inputs[0], x.shape());
      if (!ref) {
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += x[i] > 0.0 ? gy[i] : 0.0;
        return;
      }
      const Tensor& xr = ref->nodes_[n.inputs[0]].value;
      const Tensor& yr = ref->nodes_[id].value;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - xr[i];
        const double m = std::abs(dx) < options.rescale_epsilon ? (x[i] > 0.0 ? 1.0 : 0.0) : (n.value[i] - yr[i]) / dx;
        gx[i] += gy[i] * m;
      }
      return;
    }

    case OpKind::kMaxPool: {
      if (!wants(0)) return;
      const Tensor& x = nodes_[n.inputs[0]].value;
      Tensor& gx = slot(grads, n.inputs[0], x.shape());
      const std::size_t T = x.dim(2), rows = x.dim(0) * x.dim(1);
      if (!ref) {
        for (std::size_t row = 0; row < rows; ++row) {
          for (std::size_t t = 0; t < T; ++t) gx[row * T + n.indices[row * T + t]] += gy[row * T + t];
        }
        return;
      }
      // Rescale: the output difference is routed to the winner of whichever input (actual or
      // reference) attains the larger maximum; that winner's input difference bounds it.
      const Node& rn = ref->nodes_[id];
      const Tensor& xr = ref->nodes_[n.inputs[0]].value;
      for (std::size_t row = 0; row < rows; ++row) {
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t k = row * T + t;
          const double dy = n.value[k] - rn.value[k];
          const std::size_t idx = row * T + (n.value[k] >= rn.value[k] ? n.indices[k] : rn.indices[k]);
          const double dx = x[idx] - xr[idx];
          if (std::abs(dx) < options.rescale_epsilon) {
            gx[row * T + n.indices[k]] += gy[k];
          } else {
            gx[idx] += gy[k] * dy / dx;
          }
        }
      }
      return;
    }

    case OpKind::kConcat: {
      const std::size_t B = n.value.dim(0), channels = n.value.dim(1), T = n.value.dim(2);
      std::size_t offset = 0;
      for (std::size_t p = 0; p < n.inputs.size(); ++p) {
        const Tensor& part = nodes_[n.inputs[p]].value;
        const std::size_t block = part.dim(1) * T;
        if (wants(p)) {
          Tensor& gp = slot(grads, n.inputs[p], part.shape());
          for (std::size_t b = 0; b < B; ++b) {
            const double* src = gy.data() + b * channels * T + offset;
            double* dst = gp.data() + b * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        offset += block;
      }
      return;
    }

    case OpKind::kAdd: {
      for (std::size_t p = 0; p < 2; ++p) {
        if (wants(p)) accumulate(grads, n.inputs[p], gy);
      }
      return;
    }

    case OpKind::kGlobalAvgPool: {
      if (!wants(0)) return;
      const Tensor& x = nodes_[n.inputs[0]].value;
      Tensor& gx = slot(grads, n.inputs[0], x.shape());
      const std::size_t T = x.dim(2);
      const double inv = 1.0 / static_cast<double>(T);
      for (std::size_t row = 0; row < gy.size(); ++row) {
        for (std::size_t t = 0; t < T; ++t) gx[row * T + t] += gy[row] * inv;
      }
      return;
    }

    case OpKind::kFlatten: {
      if (!wants(0)) return;
      const Tensor& x = nodes_[n.inputs[0]].value;
      Tensor& gx = slot(grads, n.inputs[0], x.shape());
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
      return;
    }

    case OpKind::kLinear: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      const Tensor& w = nodes_[n.inputs[1]].value;
      const std::size_t B = x.dim(0), F = x.dim(1), O = w.dim(0);
      if (wants(0)) {
        Tensor& gx = slot(grads, n.inputs[0], x.shape());
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t o = 0; o < O; ++o) {
            const double g = gy[b * O + o];
            const double* wr = w.data() + o * F;
            double* dst = gx.data() + b * F;
            for (std::size_t f = 0; f < F; ++f) dst[f] += g * wr[f];
          }
        }
      }
      if (wants(1)) {
        Tensor& gw = slot(grads, n.inputs[1], w.shape());
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t o = 0; o < O; ++o) {
            const double g = gy[b * O + o];
            const double* xr = x.data() + b * F;
            double* dst = gw.data() + o * F;
            for (std::size_t f = 0; f < F; ++f) dst[f] += g * xr[f];
          }
        }
      }
      if (wants(2)) {
        Tensor& gb = slot(grads, n.inputs[2], Shape{O});
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t o = 0; o < O; ++o) gb[o] += gy[b * O + o];
        }
      }
      return;
    }

    case OpKind::kSoftmax: {
      if (ref) throw std::invalid_argument("backward: softmax has no DeepLIFT rule; attribute logits instead");
      if (!wants(0)) return;
      const std::size_t B = n.value.dim(0), K = n.value.dim(1);
      Tensor& gx = slot(grads, n.inputs[0], n.value.shape());
      for (std::size_t b = 0; b < B; ++b) {
        const double* y = n.value.data() + b * K;
        const double* g = gy.data() + b * K;
        const double inner = dot(g, y, K);
        for (std::size_t k = 0; k < K; ++k) gx[b * K + k] += y[k] * (g[k] - inner);
      }
      return;
    }

    case OpKind::kCrossEntropy: {
      if (ref) throw std::invalid_argument("backward: cross_entropy has no DeepLIFT rule");
      if (!wants(0)) return;
      const Tensor& z = nodes_[n.inputs[0]].value;
      const std::size_t B = z.dim(0), K = z.dim(1);
      const Tensor p = softmax_rows(z);
      Tensor& gz = slot(grads, n.inputs[0], z.shape());
      const double scale = gy[0] / static_cast<double>(B);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t k = 0; k < K; ++k) {
          gz[b * K + k] += scale * (p[b * K + k] - (k == n.indices[b] ? 1.0 : 0.0));
        }
      }
      return;
    }

    case OpKind::kWeightedSum: {
      if (!wants(0)) return;
      Tensor& gx = slot(grads, n.inputs[0], n.weights.shape());
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[0] * n.weights[i];
      return;
    }
  }
  throw std::logic_error(std::string("backward: no gradient rule for ") + op_name(n.kind));
}

Tensor eval_primitive(OpKind kind, std::span<const Tensor> inputs, const OpParams& params) {
  Graph g;
  std::vector<NodeId> ids;
  for (const Tensor& t : inputs) ids.push_back(g.leaf(t));
  auto need = [&](std::size_t count) {
    if (ids.size() != count) {
      throw std::invalid_argument(std::string(op_name(kind)) + ": expected " + std::to_string(count) + " inputs");
    }
  };
  NodeId out = 0;
  switch (kind) {
    case OpKind::kLeaf: need(1); out = ids[0]; break;
    case OpKind::kConv1d: need(2); out = g.conv1d(ids[0], ids[1]); break;
    case OpKind::kChannelAffine: need(3); out = g.channel_affine(ids[0], ids[1], ids[2]); break;
    case OpKind::kBatchNorm: need(3); out = g.batch_norm(ids[0], ids[1], ids[2], params.epsilon); break;
    case OpKind::kRelu: need(1); out = g.relu(ids[0]); break;
    case OpKind::kMaxPool: need(1); out = g.max_pool(ids[0], params.window); break;
    case OpKind::kConcat: out = g.concat(ids); break;
    case OpKind::kAdd: need(2); out = g.add(ids[0], ids[1]); break;
    case OpKind::kGlobalAvgPool: need(1); out = g.global_avg_pool(ids[0]); break;
    case OpKind::kFlatten: need(1); out = g.flatten(ids[0]); break;
    case OpKind::kLinear: need(3); out = g.linear(ids[0], ids[1], ids[2]); break;
    case OpKind::kSoftmax: need(1); out = g.softmax(ids[0]); break;
    case OpKind::kCrossEntropy: need(1); out = g.cross_entropy(ids[0], params.labels); break;
    case OpKind::kWeightedSum: need(1); out = g.weighted_sum(ids[0], params.weights); break;
  }
  return g.value(out);
}

}  // namespace tsxai::ad
