#include "tsxai/attribution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tsxai/agreement.hpp"
#include "tsxai/detail/binary.hpp"
#include "tsxai/error.hpp"

namespace tsxai {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

void require_segment(const Tensor& x, const char* op) {
  if (x.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected a [C, T] segment, got " + shape_string(x.shape()));
}

// K copies of x as a [K, C, T] batch.
Tensor repeat(const Tensor& x, std::size_t k) {
  Tensor out({k, x.dim(0), x.dim(1)});
  for (std::size_t i = 0; i < k; ++i) std::copy(x.values().begin(), x.values().end(), out.data() + i * x.size());
  return out;
}

// Sum over rows of logit[row, target], as a scalar graph node.
ad::NodeId target_sum(ad::Graph& g, ad::NodeId logits, std::size_t target) {
  const Tensor& l = g.value(logits);
  if (target >= l.dim(1)) throw std::invalid_argument("attribution: target class out of range");
  Tensor w(l.shape());
  for (std::size_t b = 0; b < l.dim(0); ++b) w[b * l.dim(1) + target] = 1.0;
  return g.weighted_sum(logits, std::move(w));
}

// Target output per row of a [B, C, T] batch.
std::vector<double> target_outputs(const Classifier& model, const Tensor& batch, std::span<const std::size_t> targets,
                                   TargetOutput output, std::size_t chunk) {
  const Tensor scores = output == TargetOutput::kLogit ? evaluate_logits(model, batch, chunk)
                                                        : evaluate_probabilities(model, batch, chunk);
  const std::size_t K = scores.dim(1);
  std::vector<double> out(batch.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t t = targets.size() == 1 ? targets[0] : targets[i];
    if (t >= K) throw std::invalid_argument("attribution: target class out of range");
    out[i] = scores[i * K + t];
  }
  return out;
}

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFF;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::vector<double> mean_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out(rows.front().size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) out[i] += r[i];
  for (double& v : out) v /= static_cast<double>(rows.size());
  return out;
}

// Hierarchical mean: subjects within a fold, then folds.
struct Hierarchy {
  std::map<int, std::map<std::string, std::vector<std::vector<double>>>> items;

  void add(int fold, const std::string& subject, std::vector<double> values) {
    items[fold][subject].push_back(std::move(values));
  }
  std::vector<double> fold_mean(int fold) const {
    std::vector<std::vector<double>> subjects;
    for (const auto& [id, rows] : items.at(fold)) subjects.push_back(mean_rows(rows));
    return mean_rows(subjects);
  }
  std::vector<double> global_mean() const {
    std::vector<std::vector<double>> folds;
    for (const auto& [fold, subjects] : items) folds.push_back(fold_mean(fold));
    return mean_rows(folds);
  }
};

}  // namespace

std::string method_name(Method method) {
  switch (method) {
    case Method::kIntegratedGradients: return "ig";
    case Method::kInputXGradient: return "input_x_gradient";
    case Method::kGradCam: return "grad_cam";
    case Method::kDeepShap: return "deep_shap";
    case Method::kOcclusion: return "occlusion";
    case Method::kPermutation: return "permutation";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : all_methods())
    if (method_name(m) == name) return m;
  throw ConfigError("unknown attribution method '" + name + "'");
}

std::vector<Method> all_methods() {
  return {Method::kIntegratedGradients, Method::kInputXGradient, Method::kGradCam,
          Method::kDeepShap,            Method::kOcclusion,      Method::kPermutation};
}

// ---------------------------------------------------------------------------

BaselineSpec BaselineSpec::zero() { return {}; }

BaselineSpec BaselineSpec::gaussian(std::vector<double> mean, std::vector<double> std, std::uint64_t seed) {
  if (mean.size() != std.size() || mean.empty()) throw ConfigError("gaussian baseline: mean/std size mismatch");
  BaselineSpec b;
  b.kind = Kind::kGaussian;
  b.mean = std::move(mean);
  b.std = std::move(std);
  b.seed = seed;
  return b;
}

BaselineSpec BaselineSpec::background_set(std::vector<Tensor> segments) {
  if (segments.empty()) throw ConfigError("background set: K must be at least 1");
  BaselineSpec b;
  b.kind = Kind::kBackgroundSet;
  b.background = std::move(segments);
  return b;
}

std::string BaselineSpec::descriptor() const {
  switch (kind) {
    case Kind::kNone: return "none";
    case Kind::kZero: return "zero";
    case Kind::kGaussian: return "gaussian:" + std::to_string(seed);
    case Kind::kBackgroundSet: {
      std::uint64_t h = 0xCBF29CE484222325ULL;
      for (const Tensor& t : background)
        for (double v : t.values()) h = fnv1a(h, std::bit_cast<std::uint64_t>(v));
      std::ostringstream out;
      out << "background:" << background.size() << ":" << std::hex << h;
      return out.str();
    }
  }
  return "none";
}

Tensor BaselineSpec::materialize(const Shape& shape, std::uint64_t salt) const {
  if (shape.size() != 2) throw std::invalid_argument("baseline: expected a [C, T] shape");
  switch (kind) {
    case Kind::kNone:
    case Kind::kZero: return Tensor(shape);
    case Kind::kGaussian: {
      if (mean.size() != shape[0]) throw std::invalid_argument("baseline: gaussian statistics do not match channels");
      std::mt19937_64 rng(seed ^ (kGolden * (salt + 1)));
      std::normal_distribution<double> normal(0.0, 1.0);
      Tensor out(shape);
      for (std::size_t c = 0; c < shape[0]; ++c)
        for (std::size_t t = 0; t < shape[1]; ++t) out[c * shape[1] + t] = mean[c] + std[c] * normal(rng);
      return out;
    }
    case Kind::kBackgroundSet:
      throw std::invalid_argument("baseline: a background set has no single baseline; use deep_shap");
  }
  return Tensor(shape);
}

BaselineSpec gaussian_baseline_from(std::span<const Segment> train, std::uint64_t seed) {
  if (train.empty()) throw DataError("gaussian baseline: no training segments");
  ZScoreStats s = zscore_fit(train);
  return BaselineSpec::gaussian(std::move(s.mean), std::move(s.std), seed);
}

std::string segment_id(const Segment& segment) { return segment.subject_id + "/" + std::to_string(segment.index); }

// ---------------------------------------------------------------------------

Tensor logit_gradient(const Classifier& model, const Tensor& batch, std::size_t target) {
  ad::Graph g;
  const ad::NodeId in = g.leaf(batch, true);
  const auto out = model.record(g, in);
  const auto grads = g.backward(target_sum(g, out.logits, target));
  return grads[in];
}

Tensor integrated_gradients(const Classifier& model, const Tensor& x, const Tensor& baseline, std::size_t steps,
                            std::size_t target, std::size_t chunk) {
  require_segment(x, "integrated_gradients");
  if (baseline.shape() != x.shape())
    throw std::invalid_argument("integrated_gradients: baseline shape " + shape_string(baseline.shape()) +
                                " does not match input " + shape_string(x.shape()));
  if (steps < 1) throw std::invalid_argument("integrated_gradients: steps must be positive");
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t n = x.size();
  std::vector<double> diff(n), total(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) diff[i] = x[i] - baseline[i];
  for (std::size_t s0 = 1; s0 <= steps; s0 += chunk) {
    const std::size_t m = std::min(chunk, steps + 1 - s0);
    Tensor batch({m, x.dim(0), x.dim(1)});
    for (std::size_t k = 0; k < m; ++k) {
      const double alpha = static_cast<double>(s0 + k) / static_cast<double>(steps);
      for (std::size_t i = 0; i < n; ++i) batch[k * n + i] = baseline[i] + alpha * diff[i];
    }
    const Tensor grad = logit_gradient(model, batch, target);
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t i = 0; i < n; ++i) total[i] += grad[k * n + i];
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < n; ++i) out[i] = diff[i] * total[i] / static_cast<double>(steps);
  return out;
}

Tensor input_x_gradient(const Classifier& model, const Tensor& x, std::size_t target) {
  require_segment(x, "input_x_gradient");
  const Tensor grad = logit_gradient(model, repeat(x, 1), target);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * grad[i];
  return out;
}

std::vector<double> interpolate_linear(std::span<const double> values, std::size_t length) {
  if (values.empty() || length == 0) throw std::invalid_argument("interpolate_linear: empty input");
  if (values.size() == length) return {values.begin(), values.end()};
  std::vector<double> out(length);
  if (values.size() == 1 || length == 1) {
    std::fill(out.begin(), out.end(), values.front());
    return out;
  }
  const double scale = static_cast<double>(values.size() - 1) / static_cast<double>(length - 1);
  for (std::size_t t = 0; t < length; ++t) {
    const double pos = static_cast<double>(t) * scale;
    const auto lo = std::min(static_cast<std::size_t>(pos), values.size() - 2);
    const double frac = pos - static_cast<double>(lo);
    out[t] = values[lo] * (1.0 - frac) + values[lo + 1] * frac;
  }
  return out;
}

Tensor grad_cam(const Classifier& model, const Tensor& x, std::size_t target) {
  require_segment(x, "grad_cam");
  ad::Graph g;
  const ad::NodeId in = g.leaf(repeat(x, 1), true);
  const auto out = model.record(g, in);
  const auto grads = g.backward(target_sum(g, out.logits, target));
  const Tensor& A = g.value(out.features);
  const Tensor& dA = grads[out.features];
  const std::size_t F = A.dim(1), Tf = A.dim(2);
  std::vector<double> cam(Tf, 0.0);
  for (std::size_t k = 0; k < F; ++k) {
    double alpha = 0.0;
    for (std::size_t t = 0; t < Tf; ++t) alpha += dA[k * Tf + t];
    alpha /= static_cast<double>(Tf);
    for (std::size_t t = 0; t < Tf; ++t) cam[t] += alpha * A[k * Tf + t];
  }
  for (double& v : cam) v = std::max(v, 0.0);
  return Tensor({1, x.dim(1)}, interpolate_linear(cam, x.dim(1)));
}

Tensor deep_lift(const Classifier& model, const Tensor& x, std::span<const Tensor> references, std::size_t target,
                 std::size_t chunk) {
  require_segment(x, "deep_lift");
  if (references.empty()) throw std::invalid_argument("deep_lift: empty reference set");
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t n = x.size(), K = references.size();
  Tensor out({K, x.dim(0), x.dim(1)});
  for (std::size_t start = 0; start < K; start += chunk) {
    const std::size_t m = std::min(chunk, K - start);
    Tensor refs({m, x.dim(0), x.dim(1)});
    for (std::size_t k = 0; k < m; ++k) {
      const Tensor& r = references[start + k];
      if (r.shape() != x.shape()) throw std::invalid_argument("deep_lift: reference shape does not match input");
      std::copy(r.values().begin(), r.values().end(), refs.data() + k * n);
    }
    ad::Graph reference;
    const ad::NodeId rin = reference.leaf(refs, true);
    const auto rout = model.record(reference, rin);
    target_sum(reference, rout.logits, target);

    ad::Graph g;
    const ad::NodeId in = g.leaf(repeat(x, m), true);
    const auto gout = model.record(g, in);
    const ad::BackwardOptions options{&reference};
    const auto grads = g.backward(target_sum(g, gout.logits, target), options);
    const Tensor& mult = grads[in];
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t i = 0; i < n; ++i) out[(start + k) * n + i] = mult[k * n + i] * (x[i] - refs[k * n + i]);
  }
  return out;
}

Tensor deep_shap(const Classifier& model, const Tensor& x, std::span<const Tensor> background, std::size_t target,
                 std::size_t chunk) {
  if (background.empty()) throw std::invalid_argument("deep_shap: empty background set");
  const Tensor per = deep_lift(model, x, background, target, chunk);
  Tensor out(x.shape());
  const std::size_t n = x.size();
  for (std::size_t k = 0; k < background.size(); ++k)
    for (std::size_t i = 0; i < n; ++i) out[i] += per[k * n + i];
  for (double& v : out.values()) v /= static_cast<double>(background.size());
  return out;
}

// ---------------------------------------------------------------------------

std::size_t occlusion_positions(std::size_t length, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw std::invalid_argument("occlusion: window and stride must be positive");
  if (window > length) throw std::invalid_argument("occlusion: window larger than segment");
  return (length - window) / stride + 1;
}

Tensor occlusion_window_drops(const Classifier& model, const Tensor& x, std::size_t target,
                              const OcclusionParams& params) {
  require_segment(x, "occlusion");
  const std::size_t C = x.dim(0), T = x.dim(1);
  const std::size_t P = occlusion_positions(T, params.window, params.stride);
  const std::size_t targets[1] = {target};
  const double base = target_outputs(model, repeat(x, 1), targets, params.output, 1).front();

  std::vector<double> drops(C * P);
  const std::size_t total = C * P;
  const std::size_t chunk = std::max<std::size_t>(params.chunk, 1);
  for (std::size_t start = 0; start < total; start += chunk) {
    const std::size_t m = std::min(chunk, total - start);
    Tensor batch = repeat(x, m);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t c = (start + k) / P, p = (start + k) % P;
      double* row = batch.data() + k * x.size() + c * T + p * params.stride;
      std::fill(row, row + params.window, params.mask_value);
    }
    const auto scores = target_outputs(model, batch, targets, params.output, chunk);
    for (std::size_t k = 0; k < m; ++k) drops[start + k] = base - scores[k];
  }
  return Tensor({C, P}, std::move(drops));
}

Tensor occlusion(const Classifier& model, const Tensor& x, std::size_t target, const OcclusionParams& params) {
  const Tensor drops = occlusion_window_drops(model, x, target, params);
  const std::size_t C = x.dim(0), T = x.dim(1), P = drops.dim(1);
  Tensor out(x.shape());
  std::vector<double> coverage(T, 0.0);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t t = 0; t < params.window; ++t) coverage[p * params.stride + t] += 1.0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t t = 0; t < params.window; ++t) out[c * T + p * params.stride + t] += drops[c * P + p];
    for (std::size_t t = 0; t < T; ++t)
      if (coverage[t] > 0.0) out[c * T + t] /= coverage[t];
  }
  return out;
}

std::vector<std::size_t> non_identity_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  if (n < 2) return perm;
  std::mt19937_64 rng(seed);
  auto is_identity = [&] {
    for (std::size_t i = 0; i < n; ++i)
      if (perm[i] != i) return false;
    return true;
  };
  do {
    std::shuffle(perm.begin(), perm.end(), rng);
  } while (is_identity());
  return perm;
}

PermutationResult permutation_importance(const Classifier& model, const Tensor& batch,
                                         std::span<const std::size_t> targets, std::uint64_t seed,
                                         TargetOutput output) {
  if (batch.rank() != 3) throw std::invalid_argument("permutation_importance: expected a [N, C, T] batch");
  const std::size_t N = batch.dim(0), C = batch.dim(1), T = batch.dim(2);
  if (N < 2) throw std::invalid_argument("permutation_importance: batch size must be at least 2");
  if (targets.size() != N) throw std::invalid_argument("permutation_importance: one target per batch row required");
  const auto base = target_outputs(model, batch, targets, output, 64);
  PermutationResult result{std::vector<double>(C, 0.0), Tensor({N, C})};
  for (std::size_t c = 0; c < C; ++c) {
    const auto perm = non_identity_permutation(N, seed ^ (kGolden * (c + 1)));
    Tensor shuffled = batch;
    for (std::size_t i = 0; i < N; ++i)
      std::copy(batch.data() + (perm[i] * C + c) * T, batch.data() + (perm[i] * C + c + 1) * T,
                shuffled.data() + (i * C + c) * T);
    const auto scores = target_outputs(model, shuffled, targets, output, 64);
    double sum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double drop = base[i] - scores[i];
      result.drops[i * C + c] = drop;
      sum += std::abs(drop);
    }
    result.importance[c] = sum / static_cast<double>(N);
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string level_name(ProfileLevel level) {
  switch (level) {
    case ProfileLevel::kSegment: return "segment";
    case ProfileLevel::kSubject: return "subject";
    case ProfileLevel::kFold: return "fold";
    case ProfileLevel::kGlobal: return "global";
  }
  return "unknown";
}

SegmentProfile segment_profile(const AttributionMap& map) {
  if (map.method == Method::kGradCam || map.values.rank() != 2)
    throw std::invalid_argument("segment_profile: temporal grad_cam maps have no channel profile");
  const std::size_t C = map.values.dim(0), T = map.values.dim(1);
  SegmentProfile p{map.method, map.fold, map.subject_id, map.label, std::vector<double>(C, 0.0)};
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) sum += std::abs(map.values[c * T + t]);
    p.values[c] = sum / static_cast<double>(T);
  }
  return p;
}

ChannelProfile aggregate(std::span<const SegmentProfile> profiles, ProfileLevel level) {
  if (profiles.empty()) throw std::invalid_argument("aggregate: no profiles");
  ChannelProfile out;
  out.level = level;
  out.method = profiles.front().method;
  out.label = profiles.front().label;
  const std::size_t C = profiles.front().values.size();
  Hierarchy h;
  std::set<int> folds;
  for (const auto& p : profiles) {
    if (p.method != out.method) throw std::invalid_argument("aggregate: maps from different methods");
    if (p.values.size() != C) throw std::invalid_argument("aggregate: profiles have different channel counts");
    if (out.label && *out.label != p.label) out.label.reset();
    folds.insert(p.fold);
    h.add(p.fold, p.subject_id, p.values);
  }
  out.folds.assign(folds.begin(), folds.end());
  switch (level) {
    case ProfileLevel::kSegment: {
      std::vector<std::vector<double>> rows;
      for (const auto& p : profiles) rows.push_back(p.values);
      out.values = mean_rows(rows);
      break;
    }
    case ProfileLevel::kSubject: {
      std::vector<std::vector<double>> subjects;
      for (const auto& [fold, by_subject] : h.items)
        for (const auto& [id, rows] : by_subject) subjects.push_back(mean_rows(rows));
      out.values = mean_rows(subjects);
      break;
    }
    case ProfileLevel::kFold:
      if (folds.size() != 1) throw std::invalid_argument("aggregate: fold level requires maps from a single fold");
      out.values = h.fold_mean(*folds.begin());
      break;
    case ProfileLevel::kGlobal:
      out.values = h.global_mean();
      break;
  }
  return out;
}

ChannelProfile aggregate(std::span<const AttributionMap> maps, ProfileLevel level) {
  std::vector<SegmentProfile> profiles;
  profiles.reserve(maps.size());
  for (const auto& m : maps) {
    if (!profiles.empty() && m.method != profiles.front().method)
      throw std::invalid_argument("aggregate: maps from different methods");
    profiles.push_back(segment_profile(m));
  }
  return aggregate(profiles, level);
}

std::map<int, ChannelProfile> fold_profiles(std::span<const SegmentProfile> profiles) {
  std::map<int, std::vector<SegmentProfile>> by_fold;
  for (const auto& p : profiles) by_fold[p.fold].push_back(p);
  std::map<int, ChannelProfile> out;
  for (const auto& [fold, items] : by_fold) out.emplace(fold, aggregate(items, ProfileLevel::kFold));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Band> default_bands() {
  return {{"delta", 0.5, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 13.0}, {"beta", 13.0, 30.0}, {"gamma", 30.0, 40.0}};
}

std::vector<Tensor> band_envelope_fractions(const Tensor& window, std::span<const Band> bands, double sample_rate,
                                            std::size_t num_taps) {
  require_segment(window, "band_envelope_fractions");
  if (bands.empty()) throw ConfigError("band heatmap: no bands");
  std::vector<std::vector<double>> taps;
  for (const Band& b : bands) {
    if (!(b.low_hz > 0.0 && b.low_hz < b.high_hz && b.high_hz < sample_rate / 2.0))
      throw ConfigError("band heatmap: band '" + b.name + "' must satisfy 0 < low < high < fs/2");
    taps.push_back(design_bandpass(b.low_hz, b.high_hz, sample_rate, num_taps));
  }
  const std::size_t C = window.dim(0), T = window.dim(1);
  if (num_taps > T) throw ConfigError("band heatmap: filter longer than the segment");
  std::vector<Tensor> out(bands.size(), Tensor(window.shape()));
  for (std::size_t c = 0; c < C; ++c) {
    const std::span<const double> row(window.data() + c * T, T);
    for (std::size_t b = 0; b < bands.size(); ++b) {
      const auto y = filter_channel(row, taps[b]);
      for (std::size_t t = 0; t < T; ++t) out[b][c * T + t] = y[t] * y[t];
    }
    for (std::size_t t = 0; t < T; ++t) {
      double sum = 0.0;
      for (std::size_t b = 0; b < bands.size(); ++b) sum += out[b][c * T + t];
      for (std::size_t b = 0; b < bands.size(); ++b) out[b][c * T + t] = sum > 0.0 ? out[b][c * T + t] / sum : 0.0;
    }
  }
  return out;
}

RegionBandHeatmap band_region_heatmap(std::span<const AttributionMap> maps, std::span<const Segment> segments,
                                      std::span<const Band> bands, const RegionMap& regions, double sample_rate,
                                      std::size_t num_taps) {
  if (maps.size() != segments.size()) throw std::invalid_argument("band_region_heatmap: maps and segments differ in count");
  if (maps.empty()) throw std::invalid_argument("band_region_heatmap: no maps");
  RegionBandHeatmap out;
  for (const Region& r : regions) out.regions.push_back(r.name);
  out.bands.assign(bands.begin(), bands.end());
  const std::size_t R = regions.size(), Bn = bands.size();
  Hierarchy h;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const Tensor& a = maps[i].values;
    const Tensor& x = segments[i].window;
    if (a.shape() != x.shape()) throw std::invalid_argument("band_region_heatmap: map does not match its segment");
    validate_regions(regions, x.dim(0));
    const std::size_t T = x.dim(1);
    const auto fractions = band_envelope_fractions(x, bands, sample_rate, num_taps);
    std::vector<double> cell(R * Bn, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t b = 0; b < Bn; ++b) {
        double sum = 0.0;
        for (std::size_t c : regions[r].channels) {
          double rel = 0.0;
          for (std::size_t t = 0; t < T; ++t) rel += std::abs(a[c * T + t]) * fractions[b][c * T + t];
          sum += rel / static_cast<double>(T);
        }
        cell[r * Bn + b] = sum / static_cast<double>(regions[r].channels.size());
      }
    }
    h.add(maps[i].fold, maps[i].subject_id, std::move(cell));
  }
  const auto flat = h.global_mean();
  out.values.assign(R, std::vector<double>(Bn));
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t b = 0; b < Bn; ++b) out.values[r][b] = flat[r * Bn + b];
  return out;
}

// ---------------------------------------------------------------------------

std::vector<BaselineStability> ig_baseline_stability(const std::map<int, std::vector<double>>& zero_baseline,
                                                     const std::map<int, std::vector<double>>& gaussian_baseline) {
  std::vector<BaselineStability> out;
  for (const auto& [fold, zero] : zero_baseline) {
    const auto it = gaussian_baseline.find(fold);
    if (it == gaussian_baseline.end())
      throw DataError("ig_baseline_stability: fold " + std::to_string(fold) + " has no gaussian-baseline run");
    const RankedList a = rank_profile(zero), b = rank_profile(it->second);
    BaselineStability s{fold, kendall_tau(a, b), {}};
    const std::array<std::size_t, 3> ks = {1, 3, 5};
    for (std::size_t i = 0; i < 3; ++i) s.jaccard[i] = jaccard_topk(a, b, std::min(ks[i], a.size()));
    out.push_back(s);
  }
  if (gaussian_baseline.size() != zero_baseline.size())
    throw DataError("ig_baseline_stability: gaussian-baseline folds do not match zero-baseline folds");
  return out;
}

// ---------------------------------------------------------------------------

void write_attribution_map(const AttributionMap& map, const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  auto header = stem;
  header += ".json";
  {
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw DataError("cannot write " + bin.string());
    for (double v : map.values.values()) detail::put_f64(out, v);
    if (!out) throw DataError("write failed: " + bin.string());
  }
  nlohmann::ordered_json j;
  j["method"] = method_name(map.method);
  j["segment"] = map.segment_id;
  j["fold"] = map.fold;
  j["subject"] = map.subject_id;
  j["label"] = label_name(map.label);
  j["target"] = map.target;
  j["baseline"] = map.baseline;
  j["shape"] = map.values.shape();
  j["data"] = bin.filename().string();
  j["dtype"] = "float64-le";
  std::ofstream out(header);
  if (!out) throw DataError("cannot write " + header.string());
  out << j.dump(2) << "\n";
}

AttributionMap read_attribution_map(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot open " + json_path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    AttributionMap map;
    map.method = parse_method(j.at("method").get<std::string>());
    map.segment_id = j.at("segment").get<std::string>();
    map.fold = j.at("fold").get<int>();
    map.subject_id = j.at("subject").get<std::string>();
    map.label = parse_label(j.at("label").get<std::string>());
    map.target = j.at("target").get<std::size_t>();
    map.baseline = j.at("baseline").get<std::string>();
    const Shape shape = j.at("shape").get<Shape>();
    std::ifstream bin(json_path.parent_path() / j.at("data").get<std::string>(), std::ios::binary);
    if (!bin) throw DataError("missing data file " + j.at("data").get<std::string>());
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = detail::get_f64(bin);
    if (bin.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in data file");
    map.values = Tensor(shape, std::move(values));
    return map;
  } catch (const DataError& e) {
    throw DataError(json_path.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError(json_path.string() + ": " + e.what());
  }
}

std::string channel_profile_json(const ChannelProfile& profile, const std::vector<std::string>& channel_names) {
  if (channel_names.size() != profile.values.size())
    throw std::invalid_argument("channel_profile_json: channel names do not match profile length");
  nlohmann::ordered_json j;
  j["level"] = level_name(profile.level);
  j["method"] = method_name(profile.method);
  j["label"] = profile.label ? nlohmann::ordered_json(label_name(*profile.label)) : nlohmann::ordered_json(nullptr);
  j["folds"] = profile.folds;
  j["channels"] = channel_names;
  j["values"] = profile.values;
  return j.dump(2) + "\n";
}

ChannelProfile parse_channel_profile_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ChannelProfile p;
    const auto level = j.at("level").get<std::string>();
    bool known = false;
    for (ProfileLevel l : {ProfileLevel::kSegment, ProfileLevel::kSubject, ProfileLevel::kFold, ProfileLevel::kGlobal}) {
      if (level_name(l) == level) {
        p.level = l;
        known = true;
      }
    }
    if (!known) throw DataError("unknown profile level " + level);
    p.method = parse_method(j.at("method").get<std::string>());
    if (!j.at("label").is_null()) p.label = parse_label(j.at("label").get<std::string>());
    p.folds = j.at("folds").get<std::vector<int>>();
    p.values = j.at("values").get<std::vector<double>>();
    if (j.at("channels").size() != p.values.size()) throw DataError("channel names do not match values");
    for (double v : p.values)
      if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("profile values must be finite and >= 0");
    return p;
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("channel profile: ") + e.what());
  }
}

std::string heatmap_json(const RegionBandHeatmap& heatmap) {
  nlohmann::ordered_json j;
  j["regions"] = heatmap.regions;
  auto& bands = j["bands"];
  bands = nlohmann::ordered_json::array();
  for (const Band& b : heatmap.bands) bands.push_back({{"name", b.name}, {"low_hz", b.low_hz}, {"high_hz", b.high_hz}});
  j["values"] = heatmap.values;
  return j.dump(2) + "\n";
}

}  // namespace tsxai
