#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsxai/classifier.hpp"
#include "tsxai/montage.hpp"
#include "tsxai/signal.hpp"

namespace tsxai {

enum class Method { kIntegratedGradients, kInputXGradient, kGradCam, kDeepShap, kOcclusion, kPermutation };

/// "ig", "input_x_gradient", "grad_cam", "deep_shap", "occlusion", "permutation".
std::string method_name(Method method);
/// Throws ConfigError for unknown names.
Method parse_method(const std::string& name);
std::vector<Method> all_methods();

/// Which model output an attribution explains.
enum class TargetOutput { kLogit, kProbability };

struct BaselineSpec {
  enum class Kind { kNone, kZero, kGaussian, kBackgroundSet };
  Kind kind = Kind::kZero;
  std::uint64_t seed = 0;
  std::vector<double> mean, std;   // per channel, gaussian only
  std::vector<Tensor> background;  // [C, T] segments, background set only

  static BaselineSpec zero();
  static BaselineSpec gaussian(std::vector<double> mean, std::vector<double> std, std::uint64_t seed);
  static BaselineSpec background_set(std::vector<Tensor> segments);

  /// "none", "zero", "gaussian:<seed>" or "background:<K>:<hash>".
  std::string descriptor() const;
  /// Baseline for one segment; `salt` decorrelates gaussian draws between segments.
  Tensor materialize(const Shape& shape, std::uint64_t salt = 0) const;
};

/// Per-channel mean/std of a [C, T] segment set, for gaussian baselines.
BaselineSpec gaussian_baseline_from(std::span<const Segment> train, std::uint64_t seed);

struct AttributionMap {
  Method method = Method::kIntegratedGradients;
  std::string segment_id;  // "<subject>/<index>"
  int fold = -1;
  std::string subject_id;
  ClassLabel label = ClassLabel::kControl;
  std::size_t target = 0;
  std::string baseline = "none";
  Tensor values;  // [C, T]; [1, T] for grad_cam
};

std::string segment_id(const Segment& segment);

// ---------------------------------------------------------------------------
// Gradient-based methods (logit targets). Inputs are [C, T] normalized segments.

/// d logit_target / d x for every row of a [B, C, T] batch.
Tensor logit_gradient(const Classifier& model, const Tensor& batch, std::size_t target);

/// Right-endpoint Riemann sum of the path integral from `baseline` to `x` with `steps` points,
/// evaluated in batches of `chunk` interpolants.
Tensor integrated_gradients(const Classifier& model, const Tensor& x, const Tensor& baseline, std::size_t steps,
                            std::size_t target, std::size_t chunk = 25);

Tensor input_x_gradient(const Classifier& model, const Tensor& x, std::size_t target);

/// ReLU of the gradient-weighted final feature maps, linearly interpolated to T; shape [1, T].
Tensor grad_cam(const Classifier& model, const Tensor& x, std::size_t target);

/// Linear interpolation of `values` onto `length` points with matching end points.
std::vector<double> interpolate_linear(std::span<const double> values, std::size_t length);

/// DeepLIFT-Rescale attributions of `x` against each reference: [K, C, T]. Each row sums to
/// logit(x) - logit(reference).
Tensor deep_lift(const Classifier& model, const Tensor& x, std::span<const Tensor> references, std::size_t target,
                 std::size_t chunk = 20);

/// Mean of deep_lift over the background set.
Tensor deep_shap(const Classifier& model, const Tensor& x, std::span<const Tensor> background, std::size_t target,
                 std::size_t chunk = 20);

// ---------------------------------------------------------------------------
// Perturbation methods (probability targets by default).

struct OcclusionParams {
  std::size_t window = 50;
  std::size_t stride = 25;
  double mask_value = 0.0;
  TargetOutput output = TargetOutput::kProbability;
  std::size_t chunk = 64;
};

std::size_t occlusion_positions(std::size_t length, std::size_t window, std::size_t stride);

/// Signed output drop base - masked for every (channel, window position): [C, P].
Tensor occlusion_window_drops(const Classifier& model, const Tensor& x, std::size_t target,
                              const OcclusionParams& params = {});

/// Window drops spread over the covered samples and divided by coverage.
Tensor occlusion(const Classifier& model, const Tensor& x, std::size_t target, const OcclusionParams& params = {});

struct PermutationResult {
  std::vector<double> importance;  // per channel: mean |p - p'| over the batch
  Tensor drops;                    // [N, C] signed p - p'
};

/// Each channel is shuffled across the batch (never the identity permutation) one at a time.
/// `targets[i]` is the class explained for batch row i.
PermutationResult permutation_importance(const Classifier& model, const Tensor& batch,
                                         std::span<const std::size_t> targets, std::uint64_t seed,
                                         TargetOutput output = TargetOutput::kProbability);

/// Seeded shuffle of 0..n-1 that differs from the identity whenever n > 1.
std::vector<std::size_t> non_identity_permutation(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Aggregation

enum class ProfileLevel { kSegment, kSubject, kFold, kGlobal };
std::string level_name(ProfileLevel level);

/// Temporal mean of |values| per channel of one map; the unit that every aggregate is built from.
struct SegmentProfile {
  Method method = Method::kIntegratedGradients;
  int fold = -1;
  std::string subject_id;
  ClassLabel label = ClassLabel::kControl;
  std::vector<double> values;
};

/// Throws std::invalid_argument for grad_cam temporal maps.
SegmentProfile segment_profile(const AttributionMap& map);

struct ChannelProfile {
  ProfileLevel level = ProfileLevel::kGlobal;
  Method method = Method::kIntegratedGradients;
  std::optional<ClassLabel> label;  // set when every input shares one class
  std::vector<int> folds;
  std::vector<double> values;
};

/// kSegment: mean over segments. kSubject: mean over subject means. kFold: mean over subjects
/// of a single fold (throws if several folds are present). kGlobal: mean over fold profiles.
/// Throws std::invalid_argument on mixed methods or an empty input.
ChannelProfile aggregate(std::span<const SegmentProfile> profiles, ProfileLevel level);
ChannelProfile aggregate(std::span<const AttributionMap> maps, ProfileLevel level);

/// Fold-level profile of every fold present, keyed by fold id.
std::map<int, ChannelProfile> fold_profiles(std::span<const SegmentProfile> profiles);

// ---------------------------------------------------------------------------
// Region x band relevance

struct Band {
  std::string name;
  double low_hz, high_hz;
};

/// delta 0.5-4, theta 4-8, alpha 8-13, beta 13-30, gamma 30-40 Hz.
std::vector<Band> default_bands();

struct RegionBandHeatmap {
  std::vector<std::string> regions;
  std::vector<Band> bands;
  std::vector<std::vector<double>> values;  // [region][band]
};

/// Fraction of band-limited power carried by each band at every sample: [bands][C][T].
std::vector<Tensor> band_envelope_fractions(const Tensor& window, std::span<const Band> bands, double sample_rate,
                                            std::size_t num_taps = 201);

/// Relevance per (region, band): temporal mean of |attr| weighted by band fractions, averaged
/// over member channels, then segments -> subjects -> folds. `maps[i]` explains `segments[i]`.
RegionBandHeatmap band_region_heatmap(std::span<const AttributionMap> maps, std::span<const Segment> segments,
                                      std::span<const Band> bands, const RegionMap& regions,
                                      double sample_rate = 200.0, std::size_t num_taps = 201);

// ---------------------------------------------------------------------------
// IG baseline stability

struct BaselineStability {
  int fold = -1;
  double tau = 0.0;
  std::array<double, 3> jaccard{};  // top-1, top-3, top-5
};

/// Compares zero- and gaussian-baseline IG fold profiles fold by fold.
std::vector<BaselineStability> ig_baseline_stability(const std::map<int, std::vector<double>>& zero_baseline,
                                                     const std::map<int, std::vector<double>>& gaussian_baseline);

// ---------------------------------------------------------------------------
// Serialization

/// Writes `<stem>.json` (header) and `<stem>.bin` (little-endian float64 values).
void write_attribution_map(const AttributionMap& map, const std::filesystem::path& stem);
AttributionMap read_attribution_map(const std::filesystem::path& json_path);

std::string channel_profile_json(const ChannelProfile& profile, const std::vector<std::string>& channel_names);
ChannelProfile parse_channel_profile_json(const std::string& text);
std::string heatmap_json(const RegionBandHeatmap& heatmap);

}  // namespace tsxai
