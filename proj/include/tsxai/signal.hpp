#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsxai/tensor.hpp"

namespace tsxai {

enum class ClassLabel : int { kControl = 0, kCase = 1 };

std::string label_name(ClassLabel label);
/// Accepts "control"/"case" or "0"/"1".
ClassLabel parse_label(const std::string& text);

/// One subject's multichannel signal, [C, N] in channel_names order.
struct Recording {
  std::string subject_id;
  ClassLabel label = ClassLabel::kControl;
  double sample_rate = 200.0;
  std::vector<std::string> channel_names;
  Tensor signal;

  std::size_t channels() const { return signal.dim(0); }
  std::size_t samples() const { return signal.dim(1); }
};

/// Throws DataError on a malformed recording (shape/name mismatch, non-finite samples).
void validate_recording(const Recording& recording);

/// A [C, T] window cut from a recording.
struct Segment {
  std::string subject_id;
  ClassLabel label = ClassLabel::kControl;
  std::size_t index = 0;  // position within the parent recording
  int fold = -1;          // test fold of the subject, -1 when unassigned
  Tensor window;
};

// ---------------------------------------------------------------------------
// Synthetic cohorts

/// Band-limited bursts added to a set of channels, scaled in power per class.
struct PlantedEffect {
  std::vector<std::string> channels;
  double low_hz = 8.0;
  double high_hz = 13.0;
  double control_multiplier = 1.0;
  double case_multiplier = 2.0;
};

struct CohortSpec {
  std::size_t subjects_per_class = 40;
  double recording_seconds = 60.0;
  double sample_rate = 200.0;
  std::vector<PlantedEffect> effects = default_effects();
  double noise_exponent = 1.0;      // 1/f^alpha background
  double background_rms = 1.0;
  double burst_amplitude = 2.0;     // peak amplitude at multiplier 1
  double subject_variability = 0.05; // log-normal sigma of per-subject burst gain
  std::uint64_t seed = 1;

  /// Alpha 8-13 Hz x2.0 on {F4, Fz} and beta 13-30 Hz x1.8 on {T6, O2} for the case class.
  static std::vector<PlantedEffect> default_effects();
};

struct Cohort {
  std::vector<Recording> recordings;
  std::vector<double> ground_truth;  // 1 for planted channels, 0 elsewhere
};

/// Throws ConfigError for unknown channels, zero subjects or non-positive multipliers.
Cohort generate_synthetic_cohort(const CohortSpec& spec);

/// Seed of subject `index`'s private RNG stream.
std::uint64_t subject_seed(std::uint64_t cohort_seed, std::size_t index);

// ---------------------------------------------------------------------------
// Preprocessing

/// Symmetric Hamming-windowed band-pass taps; the low-cut part is normalized to unit DC gain
/// so the band-pass rejects DC exactly.
std::vector<double> design_bandpass(double low_hz, double high_hz, double sample_rate, std::size_t num_taps);

/// Zero-phase (forward-backward) FIR band-pass of every channel, reflection padded.
Recording fir_bandpass(const Recording& recording, double low_hz = 0.1, double high_hz = 40.0,
                       std::size_t num_taps = 801);
/// Same filter on a single channel.
std::vector<double> filter_channel(std::span<const double> x, std::span<const double> taps);

Recording common_average_reference(const Recording& recording);

struct SegmentationParams {
  double window_seconds = 2.0;
  double overlap_seconds = 0.5;
  double max_seconds = 300.0;
};

std::size_t segment_count(std::size_t samples, double sample_rate, const SegmentationParams& params);
std::vector<Segment> segment_recording(const Recording& recording, const SegmentationParams& params = {});

/// Per-channel population statistics pooled over training segments.
struct ZScoreStats {
  std::vector<double> mean;
  std::vector<double> std;
};

ZScoreStats zscore_fit(std::span<const Segment> train_segments);
/// Divides by 1 for channels whose std is below 1e-8.
void zscore_apply(const ZScoreStats& stats, std::span<Segment> segments);
Tensor zscore_apply(const ZScoreStats& stats, const Tensor& window);

// ---------------------------------------------------------------------------
// Cross-validation

struct SubjectInfo {
  std::string id;
  ClassLabel label;
};

struct FoldSplit {
  std::size_t k = 0;
  std::vector<std::vector<std::string>> test_subjects;  // per fold
};

struct FoldPartition {
  std::vector<std::string> train, validation, test;
};

/// Seeded per-class shuffle followed by a round-robin deal that continues across classes.
FoldSplit stratified_subject_kfold(std::span<const SubjectInfo> subjects, std::size_t k, std::uint64_t seed);

/// Test = fold `fold`; a class-stratified `validation_fraction` of the remaining subjects is
/// held out for model selection.
FoldPartition fold_partition(const FoldSplit& split, std::span<const SubjectInfo> subjects, std::size_t fold,
                             double validation_fraction, std::uint64_t seed);

/// Throws DataError if any subject appears in more than one partition.
void check_subject_disjoint(const FoldPartition& partition);

}  // namespace tsxai
