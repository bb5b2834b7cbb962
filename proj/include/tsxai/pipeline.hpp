#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsxai/attribution.hpp"
#include "tsxai/inception.hpp"
#include "tsxai/montage.hpp"
#include "tsxai/signal.hpp"
#include "tsxai/training.hpp"

namespace tsxai {

struct ExplainConfig {
  std::vector<Method> methods = {Method::kIntegratedGradients, Method::kGradCam, Method::kDeepShap,
                                 Method::kOcclusion, Method::kPermutation};
  std::size_t ig_steps = 100;
  bool ig_gaussian_baseline = true;   // second IG pass for baseline stability
  std::size_t background_size = 40;   // DeepSHAP references
  OcclusionParams occlusion;
  std::size_t segments_per_subject = 0;  // 0 keeps every correctly classified segment
  std::size_t max_segments = 4000;       // across all folds
  std::size_t saved_maps_per_fold = 2;   // maps persisted per method and fold
  std::size_t band_taps = 201;
};

struct ReportConfig {
  ClassLabel profile_class = ClassLabel::kCase;
  std::size_t jaccard_k = 10;
  std::filesystem::path regions_file;    // empty: built-in lobes
  std::filesystem::path adjacency_file;  // empty: built-in 10-20 neighbours
};

/// Everything a run depends on. Sub-seeds are derived from `seed` so one value pins a run.
struct PipelineConfig {
  CohortSpec cohort;
  double low_hz = 0.1;
  double high_hz = 40.0;
  std::size_t num_taps = 801;
  SegmentationParams segmentation;
  std::size_t folds = 5;
  double validation_fraction = 0.1;
  InceptionConfig model;
  TrainConfig train;
  ExplainConfig explain;
  ReportConfig report;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::filesystem::path output_dir = "tsxai_out";

  /// Throws ConfigError on inconsistent values or missing referenced files.
  void validate() const;
  /// Sorted "section.key" -> canonical value text, covering every field.
  std::map<std::string, std::string> canonical() const;
  /// SHA-256 (hex) of the canonical form; independent of key order in the source file.
  std::string hash() const;
};

/// INI text with sections [cohort], [preprocess], [split], [model], [train], [explain], [report], [run].
/// Unknown sections or keys raise ConfigError. Relative file paths resolve against `base_dir`.
PipelineConfig parse_pipeline_config(std::istream& in, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

std::string tool_version();

struct RunManifest {
  std::string tool = "tsxai";
  std::string version;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
  std::map<std::string, double> stage_seconds;
  std::vector<std::string> artifacts;  // paths relative to the output directory, sorted

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

/// Stage runner. Every stage reads its inputs from the output directory, so stages can be run
/// in separate processes; each one rewrites manifest.json.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  /// recordings/ + ground_truth.json
  void synth();
  /// preprocessed/: band-pass then common average reference
  void preprocess();
  /// splits.json: subject-level stratified folds with validation subsets
  void split();
  /// models/fold<k>.itck and metrics/*.csv
  void train();
  /// attributions/, profiles/, heatmaps/. `only` restricts the method set.
  void explain(std::optional<Method> only = std::nullopt);
  /// reports/ and figures/ from persisted profiles only
  void report();
  void run_all();

  const PipelineConfig& config() const noexcept { return config_; }
  const RunManifest& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& out() const noexcept { return config_.output_dir; }

 private:
  void record(const std::filesystem::path& path);
  void write_text(const std::filesystem::path& relative, const std::string& text);
  void finish_stage(const std::string& name, double seconds);

  PipelineConfig config_;
  RunManifest manifest_;
};

/// Profile key of an attribution method within profiles/ and reports; grad_cam channel profiles
/// come from Input x Gradient.
std::string profile_key(Method method);

/// Methods whose channel profiles enter the agreement report, in configuration order.
std::vector<std::string> agreement_methods(const ExplainConfig& config);

}  // namespace tsxai
