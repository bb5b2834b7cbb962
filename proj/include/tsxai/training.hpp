#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsxai/inception.hpp"
#include "tsxai/signal.hpp"

namespace tsxai {

struct TrainConfig {
  double max_learning_rate = 3e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double validation_fraction = 0.10;

  void validate() const;
};

/// Linear warmup from max/25 to max over the first 30% of steps, then cosine decay to max/1e4.
class OneCycleSchedule {
 public:
  OneCycleSchedule(double max_lr, std::size_t total_steps);
  double operator()(std::size_t step) const;
  std::size_t warmup_steps() const noexcept { return warmup_; }

 private:
  double max_lr_;
  std::size_t total_;
  std::size_t warmup_;
};

/// Adam without weight decay.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  /// Updates every named tensor in `params` with its gradient.
  void step(ParameterSet& params, const std::vector<std::pair<std::string, const Tensor*>>& grads, double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  double beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct EpochRecord {
  double train_loss = 0.0;       // mean over the epoch's batches
  double validation_loss = 0.0;  // mean over validation segments
  double learning_rate = 0.0;    // at the epoch's last step
};

struct TrainedModel {
  InceptionNetwork network;
  ZScoreStats normalization;
  int fold_id = -1;
  double best_validation_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  std::vector<EpochRecord> history;

  const InceptionConfig& config() const { return network.config(); }
};

/// Untrained model with seeded weights and identity normalization.
TrainedModel build_model(const InceptionConfig& config, std::uint64_t seed);

/// Trains on z-scored segments and returns the parameters of the epoch with the lowest
/// validation loss. Throws DataError on empty or single-class partitions and NumericError
/// if the loss diverges.
TrainedModel train_fold(std::span<const Segment> train, std::span<const Segment> validation, const TrainConfig& train_cfg,
                        const InceptionConfig& model_cfg, const ZScoreStats& normalization = {}, int fold_id = -1);

/// Mean cross-entropy of a classifier over labelled segments.
double mean_cross_entropy(const Classifier& model, std::span<const Segment> segments, std::size_t chunk = 64);

struct SubjectPrediction {
  std::string subject_id;
  std::vector<double> probabilities;
  std::size_t label = 0;
};

/// Averages per-segment softmax vectors of one subject; segments must already be normalized.
SubjectPrediction predict_subject(const Classifier& model, std::span<const Segment> segments);
/// Same, from precomputed per-segment probability rows.
SubjectPrediction average_probabilities(std::string subject_id, std::span<const std::vector<double>> rows);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // macro
  double roc_auc = 0.0;
  double pr_auc = 0.0;     // average precision
};

/// Binary metrics with class 1 as positive; AUCs use probabilities[1]. Throws DataError when
/// either class is absent from `labels`.
ClassificationMetrics classification_metrics(std::span<const SubjectPrediction> predictions,
                                             std::span<const std::size_t> labels);

/// Trapezoidal ROC AUC over unique score thresholds.
double roc_auc(std::span<const double> scores, std::span<const std::size_t> labels);
/// Step-wise average precision.
double average_precision(std::span<const double> scores, std::span<const std::size_t> labels);

}  // namespace tsxai
