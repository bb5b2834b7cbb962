#include "tsxai/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "tsxai/error.hpp"

namespace tsxai {
namespace {

std::size_t label_index(ClassLabel label) { return static_cast<std::size_t>(label); }

Tensor stack_windows(std::span<const Segment> segments, std::span<const std::size_t> order) {
  const Shape& s = segments[order.front()].window.shape();
  const std::size_t row = shape_size(s);
  Tensor out({order.size(), s[0], s[1]});
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Tensor& w = segments[order[i]].window;
    if (w.shape() != s) throw DataError("training: segments have inconsistent shapes");
    std::copy(w.values().begin(), w.values().end(), out.data() + i * row);
  }
  return out;
}

void check_partition(std::span<const Segment> segments, const char* what, std::size_t classes) {
  if (segments.empty()) throw DataError(std::string("train_fold: empty ") + what + " partition");
  for (const auto& s : segments)
    if (label_index(s.label) >= classes) throw DataError(std::string("train_fold: label out of range in ") + what);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(max_learning_rate > 0.0) || !std::isfinite(max_learning_rate))
    throw ConfigError("train: max_learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (epochs == 0) throw ConfigError("train: epochs must be at least 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("train: validation_fraction must lie in (0, 1)");
}

OneCycleSchedule::OneCycleSchedule(double max_lr, std::size_t total_steps) : max_lr_(max_lr), total_(total_steps) {
  if (!(max_lr > 0.0)) throw ConfigError("one-cycle: max_lr must be positive");
  if (total_steps == 0) throw ConfigError("one-cycle: total_steps must be positive");
  warmup_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.3 * static_cast<double>(total_steps))));
}

double OneCycleSchedule::operator()(std::size_t step) const {
  const double start = max_lr_ / 25.0;
  const double floor = max_lr_ / 1e4;
  if (step < warmup_) return start + (max_lr_ - start) * static_cast<double>(step) / static_cast<double>(warmup_);
  if (total_ <= warmup_ + 1) return max_lr_;
  const double p = std::min(1.0, static_cast<double>(step - warmup_) / static_cast<double>(total_ - 1 - warmup_));
  return floor + (max_lr_ - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

void Adam::step(ParameterSet& params, const std::vector<std::pair<std::string, const Tensor*>>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, grad] : grads) {
    Tensor& p = params.at(name);
    if (grad->size() != p.size()) throw std::invalid_argument("adam: gradient size mismatch for " + name);
    auto& [m, v] = moments_[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    const double* g = grad->data();
    double* w = p.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon_);
    }
  }
}

TrainedModel build_model(const InceptionConfig& config, std::uint64_t seed) {
  config.validate();
  TrainedModel model{InceptionNetwork(config, seed), {}, -1, 0.0, 0, 0, {}};
  model.normalization.mean.assign(config.input_channels, 0.0);
  model.normalization.std.assign(config.input_channels, 1.0);
  return model;
}

double mean_cross_entropy(const Classifier& model, std::span<const Segment> segments, std::size_t chunk) {
  if (segments.empty()) throw DataError("mean_cross_entropy: no segments");
  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += chunk) {
    const std::size_t n = std::min(chunk, order.size() - start);
    const std::span<const std::size_t> idx(order.data() + start, n);
    const Tensor probs = evaluate_probabilities(model, stack_windows(segments, idx), chunk);
    const std::size_t K = probs.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = probs[i * K + label_index(segments[idx[i]].label)];
      total -= std::log(std::max(p, 1e-300));
    }
  }
  return total / static_cast<double>(segments.size());
}

TrainedModel train_fold(std::span<const Segment> train, std::span<const Segment> validation, const TrainConfig& cfg,
                        const InceptionConfig& model_cfg, const ZScoreStats& normalization, int fold_id) {
  cfg.validate();
  model_cfg.validate();
  check_partition(train, "training", model_cfg.num_classes);
  check_partition(validation, "validation", model_cfg.num_classes);
  {
    std::vector<bool> seen(model_cfg.num_classes, false);
    for (const auto& s : train) seen[label_index(s.label)] = true;
    if (std::count(seen.begin(), seen.end(), true) < 2)
      throw DataError("train_fold: training partition contains a single class");
  }

  TrainedModel model = build_model(model_cfg, cfg.seed);
  model.fold_id = fold_id;
  if (!normalization.mean.empty()) {
    if (normalization.mean.size() != model_cfg.input_channels || normalization.std.size() != model_cfg.input_channels)
      throw ConfigError("train_fold: normalization does not match input channels");
    model.normalization = normalization;
  }

  const std::size_t N = train.size();
  const std::size_t steps_per_epoch = (N + cfg.batch_size - 1) / cfg.batch_size;
  const OneCycleSchedule schedule(cfg.max_learning_rate, cfg.epochs * steps_per_epoch);
  Adam adam;
  std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dULL);
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);

  InceptionNetwork& net = model.network;
  ParameterSet best = net.parameters();
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < N; start += cfg.batch_size, ++step) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, N - start));
      std::vector<std::size_t> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = label_index(train[idx[i]].label);
      lr = schedule(step);
      try {
        ad::Graph g;
        const auto rec = net.record(g, g.leaf(stack_windows(train, idx)), InceptionNetwork::Mode::kTrain);
        const ad::NodeId loss = g.cross_entropy(rec.logits, std::move(labels));
        const auto grads = g.backward(loss);
        std::vector<std::pair<std::string, const Tensor*>> named;
        named.reserve(rec.trainable.size());
        for (const auto& [name, id] : rec.trainable) named.emplace_back(name, &grads[id]);
        for (const auto& [name, grad] : named)
          if (!grad->all_finite()) throw NumericError("non-finite gradient for " + name);
        adam.step(net.parameters(), named, lr);
        net.update_running_stats(g, rec);
        epoch_loss += g.value(loss).item();
      } catch (const NumericError& e) {
        throw NumericError("train_fold: fold " + std::to_string(fold_id) + " diverged at epoch " +
                           std::to_string(epoch) + ", step " + std::to_string(step) + " (lr " + std::to_string(lr) +
                           "): " + e.what());
      }
    }
    const double val_loss = mean_cross_entropy(net, validation);
    if (!std::isfinite(val_loss))
      throw NumericError("train_fold: non-finite validation loss at epoch " + std::to_string(epoch));
    model.history.push_back({epoch_loss / static_cast<double>(steps_per_epoch), val_loss, lr});
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best = net.parameters();
      model.best_epoch = epoch;
    }
  }
  net.parameters() = std::move(best);
  model.best_validation_loss = best_loss;
  model.steps = step;
  return model;
}

// ---------------------------------------------------------------------------

SubjectPrediction average_probabilities(std::string subject_id, std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw DataError("predict_subject: subject " + subject_id + " has no segments");
  SubjectPrediction out{std::move(subject_id), std::vector<double>(rows.front().size(), 0.0), 0};
  for (const auto& r : rows) {
    if (r.size() != out.probabilities.size()) throw std::invalid_argument("predict_subject: ragged probability rows");
    for (std::size_t k = 0; k < r.size(); ++k) out.probabilities[k] += r[k];
  }
  for (double& p : out.probabilities) p /= static_cast<double>(rows.size());
  out.label = argmax(out.probabilities);
  return out;
}

SubjectPrediction predict_subject(const Classifier& model, std::span<const Segment> segments) {
  if (segments.empty()) throw DataError("predict_subject: zero segments");
  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), 0);
  const Tensor probs = evaluate_probabilities(model, stack_windows(segments, order));
  const std::size_t K = probs.dim(1);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < segments.size(); ++i)
    rows.emplace_back(probs.data() + i * K, probs.data() + (i + 1) * K);
  return average_probabilities(segments.front().subject_id, rows);
}

double roc_auc(std::span<const double> scores, std::span<const std::size_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: size mismatch");
  const double P = static_cast<double>(std::count(labels.begin(), labels.end(), 1u));
  const double Nn = static_cast<double>(labels.size()) - P;
  if (P == 0 || Nn == 0) throw DataError("roc_auc: both classes are required");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double tp = 0, fp = 0, prev_tpr = 0, prev_fpr = 0, area = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (labels[order[i]] == 1 ? tp : fp) += 1;
    if (i + 1 < order.size() && scores[order[i + 1]] == scores[order[i]]) continue;
    const double tpr = tp / P, fpr = fp / Nn;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2;
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  return area;
}

double average_precision(std::span<const double> scores, std::span<const std::size_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("average_precision: size mismatch");
  const double P = static_cast<double>(std::count(labels.begin(), labels.end(), 1u));
  if (P == 0) throw DataError("average_precision: no positive labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double tp = 0, prev_recall = 0, ap = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (labels[order[i]] == 1) tp += 1;
    if (i + 1 < order.size() && scores[order[i + 1]] == scores[order[i]]) continue;
    const double recall = tp / P;
    ap += (recall - prev_recall) * tp / static_cast<double>(i + 1);
    prev_recall = recall;
  }
  return ap;
}

ClassificationMetrics classification_metrics(std::span<const SubjectPrediction> predictions,
                                             std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("classification_metrics: size mismatch");
  if (predictions.empty()) throw DataError("classification_metrics: no predictions");
  double tp = 0, fp = 0, fn = 0, tn = 0;
  std::vector<double> scores;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) throw std::invalid_argument("classification_metrics: binary labels expected");
    const bool pred = predictions[i].label == 1, truth = labels[i] == 1;
    (pred ? (truth ? tp : fp) : (truth ? fn : tn)) += 1;
    scores.push_back(predictions[i].probabilities.at(1));
  }
  auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  auto f1 = [](double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; };
  const double p1 = ratio(tp, tp + fp), r1 = ratio(tp, tp + fn);
  const double p0 = ratio(tn, tn + fn), r0 = ratio(tn, tn + fp);
  ClassificationMetrics m;
  m.accuracy = (tp + tn) / static_cast<double>(labels.size());
  m.balanced_accuracy = (r0 + r1) / 2;
  m.precision = (p0 + p1) / 2;
  m.recall = m.balanced_accuracy;
  m.f1 = (f1(p0, r0) + f1(p1, r1)) / 2;
  m.roc_auc = roc_auc(scores, labels);
  m.pr_auc = average_precision(scores, labels);
  return m;
}

}  // namespace tsxai
