#include "tsxai/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

#include "tsxai/detail/dot.hpp"
#include "tsxai/error.hpp"
#include "tsxai/montage.hpp"

namespace tsxai {

std::string label_name(ClassLabel label) { return label == ClassLabel::kCase ? "case" : "control"; }

ClassLabel parse_label(const std::string& text) {
  if (text == "control" || text == "0") return ClassLabel::kControl;
  if (text == "case" || text == "1") return ClassLabel::kCase;
  throw DataError("unknown class label '" + text + "'");
}

void validate_recording(const Recording& r) {
  if (r.signal.rank() != 2) throw DataError("recording " + r.subject_id + ": signal must be [C, N]");
  if (r.channel_names.size() != r.signal.dim(0)) {
    throw DataError("recording " + r.subject_id + ": " + std::to_string(r.channel_names.size()) +
                    " channel names for " + std::to_string(r.signal.dim(0)) + " channels");
  }
  if (!(r.sample_rate > 0.0)) throw DataError("recording " + r.subject_id + ": sample rate must be positive");
  if (!r.signal.all_finite()) throw DataError("recording " + r.subject_id + ": non-finite samples");
}

// ---------------------------------------------------------------------------
// Synthetic cohorts

std::vector<PlantedEffect> CohortSpec::default_effects() {
  return {PlantedEffect{{"F4", "Fz"}, 8.0, 13.0, 1.0, 2.0}, PlantedEffect{{"T6", "O2"}, 13.0, 30.0, 1.0, 1.8}};
}

std::uint64_t subject_seed(std::uint64_t cohort_seed, std::size_t index) {
  return cohort_seed ^ static_cast<std::uint64_t>(index);
}

namespace {

class PowerLawNoise {
 public:
  explicit PowerLawNoise(std::size_t n)
      : n_(n),
        real_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        spectrum_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))),
        plan_(fftw_plan_dft_c2r_1d(static_cast<int>(n), spectrum_, real_, FFTW_ESTIMATE)) {}
  ~PowerLawNoise() {
    fftw_destroy_plan(plan_);
    fftw_free(spectrum_);
    fftw_free(real_);
  }
  PowerLawNoise(const PowerLawNoise&) = delete;
  PowerLawNoise& operator=(const PowerLawNoise&) = delete;

  // Unit-RMS noise with power spectral density proportional to 1/f^exponent.
  void generate(std::mt19937_64& rng, double exponent, double sample_rate, std::span<double> out) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t bins = n_ / 2 + 1;
    spectrum_[0][0] = spectrum_[0][1] = 0.0;
    for (std::size_t k = 1; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_);
      const double amp = std::pow(f, -exponent / 2.0);
      spectrum_[k][0] = normal(rng) * amp;
      spectrum_[k][1] = normal(rng) * amp;
    }
    if (n_ % 2 == 0) spectrum_[bins - 1][1] = 0.0;
    fftw_execute(plan_);
    double sq = 0.0;
    for (std::size_t i = 0; i < n_; ++i) sq += real_[i] * real_[i];
    const double rms = std::sqrt(sq / static_cast<double>(n_));
    for (std::size_t i = 0; i < n_; ++i) out[i] = rms > 0.0 ? real_[i] / rms : 0.0;
  }

 private:
  std::size_t n_;
  double* real_;
  fftw_complex* spectrum_;
  fftw_plan plan_;
};

void add_bursts(std::mt19937_64& rng, const PlantedEffect& effect, double amplitude, double sample_rate,
                std::span<double> out) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double duration = static_cast<double>(out.size()) / sample_rate;
  double start = 0.5 * unit(rng);
  while (start < duration) {
    const double length = 0.5 + unit(rng);
    const double freq = effect.low_hz + (effect.high_hz - effect.low_hz) * unit(rng);
    const double phase = 2.0 * M_PI * unit(rng);
    const auto first = static_cast<std::size_t>(start * sample_rate);
    const auto count = static_cast<std::size_t>(length * sample_rate);
    for (std::size_t i = 0; i < count && first + i < out.size(); ++i) {
      const double envelope = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(count));
      const double t = static_cast<double>(i) / sample_rate;
      out[first + i] += amplitude * envelope * std::sin(2.0 * M_PI * freq * t + phase);
    }
    start += length + 0.2 + 0.8 * unit(rng);
  }
}

}  // namespace

Cohort generate_synthetic_cohort(const CohortSpec& spec) {
  if (spec.subjects_per_class == 0) throw ConfigError("cohort: subjects_per_class must be positive");
  if (!(spec.sample_rate > 0.0) || !(spec.recording_seconds > 0.0)) {
    throw ConfigError("cohort: sample rate and duration must be positive");
  }
  const auto names = default_channel_names();
  const std::size_t C = names.size();
  std::vector<std::vector<std::size_t>> effect_channels;
  Cohort cohort;
  cohort.ground_truth.assign(C, 0.0);
  for (const PlantedEffect& e : spec.effects) {
    if (!(e.control_multiplier > 0.0) || !(e.case_multiplier > 0.0)) {
      throw ConfigError("cohort: effect multipliers must be positive");
    }
    if (!(e.low_hz >= 0.0 && e.low_hz < e.high_hz && e.high_hz < spec.sample_rate / 2.0)) {
      throw ConfigError("cohort: effect band must satisfy 0 <= low < high < fs/2");
    }
    std::vector<std::size_t> idx;
    for (const auto& name : e.channels) {
      try {
        idx.push_back(channel_index(name, names));
      } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("cohort: ") + err.what());
      }
      cohort.ground_truth[idx.back()] = 1.0;
    }
    effect_channels.push_back(std::move(idx));
  }

  const auto N = static_cast<std::size_t>(std::llround(spec.recording_seconds * spec.sample_rate));
  PowerLawNoise noise(N);
  const std::size_t total = 2 * spec.subjects_per_class;
  cohort.recordings.reserve(total);
  for (std::size_t s = 0; s < total; ++s) {
    std::mt19937_64 rng(subject_seed(spec.seed, s));
    Recording rec;
    char id[32];
    std::snprintf(id, sizeof id, "sub-%03zu", s + 1);
    rec.subject_id = id;
    rec.label = s < spec.subjects_per_class ? ClassLabel::kControl : ClassLabel::kCase;
    rec.sample_rate = spec.sample_rate;
    rec.channel_names = names;
    rec.signal = Tensor({C, N});
    for (std::size_t c = 0; c < C; ++c) {
      std::span<double> row(rec.signal.data() + c * N, N);
      noise.generate(rng, spec.noise_exponent, spec.sample_rate, row);
      for (double& v : row) v *= spec.background_rms;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    const double gain = std::exp(spec.subject_variability * normal(rng));
    for (std::size_t e = 0; e < spec.effects.size(); ++e) {
      const PlantedEffect& effect = spec.effects[e];
      const double multiplier = rec.label == ClassLabel::kCase ? effect.case_multiplier : effect.control_multiplier;
      const double amplitude = spec.burst_amplitude * gain * std::sqrt(multiplier);
      for (std::size_t c : effect_channels[e]) {
        add_bursts(rng, effect, amplitude, spec.sample_rate, std::span<double>(rec.signal.data() + c * N, N));
      }
    }
    cohort.recordings.push_back(std::move(rec));
  }
  return cohort;
}

// ---------------------------------------------------------------------------
// Preprocessing

std::vector<double> design_bandpass(double low_hz, double high_hz, double sample_rate, std::size_t num_taps) {
  if (num_taps == 0 || num_taps % 2 == 0) throw ConfigError("fir: num_taps must be odd");
  if (!(low_hz >= 0.0 && low_hz < high_hz && high_hz < sample_rate / 2.0)) {
    throw ConfigError("fir: band edges must satisfy 0 <= low < high < fs/2");
  }
  const double centre = static_cast<double>(num_taps - 1) / 2.0;
  auto lowpass = [&](double cutoff_hz) {
    const double fc = cutoff_hz / sample_rate;
    std::vector<double> h(num_taps);
    double total = 0.0;
    for (std::size_t n = 0; n < num_taps; ++n) {
      const double m = static_cast<double>(n) - centre;
      const double arg = 2.0 * M_PI * fc * m;
      const double sinc = m == 0.0 ? 2.0 * fc : std::sin(arg) / (M_PI * m);
      const double window =
          num_taps == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(n) / (2.0 * centre));
      h[n] = sinc * window;
      total += h[n];
    }
    for (double& v : h) v /= total;
    return h;
  };
  std::vector<double> taps = lowpass(high_hz);
  if (low_hz > 0.0) {
    const std::vector<double> cut = lowpass(low_hz);
    for (std::size_t n = 0; n < num_taps; ++n) taps[n] -= cut[n];
  }
  // Enforce exact symmetry against rounding in the two halves.
  for (std::size_t n = 0; n < num_taps / 2; ++n) {
    const double avg = 0.5 * (taps[n] + taps[num_taps - 1 - n]);
    taps[n] = taps[num_taps - 1 - n] = avg;
  }
  return taps;
}

namespace {

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(n) ? i : period - i);
}

// Centered ("same") convolution with a symmetric kernel, zero outside x:
// y[i] = sum_j taps[j] * x[i - half + j].
std::vector<double> centered(std::span<const double> x, std::span<const double> taps) {
  const std::size_t L = taps.size(), half = L / 2, n = x.size();
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j_lo = i < half ? half - i : 0;
    const std::size_t j_hi = std::min(L, n + half - i);
    if (j_hi > j_lo) y[i] = detail::dot(taps.data() + j_lo, x.data() + (i + j_lo - half), j_hi - j_lo);
  }
  return y;
}

}  // namespace

std::vector<double> filter_channel(std::span<const double> x, std::span<const double> taps) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = taps.size() - 1;
  std::vector<double> padded(n + 2 * pad);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    padded[i] = x[reflect_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad), n)];
  }
  std::vector<double> forward = centered(padded, taps);
  std::reverse(forward.begin(), forward.end());
  std::vector<double> backward = centered(forward, taps);
  std::reverse(backward.begin(), backward.end());
  return {backward.begin() + static_cast<std::ptrdiff_t>(pad),
          backward.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

Recording fir_bandpass(const Recording& recording, double low_hz, double high_hz, std::size_t num_taps) {
  validate_recording(recording);
  const std::vector<double> taps = design_bandpass(low_hz, high_hz, recording.sample_rate, num_taps);
  Recording out = recording;
  const std::size_t N = recording.samples();
  for (std::size_t c = 0; c < recording.channels(); ++c) {
    const auto y = filter_channel(std::span<const double>(recording.signal.data() + c * N, N), taps);
    std::copy(y.begin(), y.end(), out.signal.data() + c * N);
  }
  return out;
}

Recording common_average_reference(const Recording& recording) {
  validate_recording(recording);
  const std::size_t C = recording.channels(), N = recording.samples();
  if (C < 2) throw DataError("common_average_reference: need at least two channels");
  Recording out = recording;
  for (std::size_t t = 0; t < N; ++t) {
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += recording.signal[c * N + t];
    mean /= static_cast<double>(C);
    for (std::size_t c = 0; c < C; ++c) out.signal[c * N + t] = recording.signal[c * N + t] - mean;
  }
  return out;
}

namespace {

struct WindowSamples {
  std::size_t window, step, usable;
};

WindowSamples window_samples(std::size_t samples, double fs, const SegmentationParams& p) {
  if (!(p.window_seconds > p.overlap_seconds && p.overlap_seconds >= 0.0)) {
    throw ConfigError("segmentation: require window > overlap >= 0");
  }
  if (!(p.max_seconds > 0.0)) throw ConfigError("segmentation: max_seconds must be positive");
  WindowSamples w;
  w.window = static_cast<std::size_t>(std::llround(p.window_seconds * fs));
  w.step = static_cast<std::size_t>(std::llround((p.window_seconds - p.overlap_seconds) * fs));
  w.usable = std::min(samples, static_cast<std::size_t>(std::llround(p.max_seconds * fs)));
  if (w.window == 0 || w.step == 0) throw ConfigError("segmentation: window and step must span at least one sample");
  return w;
}

}  // namespace

std::size_t segment_count(std::size_t samples, double sample_rate, const SegmentationParams& params) {
  const WindowSamples w = window_samples(samples, sample_rate, params);
  if (w.usable < w.window) return 0;
  return (w.usable - w.window) / w.step + 1;
}

std::vector<Segment> segment_recording(const Recording& recording, const SegmentationParams& params) {
  validate_recording(recording);
  const std::size_t C = recording.channels(), N = recording.samples();
  const WindowSamples w = window_samples(N, recording.sample_rate, params);
  const std::size_t count = segment_count(N, recording.sample_rate, params);
  if (count == 0) throw DataError("recording " + recording.subject_id + " is shorter than one window");
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Segment seg;
    seg.subject_id = recording.subject_id;
    seg.label = recording.label;
    seg.index = s;
    seg.window = Tensor({C, w.window});
    for (std::size_t c = 0; c < C; ++c) {
      std::copy_n(recording.signal.data() + c * N + s * w.step, w.window, seg.window.data() + c * w.window);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

ZScoreStats zscore_fit(std::span<const Segment> train) {
  if (train.empty()) throw DataError("zscore_fit: empty training set");
  const std::size_t C = train.front().window.dim(0);
  ZScoreStats stats{std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
  std::vector<double> count(C, 0.0);
  for (const Segment& s : train) {
    if (s.window.rank() != 2 || s.window.dim(0) != C) throw DataError("zscore_fit: inconsistent segment shapes");
    const std::size_t T = s.window.dim(1);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 0; t < T; ++t) stats.mean[c] += s.window[c * T + t];
      count[c] += static_cast<double>(T);
    }
  }
  for (std::size_t c = 0; c < C; ++c) stats.mean[c] /= count[c];
  for (const Segment& s : train) {
    const std::size_t T = s.window.dim(1);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 0; t < T; ++t) {
        const double d = s.window[c * T + t] - stats.mean[c];
        stats.std[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < C; ++c) stats.std[c] = std::sqrt(stats.std[c] / count[c]);
  return stats;
}

Tensor zscore_apply(const ZScoreStats& stats, const Tensor& window) {
  if (window.rank() != 2 || window.dim(0) != stats.mean.size()) throw DataError("zscore_apply: channel mismatch");
  const std::size_t C = window.dim(0), T = window.dim(1);
  Tensor out(window.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const double divisor = stats.std[c] < 1e-8 ? 1.0 : stats.std[c];
    for (std::size_t t = 0; t < T; ++t) out[c * T + t] = (window[c * T + t] - stats.mean[c]) / divisor;
  }
  return out;
}

void zscore_apply(const ZScoreStats& stats, std::span<Segment> segments) {
  for (Segment& s : segments) s.window = zscore_apply(stats, s.window);
}

// ---------------------------------------------------------------------------
// Cross-validation

FoldSplit stratified_subject_kfold(std::span<const SubjectInfo> subjects, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be at least 2");
  std::set<std::string> ids;
  std::map<ClassLabel, std::vector<std::string>> by_class;
  for (const SubjectInfo& s : subjects) {
    if (!ids.insert(s.id).second) throw DataError("kfold: duplicate subject id " + s.id);
    by_class[s.label].push_back(s.id);
  }
  for (const auto& [label, members] : by_class) {
    if (members.size() < k) {
      throw DataError("kfold: class " + label_name(label) + " has " + std::to_string(members.size()) +
                      " subjects, fewer than " + std::to_string(k) + " folds");
    }
  }
  FoldSplit split;
  split.k = k;
  split.test_subjects.resize(k);
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (const auto& id : members) {
      split.test_subjects[next].push_back(id);
      next = (next + 1) % k;
    }
  }
  return split;
}

FoldPartition fold_partition(const FoldSplit& split, std::span<const SubjectInfo> subjects, std::size_t fold,
                             double validation_fraction, std::uint64_t seed) {
  if (fold >= split.k) throw ConfigError("fold_partition: fold index out of range");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("fold_partition: validation fraction must lie in (0, 1)");
  }
  FoldPartition part;
  part.test = split.test_subjects[fold];
  const std::set<std::string> test(part.test.begin(), part.test.end());
  std::map<ClassLabel, std::vector<std::string>> remaining;
  for (const SubjectInfo& s : subjects) {
    if (!test.count(s.id)) remaining[s.label].push_back(s.id);
  }
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (fold + 1)));
  std::set<std::string> validation;
  for (auto& [label, members] : remaining) {
    if (members.size() < 2) throw DataError("fold_partition: class " + label_name(label) + " has too few training subjects");
    std::vector<std::string> shuffled = members;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(members.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, members.size() - 1);
    validation.insert(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
  }
  for (const SubjectInfo& s : subjects) {
    if (test.count(s.id)) continue;
    (validation.count(s.id) ? part.validation : part.train).push_back(s.id);
  }
  check_subject_disjoint(part);
  return part;
}

void check_subject_disjoint(const FoldPartition& p) {
  std::set<std::string> seen;
  for (const auto* list : {&p.train, &p.validation, &p.test}) {
    for (const auto& id : *list) {
      if (!seen.insert(id).second) throw DataError("subject leakage: " + id + " appears in more than one partition");
    }
  }
}

}  // namespace tsxai
