#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "tsxai/error.hpp"
#include "tsxai/montage.hpp"
#include "tsxai/recording_io.hpp"
#include "tsxai/signal.hpp"

namespace tsxai {
namespace {

Recording make_recording(std::vector<std::vector<double>> rows, double fs = 200.0) {
  Recording r;
  r.subject_id = "s";
  r.sample_rate = fs;
  const std::size_t N = rows.front().size();
  r.signal = Tensor({rows.size(), N});
  for (std::size_t c = 0; c < rows.size(); ++c) {
    r.channel_names.push_back("ch" + std::to_string(c));
    std::copy(rows[c].begin(), rows[c].end(), r.signal.data() + c * N);
  }
  return r;
}

std::vector<double> sinusoid(double freq, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / fs);
  return x;
}

double peak_abs(const Recording& r, std::size_t from, std::size_t to) {
  double m = 0.0;
  for (std::size_t i = from; i < to; ++i) m = std::max(m, std::abs(r.signal[i]));
  return m;
}

// Welch-style band power: mean over non-overlapping Hann windows of a direct DFT periodogram.
double band_power(std::span<const double> x, double fs, double lo, double hi, std::size_t nwin = 400) {
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t start = 0; start + nwin <= x.size(); start += nwin, ++windows) {
    for (std::size_t k = 0; k <= nwin / 2; ++k) {
      const double f = static_cast<double>(k) * fs / static_cast<double>(nwin);
      if (f < lo || f > hi) continue;
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < nwin; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(nwin));
        const double a = 2.0 * M_PI * static_cast<double>(k * i) / static_cast<double>(nwin);
        re += w * x[start + i] * std::cos(a);
        im -= w * x[start + i] * std::sin(a);
      }
      total += re * re + im * im;
    }
  }
  return total / static_cast<double>(windows);
}

double channel_band_power(const Recording& r, std::string_view channel, double lo, double hi) {
  const std::size_t c = channel_index(channel, r.channel_names);
  return band_power(std::span<const double>(r.signal.data() + c * r.samples(), r.samples()), r.sample_rate, lo, hi);
}

// O(n^2) AUC: fraction of (positive, negative) pairs ranked correctly, ties count half.
double pairwise_auc(const std::vector<double>& neg, const std::vector<double>& pos) {
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / static_cast<double>(pos.size() * neg.size());
}

CohortSpec small_spec(double multiplier = 2.0) {
  CohortSpec spec;
  spec.subjects_per_class = 8;
  spec.recording_seconds = 30.0;
  spec.effects = {PlantedEffect{{"F4", "Fz"}, 8.0, 13.0, 1.0, multiplier}};
  return spec;
}

// ---------------------------------------------------------------------------
// Synthetic cohort

TEST(Cohort, DefaultEffectsRaisePlantedBandPower) {
  CohortSpec spec;
  spec.subjects_per_class = 10;
  const Cohort cohort = generate_synthetic_cohort(spec);
  ASSERT_EQ(cohort.recordings.size(), 20u);
  struct Probe {
    const char* channel;
    double lo, hi;
  };
  for (const Probe& p : {Probe{"F4", 8, 13}, Probe{"Fz", 8, 13}, Probe{"T6", 13, 30}, Probe{"O2", 13, 30}}) {
    double control = 0.0, cases = 0.0;
    for (const auto& r : cohort.recordings)
      (r.label == ClassLabel::kCase ? cases : control) += channel_band_power(r, p.channel, p.lo, p.hi);
    EXPECT_GE(cases / control, 1.5) << p.channel;
  }
}

TEST(Cohort, GroundTruthMarksPlantedChannels) {
  const Cohort cohort = generate_synthetic_cohort(small_spec());
  std::vector<double> expected(19, 0.0);
  expected[channel_index("F4")] = expected[channel_index("Fz")] = 1.0;
  EXPECT_EQ(cohort.ground_truth, expected);
  const Cohort full = generate_synthetic_cohort(CohortSpec{.subjects_per_class = 1, .recording_seconds = 4.0});
  EXPECT_EQ(std::count(full.ground_truth.begin(), full.ground_truth.end(), 1.0), 4);
}

TEST(Cohort, SeededDeterminism) {
  const Cohort a = generate_synthetic_cohort(small_spec());
  const Cohort b = generate_synthetic_cohort(small_spec());
  for (std::size_t i = 0; i < a.recordings.size(); ++i) EXPECT_EQ(a.recordings[i].signal, b.recordings[i].signal);
  CohortSpec other = small_spec();
  other.seed = 99;
  EXPECT_NE(generate_synthetic_cohort(other).recordings[0].signal, a.recordings[0].signal);
}

TEST(Cohort, RecordingsHaveCanonicalLayout) {
  const Cohort c = generate_synthetic_cohort(small_spec());
  for (const auto& r : c.recordings) {
    EXPECT_EQ(r.signal.shape(), (Shape{19, 6000}));
    EXPECT_EQ(r.channel_names, default_channel_names());
    EXPECT_NO_THROW(validate_recording(r));
  }
  EXPECT_EQ(c.recordings.front().label, ClassLabel::kControl);
  EXPECT_EQ(c.recordings.back().label, ClassLabel::kCase);
}

TEST(Cohort, SeparabilityIsMonotoneInMultiplier) {
  auto auc_for = [](double multiplier) {
    CohortSpec spec = small_spec(multiplier);
    spec.subjects_per_class = 12;
    std::vector<double> neg, pos;
    for (const auto& r : generate_synthetic_cohort(spec).recordings)
      (r.label == ClassLabel::kCase ? pos : neg).push_back(channel_band_power(r, "F4", 8, 13));
    return pairwise_auc(neg, pos);
  };
  const double a10 = auc_for(1.0), a12 = auc_for(1.2), a20 = auc_for(2.0);
  EXPECT_GE(a20, a12);
  EXPECT_GE(a12, a10);
  EXPECT_NEAR(a10, 0.5, 0.25);
  EXPECT_GT(a20, 0.95);
}

TEST(Cohort, RejectsInvalidSpecs) {
  CohortSpec spec = small_spec();
  spec.subjects_per_class = 0;
  EXPECT_THROW(generate_synthetic_cohort(spec), ConfigError);
  spec = small_spec();
  spec.effects[0].channels = {"Xx"};
  EXPECT_THROW(generate_synthetic_cohort(spec), ConfigError);
  spec = small_spec();
  spec.effects[0].case_multiplier = 0.0;
  EXPECT_THROW(generate_synthetic_cohort(spec), ConfigError);
}

// ---------------------------------------------------------------------------
// FIR band-pass

TEST(Fir, DcIsRemoved) {
  const Recording out = fir_bandpass(make_recording({std::vector<double>(4000, 1.0)}));
  EXPECT_LT(peak_abs(out, 1000, 3000), 0.05);
}

TEST(Fir, PassbandSinusoidKeepsAmplitude) {
  const Recording out = fir_bandpass(make_recording({sinusoid(10.0, 200.0, 4000)}));
  const double amp = peak_abs(out, 1000, 3000);
  EXPECT_GE(amp, 0.95);
  EXPECT_LE(amp, 1.05);
}

TEST(Fir, StopbandSinusoidIsAttenuated) {
  const Recording out = fir_bandpass(make_recording({sinusoid(50.0, 200.0, 4000)}), 0.1, 40.0, 801);
  EXPECT_LT(peak_abs(out, 1000, 3000), 0.05);
}

TEST(Fir, TapsAreSymmetric) {
  for (std::size_t n : {11u, 201u, 801u}) {
    const auto taps = design_bandpass(0.1, 40.0, 200.0, n);
    ASSERT_EQ(taps.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(taps[i], taps[n - 1 - i]);
  }
}

TEST(Fir, PreservesLengthAndRejectsBadBands) {
  const Recording in = make_recording({sinusoid(5.0, 200.0, 1000), sinusoid(7.0, 200.0, 1000)});
  EXPECT_EQ(fir_bandpass(in).signal.shape(), in.signal.shape());
  EXPECT_THROW(fir_bandpass(in, 40.0, 10.0), ConfigError);
  EXPECT_THROW(fir_bandpass(in, 0.1, 100.0), ConfigError);
  EXPECT_THROW(fir_bandpass(in, 0.1, 40.0, 800), ConfigError);
}

// ---------------------------------------------------------------------------
// Common average reference

TEST(Car, TwoChannelExample) {
  const Recording out = common_average_reference(make_recording({{1, 1, 1}, {3, 3, 3}}));
  EXPECT_EQ(out.signal, Tensor({2, 3}, {-1, -1, -1, 1, 1, 1}));
}

TEST(Car, ZeroMeanInputUnchanged) {
  const Recording in = make_recording({{1, -2, 0.5}, {-1, 2, -0.5}});
  EXPECT_EQ(common_average_reference(in).signal, in.signal);
}

TEST(Car, RandomInputSumsToZeroAndIsIdempotent) {
  Recording in;
  in.subject_id = "r";
  in.channel_names = default_channel_names();
  in.signal = testing::random_tensor({19, 100}, 4, 10.0);
  const Recording once = common_average_reference(in);
  for (std::size_t t = 0; t < 100; ++t) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 19; ++c) sum += once.signal[c * 100 + t];
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
  const Recording twice = common_average_reference(once);
  for (std::size_t i = 0; i < once.signal.size(); ++i) EXPECT_NEAR(twice.signal[i], once.signal[i], 1e-12);
}

TEST(Car, SingleChannelRejected) {
  EXPECT_THROW(common_average_reference(make_recording({{1, 2, 3}})), DataError);
}

// ---------------------------------------------------------------------------
// Segmentation

TEST(Segmentation, FullLengthRecordingGives199Windows) {
  Recording r;
  r.subject_id = "long";
  r.channel_names = default_channel_names();
  r.signal = Tensor({19, 60000});
  const auto segments = segment_recording(r);
  ASSERT_EQ(segments.size(), 199u);
  EXPECT_EQ(segment_count(60000, 200.0, {}), 199u);
  for (const auto& s : segments) EXPECT_EQ(s.window.shape(), (Shape{19, 400}));
}

TEST(Segmentation, MaxSecondsTruncates) {
  EXPECT_EQ(segment_count(90000, 200.0, {}), 199u);
}

TEST(Segmentation, ExactlyOneWindow) {
  EXPECT_EQ(segment_recording(make_recording({std::vector<double>(400, 1.0)})).size(), 1u);
}

TEST(Segmentation, DisjointTilingWithoutOverlap) {
  SegmentationParams p;
  p.overlap_seconds = 0.0;
  std::vector<double> ramp(800);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
  const auto s = segment_recording(make_recording({ramp}), p);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].window[0], 0.0);
  EXPECT_EQ(s[1].window[0], 400.0);
  EXPECT_EQ(s[1].index, 1u);
}

TEST(Segmentation, NonOverlappingPartsReconstructSignal) {
  const Tensor sig = testing::random_tensor({2, 3000}, 5);
  Recording r = make_recording({std::vector<double>(3000), std::vector<double>(3000)});
  r.signal = sig;
  const auto segs = segment_recording(r);
  const std::size_t step = 300;
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> rebuilt;
    for (std::size_t k = 0; k < segs.size(); ++k) {
      const std::size_t take = k + 1 == segs.size() ? 400 : step;
      for (std::size_t t = 0; t < take; ++t) rebuilt.push_back(segs[k].window[c * 400 + t]);
    }
    ASSERT_EQ(rebuilt.size(), (segs.size() - 1) * step + 400);
    for (std::size_t i = 0; i < rebuilt.size(); ++i) ASSERT_EQ(rebuilt[i], sig[c * 3000 + i]);
  }
}

TEST(Segmentation, Errors) {
  EXPECT_THROW(segment_recording(make_recording({std::vector<double>(399, 0.0)})), DataError);
  SegmentationParams bad;
  bad.overlap_seconds = 2.0;
  EXPECT_THROW(segment_recording(make_recording({std::vector<double>(800, 0.0)}), bad), ConfigError);
}

// ---------------------------------------------------------------------------
// z-score

Segment one_channel_segment(std::vector<double> values) {
  Segment s;
  const std::size_t n = values.size();
  s.window = Tensor({1, n}, std::move(values));
  return s;
}

TEST(ZScore, TwoValueExample) {
  const std::vector<Segment> train = {one_channel_segment({0, 2})};
  const ZScoreStats stats = zscore_fit(train);
  EXPECT_EQ(stats.mean[0], 1.0);
  EXPECT_EQ(stats.std[0], 1.0);
  EXPECT_EQ(zscore_apply(stats, Tensor({1, 1}, {3.0}))[0], 2.0);
}

TEST(ZScore, ConstantChannelBecomesZero) {
  std::vector<Segment> train = {one_channel_segment({4, 4, 4})};
  const ZScoreStats stats = zscore_fit(train);
  zscore_apply(stats, train);
  EXPECT_EQ(train[0].window, Tensor({1, 3}, 0.0));
}

TEST(ZScore, TrainingSetIsStandardized) {
  std::vector<Segment> train;
  for (std::uint64_t s = 0; s < 6; ++s) {
    Segment seg;
    seg.window = testing::random_tensor({3, 50}, s, 4.0);
    for (std::size_t i = 0; i < 50; ++i) seg.window[i] += 7.0;
    train.push_back(seg);
  }
  const ZScoreStats stats = zscore_fit(train);
  zscore_apply(stats, train);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    for (const auto& s : train)
      for (std::size_t t = 0; t < 50; ++t) sum += s.window[c * 50 + t];
    const double mean = sum / 300.0;
    for (const auto& s : train)
      for (std::size_t t = 0; t < 50; ++t) sq += std::pow(s.window[c * 50 + t] - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(sq / 300.0), 1.0, 1e-9);
  }
}

TEST(ZScore, EmptyTrainingSetRejected) {
  EXPECT_THROW(zscore_fit(std::span<const Segment>{}), DataError);
}

// ---------------------------------------------------------------------------
// Subject k-fold

std::vector<SubjectInfo> subjects(std::size_t controls, std::size_t cases) {
  std::vector<SubjectInfo> out;
  for (std::size_t i = 0; i < controls + cases; ++i)
    out.push_back({"sub-" + std::to_string(i), i < controls ? ClassLabel::kControl : ClassLabel::kCase});
  return out;
}

std::size_t count_label(const std::vector<std::string>& ids, const std::vector<SubjectInfo>& all, ClassLabel l) {
  return static_cast<std::size_t>(std::count_if(ids.begin(), ids.end(), [&](const std::string& id) {
    return std::find_if(all.begin(), all.end(), [&](const SubjectInfo& s) { return s.id == id; })->label == l;
  }));
}

TEST(KFold, BalancedExactDivision) {
  const auto all = subjects(20, 20);
  const FoldSplit split = stratified_subject_kfold(all, 5, 3);
  ASSERT_EQ(split.test_subjects.size(), 5u);
  std::set<std::string> seen;
  for (const auto& fold : split.test_subjects) {
    EXPECT_EQ(fold.size(), 8u);
    EXPECT_EQ(count_label(fold, all, ClassLabel::kControl), 4u);
    seen.insert(fold.begin(), fold.end());
  }
  EXPECT_EQ(seen.size(), 40u);
}

TEST(KFold, UnevenCountsDifferByAtMostOne) {
  const auto all = subjects(7, 7);
  const FoldSplit split = stratified_subject_kfold(all, 5, 11);
  std::vector<std::size_t> sizes, controls, cases;
  for (const auto& f : split.test_subjects) {
    sizes.push_back(f.size());
    controls.push_back(count_label(f, all, ClassLabel::kControl));
    cases.push_back(count_label(f, all, ClassLabel::kCase));
  }
  for (const auto* v : {&sizes, &controls, &cases})
    EXPECT_LE(*std::max_element(v->begin(), v->end()) - *std::min_element(v->begin(), v->end()), 1u);
  EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}), 14u);
}

TEST(KFold, DeterministicAndSeedSensitive) {
  const auto all = subjects(10, 10);
  EXPECT_EQ(stratified_subject_kfold(all, 5, 1).test_subjects, stratified_subject_kfold(all, 5, 1).test_subjects);
  EXPECT_NE(stratified_subject_kfold(all, 5, 1).test_subjects, stratified_subject_kfold(all, 5, 2).test_subjects);
}

TEST(KFold, PartitionsAreSubjectDisjoint) {
  const auto all = subjects(40, 40);
  const FoldSplit split = stratified_subject_kfold(all, 5, 1);
  for (std::size_t f = 0; f < 5; ++f) {
    const FoldPartition p = fold_partition(split, all, f, 0.1, 1);
    EXPECT_NO_THROW(check_subject_disjoint(p));
    std::set<std::string> u(p.train.begin(), p.train.end());
    u.insert(p.validation.begin(), p.validation.end());
    u.insert(p.test.begin(), p.test.end());
    EXPECT_EQ(u.size(), 80u);
    EXPECT_EQ(p.test, split.test_subjects[f]);
    EXPECT_GE(count_label(p.validation, all, ClassLabel::kCase), 1u);
    EXPECT_GE(count_label(p.validation, all, ClassLabel::kControl), 1u);
  }
  FoldPartition leaky{{"a", "b"}, {"c"}, {"a"}};
  EXPECT_THROW(check_subject_disjoint(leaky), DataError);
}

TEST(KFold, Errors) {
  EXPECT_THROW(stratified_subject_kfold(subjects(4, 10), 5, 0), DataError);
  EXPECT_THROW(stratified_subject_kfold(subjects(10, 10), 1, 0), ConfigError);
}

// ---------------------------------------------------------------------------
// Recording files

TEST(RecordingIo, BinaryRoundTripIsExact) {
  const auto dir = std::filesystem::temp_directory_path() / "tsxai_test_io";
  std::filesystem::create_directories(dir);
  Recording r = generate_synthetic_cohort(small_spec()).recordings[9];
  const auto [bin, meta] = write_recording(r, dir / r.subject_id);
  const Recording back = read_recording(bin);
  EXPECT_EQ(back.signal, r.signal);
  EXPECT_EQ(back.subject_id, r.subject_id);
  EXPECT_EQ(back.label, r.label);
  EXPECT_EQ(back.channel_names, r.channel_names);
  EXPECT_EQ(back.sample_rate, r.sample_rate);

  std::ifstream in(bin, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "TSRC");
  EXPECT_EQ(std::filesystem::file_size(bin), 4u + 4 + 4 + 4 + 8 + 8 * r.signal.size());

  std::ofstream(bin, std::ios::binary) << "JUNK";
  EXPECT_THROW(read_recording(bin), DataError);
  EXPECT_THROW(read_recording(dir / "missing.tsrc"), DataError);
  std::filesystem::remove_all(dir);
}

TEST(RecordingIo, CsvImport) {
  const auto path = std::filesystem::temp_directory_path() / "tsxai_test.csv";
  std::ofstream(path) << "Cz,Pz\n1,2\n3,4.5\n-1,0\n";
  const Recording r = read_recording_csv(path, "csv", ClassLabel::kCase);
  EXPECT_EQ(r.channel_names, (std::vector<std::string>{"Cz", "Pz"}));
  EXPECT_EQ(r.signal, Tensor({2, 3}, {1, 3, -1, 2, 4.5, 0}));
  std::ofstream(path) << "Cz,Pz\n1,x\n";
  EXPECT_THROW(read_recording_csv(path, "csv", ClassLabel::kCase), DataError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace tsxai
