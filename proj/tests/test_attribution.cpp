#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "test_support.hpp"
#include "tsxai/attribution.hpp"
#include "tsxai/error.hpp"
#include "tsxai/training.hpp"

namespace tsxai {
namespace {

using testing::random_tensor;

// logits = [0, <w, x> + bias] for [B, C, T] input.
class LinearProbe final : public Classifier {
 public:
  explicit LinearProbe(Tensor w, double bias = 0.0) : w_(std::move(w)), bias_(bias) {}
  std::size_t num_classes() const override { return 2; }
  ClassifierOutputs record(ad::Graph& g, ad::NodeId input) const override {
    const std::size_t F = w_.size();
    Tensor rows({2, F});
    std::copy(w_.values().begin(), w_.values().end(), rows.data() + F);
    const ad::NodeId out = g.linear(g.flatten(input), g.leaf(rows), g.leaf(Tensor({2}, {0.0, bias_})));
    return {out, input};
  }
  double score(const Tensor& x) const {
    return std::inner_product(x.values().begin(), x.values().end(), w_.values().begin(), bias_);
  }
  const Tensor& weights() const { return w_; }

 private:
  Tensor w_;
  double bias_;
};

// logits = [0, relu(x_0 - 1)] on a [B, 1, 1] input.
class HingeProbe final : public Classifier {
 public:
  std::size_t num_classes() const override { return 2; }
  ClassifierOutputs record(ad::Graph& g, ad::NodeId input) const override {
    const ad::NodeId z = g.linear(g.flatten(input), g.leaf(Tensor({2, 1}, {0.0, 1.0})), g.leaf(Tensor({2}, {0.0, -1.0})));
    return {g.relu(z), input};
  }
};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double sum(const Tensor& t) { return std::accumulate(t.values().begin(), t.values().end(), 0.0); }

double logit_of(const Classifier& m, const Tensor& x, std::size_t target) {
  return evaluate_logits(m, x.reshaped({1, x.dim(0), x.dim(1)}))[target];
}

void expect_all_zero(const Tensor& t) {
  for (double v : t.values()) ASSERT_EQ(v, 0.0);
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

// Tiny InceptionTime trained on an offset-separable toy task; shared across tests.
const InceptionNetwork& trained_toy() {
  static const InceptionNetwork net = [] {
    const InceptionConfig c = testing::tiny_config(3, 2, 32);
    std::vector<Segment> train, val;
    for (std::size_t i = 0; i < 96; ++i) {
      Segment s;
      s.label = i % 2 ? ClassLabel::kCase : ClassLabel::kControl;
      s.subject_id = "t" + std::to_string(i % 6);
      s.window = random_tensor({2, 32}, 300 + i);
      for (std::size_t t = 0; t < 32; ++t) s.window[t] += s.label == ClassLabel::kCase ? 1.0 : -1.0;
      (i < 80 ? train : val).push_back(std::move(s));
    }
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 16;
    tc.max_learning_rate = 1e-2;
    return train_fold(train, val, tc, c).network;
  }();
  return net;
}

InceptionNetwork random_toy(std::uint64_t seed) {
  InceptionNetwork net(testing::tiny_config(3, 2, 32), seed);
  testing::perturb_running_stats(net, seed + 1);
  return net;
}

// ---------------------------------------------------------------------------
// Linear-model equivalences

TEST(LinearModel, IgInputXGradientAndDeepShapCoincide) {
  const LinearProbe model(random_tensor({3, 20}, 1));
  const Tensor x = random_tensor({3, 20}, 2);
  Tensor expected(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) expected[i] = model.weights()[i] * x[i];
  const Tensor zero(x.shape());
  for (std::size_t steps : {1u, 2u, 7u, 100u}) expect_close(integrated_gradients(model, x, zero, steps, 1), expected, 1e-12);
  expect_close(input_x_gradient(model, x, 1), expected, 1e-12);
  const std::vector<Tensor> zero_background = {zero};
  expect_close(deep_shap(model, x, zero_background, 1), expected, 1e-12);
}

TEST(LinearModel, DeepShapIsWeightTimesDifferenceFromMeanBackground) {
  const LinearProbe model(random_tensor({2, 5}, 3));
  const Tensor x = random_tensor({2, 5}, 4);
  std::vector<Tensor> bg;
  for (std::uint64_t s = 0; s < 7; ++s) bg.push_back(random_tensor({2, 5}, 10 + s));
  Tensor expected(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0.0;
    for (const auto& b : bg) mean += b[i];
    expected[i] = model.weights()[i] * (x[i] - mean / 7.0);
  }
  expect_close(deep_shap(model, x, bg, 1), expected, 1e-12);
}

// Exact Shapley values by enumerating every coalition; v(S) = E_b f(x_S, b_rest).
std::vector<double> brute_force_shapley(const LinearProbe& model, const Tensor& x, const std::vector<Tensor>& bg) {
  const std::size_t n = x.size();
  auto value = [&](unsigned mask) {
    double total = 0.0;
    for (const auto& b : bg) {
      Tensor z = b;
      for (std::size_t i = 0; i < n; ++i)
        if (mask >> i & 1u) z[i] = x[i];
      total += model.score(z);
    }
    return total / static_cast<double>(bg.size());
  };
  std::vector<double> fact(n + 1, 1.0);
  for (std::size_t k = 1; k <= n; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  std::vector<double> phi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      if (mask >> i & 1u) continue;
      const auto s = static_cast<std::size_t>(__builtin_popcount(mask));
      phi[i] += fact[s] * fact[n - s - 1] / fact[n] * (value(mask | (1u << i)) - value(mask));
    }
  return phi;
}

TEST(LinearModel, DeepShapEqualsExactShapley) {
  const LinearProbe model(random_tensor({2, 4}, 5), 0.3);
  const Tensor x = random_tensor({2, 4}, 6);
  std::vector<Tensor> bg;
  for (std::uint64_t s = 0; s < 5; ++s) bg.push_back(random_tensor({2, 4}, 20 + s));
  const Tensor attr = deep_shap(model, x, bg, 1);
  const auto phi = brute_force_shapley(model, x, bg);
  for (std::size_t i = 0; i < phi.size(); ++i) EXPECT_NEAR(attr[i], phi[i], 1e-10);
}

// ---------------------------------------------------------------------------
// Integrated gradients

// Pooled relative error sum|err| / sum|delta| over a fixed evaluation set; single paths through a
// ReLU network cross kinks at arbitrary offsets, so only the pooled error falls cleanly with S.
TEST(IntegratedGradients, CompletenessOnTrainedToyModel) {
  const auto& net = trained_toy();
  const Tensor zero({2, 32});
  const std::size_t steps[] = {10, 50, 100, 400};
  std::array<double, 4> err{}, mass{};
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Tensor x = random_tensor({2, 32}, 900 + seed, 1.5);
    for (std::size_t target : {0u, 1u}) {
      const double delta = logit_of(net, x, target) - logit_of(net, zero, target);
      for (std::size_t k = 0; k < 4; ++k) {
        err[k] += std::abs(sum(integrated_gradients(net, x, zero, steps[k], target)) - delta);
        mass[k] += std::abs(delta);
      }
    }
  }
  std::array<double, 4> rel{};
  for (std::size_t k = 0; k < 4; ++k) rel[k] = err[k] / mass[k];
  EXPECT_LT(rel[2], 0.01);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_LT(rel[k], rel[k - 1]) << "S=" << steps[k];
}

TEST(IntegratedGradients, ExactOnPiecewiseLinearPathAsStepsGrow) {
  // f = relu(x - 1) from 0 to 3: the right-endpoint sum misses at most one step of width 3/S.
  const HingeProbe hinge;
  const Tensor x({1, 1}, {3.0});
  for (std::size_t s : {10u, 50u, 100u, 400u})
    EXPECT_LE(std::abs(integrated_gradients(hinge, x, Tensor({1, 1}), s, 1)[0] - 2.0), 3.0 / static_cast<double>(s) + 1e-12);
}

TEST(IntegratedGradients, InputEqualToBaselineGivesZero) {
  const auto& net = trained_toy();
  const Tensor x = random_tensor({2, 32}, 7);
  expect_all_zero(integrated_gradients(net, x, x, 20, 1));
}

TEST(IntegratedGradients, ShapeAndStepValidation) {
  const LinearProbe model(random_tensor({2, 4}, 1));
  EXPECT_THROW(integrated_gradients(model, Tensor({2, 4}), Tensor({2, 5}), 10, 1), std::invalid_argument);
  EXPECT_THROW(integrated_gradients(model, Tensor({2, 4}), Tensor({2, 4}), 0, 1), std::invalid_argument);
}

TEST(InputXGradient, ZeroInputAndHingeCounterexample) {
  const auto& net = trained_toy();
  expect_all_zero(input_x_gradient(net, Tensor({2, 32}), 1));
  // f = relu(x - 1) at x = 3: gradient 1 gives IxG = 3, while the path integral from 0 is f(3) - f(0) = 2.
  const HingeProbe hinge;
  const Tensor x({1, 1}, {3.0});
  EXPECT_DOUBLE_EQ(input_x_gradient(hinge, x, 1)[0], 3.0);
  EXPECT_NEAR(integrated_gradients(hinge, x, Tensor({1, 1}), 300, 1)[0], 2.0, 1e-12);
}

// ---------------------------------------------------------------------------
// DeepLIFT / DeepSHAP

TEST(DeepLift, SummationToDeltaOnEveryTestModel) {
  std::vector<InceptionNetwork> models = {trained_toy(), random_toy(41), random_toy(42)};
  std::vector<Tensor> bg;
  for (std::uint64_t s = 0; s < 6; ++s) bg.push_back(random_tensor({2, 32}, 60 + s));
  double worst = 0.0;
  for (const auto& net : models) {
    const Tensor x = random_tensor({2, 32}, 77, 2.0);
    for (std::size_t target : {0u, 1u}) {
      const Tensor rows = deep_lift(net, x, bg, target, 4);
      ASSERT_EQ(rows.shape(), (Shape{6, 2, 32}));
      for (std::size_t k = 0; k < bg.size(); ++k) {
        double total = 0.0;
        for (std::size_t i = 0; i < 64; ++i) total += rows[k * 64 + i];
        worst = std::max(worst, std::abs(total - (logit_of(net, x, target) - logit_of(net, bg[k], target))));
      }
    }
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(DeepLift, BackgroundEqualToInputGivesZero) {
  const auto& net = trained_toy();
  const Tensor x = random_tensor({2, 32}, 8);
  const std::vector<Tensor> bg = {x, x, x};
  expect_all_zero(deep_shap(net, x, bg, 0));
}

TEST(DeepLift, ChunkingDoesNotChangeResult) {
  const auto& net = trained_toy();
  const Tensor x = random_tensor({2, 32}, 9);
  std::vector<Tensor> bg;
  for (std::uint64_t s = 0; s < 5; ++s) bg.push_back(random_tensor({2, 32}, 90 + s));
  expect_close(deep_shap(net, x, bg, 1, 1), deep_shap(net, x, bg, 1, 5), 1e-12);
  EXPECT_THROW(deep_shap(net, x, std::span<const Tensor>{}, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// GradCAM

TEST(GradCam, NonnegativeWithInputLength) {
  const auto& net = trained_toy();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor cam = grad_cam(net, random_tensor({2, 32}, 100 + s), s % 2);
    ASSERT_EQ(cam.shape(), (Shape{1, 32}));
    for (double v : cam.values()) EXPECT_GE(v, 0.0);
  }
}

TEST(GradCam, NegativeHeadWeightsGiveZeroMap) {
  InceptionNetwork net = random_toy(5);
  Tensor& w = net.parameters().at("head.weight");
  for (std::size_t k = 0; k < 8; ++k) w[8 + k] = -std::abs(w[8 + k]) - 0.1;
  expect_all_zero(grad_cam(net, random_tensor({2, 32}, 6), 1));
}

TEST(GradCam, SinglePositiveFeatureGivesScaledActivation) {
  // Only feature 3 reaches the target logit, so alpha_3 = w / T' and the map is w / T' * A_3(t).
  InceptionNetwork net = random_toy(6);
  Tensor& w = net.parameters().at("head.weight");
  for (std::size_t k = 0; k < 8; ++k) w[8 + k] = k == 3 ? 0.8 : 0.0;
  const Tensor x = random_tensor({2, 32}, 7);
  ad::Graph g;
  const auto rec = net.record(g, g.leaf(x.reshaped({1, 2, 32})), InceptionNetwork::Mode::kEval);
  const Tensor& features = g.value(rec.features);
  const Tensor cam = grad_cam(net, x, 1);
  for (std::size_t t = 0; t < 32; ++t) EXPECT_NEAR(cam[t], 0.8 / 32.0 * features[3 * 32 + t], 1e-12);
}

TEST(GradCam, InterpolationKeepsEndpoints) {
  const std::vector<double> v = {0.0, 2.0, 4.0};
  EXPECT_EQ(interpolate_linear(v, 3), v);
  const auto up = interpolate_linear(v, 5);
  EXPECT_EQ(up, (std::vector<double>{0.0, 1.0, 2.0, 3.0, 4.0}));
}

// ---------------------------------------------------------------------------
// Occlusion

TEST(Occlusion, DefaultGridHas15Positions) {
  EXPECT_EQ(occlusion_positions(400, 50, 25), 15u);
  std::vector<int> coverage(400, 0);
  for (std::size_t p = 0; p < 15; ++p)
    for (std::size_t t = 0; t < 50; ++t) ++coverage[p * 25 + t];
  for (int c : coverage) {
    EXPECT_GE(c, 1);
    EXPECT_LE(c, 2);
  }
  EXPECT_THROW(occlusion_positions(40, 50, 25), std::invalid_argument);
}

TEST(Occlusion, LinearLogitWindowsAreExactWindowSums) {
  const LinearProbe model(random_tensor({19, 400}, 11));
  const Tensor x = random_tensor({19, 400}, 12);
  OcclusionParams params;
  params.output = TargetOutput::kLogit;
  const Tensor drops = occlusion_window_drops(model, x, 1, params);
  ASSERT_EQ(drops.shape(), (Shape{19, 15}));
  double worst = 0.0;
  for (std::size_t c = 0; c < 19; ++c)
    for (std::size_t p = 0; p < 15; ++p) {
      double expected = 0.0;
      for (std::size_t t = p * 25; t < p * 25 + 50; ++t) expected += model.weights()[c * 400 + t] * x[c * 400 + t];
      worst = std::max(worst, std::abs(drops[c * 15 + p] - expected));
    }
  EXPECT_LT(worst, 1e-10);

  // The sample map averages the windows covering each sample.
  const Tensor map = occlusion(model, x, 1, params);
  EXPECT_NEAR(map[0], drops[0], 1e-15);
  EXPECT_NEAR(map[30], 0.5 * (drops[0] + drops[1]), 1e-15);
}

TEST(Occlusion, UnusedChannelGetsExactlyZero) {
  Tensor w = random_tensor({3, 100}, 13);
  for (std::size_t t = 0; t < 100; ++t) w[100 + t] = 0.0;
  const LinearProbe model(w);
  OcclusionParams params;
  params.window = 20;
  params.stride = 10;
  const Tensor map = occlusion(model, random_tensor({3, 100}, 14), 1, params);
  for (std::size_t t = 0; t < 100; ++t) EXPECT_EQ(map[100 + t], 0.0);
}

TEST(Occlusion, ProbabilityTargetMatchesDirectEvaluation) {
  const LinearProbe model(random_tensor({2, 100}, 15, 0.1));
  const Tensor x = random_tensor({2, 100}, 16);
  const Tensor drops = occlusion_window_drops(model, x, 0, {});
  Tensor masked = x;
  std::fill(masked.data() + 100 + 25, masked.data() + 100 + 75, 0.0);
  // p_0 = 1 - sigmoid(score).
  const double expected = (1.0 - sigmoid(model.score(x))) - (1.0 - sigmoid(model.score(masked)));
  EXPECT_NEAR(drops[1 * 3 + 1], expected, 1e-14);
}

// ---------------------------------------------------------------------------
// Permutation

TEST(Permutation, IdenticalSegmentsGiveZero) {
  const LinearProbe model(random_tensor({3, 10}, 17));
  const Tensor one = random_tensor({3, 10}, 18);
  const Tensor items[] = {one, one, one, one};
  const std::vector<std::size_t> targets(4, 1);
  const auto r = permutation_importance(model, stack(items), targets, 3);
  for (double v : r.importance) EXPECT_EQ(v, 0.0);
}

TEST(Permutation, UnusedChannelGetsZero) {
  Tensor w = random_tensor({3, 10}, 19);
  for (std::size_t t = 0; t < 10; ++t) w[20 + t] = 0.0;
  const LinearProbe model(w);
  const Tensor batch = random_tensor({6, 3, 10}, 20);
  const std::vector<std::size_t> targets = {0, 1, 0, 1, 1, 0};
  const auto r = permutation_importance(model, batch, targets, 4);
  EXPECT_EQ(r.importance[2], 0.0);
  EXPECT_GT(r.importance[0], 0.0);
}

TEST(Permutation, TwoSegmentSwapMatchesDirectEvaluation) {
  const LinearProbe model(random_tensor({2, 8}, 21, 0.3));
  const Tensor x1 = random_tensor({2, 8}, 22), x2 = random_tensor({2, 8}, 23);
  const Tensor items[] = {x1, x2};
  const std::vector<std::size_t> targets = {1, 1};
  const auto r = permutation_importance(model, stack(items), targets, 5);
  for (std::size_t c = 0; c < 2; ++c) {
    // With two rows the only non-identity permutation swaps them.
    Tensor s1 = x1, s2 = x2;
    std::copy(x2.data() + c * 8, x2.data() + c * 8 + 8, s1.data() + c * 8);
    std::copy(x1.data() + c * 8, x1.data() + c * 8 + 8, s2.data() + c * 8);
    const double d1 = sigmoid(model.score(x1)) - sigmoid(model.score(s1));
    const double d2 = sigmoid(model.score(x2)) - sigmoid(model.score(s2));
    EXPECT_NEAR(r.drops[0 * 2 + c], d1, 1e-14);
    EXPECT_NEAR(r.drops[1 * 2 + c], d2, 1e-14);
    EXPECT_NEAR(r.importance[c], 0.5 * (std::abs(d1) + std::abs(d2)), 1e-14);
  }
  const auto logit = permutation_importance(model, stack(items), targets, 5, TargetOutput::kLogit);
  for (std::size_t c = 0; c < 2; ++c) {
    double diff = 0.0;
    for (std::size_t t = 0; t < 8; ++t) diff += model.weights()[c * 8 + t] * (x1[c * 8 + t] - x2[c * 8 + t]);
    EXPECT_NEAR(logit.importance[c], std::abs(diff), 1e-13);
  }
}

TEST(Permutation, NeverIdentityAndBatchOfOneRejected) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto p = non_identity_permutation(2 + seed % 4, seed);
    bool identity = true;
    for (std::size_t i = 0; i < p.size(); ++i) identity &= p[i] == i;
    EXPECT_FALSE(identity);
  }
  const LinearProbe model(random_tensor({1, 4}, 1));
  const std::vector<std::size_t> targets = {1};
  EXPECT_THROW(permutation_importance(model, random_tensor({1, 1, 4}, 2), targets, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Aggregation

AttributionMap make_map(std::string subject, int fold, Tensor values, Method method = Method::kIntegratedGradients) {
  AttributionMap m;
  m.method = method;
  m.subject_id = std::move(subject);
  m.fold = fold;
  m.values = std::move(values);
  return m;
}

TEST(Aggregate, ConstantMapAndAbsoluteValue) {
  const AttributionMap constant = make_map("a", 0, Tensor({4, 10}, 0.7));
  for (double v : segment_profile(constant).values) EXPECT_NEAR(v, 0.7, 1e-15);
  Tensor v({3, 5});
  for (std::size_t t = 0; t < 5; ++t) v[5 + t] = -2.0;
  EXPECT_EQ(segment_profile(make_map("a", 0, v)).values, (std::vector<double>{0.0, 2.0, 0.0}));
}

TEST(Aggregate, SubjectMeanOfTwoSubjects) {
  const std::vector<AttributionMap> maps = {make_map("a", 0, Tensor({3, 2}, {1, 1, 0, 0, 0, 0})),
                                            make_map("b", 0, Tensor({3, 2}, {0, 0, 1, 1, 0, 0}))};
  EXPECT_EQ(aggregate(maps, ProfileLevel::kSubject).values, (std::vector<double>{0.5, 0.5, 0.0}));
}

TEST(Aggregate, HierarchyWeightsSubjectsThenFolds) {
  // Fold 0: subject a has two segments (1 and 3), subject b one (5) -> subjects 2, 5 -> fold 3.5.
  // Fold 1: one subject at 10. Global = (3.5 + 10) / 2.
  const std::vector<AttributionMap> maps = {
      make_map("a", 0, Tensor({1, 1}, {1.0})), make_map("a", 0, Tensor({1, 1}, {3.0})),
      make_map("b", 0, Tensor({1, 1}, {5.0})), make_map("c", 1, Tensor({1, 1}, {10.0}))};
  EXPECT_DOUBLE_EQ(aggregate(maps, ProfileLevel::kSegment).values[0], 19.0 / 4.0);
  EXPECT_DOUBLE_EQ(aggregate(maps, ProfileLevel::kSubject).values[0], (2.0 + 5.0 + 10.0) / 3.0);
  EXPECT_DOUBLE_EQ(aggregate(maps, ProfileLevel::kGlobal).values[0], 6.75);
  EXPECT_THROW(aggregate(maps, ProfileLevel::kFold), std::invalid_argument);
  const std::span<const AttributionMap> fold0(maps.data(), 3);
  EXPECT_DOUBLE_EQ(aggregate(fold0, ProfileLevel::kFold).values[0], 3.5);
  EXPECT_EQ(aggregate(maps, ProfileLevel::kGlobal).folds, (std::vector<int>{0, 1}));
}

TEST(Aggregate, PermutationInvariantAndScaleEquivariant) {
  std::vector<AttributionMap> maps;
  for (std::size_t i = 0; i < 12; ++i)
    maps.push_back(make_map("s" + std::to_string(i % 4), static_cast<int>(i % 2), random_tensor({5, 6}, 40 + i)));
  const auto base = aggregate(maps, ProfileLevel::kGlobal).values;
  std::vector<AttributionMap> shuffled(maps.rbegin(), maps.rend());
  std::swap(shuffled[1], shuffled[7]);
  const auto perm = aggregate(shuffled, ProfileLevel::kGlobal).values;
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(perm[c], base[c], 1e-14);
  for (auto& m : maps)
    for (double& v : m.values.values()) v *= 2.5;
  const auto scaled = aggregate(maps, ProfileLevel::kGlobal).values;
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(scaled[c], 2.5 * base[c], 1e-13);
  std::vector<std::size_t> r1(5), r2(5);
  std::iota(r1.begin(), r1.end(), 0);
  std::iota(r2.begin(), r2.end(), 0);
  std::stable_sort(r1.begin(), r1.end(), [&](auto a, auto b) { return base[a] > base[b]; });
  std::stable_sort(r2.begin(), r2.end(), [&](auto a, auto b) { return scaled[a] > scaled[b]; });
  EXPECT_EQ(r1, r2);
}

TEST(Aggregate, Errors) {
  const std::vector<AttributionMap> mixed = {make_map("a", 0, Tensor({2, 2})),
                                             make_map("a", 0, Tensor({2, 2}), Method::kOcclusion)};
  EXPECT_THROW(aggregate(mixed, ProfileLevel::kGlobal), std::invalid_argument);
  EXPECT_THROW(segment_profile(make_map("a", 0, Tensor({1, 4}), Method::kGradCam)), std::invalid_argument);
  EXPECT_THROW(aggregate(std::span<const AttributionMap>{}, ProfileLevel::kGlobal), std::invalid_argument);
}

TEST(Aggregate, LabelKeptOnlyWhenShared) {
  std::vector<SegmentProfile> p = {{Method::kOcclusion, 0, "a", ClassLabel::kCase, {1.0}},
                                   {Method::kOcclusion, 0, "b", ClassLabel::kCase, {2.0}}};
  EXPECT_EQ(aggregate(p, ProfileLevel::kGlobal).label, ClassLabel::kCase);
  p[1].label = ClassLabel::kControl;
  EXPECT_FALSE(aggregate(p, ProfileLevel::kGlobal).label.has_value());
  p.push_back({Method::kOcclusion, 3, "c", ClassLabel::kCase, {4.0}});
  const auto folds = fold_profiles(p);
  ASSERT_EQ(folds.size(), 2u);
  EXPECT_DOUBLE_EQ(folds.at(0).values[0], 1.5);
  EXPECT_DOUBLE_EQ(folds.at(3).values[0], 4.0);
}

// ---------------------------------------------------------------------------
// Region x band heatmap

Segment sinusoid_segment(const std::vector<double>& freqs, std::size_t channels = 19) {
  Segment s;
  s.subject_id = "h";
  s.window = Tensor({channels, 400});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < 400; ++t)
      for (double f : freqs) s.window[c * 400 + t] += std::sin(2.0 * M_PI * f * static_cast<double>(t) / 200.0 + 0.3 * c);
  return s;
}

double column_share(const RegionBandHeatmap& h, std::size_t band) {
  double col = 0.0, total = 0.0;
  for (const auto& row : h.values)
    for (std::size_t b = 0; b < row.size(); ++b) {
      total += row[b];
      if (b == band) col += row[b];
    }
  return col / total;
}

TEST(Heatmap, TenHertzConcentratesInAlpha) {
  const std::vector<Segment> segs = {sinusoid_segment({10.0})};
  const std::vector<AttributionMap> maps = {make_map("h", 0, Tensor({19, 400}, 1.0))};
  const auto bands = default_bands();
  const auto h = band_region_heatmap(maps, segs, bands, default_regions());
  ASSERT_EQ(h.values.size(), 5u);
  ASSERT_EQ(h.values[0].size(), 5u);
  EXPECT_GE(column_share(h, 2), 0.9);
}

TEST(Heatmap, EqualPowerPerBandGivesNearUniformColumns) {
  // One unit sinusoid at each band centre carries equal power in every band.
  const std::vector<Segment> segs = {sinusoid_segment({2.25, 6.0, 10.5, 21.5, 35.0})};
  const std::vector<AttributionMap> maps = {make_map("h", 0, Tensor({19, 400}, 1.0))};
  const auto bands = default_bands();
  const auto h = band_region_heatmap(maps, segs, bands, default_regions());
  for (std::size_t b = 0; b < 5; ++b) EXPECT_NEAR(column_share(h, b), 0.2, 0.04) << bands[b].name;
}

TEST(Heatmap, FractionsSumToOneAndZeroMapGivesZero) {
  const Segment seg = sinusoid_segment({3.0, 17.0}, 2);
  const auto bands = default_bands();
  const auto fr = band_envelope_fractions(seg.window, bands, 200.0);
  for (std::size_t i = 0; i < seg.window.size(); ++i) {
    double s = 0.0;
    for (const auto& f : fr) {
      EXPECT_GE(f[i], 0.0);
      s += f[i];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const std::vector<Segment> segs = {sinusoid_segment({10.0})};
  const std::vector<AttributionMap> maps = {make_map("h", 0, Tensor({19, 400}))};
  for (const auto& row : band_region_heatmap(maps, segs, bands, default_regions()).values)
    for (double v : row) EXPECT_EQ(v, 0.0);
}

TEST(Heatmap, InvalidBandsRejected) {
  const Segment seg = sinusoid_segment({10.0}, 1);
  const std::vector<Band> bad = {{"x", 0.0, 4.0}};
  EXPECT_THROW(band_envelope_fractions(seg.window, bad, 200.0), ConfigError);
  const std::vector<Band> high = {{"x", 50.0, 120.0}};
  EXPECT_THROW(band_envelope_fractions(seg.window, high, 200.0), ConfigError);
}

// ---------------------------------------------------------------------------
// Baselines

TEST(Baseline, Descriptors) {
  EXPECT_EQ(BaselineSpec::zero().descriptor(), "zero");
  EXPECT_EQ(BaselineSpec::gaussian({0.0}, {1.0}, 42).descriptor(), "gaussian:42");
  const std::vector<Tensor> bg = {Tensor({1, 2}, {1.0, 2.0})};
  const auto d = BaselineSpec::background_set(bg).descriptor();
  EXPECT_EQ(d.rfind("background:1:", 0), 0u);
  EXPECT_EQ(d, BaselineSpec::background_set(bg).descriptor());
  EXPECT_NE(d, BaselineSpec::background_set({Tensor({1, 2}, {1.0, 2.5})}).descriptor());
  EXPECT_THROW(BaselineSpec::background_set({}), ConfigError);
}

TEST(Baseline, GaussianUsesTrainingStatistics) {
  std::vector<Segment> train(2);
  train[0].window = Tensor({2, 2}, {0.0, 2.0, 10.0, 10.0});
  train[1].window = Tensor({2, 2}, {0.0, 2.0, 10.0, 10.0});
  const BaselineSpec g = gaussian_baseline_from(train, 7);
  EXPECT_EQ(g.mean, (std::vector<double>{1.0, 10.0}));
  EXPECT_EQ(g.std, (std::vector<double>{1.0, 0.0}));
  const Tensor a = g.materialize({2, 1000}, 3);
  EXPECT_EQ(a, g.materialize({2, 1000}, 3));
  EXPECT_NE(a, g.materialize({2, 1000}, 4));
  double mean = 0.0;
  for (std::size_t t = 0; t < 1000; ++t) mean += a[t] / 1000.0;
  EXPECT_NEAR(mean, 1.0, 0.15);
  for (std::size_t t = 0; t < 1000; ++t) EXPECT_EQ(a[1000 + t], 10.0);
}

TEST(BaselineStability, Examples) {
  const std::vector<double> p = {0.9, 0.1, 0.5, 0.3, 0.7, 0.2};
  std::map<int, std::vector<double>> zero, gauss;
  for (int f = 0; f < 5; ++f) zero[f] = gauss[f] = p;
  const auto same = ig_baseline_stability(zero, gauss);
  ASSERT_EQ(same.size(), 5u);
  std::size_t jaccards = 0;
  for (const auto& s : same) {
    EXPECT_EQ(s.tau, 1.0);
    for (double j : s.jaccard) {
      EXPECT_EQ(j, 1.0);
      ++jaccards;
    }
  }
  EXPECT_EQ(jaccards, 15u);
  // Top-3 {0,4,2} vs {0,4,3}: two shared of four distinct.
  gauss[2] = {0.9, 0.1, 0.3, 0.5, 0.7, 0.2};
  EXPECT_DOUBLE_EQ(ig_baseline_stability(zero, gauss)[2].jaccard[1], 0.5);
  gauss.erase(4);
  EXPECT_THROW(ig_baseline_stability(zero, gauss), DataError);
}

// ---------------------------------------------------------------------------
// Serialization

TEST(Serialization, AttributionMapRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "tsxai_attr_io";
  std::filesystem::create_directories(dir);
  AttributionMap m = make_map("sub-001", 2, random_tensor({3, 7}, 50), Method::kDeepShap);
  m.segment_id = "sub-001/4";
  m.label = ClassLabel::kCase;
  m.target = 1;
  m.baseline = "background:40:abc";
  write_attribution_map(m, dir / "map");
  const AttributionMap back = read_attribution_map(dir / "map.json");
  EXPECT_EQ(back.method, m.method);
  EXPECT_EQ(back.segment_id, m.segment_id);
  EXPECT_EQ(back.fold, 2);
  EXPECT_EQ(back.subject_id, "sub-001");
  EXPECT_EQ(back.label, ClassLabel::kCase);
  EXPECT_EQ(back.target, 1u);
  EXPECT_EQ(back.baseline, m.baseline);
  EXPECT_EQ(back.values, m.values);
  std::filesystem::remove(dir / "map.bin");
  EXPECT_THROW(read_attribution_map(dir / "map.json"), DataError);
  std::filesystem::remove_all(dir);
}

TEST(Serialization, ChannelProfileRoundTrip) {
  ChannelProfile p;
  p.level = ProfileLevel::kFold;
  p.method = Method::kPermutation;
  p.label = ClassLabel::kControl;
  p.folds = {3};
  p.values = {0.125, 1e-17, 3.0};
  const auto text = channel_profile_json(p, {"Fz", "Cz", "Pz"});
  const ChannelProfile back = parse_channel_profile_json(text);
  EXPECT_EQ(back.level, p.level);
  EXPECT_EQ(back.method, p.method);
  EXPECT_EQ(back.label, p.label);
  EXPECT_EQ(back.folds, p.folds);
  EXPECT_EQ(back.values, p.values);
  EXPECT_THROW(channel_profile_json(p, {"Fz"}), std::invalid_argument);
}

TEST(Serialization, MethodNames) {
  for (Method m : all_methods()) EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_EQ(all_methods().size(), 6u);
  EXPECT_THROW(parse_method("lime"), ConfigError);
}

}  // namespace
}  // namespace tsxai
