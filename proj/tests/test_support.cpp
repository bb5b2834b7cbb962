#include "test_support.hpp"

namespace tsxai::testing {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(shape);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

Tensor away_from_zero(const Shape& shape, std::uint64_t seed, double margin, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(margin, margin + scale);
  std::bernoulli_distribution sign(0.5);
  Tensor t(shape);
  for (double& v : t.values()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

InceptionConfig tiny_config(std::size_t depth, std::size_t channels, std::size_t length) {
  InceptionConfig c;
  c.depth = depth;
  c.filters = 2;
  c.bottleneck_channels = 2;
  c.kernel_lengths = {7, 5, 3};
  c.input_channels = channels;
  c.input_length = length;
  return c;
}

void perturb_running_stats(InceptionNetwork& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mean(-0.3, 0.3), var(0.5, 2.0);
  for (auto& e : net.parameters().entries()) {
    if (e.name.ends_with(".running_mean"))
      for (double& v : e.value.values()) v = mean(rng);
    if (e.name.ends_with(".running_var"))
      for (double& v : e.value.values()) v = var(rng);
  }
}

}  // namespace tsxai::testing
