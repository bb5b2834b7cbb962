#include "tsxai/classifier.hpp"

#include <algorithm>
#include <stdexcept>

namespace tsxai {

Tensor evaluate_logits(const Classifier& model, const Tensor& batch, std::size_t chunk) {
  if (batch.rank() != 3) throw std::invalid_argument("evaluate_logits: expected [B, C, T]");
  const std::size_t B = batch.dim(0), K = model.num_classes();
  const std::size_t row = batch.dim(1) * batch.dim(2);
  chunk = std::max<std::size_t>(chunk, 1);
  Tensor out({B, K});
  for (std::size_t start = 0; start < B; start += chunk) {
    const std::size_t n = std::min(chunk, B - start);
    const auto first = batch.values().begin() + static_cast<std::ptrdiff_t>(start * row);
    Tensor part({n, batch.dim(1), batch.dim(2)}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n * row)));
    ad::Graph g;
    const auto outputs = model.record(g, g.leaf(std::move(part)));
    const Tensor& logits = g.value(outputs.logits);
    std::copy(logits.values().begin(), logits.values().end(), out.data() + start * K);
  }
  return out;
}

Tensor evaluate_probabilities(const Classifier& model, const Tensor& batch, std::size_t chunk) {
  return softmax_rows(evaluate_logits(model, batch, chunk));
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax: empty input");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace tsxai
