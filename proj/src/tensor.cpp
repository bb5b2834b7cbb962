#include "tsxai/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace tsxai {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_size(shape_) != data_.size()) {
    throw std::invalid_argument("tensor: shape " + shape_string(shape_) + " does not hold " +
                                std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw std::out_of_range("tensor: axis out of range");
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) throw std::invalid_argument("tensor: item() on non-scalar " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw std::invalid_argument("stack: no tensors");
  Shape shape = items.front().shape();
  const std::size_t item_size = items.front().size();
  std::vector<double> values;
  values.reserve(item_size * items.size());
  for (const Tensor& t : items) {
    if (t.shape() != shape) {
      throw std::invalid_argument("stack: shape " + shape_string(t.shape()) + " != " + shape_string(shape));
    }
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  shape.insert(shape.begin(), items.size());
  return Tensor(std::move(shape), std::move(values));
}

Tensor unstack(const Tensor& batch, std::size_t index) {
  if (batch.rank() == 0 || index >= batch.dim(0)) throw std::out_of_range("unstack: index out of range");
  Shape shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = shape_size(shape);
  auto first = batch.values().begin() + static_cast<std::ptrdiff_t>(index * n);
  return Tensor(std::move(shape), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw std::invalid_argument("softmax_rows: expected [B, K]");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data() + r * cols;
    double* p = out.data() + r * cols;
    const double peak = *std::max_element(z, z + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (p[c] = std::exp(z[c] - peak));
    for (std::size_t c = 0; c < cols; ++c) p[c] /= total;
  }
  return out;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace tsxai
