#pragma once

#include <functional>

#include "tsxai/tensor.hpp"

namespace tsxai::ad {

using ScalarFunction = std::function<double(const Tensor&)>;

/// Central-difference estimate (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate of x.
/// Throws std::invalid_argument for h <= 0 and NumericError when f returns a non-finite value.
Tensor finite_difference_gradient(const ScalarFunction& f, const Tensor& x, double h = 1e-4);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace tsxai::ad
