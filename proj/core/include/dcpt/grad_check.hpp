#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dcpt/random.hpp"
#include "dcpt/tensor.hpp"

namespace dcpt {

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

/// Compares the tape gradient of a scalar function at `x` with central
/// differences (f(x + h e_i) - f(x - h e_i)) / 2h on every coordinate.
/// Returns max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
/// Throws TapeError when f does not produce a scalar.
double grad_check(const ScalarFn& f, const Tensor<double>& x, double h = 1e-5);

/// Same comparison for a closure over model parameters. `coordinates`
/// positions are sampled uniformly across all parameters; each one is
/// perturbed in place and restored. Gradients on `params` are cleared first.
double grad_check_parameters(const std::function<Tensor<double>()>& loss,
                             std::vector<Tensor<double>> params, std::size_t coordinates,
                             RandomSource& rng, double h = 1e-5);

}  // namespace dcpt
