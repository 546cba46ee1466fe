#pragma once

#include <cstdint>
#include <vector>

namespace betamix {

/// Gauss-Hermite rule for weight exp(-x^2), nodes ascending.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> log_weights;
};

/// n-point rule computed by Newton iteration on the orthonormal recurrence.
GaussHermiteRule gauss_hermite(int n);

/// Radical-inverse (van der Corput) of index in the given prime base.
double radical_inverse(std::uint64_t index, unsigned base);

/// Point `index` (>= 1) of the Halton sequence in `dim` dimensions, dim <= 16.
std::vector<double> halton_point(std::uint64_t index, int dim);

/// Standard normal quantile.
double normal_quantile(double p);

}  // namespace betamix
