#pragma once

#include <span>

namespace apemkit {

/// Linear-interpolated quantile of already sorted values (numpy's default).
double quantile_sorted(std::span<const double> sorted, double q);

double mean_of(std::span<const double> values);

}  // namespace apemkit
