// SPDX-License-Identifier: Apache-2.0
#pragma once

// Gaussian kernel density estimate on [0, 1] with Silverman's bandwidth
//   h = 0.9 * min(sd, IQR / 1.34) * n^(-1/5)
// If min(sd, IQR / 1.34) is 0 but sd is not, sd is used alone. The result is
// floored at 1e-3 so all-equal samples still give a finite curve.

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace atkd {

inline constexpr double kBandwidthFloor = 1e-3;

struct Bandwidth {
  double value = 0.0;
  bool floored = false;
};

/// InvalidInput for fewer than 2 samples or non-finite samples.
Bandwidth silverman_bandwidth(std::span<const double> samples);

/// Linear-interpolation quantile of sorted data, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

double kde_density(std::span<const double> samples, double bandwidth, double x);

struct KdeCurve {
  std::size_t samples = 0;
  Bandwidth bandwidth;
  std::vector<double> x;        // uniform grid over [0, 1]
  std::vector<double> density;
};

/// InvalidInput if grid_points < 16 or the sample is unusable.
KdeCurve kde_curve(std::span<const double> samples, std::size_t grid_points);

/// Trapezoidal integral of the curve over its grid.
double trapezoid_mass(const KdeCurve& curve);

/// CSV `x,density` with comment lines recording sample size and bandwidth
/// (and the floor, when it was applied).
void kde_emit(std::span<const double> samples, std::size_t grid_points,
              const std::filesystem::path& path);

}  // namespace atkd
