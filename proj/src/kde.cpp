// SPDX-License-Identifier: Apache-2.0
#include "atkd/kde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "atkd/csv.hpp"
#include "atkd/error.hpp"

namespace atkd {

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidInput("quantile of an empty sample");
  const double pos = q * double(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - double(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Bandwidth silverman_bandwidth(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw InvalidInput("KDE needs at least 2 samples, got " + std::to_string(n));
  for (double s : samples)
    if (!std::isfinite(s)) throw InvalidInput("non-finite KDE sample");

  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / double(n);
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / double(n - 1));

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);

  double spread = std::min(sd, iqr / 1.34);
  if (spread <= 0.0) spread = sd;
  Bandwidth bw{0.9 * spread * std::pow(double(n), -0.2), false};
  if (!(bw.value >= kBandwidthFloor)) bw = {kBandwidthFloor, true};
  return bw;
}

double kde_density(std::span<const double> samples, double h, double x) {
  const double norm = 1.0 / (double(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  double sum = 0.0;
  for (double s : samples) {
    const double u = (x - s) / h;
    sum += std::exp(-0.5 * u * u);
  }
  return sum * norm;
}

KdeCurve kde_curve(std::span<const double> samples, std::size_t grid_points) {
  if (grid_points < 16) {
    throw InvalidInput("KDE grid needs at least 16 points, got " + std::to_string(grid_points));
  }
  KdeCurve c;
  c.samples = samples.size();
  c.bandwidth = silverman_bandwidth(samples);
  c.x.resize(grid_points);
  c.density.resize(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    c.x[i] = double(i) / double(grid_points - 1);
    c.density[i] = kde_density(samples, c.bandwidth.value, c.x[i]);
  }
  return c;
}

double trapezoid_mass(const KdeCurve& c) {
  double mass = 0.0;
  for (std::size_t i = 1; i < c.x.size(); ++i)
    mass += 0.5 * (c.density[i] + c.density[i - 1]) * (c.x[i] - c.x[i - 1]);
  return mass;
}

void kde_emit(std::span<const double> samples, std::size_t grid_points,
              const std::filesystem::path& path) {
  const KdeCurve c = kde_curve(samples, grid_points);
  CsvWriter csv({"x", "density"});
  csv.comment(" samples=" + std::to_string(c.samples));
  csv.comment(" bandwidth=" + format_double(c.bandwidth.value));
  if (c.bandwidth.floored) csv.comment(" bandwidth floored to " + format_double(kBandwidthFloor));
  for (std::size_t i = 0; i < c.x.size(); ++i)
    csv.row({format_double(c.x[i]), format_double(c.density[i])});
  csv.save(path);
}

}  // namespace atkd
