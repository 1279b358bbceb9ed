#pragma once

#include <span>
#include <vector>

namespace wirefield {

/// 0-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation; NaN when either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> values);

/// y = a · x^b fitted by least squares in log-log space; r² is also measured
/// there. Points with non-positive x or y are skipped.
struct PowerFit {
  double a = 0.0;
  double b = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};
PowerFit fit_power_law(std::span<const double> x, std::span<const double> y);

struct WindowStat {
  double center = 0.0;
  std::size_t count = 0;
  double variance = 0.0;  // unbiased sample variance of y in the window
};

/// Sliding windows of width `width` over x, advanced by `stride`, starting at
/// min(x). Windows with fewer than `min_count` points are dropped.
std::vector<WindowStat> windowed_variance(std::span<const double> x, std::span<const double> y,
                                          double width, double stride,
                                          std::size_t min_count = 3);

}  // namespace wirefield
