#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sad {

double mean(std::span<const double> x);
/// Unbiased sample variance (n - 1 denominator); 0 for n < 2.
double sample_variance(std::span<const double> x);

/// Average ranks (ties share the mean rank), 1-based.
std::vector<double> ranks(std::span<const double> x);
/// Spearman rank correlation: Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);
double pearson(std::span<const double> x, std::span<const double> y);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
/// Ordinary least squares y = slope * x + intercept.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// Streaming mean and sum of squared deviations (Welford), mergeable with
/// Chan's pairwise formula.
struct RunningMoments {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept {
    count += 1.0;
    const double delta = x - mean;
    mean += delta / count;
    m2 += delta * (x - mean);
  }
  void merge(const RunningMoments& o) noexcept {
    if (o.count == 0.0) return;
    const double n = count + o.count;
    const double delta = o.mean - mean;
    mean += delta * o.count / n;
    m2 += o.m2 + delta * delta * count * o.count / n;
    count = n;
  }
  double variance() const noexcept { return count > 1.0 ? m2 / (count - 1.0) : 0.0; }
};

}  // namespace sad
