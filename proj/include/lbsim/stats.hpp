#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace lbsim {

double normal_quantile(double p);
double student_t_quantile(double p, double dof);
double chi_squared_quantile(double p, double dof);

/// Welford accumulator.
class RunningStats {
 public:
  void add(double x);
  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Unbiased sample variance (0 with fewer than two samples).
  double variance() const;

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Mean of a correlated series with a batch-means Student-t interval.
struct BatchEstimate {
  bool conclusive = false;
  std::string reason;  // why not, when inconclusive
  double mean = 0.0;
  double half_width = 0.0;  // two-sided, at `confidence`
  double std_error = 0.0;
  std::size_t batches = 0;
  std::size_t samples = 0;
  double confidence = 0.95;

  double low() const { return mean - half_width; }
  double high() const { return mean + half_width; }
  /// One-sided bounds at level `level` (e.g. 0.99).
  double upper_bound(double level) const;
  double lower_bound(double level) const;
};

/// Splits `xs` into `batches` contiguous batches of equal size (dropping the
/// remainder at the front) and builds a t interval from the batch means.
/// Needs at least 10 batches and one sample per batch, else inconclusive.
BatchEstimate batch_means(std::span<const double> xs, std::size_t batches,
                          double confidence = 0.95);

/// Wilson score interval for a binomial proportion.
struct Proportion {
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
};
Proportion wilson_interval(std::uint64_t successes, std::uint64_t trials, double confidence);

}  // namespace lbsim
