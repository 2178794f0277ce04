#include "lbsim/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace lbsim {

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

double student_t_quantile(double p, double dof) {
  return boost::math::quantile(boost::math::students_t(dof), p);
}

double chi_squared_quantile(double p, double dof) {
  return boost::math::quantile(boost::math::chi_squared(dof), p);
}

void RunningStats::add(double x) {
  ++n_;
  double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

double RunningStats::variance() const { return n_ < 2 ? 0.0 : m2_ / static_cast<double>(n_ - 1); }

double BatchEstimate::upper_bound(double level) const {
  if (batches < 2) return mean;
  return mean + student_t_quantile(level, static_cast<double>(batches - 1)) * std_error;
}

double BatchEstimate::lower_bound(double level) const {
  if (batches < 2) return mean;
  return mean - student_t_quantile(level, static_cast<double>(batches - 1)) * std_error;
}

BatchEstimate batch_means(std::span<const double> xs, std::size_t batches, double confidence) {
  BatchEstimate est;
  est.confidence = confidence;
  est.samples = xs.size();
  est.batches = batches;
  if (batches < 10) {
    est.reason = "fewer than 10 batches requested";
    return est;
  }
  if (xs.size() < batches) {
    est.reason = "fewer samples than batches";
    return est;
  }
  std::size_t per = xs.size() / batches;
  std::size_t skip = xs.size() - per * batches;
  RunningStats across;
  double total = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < per; ++i) sum += xs[skip + b * per + i];
    total += sum;
    across.add(sum / static_cast<double>(per));
  }
  est.mean = total / static_cast<double>(per * batches);
  est.std_error = std::sqrt(across.variance() / static_cast<double>(batches));
  est.half_width =
      student_t_quantile(0.5 + confidence / 2.0, static_cast<double>(batches - 1)) * est.std_error;
  est.conclusive = true;
  return est;
}

Proportion wilson_interval(std::uint64_t successes, std::uint64_t trials, double confidence) {
  Proportion p;
  if (trials == 0) return p;
  double n = static_cast<double>(trials);
  double phat = static_cast<double>(successes) / n;
  double z = normal_quantile(0.5 + confidence / 2.0);
  double denom = 1.0 + z * z / n;
  double centre = (phat + z * z / (2.0 * n)) / denom;
  double half = z * std::sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom;
  p.estimate = phat;
  p.low = std::max(0.0, centre - half);
  p.high = std::min(1.0, centre + half);
  return p;
}

}  // namespace lbsim
