#pragma once

#include <string>
#include <vector>

namespace lbsim {

/// Analytic waiting-time reference for one queueing model.
struct BaselineResult {
  std::string model;
  std::string parameters;
  double mean_wait = 0.0;
  /// tails[i] = P(queue length >= i), when the model provides it.
  std::vector<double> tails;
};

/// M/M/1 mean queueing delay lambda/(1-lambda), unit service rate.
double mm1_wait(double load);

/// M/M/n mean queueing delay with per-server load lambda (offered load lambda*n),
/// via Erlang C obtained from the Erlang B recursion.
double mmn_wait(std::size_t servers, double load);

/// Erlang C probability of waiting for n servers and offered load a < n.
double erlang_c(std::size_t servers, double offered);

/// Mean-field fraction of queues with at least i jobs under SQ(d):
/// lambda^((d^i - 1)/(d - 1)), or lambda^i when d == 1.
double sqd_tail(double load, unsigned d, unsigned i);

/// Mean-field SQ(d) queueing delay from the tail sums (Little's law).
double sqd_wait(double load, unsigned d);

/// Root sigma in (0,1) of sigma = exp(-(1 - sigma)/lambda), the D/M/1 geometric parameter.
double dm1_sigma(double load);

/// D/M/1 mean queueing delay sigma/(1 - sigma).
double dm1_wait(double load);

BaselineResult mm1_baseline(double load);
BaselineResult mmn_baseline(std::size_t servers, double load);
BaselineResult sqd_baseline(double load, unsigned d, unsigned depth = 16);
BaselineResult dm1_baseline(double load);

}  // namespace lbsim
