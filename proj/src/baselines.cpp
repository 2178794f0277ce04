#include "lbsim/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "lbsim/types.hpp"

namespace lbsim {

namespace {

void require_stable(double load) {
  if (!(load > 0.0 && load < 1.0)) throw ConfigError(fmt::format("load {} not in (0,1)", load));
}

}  // namespace

double mm1_wait(double load) {
  require_stable(load);
  return load / (1.0 - load);
}

double erlang_c(std::size_t servers, double offered) {
  if (servers == 0) throw ConfigError("need at least one server");
  const double n = static_cast<double>(servers);
  if (!(offered > 0.0 && offered < n)) throw ConfigError("offered load must be in (0, n)");
  double b = 1.0;
  for (std::size_t k = 1; k <= servers; ++k) b = offered * b / (static_cast<double>(k) + offered * b);
  return n * b / (n - offered * (1.0 - b));
}

double mmn_wait(std::size_t servers, double load) {
  require_stable(load);
  const double a = load * static_cast<double>(servers);
  return erlang_c(servers, a) / (static_cast<double>(servers) - a);
}

double sqd_tail(double load, unsigned d, unsigned i) {
  if (!(load > 0.0 && load < 1.0)) throw ConfigError("load must be in (0,1)");
  if (d == 0) throw ConfigError("d must be at least 1");
  if (d == 1) return std::pow(load, static_cast<double>(i));
  double exponent = 0.0, term = 1.0;
  for (unsigned k = 0; k < i; ++k, term *= d) exponent += term;
  return std::pow(load, exponent);
}

double sqd_wait(double load, unsigned d) {
  double queue = 0.0;
  for (unsigned i = 1; i < 4096; ++i) {
    double s = sqd_tail(load, d, i);
    queue += s;
    if (s < 1e-17) break;
  }
  return queue / load - 1.0;
}

double dm1_sigma(double load) {
  require_stable(load);
  constexpr double kDamping = 0.5;
  double sigma = 0.0;
  for (int it = 0; it < 1000000; ++it) {
    double next = (1.0 - kDamping) * sigma + kDamping * std::exp(-(1.0 - sigma) / load);
    if (std::abs(next - sigma) < 1e-15) return next;
    sigma = next;
  }
  throw std::runtime_error(fmt::format("D/M/1 fixed point did not converge at load {}", load));
}

double dm1_wait(double load) {
  double sigma = dm1_sigma(load);
  return sigma / (1.0 - sigma);
}

BaselineResult mm1_baseline(double load) {
  BaselineResult r{"M/M/1", fmt::format("lambda={}", load), mm1_wait(load), {}};
  for (unsigned i = 0; i <= 16; ++i) r.tails.push_back(std::pow(load, static_cast<double>(i)));
  return r;
}

BaselineResult mmn_baseline(std::size_t servers, double load) {
  return {"M/M/n", fmt::format("n={};lambda={}", servers, load), mmn_wait(servers, load), {}};
}

BaselineResult sqd_baseline(double load, unsigned d, unsigned depth) {
  BaselineResult r{"SQ(d) mean field", fmt::format("lambda={};d={}", load, d), sqd_wait(load, d), {}};
  for (unsigned i = 0; i <= depth; ++i) r.tails.push_back(sqd_tail(load, d, i));
  return r;
}

BaselineResult dm1_baseline(double load) {
  return {"D/M/1", fmt::format("lambda={}", load), dm1_wait(load), {}};
}

}  // namespace lbsim
