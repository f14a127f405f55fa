#pragma once

// Reference stochastic simulators: an analytic shifted-lognormal toy, the
// Heston stochastic volatility model, and a stochastic SIR epidemic. Plus
// Latin hypercube designs and replication runners.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "glamsa/pce.hpp"
#include "glamsa/random.hpp"

namespace glamsa::sim {

// ---------------------------------------------------------------- toy

/// X1, X2 ~ U(0, 2pi), X3 ~ U(0.25, 0.75).
pce::InputModel toy_input();

/// sin(x1) + 7 sin^2(x2) + exp(x1/pi + x3 Z), one Z per call.
double toy_eval(std::span<const double> x, Rng& rng);
double toy_quantile(double u, std::span<const double> x);
/// Differential entropy of the (shifted) lognormal response.
double toy_entropy(std::span<const double> x);
double toy_mean(std::span<const double> x);
double toy_variance(std::span<const double> x);

// ---------------------------------------------------------------- Heston

struct HestonConfig {
  double dt = 0.001;
  double horizon = 1.0;
  double y0 = 1.0;
  double strike = 1.0;
};

/// (mu, kappa, theta, sigma, rho, v0).
pce::InputModel heston_input();

/// Y at the horizon, Euler scheme with full truncation of the variance.
double heston_eval(std::span<const double> x, const HestonConfig& cfg, Rng& rng);
/// max(0, Y_T - K).
double heston_payoff(std::span<const double> x, const HestonConfig& cfg, double strike, Rng& rng);
/// E[Y_T] = y0 exp(mu T).
double heston_mean(std::span<const double> x, const HestonConfig& cfg);

// ---------------------------------------------------------------- SIR

struct SirConfig {
  int population = 2000;
};

/// (E0, I0, beta, gamma); the E0 and I0 ranges scale with population / 2000.
pce::InputModel sir_input(const SirConfig& cfg = {});

struct SirOutcome {
  long infections = 0;  // E0 - E_T
  long events = 0;
  double duration = 0.0;
  bool conserved = true;  // E + I + R == P after every event
};

/// One Gillespie run; E0 and I0 are rounded to integers.
SirOutcome sir_run(std::span<const double> x, const SirConfig& cfg, Rng& rng);
double sir_eval(std::span<const double> x, const SirConfig& cfg, Rng& rng);

// ---------------------------------------------------------------- designs

/// Latin hypercube sample mapped through the marginal inverse cdfs.
Eigen::MatrixXd lhs(std::size_t n, const pce::InputModel& input, Rng& rng);

struct Simulator {
  std::string name;
  pce::InputModel input;
  std::function<double(std::span<const double>, Rng&)> eval;
};

Simulator toy_simulator();
Simulator heston_simulator(const HestonConfig& cfg = {});
Simulator sir_simulator(const SirConfig& cfg = {});

/// One run per design row; row i uses the substream (seed, i, 0).
Eigen::VectorXd run_design(const Simulator& sim, const Eigen::MatrixXd& X, std::uint64_t seed);

/// R runs at a fixed x; replication r uses the substream (seed, row, r).
std::vector<double> replicate(const Simulator& sim, std::span<const double> x, std::size_t R, std::uint64_t seed,
                              std::uint64_t row = 0);
/// Same, with the seed drawn from `rng`.
std::vector<double> replicate(const Simulator& sim, std::span<const double> x, std::size_t R, Rng& rng);

/// Sample statistics used for replication-based references.
double sample_mean(std::span<const double> v);
double sample_std(std::span<const double> v);
/// Mean of the values at or above the empirical alpha-quantile (sorted-tail definition).
double sample_superquantile(std::vector<double> v, double alpha);

}  // namespace glamsa::sim
