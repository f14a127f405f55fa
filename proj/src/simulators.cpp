#include "glamsa/simulators.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>
#include <numeric>

#include "glamsa/errors.hpp"

namespace glamsa::sim {

namespace {

constexpr double kPi = std::numbers::pi;

void require_dim(std::span<const double> x, std::size_t m, const char* what) {
  if (x.size() != m) throw DomainError(std::string(what) + " expects " + std::to_string(m) + " inputs");
}

}  // namespace

// ---------------------------------------------------------------- toy

pce::InputModel toy_input() {
  return {{pce::Marginal::uniform(0, 2 * kPi), pce::Marginal::uniform(0, 2 * kPi), pce::Marginal::uniform(0.25, 0.75)}};
}

namespace {

double toy_shift(std::span<const double> x) {
  const double s = std::sin(x[1]);
  return std::sin(x[0]) + 7.0 * s * s;
}

void check_toy(std::span<const double> x) { toy_input().check_domain(x); }

}  // namespace

double toy_eval(std::span<const double> x, Rng& rng) {
  check_toy(x);
  return toy_shift(x) + std::exp(x[0] / kPi + x[2] * rng.normal());
}

double toy_quantile(double u, std::span<const double> x) {
  check_toy(x);
  if (!(u > 0.0 && u < 1.0)) throw DomainError("toy quantile level must lie in (0,1)");
  static const boost::math::normal_distribution<double> standard;
  return toy_shift(x) + std::exp(x[0] / kPi + x[2] * boost::math::quantile(standard, u));
}

double toy_entropy(std::span<const double> x) {
  check_toy(x);
  return x[0] / kPi + 0.5 + std::log(x[2] * std::sqrt(2.0 * kPi));
}

double toy_mean(std::span<const double> x) {
  check_toy(x);
  return toy_shift(x) + std::exp(x[0] / kPi + 0.5 * x[2] * x[2]);
}

double toy_variance(std::span<const double> x) {
  check_toy(x);
  const double s2 = x[2] * x[2];
  return std::expm1(s2) * std::exp(2.0 * x[0] / kPi + s2);
}

// ---------------------------------------------------------------- Heston

pce::InputModel heston_input() {
  using pce::Marginal;
  return {{Marginal::uniform(0, 0.1), Marginal::uniform(0.3, 2), Marginal::uniform(0.02, 0.07),
           Marginal::uniform(0.2, 0.4), Marginal::uniform(-1, -0.5), Marginal::uniform(0.02, 0.07)}};
}

double heston_eval(std::span<const double> x, const HestonConfig& cfg, Rng& rng) {
  require_dim(x, 6, "Heston model");
  if (!(cfg.dt > 0.0) || !(cfg.horizon > 0.0)) throw DomainError("Heston time step and horizon must be positive");
  const double mu = x[0], kappa = x[1], theta = x[2], sigma = x[3], rho = x[4];
  const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const auto steps = static_cast<long>(std::llround(cfg.horizon / cfg.dt));
  const double dt = cfg.horizon / static_cast<double>(steps);
  const double sdt = std::sqrt(dt);
  double y = cfg.y0;
  double v = x[5];
  for (long k = 0; k < steps; ++k) {
    const double z1 = rng.normal();
    const double z2 = rho * z1 + rho_c * rng.normal();
    const double vp = std::max(v, 0.0);
    const double sv = std::sqrt(vp);
    y += mu * y * dt + sv * y * sdt * z1;
    v += kappa * (theta - vp) * dt + sigma * sv * sdt * z2;
  }
  return y;
}

double heston_payoff(std::span<const double> x, const HestonConfig& cfg, double strike, Rng& rng) {
  return std::max(0.0, heston_eval(x, cfg, rng) - strike);
}

double heston_mean(std::span<const double> x, const HestonConfig& cfg) {
  require_dim(x, 6, "Heston model");
  return cfg.y0 * std::exp(x[0] * cfg.horizon);
}

// ---------------------------------------------------------------- SIR

pce::InputModel sir_input(const SirConfig& cfg) {
  using pce::Marginal;
  const double s = cfg.population / 2000.0;
  return {{Marginal::uniform(1600 * s, 1800 * s), Marginal::uniform(20 * s, 200 * s), Marginal::uniform(0.5, 0.7),
           Marginal::uniform(0.5, 0.7)}};
}

SirOutcome sir_run(std::span<const double> x, const SirConfig& cfg, Rng& rng) {
  require_dim(x, 4, "SIR model");
  const long pop = cfg.population;
  const long e0 = std::lround(x[0]);
  long e = e0;
  long i = std::lround(x[1]);
  const double beta = x[2], gamma = x[3];
  if (e < 0 || i < 1 || e + i > pop) throw DomainError("SIR requires E0 >= 0, I0 >= 1 and E0 + I0 <= P");
  if (beta < 0.0 || !(gamma > 0.0)) throw DomainError("SIR requires beta >= 0 and gamma > 0");
  long r = pop - e - i;
  SirOutcome out;
  const double p = static_cast<double>(pop);
  while (i > 0) {
    const double rate_i = beta * static_cast<double>(e) * static_cast<double>(i) / p;
    const double rate_r = gamma * static_cast<double>(i);
    // Competing exponential clocks; a zero infection rate never fires.
    const double t_i = rate_i > 0.0 ? rng.exponential(rate_i) : INFINITY;
    const double t_r = rng.exponential(rate_r);
    if (t_i < t_r) {
      --e;
      ++i;
      out.duration += t_i;
    } else {
      --i;
      ++r;
      out.duration += t_r;
    }
    ++out.events;
    out.conserved = out.conserved && (e + i + r == pop);
  }
  out.infections = e0 - e;
  return out;
}

double sir_eval(std::span<const double> x, const SirConfig& cfg, Rng& rng) {
  return static_cast<double>(sir_run(x, cfg, rng).infections);
}

// ---------------------------------------------------------------- designs

Eigen::MatrixXd lhs(std::size_t n, const pce::InputModel& input, Rng& rng) {
  if (n == 0) throw DomainError("Latin hypercube size must be at least 1");
  const std::size_t m = input.dimension();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < m; ++j) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = n - 1; k > 0; --k) std::swap(perm[k], perm[rng.below(k + 1)]);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(n);
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = input.marginals[j].inverse_cdf(u);
    }
  }
  return X;
}

Simulator toy_simulator() { return {"toy", toy_input(), [](std::span<const double> x, Rng& r) { return toy_eval(x, r); }}; }

Simulator heston_simulator(const HestonConfig& cfg) {
  return {"heston", heston_input(), [cfg](std::span<const double> x, Rng& r) { return heston_eval(x, cfg, r); }};
}

Simulator sir_simulator(const SirConfig& cfg) {
  return {"sir", sir_input(cfg), [cfg](std::span<const double> x, Rng& r) { return sir_eval(x, cfg, r); }};
}

Eigen::VectorXd run_design(const Simulator& sim, const Eigen::MatrixXd& X, std::uint64_t seed) {
  Eigen::VectorXd y(X.rows());
  std::vector<double> row(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
    Rng rng = Rng::substream(seed, {static_cast<std::uint64_t>(i), 0});
    y(i) = sim.eval(row, rng);
  }
  return y;
}

std::vector<double> replicate(const Simulator& sim, std::span<const double> x, std::size_t R, std::uint64_t seed,
                              std::uint64_t row) {
  if (R == 0) throw DomainError("replication count must be at least 1");
  std::vector<double> out(R);
  for (std::size_t r = 0; r < R; ++r) {
    Rng rng = Rng::substream(seed, {row, static_cast<std::uint64_t>(r)});
    out[r] = sim.eval(x, rng);
  }
  return out;
}

std::vector<double> replicate(const Simulator& sim, std::span<const double> x, std::size_t R, Rng& rng) {
  return replicate(sim, x, R, rng.next_u64());
}

double sample_mean(std::span<const double> v) {
  if (v.empty()) throw DomainError("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) throw DomainError("standard deviation needs at least two values");
  const double m = sample_mean(v);
  double acc = 0.0;
  for (double a : v) acc += (a - m) * (a - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double sample_superquantile(std::vector<double> v, double alpha) {
  if (v.empty()) throw DomainError("superquantile of an empty sample");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("superquantile level must lie in (0,1)");
  std::sort(v.begin(), v.end());
  const auto k = std::min(v.size() - 1, static_cast<std::size_t>(std::floor(alpha * static_cast<double>(v.size()))));
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), 0.0) /
         static_cast<double>(v.size() - k);
}

}  // namespace glamsa::sim
