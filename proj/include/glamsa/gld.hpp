#pragma once

// Generalized lambda distribution, FKML parameterization.
//
//   Q(u) = l1 + ( (u^l3 - 1)/l3 - ((1-u)^l4 - 1)/l4 ) / l2,   l2 > 0
//
// The density has no closed form in y; it is evaluated through the
// quantile by inverting Q with bisection.

#include <cstddef>
#include <vector>

#include "glamsa/random.hpp"

namespace glamsa::gld {

struct GldParams {
  double lambda1 = 0.0;  // location
  double lambda2 = 1.0;  // inverse scale, must be > 0
  double lambda3 = 0.0;  // left tail shape
  double lambda4 = 0.0;  // right tail shape
};

struct SupportBounds {
  double lower;
  double upper;
};

inline constexpr double kDefaultTol = 1e-10;
inline constexpr int kMaxBisection = 200;
/// Below this magnitude a shape parameter uses the logarithmic limit form.
inline constexpr double kShapeLimit = 1e-6;

/// Throws ValidityError unless lambda2 > 0 and every parameter is finite.
void validate(const GldParams& p);

/// (t^s - 1)/s with the log limit for |s| < kShapeLimit. t in [0,1].
double box_cox(double t, double s);
/// d/ds of box_cox(t, s).
double box_cox_dshape(double t, double s);

double quantile(const GldParams& p, double u);
/// dQ/du = (u^(l3-1) + (1-u)^(l4-1)) / l2.
double quantile_derivative(const GldParams& p, double u);

SupportBounds support(const GldParams& p);

/// Solves Q(u) = y for u by bisection on [0,1]; clamps to 0/1 outside the support.
double cdf(const GldParams& p, double y, double tol = kDefaultTol);
double pdf(const GldParams& p, double y, double tol = kDefaultTol);

std::vector<double> sample(const GldParams& p, Rng& rng, std::size_t n);

/// Closed-form moments; require lambda3, lambda4 > -1 (mean) and > -1/2 (variance).
double mean(const GldParams& p);
double variance(const GldParams& p);

/// E[max(Y - strike, 0)].
double expected_payoff(const GldParams& p, double strike, double tol = kDefaultTol);
/// E[Y | Y >= q_alpha], 0 < alpha < 1.
double superquantile(const GldParams& p, double alpha);

/// Monte Carlo differential entropy: mean of -log f(Y_i) over n draws.
double entropy_mc(const GldParams& p, Rng& rng, std::size_t n);

}  // namespace glamsa::gld
