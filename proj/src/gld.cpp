#include "glamsa/gld.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "glamsa/errors.hpp"

namespace glamsa::gld {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double raw_quantile(const GldParams& p, double u) {
  return p.lambda1 + (box_cox(u, p.lambda3) - box_cox(1.0 - u, p.lambda4)) / p.lambda2;
}

// E[g_s(U)] for U ~ U(0,1).
double box_cox_mean(double s) { return -1.0 / (s + 1.0); }

// E[g_s(U)^2] = 2 / ((2s+1)(s+1)).
double box_cox_second_moment(double s) { return 2.0 / ((2.0 * s + 1.0) * (s + 1.0)); }

// (psi(1) - psi(b+2))/(b+1) + 1, the a -> 0 limit of h(a,b)/a below.
double cross_limit_numerator(double b) {
  using boost::math::digamma;
  return (digamma(1.0) - digamma(b + 2.0)) / (b + 1.0) + 1.0;
}

// E[g_a(U) g_b(1-U)].
double box_cox_cross_moment(double a, double b) {
  const bool a_small = std::abs(a) < kShapeLimit;
  const bool b_small = std::abs(b) < kShapeLimit;
  if (a_small && b_small) return 2.0 - std::numbers::pi * std::numbers::pi / 6.0;
  if (a_small) return cross_limit_numerator(b) / b;
  if (b_small) return cross_limit_numerator(a) / a;
  const double h = boost::math::beta(a + 1.0, b + 1.0) - 1.0 / (a + 1.0) - 1.0 / (b + 1.0) + 1.0;
  return h / (a * b);
}

// Integral of g_s(t) over [0, c], c in [0,1], s > -1.
double lower_integral(double c, double s) {
  if (c <= 0.0) return 0.0;
  return c * (box_cox(c, s) - 1.0) / (s + 1.0);
}

// Integral of Q(u) over [a, 1].
double upper_tail_integral(const GldParams& p, double a) {
  const double left = box_cox_mean(p.lambda3) - lower_integral(a, p.lambda3);
  const double right = lower_integral(1.0 - a, p.lambda4);
  return p.lambda1 * (1.0 - a) + (left - right) / p.lambda2;
}

void require_shape_above(const GldParams& p, double bound, const char* what) {
  if (!(p.lambda3 > bound) || !(p.lambda4 > bound)) {
    throw MomentUndefined(std::string(what) + " requires lambda3, lambda4 > " + std::to_string(bound));
  }
}

}  // namespace

void validate(const GldParams& p) {
  if (!std::isfinite(p.lambda1) || !std::isfinite(p.lambda2) || !std::isfinite(p.lambda3) ||
      !std::isfinite(p.lambda4)) {
    throw ValidityError("GLD parameters must be finite");
  }
  if (!(p.lambda2 > 0.0)) throw ValidityError("GLD lambda2 must be positive");
}

double box_cox(double t, double s) {
  if (t <= 0.0) return s > 0.0 ? -1.0 / s : -kInf;
  const double lt = std::log(t);
  if (std::abs(s) < kShapeLimit) return lt;
  return std::expm1(s * lt) / s;
}

double box_cox_dshape(double t, double s) {
  const double lt = std::log(t);
  const double sl = s * lt;
  if (std::abs(sl) < 1e-3) {
    const double l2 = lt * lt;
    return l2 / 2.0 + s * l2 * lt / 3.0 + s * s * l2 * l2 / 8.0;
  }
  return (sl * std::exp(sl) - std::expm1(sl)) / (s * s);
}

double quantile(const GldParams& p, double u) {
  validate(p);
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("quantile level must lie in [0,1]");
  return raw_quantile(p, u);
}

double quantile_derivative(const GldParams& p, double u) {
  return (std::pow(u, p.lambda3 - 1.0) + std::pow(1.0 - u, p.lambda4 - 1.0)) / p.lambda2;
}

SupportBounds support(const GldParams& p) {
  validate(p);
  const double lower = p.lambda3 > 0.0 ? p.lambda1 - 1.0 / (p.lambda2 * p.lambda3) : -kInf;
  const double upper = p.lambda4 > 0.0 ? p.lambda1 + 1.0 / (p.lambda2 * p.lambda4) : kInf;
  return {lower, upper};
}

double cdf(const GldParams& p, double y, double tol) {
  const auto bounds = support(p);
  if (y <= bounds.lower) return 0.0;
  if (y >= bounds.upper) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < kMaxBisection && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (raw_quantile(p, mid) < y) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double pdf(const GldParams& p, double y, double tol) {
  const auto bounds = support(p);
  if (y < bounds.lower || y > bounds.upper) return 0.0;
  const double u = cdf(p, y, tol);
  const double denom = std::pow(u, p.lambda3 - 1.0) + std::pow(1.0 - u, p.lambda4 - 1.0);
  return p.lambda2 / denom;
}

std::vector<double> sample(const GldParams& p, Rng& rng, std::size_t n) {
  validate(p);
  if (n == 0) throw DomainError("sample size must be at least 1");
  std::vector<double> out(n);
  for (auto& y : out) y = raw_quantile(p, rng.uniform());
  return out;
}

double mean(const GldParams& p) {
  validate(p);
  require_shape_above(p, -1.0, "GLD mean");
  return p.lambda1 + (box_cox_mean(p.lambda3) - box_cox_mean(p.lambda4)) / p.lambda2;
}

double variance(const GldParams& p) {
  validate(p);
  require_shape_above(p, -0.5, "GLD variance");
  const double m3 = box_cox_mean(p.lambda3);
  const double m4 = box_cox_mean(p.lambda4);
  const double var3 = box_cox_second_moment(p.lambda3) - m3 * m3;
  const double var4 = box_cox_second_moment(p.lambda4) - m4 * m4;
  const double cov = box_cox_cross_moment(p.lambda3, p.lambda4) - m3 * m4;
  return (var3 + var4 - 2.0 * cov) / (p.lambda2 * p.lambda2);
}

double expected_payoff(const GldParams& p, double strike, double tol) {
  const auto bounds = support(p);
  if (strike >= bounds.upper) return 0.0;
  if (strike <= bounds.lower) return mean(p) - strike;
  if (!(p.lambda4 > -1.0)) throw MomentUndefined("expected payoff requires lambda4 > -1");
  const double uk = cdf(p, strike, tol);
  return std::max(0.0, upper_tail_integral(p, uk) - strike * (1.0 - uk));
}

double superquantile(const GldParams& p, double alpha) {
  validate(p);
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("superquantile level must lie in (0,1)");
  require_shape_above(p, -1.0, "GLD superquantile");
  return upper_tail_integral(p, alpha) / (1.0 - alpha);
}

double entropy_mc(const GldParams& p, Rng& rng, std::size_t n) {
  validate(p);
  if (n == 0) throw DomainError("entropy sample size must be at least 1");
  // For y = Q(u), f(y) = 1/Q'(u), so -log f(y_i) = log Q'(u_i) without inverting Q.
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::log(quantile_derivative(p, rng.uniform()));
  return acc / static_cast<double>(n);
}

}  // namespace glamsa::gld
