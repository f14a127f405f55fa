#include "glamsa/glam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "glamsa/errors.hpp"
#include "glamsa/random.hpp"

namespace glamsa::glam {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxExponent = 700.0;

double safe_exp(double eta) { return std::exp(std::clamp(eta, -kMaxExponent, kMaxExponent)); }

std::size_t zero_position(const pce::BasisSet& basis) {
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (std::all_of(basis.indices[k].begin(), basis.indices[k].end(), [](int a) { return a == 0; })) return k;
  }
  return basis.size();
}

double stddev(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 0.0;
  return std::sqrt((y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1));
}

pce::SparseFit fixed_fit(const pce::BasisSet& basis, const pce::InputModel& input, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y) {
  auto ls = pce::ols(basis, input, X, y);
  return {basis, std::move(ls.coefficients), ls.loo_error, ls.corrected_loo_error};
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

// ---------------------------------------------------------------- model

gld::GldParams GlamModel::predict(std::span<const double> x) const {
  input.check_domain(x);
  return {lambdas[0].evaluate(x), safe_exp(lambdas[1].evaluate(x)), lambdas[2].evaluate(x), lambdas[3].evaluate(x)};
}

std::vector<gld::GldParams> GlamModel::predict(const Eigen::MatrixXd& X) const {
  std::array<Eigen::VectorXd, 4> eta;
  for (std::size_t l = 0; l < 4; ++l) eta[l] = lambdas[l].evaluate(X);
  std::vector<gld::GldParams> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = {eta[0](i), safe_exp(eta[1](i)), eta[2](i), eta[3](i)};
  }
  return out;
}

double GlamModel::quantile(double u, std::span<const double> x) const { return gld::quantile(predict(x), u); }

gld::GldParams predict_lambda(const GlamModel& model, std::span<const double> x) { return model.predict(x); }

double emulator_quantile(const GlamModel& model, double u, std::span<const double> x) { return model.quantile(u, x); }

std::vector<int> default_degrees() {
  std::vector<int> d(11);
  std::iota(d.begin(), d.end(), 0);
  return d;
}

std::vector<double> default_qnorms() { return {0.5, 0.75, 1.0}; }

// ---------------------------------------------------------------- FGLS

FglsResult fgls_select(const SampleSet& data, const pce::InputModel& input, const FglsOptions& options) {
  if (options.iterations < 1) throw DomainError("FGLS needs at least one iteration");
  const auto& X = data.X;
  const auto& y = data.y;
  FglsResult out;
  out.mean = options.fixed_mean_basis
                 ? fixed_fit(*options.fixed_mean_basis, input, X, y)
                 : pce::aols(input, X, y, options.mean_degrees, options.mean_qnorms, options.adaptive);
  const Eigen::MatrixXd mean_design = pce::design_matrix(out.mean.basis, input, X);
  Eigen::VectorXd c_mean = out.mean.coefficients;
  const double jitter = 1e-12 * std::max(stddev(y), 1e-300);

  double best_loo = kInf;
  Eigen::VectorXd best_var_fit;
  for (int it = 0; it < options.iterations; ++it) {
    Eigen::VectorXd log_sq(y.size());
    const Eigen::VectorXd resid = y - mean_design * c_mean;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      double r = std::abs(resid(i));
      if (r == 0.0) {
        r = jitter;
        ++out.jittered_residuals;
      }
      log_sq(i) = 2.0 * std::log(r);
    }
    pce::SparseFit var_fit =
        options.fixed_var_basis
            ? fixed_fit(*options.fixed_var_basis, input, X, log_sq)
            : pce::aols(input, X, log_sq, options.var_degrees, options.var_qnorms, options.adaptive);
    out.loo_errors.push_back(var_fit.selection_error);
    Eigen::VectorXd var_hat =
        (pce::design_matrix(var_fit.basis, input, X) * var_fit.coefficients).unaryExpr(&safe_exp);
    if (options.weight_floor_quantile > 0.0) {
      std::vector<double> sorted(var_hat.data(), var_hat.data() + var_hat.size());
      const auto k = static_cast<std::size_t>(options.weight_floor_quantile * static_cast<double>(sorted.size() - 1));
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
      var_hat = var_hat.cwiseMax(sorted[k]);
    }

    const double wrss_before = ((y - mean_design * c_mean).array().square() / var_hat.array()).sum();
    c_mean = pce::wls(mean_design, y, var_hat);
    const double wrss_after = ((y - mean_design * c_mean).array().square() / var_hat.array()).sum();
    out.weighted_rss.emplace_back(wrss_before, wrss_after);

    if (var_fit.selection_error < best_loo) {
      best_loo = var_fit.selection_error;
      out.best_iteration = it;
      out.variance = std::move(var_fit);
    }
  }
  out.mean.coefficients = c_mean;
  const Eigen::VectorXd resid = y - mean_design * c_mean;
  const Eigen::VectorXd var_best =
      (pce::design_matrix(out.variance.basis, input, X) * out.variance.coefficients).unaryExpr(&safe_exp);
  out.variance_scale = resid.squaredNorm() / static_cast<double>(y.size()) / var_best.mean();
  if (!std::isfinite(out.variance_scale) || out.variance_scale <= 0.0) out.variance_scale = 1.0;
  return out;
}

// ---------------------------------------------------------------- likelihood

LikelihoodPenalty LikelihoodPenalty::for_data(const Eigen::VectorXd& y) {
  LikelihoodPenalty p;
  const double s = stddev(y);
  p.kappa = s > 0.0 ? 1e3 / s : 1e3;
  return p;
}

double log_density_with_gradient(const gld::GldParams& p, double y, const LikelihoodPenalty& penalty, double tol,
                                 std::array<double, 4>* grad) {
  const double l1 = p.lambda1;
  const double l2 = p.lambda2;
  const double l3 = p.lambda3;
  const double l4 = p.lambda4;
  if (grad) grad->fill(0.0);

  const double lower = l3 > 0.0 ? l1 - 1.0 / (l2 * l3) : -kInf;
  const double upper = l4 > 0.0 ? l1 + 1.0 / (l2 * l4) : kInf;
  if (y < lower) {
    if (grad) {
      const double k = -penalty.kappa;
      *grad = {k, k / (l2 * l2 * l3), k / (l2 * l3 * l3), 0.0};
    }
    return penalty.sentinel - penalty.kappa * (lower - y);
  }
  if (y > upper) {
    if (grad) {
      const double k = penalty.kappa;
      *grad = {k, -k / (l2 * l2 * l4), 0.0, -k / (l2 * l4 * l4)};
    }
    return penalty.sentinel - penalty.kappa * (y - upper);
  }

  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < gld::kMaxBisection && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double q = l1 + (gld::box_cox(mid, l3) - gld::box_cox(1.0 - mid, l4)) / l2;
    if (q < y) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double u = 0.5 * (lo + hi);
  const double v = 1.0 - u;
  const double a = std::pow(u, l3 - 1.0);
  const double b = std::pow(v, l4 - 1.0);
  const double d = a + b;
  const double logf = std::log(l2) - std::log(d);
  if (!std::isfinite(logf) || logf < penalty.sentinel) return penalty.sentinel;
  if (grad) {
    const double lu = std::log(u);
    const double lv = std::log(v);
    const std::array<double, 4> dq = {
        1.0,
        -(gld::box_cox(u, l3) - gld::box_cox(v, l4)) / (l2 * l2),
        gld::box_cox_dshape(u, l3) / l2,
        -gld::box_cox_dshape(v, l4) / l2,
    };
    const double d_u = (l3 - 1.0) * a / u - (l4 - 1.0) * b / v;
    const std::array<double, 4> d_direct = {0.0, 0.0, a * lu, b * lv};
    for (std::size_t k = 0; k < 4; ++k) {
      const double du = -l2 * dq[k] / d;
      (*grad)[k] = (k == 1 ? 1.0 / l2 : 0.0) - (d_direct[k] + d_u * du) / d;
    }
  }
  return logf;
}

double negative_log_likelihood(const GlamModel& model, const SampleSet& data) {
  return negative_log_likelihood(model, data, LikelihoodPenalty::for_data(data.y));
}

double negative_log_likelihood(const GlamModel& model, const SampleSet& data, const LikelihoodPenalty& penalty,
                               double tol) {
  const auto params = model.predict(data.X);
  double nll = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    gld::validate(params[i]);
    nll -= log_density_with_gradient(params[i], data.y(static_cast<Eigen::Index>(i)), penalty, tol, nullptr);
  }
  return nll;
}

// ---------------------------------------------------------------- maximum likelihood

namespace {

constexpr std::size_t kMaxCornerDimension = 12;

/// All 2^M vertices of the input box, or no rows when a marginal is unbounded or M is large.
Eigen::MatrixXd domain_corners(const pce::InputModel& input) {
  const std::size_t m = input.dimension();
  if (m > kMaxCornerDimension) return {};
  for (const auto& mg : input.marginals) {
    if (mg.kind != pce::MarginalKind::uniform) return {};
  }
  const Eigen::Index count = Eigen::Index{1} << m;
  Eigen::MatrixXd corners(count, static_cast<Eigen::Index>(m));
  for (Eigen::Index k = 0; k < count; ++k) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto& mg = input.marginals[j];
      corners(k, static_cast<Eigen::Index>(j)) = (k >> j) & 1 ? mg.b : mg.a;
    }
  }
  return corners;
}

/// Maps the flat optimization vector to the four coefficient blocks. The
/// constant terms of lambda3/lambda4 pass through a scaled logistic so they
/// stay inside (shape_lower, shape_upper).
class Likelihood {
 public:
  Likelihood(const SampleSet& data, const pce::InputModel& input, const std::array<pce::BasisSet, 4>& bases,
             const FitConfig& config)
      : y_(data.y), penalty_(LikelihoodPenalty::for_data(data.y)), tol_(config.bisection_tol),
        lo_(config.shape_lower), hi_(config.shape_upper), floor_(config.shape_floor),
        floor_weight_(config.shape_floor_weight) {
    std::size_t offset = 0;
    for (std::size_t l = 0; l < 4; ++l) {
      design_[l] = pce::design_matrix(bases[l], input, data.X);
      offset_[l] = offset;
      size_[l] = bases[l].size();
      offset += size_[l];
      boxed_[l] = (l >= 2) ? zero_position(bases[l]) : bases[l].size();
    }
    dim_ = offset;
    const Eigen::MatrixXd corners = domain_corners(input);
    if (corners.rows() > 0) {
      for (std::size_t l = 2; l < 4; ++l) corner_design_[l] = pce::design_matrix(bases[l], input, corners);
    }
  }

  std::size_t dimension() const { return dim_; }

  std::array<Eigen::VectorXd, 4> coefficients(const Eigen::VectorXd& theta) const {
    std::array<Eigen::VectorXd, 4> c;
    for (std::size_t l = 0; l < 4; ++l) {
      c[l] = theta.segment(static_cast<Eigen::Index>(offset_[l]), static_cast<Eigen::Index>(size_[l]));
      if (boxed_[l] < size_[l]) {
        auto& v = c[l](static_cast<Eigen::Index>(boxed_[l]));
        v = lo_ + (hi_ - lo_) * sigmoid(v);
      }
    }
    return c;
  }

  Eigen::VectorXd theta(const std::array<Eigen::VectorXd, 4>& c) const {
    Eigen::VectorXd t(static_cast<Eigen::Index>(dim_));
    for (std::size_t l = 0; l < 4; ++l) {
      Eigen::VectorXd block = c[l];
      if (boxed_[l] < size_[l]) {
        auto& v = block(static_cast<Eigen::Index>(boxed_[l]));
        const double frac = std::clamp((v - lo_) / (hi_ - lo_), 1e-9, 1.0 - 1e-9);
        v = logit(frac);
      }
      t.segment(static_cast<Eigen::Index>(offset_[l]), static_cast<Eigen::Index>(size_[l])) = block;
    }
    return t;
  }

  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
    const auto c = coefficients(theta);
    std::array<Eigen::VectorXd, 4> eta;
    for (std::size_t l = 0; l < 4; ++l) eta[l] = design_[l] * c[l];
    const Eigen::Index n = y_.size();
    std::array<Eigen::VectorXd, 4> d_eta;
    if (grad) {
      for (auto& v : d_eta) v.setZero(n);
    }
    double nll = 0.0;
    std::array<double, 4> g{};
    for (Eigen::Index i = 0; i < n; ++i) {
      const gld::GldParams p{eta[0](i), safe_exp(eta[1](i)), eta[2](i), eta[3](i)};
      if (!(p.lambda2 > 0.0) || !std::isfinite(p.lambda2)) return kInf;
      nll -= log_density_with_gradient(p, y_(i), penalty_, tol_, grad ? &g : nullptr);
      if (grad) {
        d_eta[0](i) = -g[0];
        d_eta[1](i) = -g[1] * p.lambda2;
        d_eta[2](i) = -g[2];
        d_eta[3](i) = -g[3];
      }
    }
    // Quadratic penalty keeping lambda3(x_i), lambda4(x_i) above the floor at every design point.
    for (std::size_t l = 2; l < 4; ++l) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double v = floor_ - eta[l](i);
        if (v <= 0.0) continue;
        nll += floor_weight_ * v * v;
        if (grad) d_eta[l](i) -= 2.0 * floor_weight_ * v;
      }
    }
    // The same floor at the corners of a bounded input domain, where linear shape
    // expansions reach their extremes.
    std::array<Eigen::VectorXd, 4> d_corner;
    for (std::size_t l = 2; l < 4; ++l) {
      if (corner_design_[l].rows() == 0) continue;
      const Eigen::VectorXd at = corner_design_[l] * c[l];
      d_corner[l].setZero(at.size());
      for (Eigen::Index k = 0; k < at.size(); ++k) {
        const double v = floor_ - at(k);
        if (v <= 0.0) continue;
        nll += floor_weight_ * v * v;
        d_corner[l](k) = -2.0 * floor_weight_ * v;
      }
    }
    if (!std::isfinite(nll)) return kInf;
    if (grad) {
      grad->resize(static_cast<Eigen::Index>(dim_));
      for (std::size_t l = 0; l < 4; ++l) {
        Eigen::VectorXd gl = design_[l].transpose() * d_eta[l];
        if (d_corner[l].size() > 0) gl += corner_design_[l].transpose() * d_corner[l];
        if (boxed_[l] < size_[l]) {
          const auto k = static_cast<Eigen::Index>(boxed_[l]);
          const double s = sigmoid(theta(static_cast<Eigen::Index>(offset_[l]) + k));
          gl(k) *= (hi_ - lo_) * s * (1.0 - s);
        }
        grad->segment(static_cast<Eigen::Index>(offset_[l]), static_cast<Eigen::Index>(size_[l])) = gl;
      }
    }
    return nll;
  }

 private:
  const Eigen::VectorXd& y_;
  LikelihoodPenalty penalty_;
  double tol_;
  double lo_;
  double hi_;
  double floor_;
  double floor_weight_;
  std::array<Eigen::MatrixXd, 4> design_;
  std::array<Eigen::MatrixXd, 4> corner_design_;
  std::array<std::size_t, 4> offset_{};
  std::array<std::size_t, 4> size_{};
  std::array<std::size_t, 4> boxed_{};
  std::size_t dim_ = 0;
};

std::pair<GlamModel, FitReport> fit_from_fgls(const SampleSet& data, const pce::InputModel& input,
                                              const FglsResult& fgls, const pce::BasisSet& shape3,
                                              const pce::BasisSet& shape4, const FitConfig& config) {
  const std::array<pce::BasisSet, 4> bases{fgls.mean.basis, fgls.variance.basis, shape3, shape4};
  std::size_t total = 0;
  for (const auto& b : bases) total += b.size();
  const auto n = static_cast<double>(data.y.size());
  if (n < config.min_points_per_coefficient * static_cast<double>(total)) {
    throw FitError("too few observations (" + std::to_string(data.y.size()) + ") for " + std::to_string(total) +
                   " coefficients");
  }

  // Initial point: FGLS mean, near-normal shapes, lambda2 matched to the FGLS variance surface.
  std::array<Eigen::VectorXd, 4> c0;
  c0[0] = fgls.mean.coefficients;
  const double base_var =
      gld::variance({0.0, 1.0, config.initial_shape, config.initial_shape});
  c0[1] = -0.5 * fgls.variance.coefficients;
  const auto z2 = zero_position(bases[1]);
  if (z2 < bases[1].size()) {
    c0[1](static_cast<Eigen::Index>(z2)) += 0.5 * std::log(base_var) - 0.5 * std::log(fgls.variance_scale);
  }
  for (std::size_t l = 2; l < 4; ++l) {
    c0[l] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bases[l].size()));
    const auto z = zero_position(bases[l]);
    if (z < bases[l].size()) c0[l](static_cast<Eigen::Index>(z)) = config.initial_shape;
  }

  const Likelihood nll(data, input, bases, config);
  const optim::Objective objective = [&nll](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return nll(t, g); };
  const Eigen::VectorXd theta0 = nll.theta(c0);

  FitReport report;
  report.bases = bases;
  report.nll_initial = nll(theta0, nullptr);
  report.fgls_loo_errors = fgls.loo_errors;
  report.fgls_best_iteration = fgls.best_iteration;
  report.jittered_residuals = fgls.jittered_residuals;
  report.optimizer = config.optimizer == Optimizer::lbfgs ? "lbfgs" : "nelder-mead";
  report.admissible_set = "constant terms of lambda3, lambda4 constrained to (" + std::to_string(config.shape_lower) +
                          ", " + std::to_string(config.shape_upper) + "); lambda3(x), lambda4(x) penalized below " +
                          std::to_string(config.shape_floor) +
                          " at the design points and at the corners of a bounded input box";

  Eigen::VectorXd best_theta = theta0;
  double best_f = report.nll_initial;
  Rng rng(config.seed);
  for (int r = 0; r <= config.restarts; ++r) {
    Eigen::VectorXd start = best_theta;
    if (r > 0) {
      for (Eigen::Index j = 0; j < start.size(); ++j) start(j) += 0.05 * (std::abs(start(j)) + 0.05) * rng.normal();
    }
    optim::Result res = config.optimizer == Optimizer::lbfgs ? optim::lbfgs(objective, start, config.optim)
                                                             : optim::nelder_mead(objective, start, 0.1, config.optim);
    report.restart_nll.push_back(res.f);
    report.iterations += res.iterations;
    report.evaluations += res.evaluations;
    if (std::isfinite(res.f) && res.f < best_f) {
      best_f = res.f;
      best_theta = res.x;
    }
  }
  if (!std::isfinite(best_f)) throw FitError("no finite negative log-likelihood found from any start");
  report.nll = best_f;

  GlamModel model;
  model.input = input;
  const auto c = nll.coefficients(best_theta);
  for (std::size_t l = 0; l < 4; ++l) model.lambdas[l] = pce::PceModel{bases[l], c[l], input};
  return {std::move(model), std::move(report)};
}

}  // namespace

std::pair<GlamModel, FitReport> fit(const SampleSet& data, const pce::InputModel& input, const FitConfig& config) {
  if (data.X.rows() != data.y.size()) throw DomainError("design and output sizes differ");
  const auto fgls = fgls_select(data, input, config.fgls);
  const pce::BasisSet shape = config.fixed_shape_basis
                                  ? *config.fixed_shape_basis
                                  : pce::enumerate_basis(input.dimension(), config.shape_degree, config.shape_qnorm);
  return fit_from_fgls(data, input, fgls, shape, shape, config);
}

std::pair<GlamModel, FitReport> fit_with_bases(const SampleSet& data, const pce::InputModel& input,
                                               const std::array<pce::BasisSet, 4>& bases, const FitConfig& config) {
  FitConfig cfg = config;
  cfg.fgls.fixed_mean_basis = bases[0];
  cfg.fgls.fixed_var_basis = bases[1];
  const auto fgls = fgls_select(data, input, cfg.fgls);
  return fit_from_fgls(data, input, fgls, bases[2], bases[3], cfg);
}

}  // namespace glamsa::glam
