#pragma once

// Generalized lambda models: the four GLD parameters of the response
// distribution are polynomial chaos expansions of the input, with a log link
// on lambda2. Fitted from one simulator run per design point.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "glamsa/gld.hpp"
#include "glamsa/optim.hpp"
#include "glamsa/pce.hpp"

namespace glamsa::glam {

struct SampleSet {
  Eigen::MatrixXd X;  // n x M
  Eigen::VectorXd y;  // n
};

enum class Link { identity, log };

/// Link of the l-th parameter (0-based): log for lambda2, identity otherwise.
constexpr Link link_of(std::size_t l) { return l == 1 ? Link::log : Link::identity; }

struct GlamModel {
  pce::InputModel input;
  /// Expansions of lambda1, log(lambda2), lambda3, lambda4.
  std::array<pce::PceModel, 4> lambdas;

  gld::GldParams predict(std::span<const double> x) const;
  std::vector<gld::GldParams> predict(const Eigen::MatrixXd& X) const;
  /// Q_GLaM(u; x).
  double quantile(double u, std::span<const double> x) const;
};

gld::GldParams predict_lambda(const GlamModel& model, std::span<const double> x);
double emulator_quantile(const GlamModel& model, double u, std::span<const double> x);

/// Default candidate grids: degrees 0..10, q in {0.5, 0.75, 1}.
std::vector<int> default_degrees();
std::vector<double> default_qnorms();

struct FglsOptions {
  std::vector<int> mean_degrees = default_degrees();
  std::vector<double> mean_qnorms = default_qnorms();
  std::vector<int> var_degrees = default_degrees();
  std::vector<double> var_qnorms = default_qnorms();
  int iterations = 5;
  pce::AdaptiveOptions adaptive{pce::LarOptions{0.15, 30, true, 5}, 2};
  /// WLS variances are floored at this empirical quantile of v-hat (0 disables).
  double weight_floor_quantile = 0.1;
  /// When set, the mean/variance bases are used as given instead of being selected.
  std::optional<pce::BasisSet> fixed_mean_basis;
  std::optional<pce::BasisSet> fixed_var_basis;
};

struct FglsResult {
  pce::SparseFit mean;      // A_m with the final WLS coefficients
  pce::SparseFit variance;  // A_v from the iteration with the smallest selection error
  std::vector<double> loo_errors;  // variance-fit selection error per iteration
  /// Weighted residual sum of squares of the previous and the refitted mean, per iteration.
  std::vector<std::pair<double, double>> weighted_rss;
  int best_iteration = 0;
  std::size_t jittered_residuals = 0;
  /// Mean squared residual of the final mean fit divided by the mean of exp(variance PCE).
  double variance_scale = 1.0;
};

FglsResult fgls_select(const SampleSet& data, const pce::InputModel& input, const FglsOptions& options = {});

/// Out-of-support observations contribute log f = sentinel - kappa * distance.
struct LikelihoodPenalty {
  double sentinel = -100.0;
  double kappa = 1e3;

  /// kappa = 1e3 / std(y).
  static LikelihoodPenalty for_data(const Eigen::VectorXd& y);
};

double negative_log_likelihood(const GlamModel& model, const SampleSet& data);
double negative_log_likelihood(const GlamModel& model, const SampleSet& data, const LikelihoodPenalty& penalty,
                               double tol = gld::kDefaultTol);

/// Per-observation log density (penalized outside the support) and its
/// gradient with respect to (lambda1..lambda4).
double log_density_with_gradient(const gld::GldParams& p, double y, const LikelihoodPenalty& penalty, double tol,
                                 std::array<double, 4>* grad);

enum class Optimizer { lbfgs, nelder_mead };

struct FitConfig {
  FglsOptions fgls;
  int shape_degree = 1;
  double shape_qnorm = 1.0;
  /// Skip basis selection for lambda3/lambda4 and use these instead.
  std::optional<pce::BasisSet> fixed_shape_basis;
  Optimizer optimizer = Optimizer::lbfgs;
  int restarts = 3;
  optim::Options optim;
  double min_points_per_coefficient = 3.0;
  /// Box for the constant terms of lambda3 and lambda4.
  double shape_lower = -0.5 + 1e-3;
  double shape_upper = 5.0;
  /// lambda3(x), lambda4(x) below shape_floor at a design point, or at a corner of an
  /// all-uniform input box with at most 12 inputs, add
  /// shape_floor_weight * (shape_floor - lambda)^2 to the objective.
  double shape_floor = -0.4;
  double shape_floor_weight = 1e4;
  double initial_shape = 0.1349;
  double bisection_tol = gld::kDefaultTol;
  std::uint64_t seed = 0;
};

struct FitReport {
  std::array<pce::BasisSet, 4> bases;
  double nll_initial = 0.0;
  double nll = 0.0;
  std::vector<double> restart_nll;
  int iterations = 0;
  int evaluations = 0;
  std::vector<double> fgls_loo_errors;
  int fgls_best_iteration = 0;
  std::size_t jittered_residuals = 0;
  std::string optimizer;
  std::string admissible_set;
};

std::pair<GlamModel, FitReport> fit(const SampleSet& data, const pce::InputModel& input, const FitConfig& config = {});

/// Fit with all four bases fixed (no FGLS basis selection for lambda1/lambda2).
std::pair<GlamModel, FitReport> fit_with_bases(const SampleSet& data, const pce::InputModel& input,
                                               const std::array<pce::BasisSet, 4>& bases,
                                               const FitConfig& config = {});

}  // namespace glamsa::glam
