#pragma once

// Polynomial chaos expansions over independent uniform/gaussian inputs with
// orthonormal Legendre/Hermite bases, least-squares fitting with closed-form
// leave-one-out error, and sparse selection by least angle regression.

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "glamsa/random.hpp"
#include "glamsa/sobol_report.hpp"

namespace glamsa::pce {

enum class MarginalKind { uniform, gaussian };

struct Marginal {
  MarginalKind kind = MarginalKind::uniform;
  double a = 0.0;  // lower bound, or mean
  double b = 1.0;  // upper bound, or standard deviation

  static Marginal uniform(double lower, double upper);
  static Marginal gaussian(double mean, double stddev);

  /// Map to the reference variable: [-1,1] for uniform, N(0,1) for gaussian.
  double standardize(double x) const;
  double inverse_cdf(double u) const;
  double sample(Rng& rng) const;
  double mean() const;
  double variance() const;
};

struct InputModel {
  std::vector<Marginal> marginals;

  std::size_t dimension() const { return marginals.size(); }
  /// Throws DomainError if x lies outside the support of a bounded marginal.
  void check_domain(std::span<const double> x) const;
  Eigen::VectorXd sample(Rng& rng) const;
  Eigen::MatrixXd sample(Rng& rng, std::size_t n) const;
};

using MultiIndex = std::vector<int>;

struct BasisSet {
  std::vector<MultiIndex> indices;
  int degree = 0;
  double qnorm = 1.0;

  std::size_t size() const { return indices.size(); }
  std::size_t dimension() const { return indices.empty() ? 0 : indices.front().size(); }
  int max_degree() const;
  bool operator==(const BasisSet&) const = default;
};

/// (sum alpha_i^q)^(1/q).
double qnorm_of(const MultiIndex& alpha, double q);

/// All alpha in N^M with ||alpha||_q <= p, graded then descending-lexicographic order.
BasisSet enumerate_basis(std::size_t dimension, int degree, double qnorm);

/// Orthonormal univariate polynomials phi_0..phi_degree at x (raw units).
void univariate(const Marginal& m, double x, int degree, std::span<double> out);

Eigen::VectorXd eval_basis(const BasisSet& basis, const InputModel& input, std::span<const double> x);
/// Row i holds the basis evaluated at X.row(i).
Eigen::MatrixXd design_matrix(const BasisSet& basis, const InputModel& input, const Eigen::MatrixXd& X);

struct LeastSquaresFit {
  Eigen::VectorXd coefficients;
  double loo_error = 0.0;
  /// loo_error times loo_correction(n, k, tr((Psi^T Psi)^-1)).
  double corrected_loo_error = 0.0;
};

/// Relative leave-one-out error from residuals and hat-matrix diagonals.
double loo_error(const Eigen::VectorXd& y, const Eigen::VectorXd& residuals, const Eigen::VectorXd& leverage);

/// Small-sample LOO correction n/(n-k) * (1 + tr((Psi^T Psi)^-1)); penalizes large or ill-conditioned bases.
double loo_correction(Eigen::Index n, Eigen::Index k, double trace_gram_inverse);

LeastSquaresFit ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);
LeastSquaresFit ols(const BasisSet& basis, const InputModel& input, const Eigen::MatrixXd& X,
                    const Eigen::VectorXd& y);

/// Minimizes sum (y_i - yhat_i)^2 / variances_i.
Eigen::VectorXd wls(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& variances);
Eigen::VectorXd wls(const BasisSet& basis, const InputModel& input, const Eigen::MatrixXd& X,
                    const Eigen::VectorXd& y, const Eigen::VectorXd& variances);

struct LarOptions {
  /// Upper bound on selected non-constant terms as a fraction of the sample size.
  double max_terms_fraction = 0.5;
  /// Stop scanning prefixes after this many consecutive non-improving ones (0 = scan all).
  std::size_t patience = 30;
  /// Rank prefixes (and AOLS candidates) by the corrected LOO error instead of the plain one.
  bool corrected_loo = true;
  /// Pick the prefix length (and rank AOLS candidates) by K-fold cross-validation of the
  /// whole LAR path, rerun on each training fold, instead of LOO (0 = off).
  std::size_t cv_folds = 0;
};

struct SparseFit {
  BasisSet basis;
  Eigen::VectorXd coefficients;
  double loo_error = 0.0;        // plain LOO of the selected model
  double selection_error = 0.0;  // criterion used to pick it (corrected or plain LOO)
};

/// Order in which LAR activates the non-constant candidate columns (column indices).
std::vector<std::size_t> lar_path(const Eigen::MatrixXd& design, const std::vector<std::size_t>& candidates,
                                  const Eigen::VectorXd& y, std::size_t max_steps);

SparseFit hybrid_lar(const BasisSet& candidates, const InputModel& input, const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& y, const LarOptions& options = {});

struct AdaptiveOptions {
  LarOptions lar;
  /// Stop raising the degree after this many consecutive degrees without LOO improvement (0 = never).
  int degree_early_stop = 2;
};

SparseFit aols(const InputModel& input, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const std::vector<int>& degrees, const std::vector<double>& qnorms,
               const AdaptiveOptions& options = {});

struct PceModel {
  BasisSet basis;
  Eigen::VectorXd coefficients;
  InputModel input;

  double evaluate(std::span<const double> x) const;
  Eigen::VectorXd evaluate(const Eigen::MatrixXd& X) const;
  double mean() const;
  double variance() const;
};

/// Indices from the squared coefficients: first-order and total for each
/// variable, and closed/total/interaction values for every multi-variable
/// support present in the basis (up to `max_order`).
SobolReport sobol_from_pce(const PceModel& model, std::size_t max_order = 3);

}  // namespace glamsa::pce
