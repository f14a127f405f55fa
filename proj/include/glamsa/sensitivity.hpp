#pragma once

// Sobol' indices of a fitted generalized lambda model: classical indices of
// Q(U; X) and indices of deterministic quantities of interest x -> QoI(x).
// Two estimators: pick-freeze Monte Carlo (Janon's form) and post-processing
// of a polynomial chaos expansion fitted to the surface.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "glamsa/glam.hpp"
#include "glamsa/pce.hpp"
#include "glamsa/random.hpp"
#include "glamsa/sobol_report.hpp"

namespace glamsa::sens {

enum class QoiKind { mean, variance, std, quantile, superquantile, expected_payoff, entropy };

struct QoiSpec {
  QoiKind kind = QoiKind::mean;
  double param = 0.0;          // alpha for quantile/superquantile, strike for expected_payoff
  std::size_t n_mc = 10000;    // samples per x for entropy

  static QoiSpec mean() { return {QoiKind::mean, 0.0, 0}; }
  static QoiSpec variance() { return {QoiKind::variance, 0.0, 0}; }
  static QoiSpec std_dev() { return {QoiKind::std, 0.0, 0}; }
  static QoiSpec quantile(double alpha) { return {QoiKind::quantile, alpha, 0}; }
  static QoiSpec superquantile(double alpha) { return {QoiKind::superquantile, alpha, 0}; }
  static QoiSpec expected_payoff(double strike) { return {QoiKind::expected_payoff, strike, 0}; }
  static QoiSpec entropy(std::size_t n_mc = 10000) { return {QoiKind::entropy, 0.0, n_mc}; }

  /// Throws DomainError for alpha outside (0,1) or n_mc = 0.
  void validate() const;
  /// "mean", "std", "quantile(0.5)", "superquantile(0.95)", "expected_payoff(1)", "entropy".
  std::string label() const;
  /// Inverse of label(); "entropy(5000)" sets n_mc.
  static QoiSpec parse(const std::string& text);
};

/// Vectorized function: one value per row of X.
using Surface = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;
using QuantileFn = std::function<double(double u, std::span<const double> x)>;

/// QoI of one GLD. Entropy draws from the substream (seed, hash of x).
double qoi_value(const gld::GldParams& p, const QoiSpec& q, std::span<const double> x, std::uint64_t seed);

/// x -> QoI of the emulated response distribution at x.
Surface qoi_surface(const glam::GlamModel& g, const QoiSpec& q, std::uint64_t seed = 0);

/// Q_GLaM evaluated on rows (x, u): the last column holds u.
Surface emulator_surface(const glam::GlamModel& g);

// ---------------------------------------------------------------- pick-freeze

struct BootstrapOptions {
  std::size_t n_boot = 0;  // 0 disables intervals
  double level = 0.95;
};

/// Janon's estimator of Cov(Y, Y_u) / Var(Y) from paired samples.
double janon(const Eigen::VectorXd& y, const Eigen::VectorXd& y_frozen);

/// Percentile bootstrap interval of janon(y, y_frozen) (or 1 - janon when `complement`).
/// n_boot <= 1 gives the degenerate interval at the point estimate.
Interval bootstrap_ci(const Eigen::VectorXd& y, const Eigen::VectorXd& y_frozen, std::size_t n_boot, double level,
                      Rng& rng, bool complement = false);

/// Pick-freeze estimates for a function of `dim` independent inputs drawn by `sampler`.
/// For each subset u: first_order from freezing u, total = 1 - (closed index of the
/// complement of u among all `dim` inputs). Subset indices refer to the first
/// `reported_dim` inputs; the remaining ones (e.g. the latent U) are never reported.
SobolReport pickfreeze(const Surface& f, const std::function<Eigen::MatrixXd(Rng&, std::size_t)>& sampler,
                       std::size_t dim, const std::vector<Subset>& subsets, std::size_t n_mc, Rng& rng,
                       const BootstrapOptions& boot = {});

/// Singletons plus the full set {0..M-1}.
std::vector<Subset> default_subsets(std::size_t dim);

/// Classical indices of Y = Q_GLaM(U; X) with U ~ U(0,1) as an extra, unreported input.
SobolReport classical_sobol_pickfreeze(const glam::GlamModel& g, const pce::InputModel& input,
                                       const std::vector<Subset>& subsets, std::size_t n_mc, Rng& rng,
                                       const BootstrapOptions& boot = {});

/// Indices of a deterministic surface over `input`.
SobolReport surface_sobol_pickfreeze(const Surface& f, const pce::InputModel& input, const std::vector<Subset>& subsets,
                                     std::size_t n_mc, Rng& rng, const BootstrapOptions& boot = {});

// ---------------------------------------------------------------- PCE route

struct PceSensitivityOptions {
  std::vector<int> degrees{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<double> qnorms{0.5, 0.75, 1.0};
  pce::AdaptiveOptions adaptive{pce::LarOptions{0.5, 30}, 2};
  double loo_threshold = 0.05;
  std::size_t max_order = 3;
};

/// Fits a PCE to the surface on n_pc random inputs and reads the indices off its coefficients.
SobolReport surface_sobol_pce(const Surface& f, const pce::InputModel& input, std::size_t n_pc, Rng& rng,
                              const PceSensitivityOptions& options = {});

SobolReport qoi_sobol_pce(const glam::GlamModel& g, const pce::InputModel& input, const QoiSpec& q, std::size_t n_pc,
                          Rng& rng, const PceSensitivityOptions& options = {}, std::uint64_t qoi_seed = 0);

/// PCE of Q_GLaM(u; x) over (x, u), u Legendre-expanded on U(0,1). Reports S_i, S_Ti for
/// every input and the closed index of the whole input vector; terms involving u count
/// only toward the total variance.
SobolReport classical_sobol_pce(const glam::GlamModel& g, const pce::InputModel& input, std::size_t n_pc, Rng& rng,
                                const PceSensitivityOptions& options = {});

// ---------------------------------------------------------------- SNR and errors

/// Var[m(X)] / (Var[Y] - Var[m(X)]) with m from the GLD mean and Y = Q_GLaM(U; X).
double snr(const glam::GlamModel& g, const pce::InputModel& input, std::size_t n_mc, Rng& rng);

/// SNR from replicated runs: `sim(x, rng)` at n_points inputs with R replications each.
/// Var[m] is corrected for the replication noise in the sample means.
double snr_replicated(const std::function<double(std::span<const double>, Rng&)>& sim, const pce::InputModel& input,
                      std::size_t n_points, std::size_t R, std::uint64_t seed);

/// Var[m(X)] / (Var[Y] - Var[m(X)]) from exact mean and variance functions.
double snr_analytic(const std::function<double(std::span<const double>)>& mean,
                    const std::function<double(std::span<const double>)>& variance, const pce::InputModel& input,
                    std::size_t n_mc, Rng& rng);

/// E[(Q_ref - Q_cand)^2] / Var[Q_ref(U; X)] over n_test joint (X, U) draws.
double error_q_metric(const QuantileFn& candidate, const QuantileFn& reference, const pce::InputModel& input,
                      std::size_t n_test, Rng& rng);
double error_q_metric(const glam::GlamModel& g, const QuantileFn& reference, const pce::InputModel& input,
                      std::size_t n_test, Rng& rng);

/// E[(QoI_ref - q_GLaM)^2] / Var[QoI_ref(X)] over n_test draws of X.
double error_qoi_metric(const Surface& candidate, const std::function<double(std::span<const double>)>& reference,
                        const pce::InputModel& input, std::size_t n_test, Rng& rng);
double error_qoi_metric(const glam::GlamModel& g, const std::function<double(std::span<const double>)>& reference,
                        const QoiSpec& q, const pce::InputModel& input, std::size_t n_test, Rng& rng,
                        std::uint64_t qoi_seed = 0);

}  // namespace glamsa::sens
