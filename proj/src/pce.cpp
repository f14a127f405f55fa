#include "glamsa/pce.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include "glamsa/errors.hpp"

namespace glamsa::pce {

// ---------------------------------------------------------------- marginals

Marginal Marginal::uniform(double lower, double upper) {
  if (!(upper > lower)) throw DomainError("uniform marginal requires lower < upper");
  return {MarginalKind::uniform, lower, upper};
}

Marginal Marginal::gaussian(double mean, double stddev) {
  if (!(stddev > 0.0)) throw DomainError("gaussian marginal requires a positive standard deviation");
  return {MarginalKind::gaussian, mean, stddev};
}

double Marginal::standardize(double x) const {
  if (kind == MarginalKind::uniform) return (2.0 * x - a - b) / (b - a);
  return (x - a) / b;
}

double Marginal::inverse_cdf(double u) const {
  if (kind == MarginalKind::uniform) return a + (b - a) * u;
  static const boost::math::normal_distribution<double> standard;
  return a + b * boost::math::quantile(standard, u);
}

double Marginal::sample(Rng& rng) const {
  if (kind == MarginalKind::uniform) return rng.uniform(a, b);
  return a + b * rng.normal();
}

double Marginal::mean() const { return kind == MarginalKind::uniform ? 0.5 * (a + b) : a; }

double Marginal::variance() const {
  return kind == MarginalKind::uniform ? (b - a) * (b - a) / 12.0 : b * b;
}

void InputModel::check_domain(std::span<const double> x) const {
  if (x.size() != marginals.size()) {
    throw DomainError("input point has " + std::to_string(x.size()) + " components, expected " +
                      std::to_string(marginals.size()));
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    const auto& m = marginals[j];
    if (!std::isfinite(x[j])) throw DomainError("non-finite input component x" + std::to_string(j + 1));
    if (m.kind == MarginalKind::uniform) {
      const double slack = 1e-12 * (m.b - m.a);
      if (x[j] < m.a - slack || x[j] > m.b + slack) {
        throw DomainError("x" + std::to_string(j + 1) + " = " + std::to_string(x[j]) + " outside [" +
                          std::to_string(m.a) + ", " + std::to_string(m.b) + "]");
      }
    }
  }
}

Eigen::VectorXd InputModel::sample(Rng& rng) const {
  Eigen::VectorXd x(dimension());
  for (std::size_t j = 0; j < dimension(); ++j) x(j) = marginals[j].sample(rng);
  return x;
}

Eigen::MatrixXd InputModel::sample(Rng& rng, std::size_t n) const {
  Eigen::MatrixXd X(n, dimension());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dimension(); ++j) X(i, j) = marginals[j].sample(rng);
  }
  return X;
}

// ---------------------------------------------------------------- basis

int BasisSet::max_degree() const {
  int d = 0;
  for (const auto& a : indices) d = std::max(d, *std::max_element(a.begin(), a.end()));
  return d;
}

double qnorm_of(const MultiIndex& alpha, double q) {
  double acc = 0.0;
  for (int a : alpha) {
    if (a > 0) acc += std::pow(static_cast<double>(a), q);
  }
  return acc > 0.0 ? std::pow(acc, 1.0 / q) : 0.0;
}

namespace {

void enumerate_total_degree(std::size_t dim, int remaining, MultiIndex& current, std::size_t pos,
                            std::vector<MultiIndex>& out) {
  if (pos == dim) {
    out.push_back(current);
    return;
  }
  for (int d = 0; d <= remaining; ++d) {
    current[pos] = d;
    enumerate_total_degree(dim, remaining - d, current, pos + 1, out);
  }
  current[pos] = 0;
}

int total_degree(const MultiIndex& a) { return std::accumulate(a.begin(), a.end(), 0); }

}  // namespace

BasisSet enumerate_basis(std::size_t dimension, int degree, double qnorm) {
  if (degree < 0) throw DomainError("basis degree must be non-negative");
  if (!(qnorm > 0.0 && qnorm <= 1.0)) throw DomainError("q-norm exponent must lie in (0,1]");
  if (dimension == 0) throw DomainError("basis dimension must be at least 1");
  // ||a||_q >= ||a||_1 for q <= 1, so the total-degree set is a superset.
  std::vector<MultiIndex> all;
  MultiIndex current(dimension, 0);
  enumerate_total_degree(dimension, degree, current, 0, all);
  BasisSet basis;
  basis.degree = degree;
  basis.qnorm = qnorm;
  const double bound = static_cast<double>(degree) * (1.0 + 1e-10);
  for (auto& a : all) {
    if (qnorm == 1.0 || qnorm_of(a, qnorm) <= bound) basis.indices.push_back(std::move(a));
  }
  std::sort(basis.indices.begin(), basis.indices.end(), [](const MultiIndex& l, const MultiIndex& r) {
    const int dl = total_degree(l);
    const int dr = total_degree(r);
    if (dl != dr) return dl < dr;
    return l > r;
  });
  return basis;
}

void univariate(const Marginal& m, double x, int degree, std::span<double> out) {
  const double t = m.standardize(x);
  out[0] = 1.0;
  if (degree == 0) return;
  if (m.kind == MarginalKind::uniform) {
    // Legendre recurrence on [-1,1], scaled by sqrt(2n+1) for unit norm under the uniform weight.
    double p_prev = 1.0;
    double p_cur = t;
    out[1] = std::sqrt(3.0) * t;
    for (int n = 1; n < degree; ++n) {
      const double p_next = ((2.0 * n + 1.0) * t * p_cur - n * p_prev) / (n + 1.0);
      p_prev = p_cur;
      p_cur = p_next;
      out[n + 1] = std::sqrt(2.0 * (n + 1) + 1.0) * p_cur;
    }
  } else {
    // Normalized probabilists' Hermite: h_{n+1} = (t h_n - sqrt(n) h_{n-1}) / sqrt(n+1).
    out[1] = t;
    for (int n = 1; n < degree; ++n) {
      out[n + 1] = (t * out[n] - std::sqrt(static_cast<double>(n)) * out[n - 1]) / std::sqrt(n + 1.0);
    }
  }
}

Eigen::VectorXd eval_basis(const BasisSet& basis, const InputModel& input, std::span<const double> x) {
  Eigen::MatrixXd X(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) X(0, static_cast<Eigen::Index>(j)) = x[j];
  return design_matrix(basis, input, X).row(0).transpose();
}

Eigen::MatrixXd design_matrix(const BasisSet& basis, const InputModel& input, const Eigen::MatrixXd& X) {
  const auto dim = input.dimension();
  if (static_cast<std::size_t>(X.cols()) != dim) throw DomainError("design matrix column count mismatch");
  if (basis.size() > 0 && basis.dimension() != dim) throw DomainError("basis dimension mismatch");
  std::vector<int> max_deg(dim, 0);
  for (const auto& a : basis.indices) {
    for (std::size_t j = 0; j < dim; ++j) max_deg[j] = std::max(max_deg[j], a[j]);
  }
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(basis.size()));
  std::vector<std::vector<double>> uni(dim);
  std::vector<double> row(dim);
  for (std::size_t j = 0; j < dim; ++j) uni[j].resize(static_cast<std::size_t>(max_deg[j]) + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) row[j] = X(i, static_cast<Eigen::Index>(j));
    input.check_domain(row);
    for (std::size_t j = 0; j < dim; ++j) univariate(input.marginals[j], row[j], max_deg[j], uni[j]);
    for (std::size_t k = 0; k < basis.size(); ++k) {
      double v = 1.0;
      const auto& a = basis.indices[k];
      for (std::size_t j = 0; j < dim; ++j) {
        if (a[j] != 0) v *= uni[j][static_cast<std::size_t>(a[j])];
      }
      out(i, static_cast<Eigen::Index>(k)) = v;
    }
  }
  return out;
}

// ---------------------------------------------------------------- least squares

double loo_error(const Eigen::VectorXd& y, const Eigen::VectorXd& residuals, const Eigen::VectorXd& leverage) {
  const Eigen::Index n = y.size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = residuals(i) / (1.0 - leverage(i));
    acc += e * e;
  }
  acc /= static_cast<double>(n);
  const double var = n > 1 ? (y.array() - y.mean()).square().sum() / static_cast<double>(n - 1) : 0.0;
  return var > 0.0 ? acc / var : acc;
}

double loo_correction(Eigen::Index n, Eigen::Index k, double trace_gram_inverse) {
  if (k >= n) return std::numeric_limits<double>::infinity();
  return static_cast<double>(n) / static_cast<double>(n - k) * (1.0 + trace_gram_inverse);
}

LeastSquaresFit ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  const Eigen::Index n = design.rows();
  const Eigen::Index k = design.cols();
  if (n != y.size()) throw DomainError("design/target size mismatch");
  if (n <= k) {
    throw SingularDesign("least squares needs more points (" + std::to_string(n) + ") than regressors (" +
                         std::to_string(k) + ")");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < k) throw SingularDesign("design matrix is rank deficient");
  LeastSquaresFit fit;
  fit.coefficients = qr.solve(y);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  const Eigen::VectorXd leverage = q.rowwise().squaredNorm();
  const Eigen::VectorXd residuals = y - design * fit.coefficients;
  fit.loo_error = loo_error(y, residuals, leverage);
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  fit.corrected_loo_error = fit.loo_error * loo_correction(n, k, rinv.squaredNorm());
  return fit;
}

LeastSquaresFit ols(const BasisSet& basis, const InputModel& input, const Eigen::MatrixXd& X,
                    const Eigen::VectorXd& y) {
  return ols(design_matrix(basis, input, X), y);
}

Eigen::VectorXd wls(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& variances) {
  if (variances.size() != y.size()) throw DomainError("weight/target size mismatch");
  if (!(variances.array() > 0.0).all() || !variances.allFinite()) {
    throw DomainError("weighted least squares requires positive finite variances");
  }
  const Eigen::VectorXd w = variances.cwiseInverse().cwiseSqrt();
  const Eigen::MatrixXd scaled = w.asDiagonal() * design;
  if (scaled.rows() < scaled.cols()) throw SingularDesign("weighted least squares is underdetermined");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  if (qr.rank() < design.cols()) throw SingularDesign("weighted design matrix is rank deficient");
  return qr.solve(w.cwiseProduct(y));
}

Eigen::VectorXd wls(const BasisSet& basis, const InputModel& input, const Eigen::MatrixXd& X,
                    const Eigen::VectorXd& y, const Eigen::VectorXd& variances) {
  return wls(design_matrix(basis, input, X), y, variances);
}

// ---------------------------------------------------------------- least angle regression

namespace {

/// Least angle regression over standardized candidate columns, one
/// activation per call to next().
class LarPath {
 public:
  LarPath(const Eigen::MatrixXd& design, const std::vector<std::size_t>& candidates, const Eigen::VectorXd& y)
      : n_(design.rows()) {
    for (std::size_t c : candidates) {
      Eigen::VectorXd col = design.col(static_cast<Eigen::Index>(c));
      col.array() -= col.mean();
      const double norm = col.norm();
      if (norm > 1e-12 * std::sqrt(static_cast<double>(n_))) {
        columns_.push_back(c);
        col /= norm;
        std_cols_.push_back(std::move(col));
      }
    }
    const auto p = static_cast<Eigen::Index>(std_cols_.size());
    x_.resize(n_, p);
    for (Eigen::Index j = 0; j < p; ++j) x_.col(j) = std_cols_[static_cast<std::size_t>(j)];
    std_cols_.clear();
    Eigen::VectorXd yc = y.array() - y.mean();
    y_norm_ = yc.norm();
    corr_ = x_.transpose() * yc;
    state_.assign(static_cast<std::size_t>(p), State::inactive);
    chol_ = Eigen::MatrixXd::Zero(std::min<Eigen::Index>(p, n_), std::min<Eigen::Index>(p, n_));
  }

  /// Original column index of the next activated regressor, or -1 when the path ends.
  long next() {
    while (true) {
      const auto p = static_cast<Eigen::Index>(state_.size());
      if (static_cast<Eigen::Index>(active_.size()) >= std::min<Eigen::Index>(p, n_ - 1)) return -1;
      double best = -1.0;
      Eigen::Index j_best = -1;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (state_[static_cast<std::size_t>(j)] != State::inactive) continue;
        const double c = std::abs(corr_(j));
        if (c > best) {
          best = c;
          j_best = j;
        }
      }
      if (j_best < 0 || best <= 1e-12 * std::max(y_norm_, 1e-300)) return -1;
      if (!add_to_cholesky(j_best)) {
        state_[static_cast<std::size_t>(j_best)] = State::excluded;
        continue;
      }
      state_[static_cast<std::size_t>(j_best)] = State::active;
      active_.push_back(j_best);
      step();
      return static_cast<long>(columns_[static_cast<std::size_t>(j_best)]);
    }
  }

 private:
  enum class State { inactive, active, excluded };

  bool add_to_cholesky(Eigen::Index j) {
    const auto k = static_cast<Eigen::Index>(active_.size());
    if (k >= chol_.rows()) return false;
    Eigen::VectorXd v(k);
    for (Eigen::Index a = 0; a < k; ++a) v(a) = x_.col(active_[static_cast<std::size_t>(a)]).dot(x_.col(j));
    Eigen::VectorXd l = v;
    if (k > 0) chol_.topLeftCorner(k, k).triangularView<Eigen::Lower>().solveInPlace(l);
    const double d2 = 1.0 - l.squaredNorm();
    if (d2 < 1e-10) return false;
    chol_.row(k).head(k) = l.transpose();
    chol_(k, k) = std::sqrt(d2);
    return true;
  }

  void step() {
    const auto k = static_cast<Eigen::Index>(active_.size());
    Eigen::VectorXd signs(k);
    double c_max = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) {
      const double c = corr_(active_[static_cast<std::size_t>(a)]);
      signs(a) = c >= 0.0 ? 1.0 : -1.0;
      c_max = std::max(c_max, std::abs(c));
    }
    const auto lower = chol_.topLeftCorner(k, k).triangularView<Eigen::Lower>();
    Eigen::VectorXd w = lower.solve(signs);
    lower.transpose().solveInPlace(w);
    const double norm_const = 1.0 / std::sqrt(std::max(signs.dot(w), 1e-300));
    w *= norm_const;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n_);
    for (Eigen::Index a = 0; a < k; ++a) u += w(a) * x_.col(active_[static_cast<std::size_t>(a)]);
    const Eigen::VectorXd along = x_.transpose() * u;
    double gamma = c_max / norm_const;
    for (Eigen::Index j = 0; j < along.size(); ++j) {
      if (state_[static_cast<std::size_t>(j)] != State::inactive) continue;
      const double g1 = (c_max - corr_(j)) / (norm_const - along(j));
      const double g2 = (c_max + corr_(j)) / (norm_const + along(j));
      if (g1 > 1e-14 && g1 < gamma) gamma = g1;
      if (g2 > 1e-14 && g2 < gamma) gamma = g2;
    }
    corr_ -= gamma * along;
  }

  Eigen::Index n_;
  std::vector<std::size_t> columns_;
  std::vector<Eigen::VectorXd> std_cols_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd corr_;
  double y_norm_ = 0.0;
  std::vector<State> state_;
  std::vector<Eigen::Index> active_;
  Eigen::MatrixXd chol_;
};

/// Gram-Schmidt orthonormal basis of the growing regressor set, tracking
/// fitted values and leverages so each prefix's LOO error costs O(n k).
class IncrementalOls {
 public:
  IncrementalOls(const Eigen::VectorXd& y, std::size_t capacity)
      : y_(y), q_(y.size(), static_cast<Eigen::Index>(capacity)), fitted_(Eigen::VectorXd::Zero(y.size())),
        leverage_(Eigen::VectorXd::Zero(y.size())),
        rinv_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(capacity), static_cast<Eigen::Index>(capacity))) {}

  /// Returns false (and leaves the state unchanged) for a numerically dependent column.
  bool add(const Eigen::VectorXd& column) {
    if (k_ >= q_.cols()) return false;
    Eigen::VectorXd v = column;
    const double original = v.norm();
    if (original == 0.0) return false;
    Eigen::VectorXd r = Eigen::VectorXd::Zero(k_);
    for (int pass = 0; pass < 2 && k_ > 0; ++pass) {
      const Eigen::VectorXd proj = q_.leftCols(k_).transpose() * v;
      v -= q_.leftCols(k_) * proj;
      r += proj;
    }
    const double norm = v.norm();
    if (norm < 1e-9 * original) return false;
    v /= norm;
    // R^-1 grows by the column [-R^-1 r / norm; 1 / norm].
    Eigen::VectorXd col(k_ + 1);
    if (k_ > 0) col.head(k_) = -(rinv_.topLeftCorner(k_, k_).triangularView<Eigen::Upper>() * r) / norm;
    col(k_) = 1.0 / norm;
    rinv_.col(k_).head(k_ + 1) = col;
    trace_inv_ += col.squaredNorm();
    q_.col(k_) = v;
    ++k_;
    fitted_ += v * v.dot(y_);
    leverage_ += v.cwiseAbs2();
    return true;
  }

  /// LOO error scaled by the small-sample correction factor.
  double corrected_loo() const {
    if (k_ >= y_.size()) return std::numeric_limits<double>::infinity();
    return loo() * loo_correction(y_.size(), k_, trace_inv_);
  }

  double loo() const {
    if (k_ >= y_.size()) return std::numeric_limits<double>::infinity();
    return loo_error(y_, y_ - fitted_, leverage_);
  }

  Eigen::Index size() const { return k_; }

  /// Weights on the selected columns of the newest orthonormal direction, and its coefficient.
  Eigen::VectorXd last_direction() const { return rinv_.col(k_ - 1).head(k_); }
  double last_step() const { return q_.col(k_ - 1).dot(y_); }

 private:
  const Eigen::VectorXd& y_;
  Eigen::MatrixXd q_;
  Eigen::Index k_ = 0;
  Eigen::VectorXd fitted_;
  Eigen::VectorXd leverage_;
  Eigen::MatrixXd rinv_;
  double trace_inv_ = 0.0;
};

std::size_t zero_index_position(const BasisSet& basis) {
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (std::all_of(basis.indices[k].begin(), basis.indices[k].end(), [](int a) { return a == 0; })) return k;
  }
  return basis.size();
}

// Relative held-out error of the first k = 1..max_terms path terms, one row per fold.
// Each fold reruns LAR on its own training rows; rows go to fold i % folds.
Eigen::MatrixXd lar_cv_errors(const Eigen::MatrixXd& design, std::size_t zero,
                                  const std::vector<std::size_t>& others, const Eigen::VectorXd& y,
                                  std::size_t folds, std::size_t max_terms) {
  const Eigen::Index n = design.rows();
  Eigen::MatrixXd sse = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(folds), static_cast<Eigen::Index>(max_terms));
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < n; ++i) (static_cast<std::size_t>(i) % folds == f ? test : train).push_back(i);
    const Eigen::MatrixXd dtr = design(train, Eigen::all);
    const Eigen::MatrixXd dte = design(test, Eigen::all);
    const Eigen::VectorXd ytr = y(train);
    const Eigen::VectorXd yte = y(test);
    const auto cap = std::min<std::size_t>(max_terms, train.size() >= 3 ? train.size() - 3 : 1);
    IncrementalOls inc(ytr, cap);
    std::vector<std::size_t> cols;
    Eigen::VectorXd pred = Eigen::VectorXd::Zero(yte.size());
    auto take = [&](std::size_t c) {
      if (!inc.add(dtr.col(static_cast<Eigen::Index>(c)))) return false;
      cols.push_back(c);
      const Eigen::VectorXd w = inc.last_direction();
      Eigen::VectorXd dir = Eigen::VectorXd::Zero(yte.size());
      for (std::size_t k = 0; k < cols.size(); ++k) dir += w(static_cast<Eigen::Index>(k)) * dte.col(static_cast<Eigen::Index>(cols[k]));
      pred += inc.last_step() * dir;
      return true;
    };
    take(zero);
    double last = (yte - pred).squaredNorm();
    sse(static_cast<Eigen::Index>(f), 0) = last;
    LarPath path(dtr, others, ytr);
    std::size_t k = 1;
    while (k < max_terms) {
      if (cols.size() < cap) {
        const long j = path.next();
        if (j >= 0) {
          if (!take(static_cast<std::size_t>(j))) continue;
          last = (yte - pred).squaredNorm();
        }
      }
      // A shorter fold path keeps its last error for longer prefixes.
      sse(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k++)) = last;
    }
  }
  const double var = (y.array() - y.mean()).square().sum();
  if (var > 0.0) sse *= static_cast<double>(folds) / var;
  return sse;
}

}  // namespace

std::vector<std::size_t> lar_path(const Eigen::MatrixXd& design, const std::vector<std::size_t>& candidates,
                                  const Eigen::VectorXd& y, std::size_t max_steps) {
  LarPath path(design, candidates, y);
  std::vector<std::size_t> order;
  while (order.size() < max_steps) {
    const long j = path.next();
    if (j < 0) break;
    order.push_back(static_cast<std::size_t>(j));
  }
  return order;
}

SparseFit hybrid_lar(const BasisSet& candidates, const InputModel& input, const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& y, const LarOptions& options) {
  BasisSet cand = candidates;
  std::size_t zero = zero_index_position(cand);
  if (zero == cand.size()) {
    cand.indices.insert(cand.indices.begin(), MultiIndex(input.dimension(), 0));
    zero = 0;
  }
  const Eigen::MatrixXd design = design_matrix(cand, input, X);
  const auto n = static_cast<std::size_t>(X.rows());
  if (n < 2) throw SingularDesign("hybrid LAR needs at least two points");

  std::vector<std::size_t> others;
  for (std::size_t k = 0; k < cand.size(); ++k) {
    if (k != zero) others.push_back(k);
  }
  const auto cap = std::min({others.size(), static_cast<std::size_t>(options.max_terms_fraction * n),
                             n >= 3 ? n - 3 : std::size_t{0}});

  IncrementalOls inc(y, cap + 1);
  inc.add(design.col(static_cast<Eigen::Index>(zero)));
  std::vector<std::size_t> selected{zero};
  auto criterion = [&]() { return options.corrected_loo ? inc.corrected_loo() : inc.loo(); };
  double best_loo = criterion();
  std::size_t best_count = 1;
  std::size_t since_best = 0;

  LarPath path(design, others, y);
  while (selected.size() < cap + 1) {
    const long j = path.next();
    if (j < 0) break;
    if (!inc.add(design.col(j))) continue;
    selected.push_back(static_cast<std::size_t>(j));
    const double loo = criterion();
    if (loo < best_loo) {
      best_loo = loo;
      best_count = selected.size();
      since_best = 0;
    } else if (options.patience > 0 && ++since_best >= options.patience) {
      break;
    }
  }

  double cv_error = 0.0;
  if (options.cv_folds >= 2 && n >= 10 * options.cv_folds) {
    const Eigen::MatrixXd folds = lar_cv_errors(design, zero, others, y, options.cv_folds, selected.size());
    const Eigen::VectorXd mean = folds.colwise().mean().transpose();
    Eigen::Index kmin = 0;
    mean.minCoeff(&kmin);
    best_count = static_cast<std::size_t>(kmin) + 1;
    cv_error = mean(kmin);
  }

  selected.resize(best_count);
  std::sort(selected.begin(), selected.end());
  SparseFit fit;
  fit.basis.degree = candidates.degree;
  fit.basis.qnorm = candidates.qnorm;
  Eigen::MatrixXd sub(design.rows(), static_cast<Eigen::Index>(selected.size()));
  for (std::size_t k = 0; k < selected.size(); ++k) {
    fit.basis.indices.push_back(cand.indices[selected[k]]);
    sub.col(static_cast<Eigen::Index>(k)) = design.col(static_cast<Eigen::Index>(selected[k]));
  }
  auto ls = ols(sub, y);
  fit.coefficients = std::move(ls.coefficients);
  fit.loo_error = ls.loo_error;
  fit.selection_error = options.corrected_loo ? ls.corrected_loo_error : ls.loo_error;
  if (options.cv_folds >= 2 && n >= 10 * options.cv_folds) fit.selection_error = cv_error;
  return fit;
}

SparseFit aols(const InputModel& input, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const std::vector<int>& degrees, const std::vector<double>& qnorms, const AdaptiveOptions& options) {
  if (degrees.empty() || qnorms.empty()) throw DomainError("adaptive least squares needs candidate degrees and q-norms");
  std::vector<int> sorted_degrees = degrees;
  std::sort(sorted_degrees.begin(), sorted_degrees.end());
  sorted_degrees.erase(std::unique(sorted_degrees.begin(), sorted_degrees.end()), sorted_degrees.end());

  std::optional<SparseFit> best;
  std::string last_error;
  for (double q : qnorms) {
    double best_for_q = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int p : sorted_degrees) {
      SparseFit fit;
      try {
        fit = hybrid_lar(enumerate_basis(input.dimension(), p, q), input, X, y, options.lar);
      } catch (const SingularDesign& e) {
        last_error = e.what();
        continue;
      }
      if (!best || fit.selection_error < best->selection_error) best = fit;
      if (fit.selection_error < best_for_q) {
        best_for_q = fit.selection_error;
        stale = 0;
      } else if (options.degree_early_stop > 0 && ++stale >= options.degree_early_stop) {
        break;
      }
    }
  }
  if (!best) throw FitError("every candidate (degree, q-norm) fit was singular: " + last_error);
  return *best;
}

// ---------------------------------------------------------------- model

double PceModel::evaluate(std::span<const double> x) const { return eval_basis(basis, input, x).dot(coefficients); }

Eigen::VectorXd PceModel::evaluate(const Eigen::MatrixXd& X) const {
  return design_matrix(basis, input, X) * coefficients;
}

double PceModel::mean() const {
  const auto z = zero_index_position(basis);
  return z < basis.size() ? coefficients(static_cast<Eigen::Index>(z)) : 0.0;
}

double PceModel::variance() const {
  const auto z = zero_index_position(basis);
  double v = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (k != z) v += coefficients(static_cast<Eigen::Index>(k)) * coefficients(static_cast<Eigen::Index>(k));
  }
  return v;
}

SobolReport sobol_from_pce(const PceModel& model, std::size_t max_order) {
  const std::size_t dim = model.input.dimension();
  std::map<Subset, double> by_support;
  double total_var = 0.0;
  for (std::size_t k = 0; k < model.basis.size(); ++k) {
    Subset support;
    for (std::size_t j = 0; j < dim; ++j) {
      if (model.basis.indices[k][j] > 0) support.push_back(static_cast<int>(j));
    }
    if (support.empty()) continue;
    const double c = model.coefficients(static_cast<Eigen::Index>(k));
    by_support[support] += c * c;
    total_var += c * c;
  }
  if (!(total_var > 0.0)) throw UndefinedIndex("PCE has zero variance; Sobol' indices are undefined");

  auto closed = [&](const Subset& u) {
    double acc = 0.0;
    for (const auto& [s, v] : by_support) {
      if (std::includes(u.begin(), u.end(), s.begin(), s.end())) acc += v;
    }
    return acc / total_var;
  };
  auto total = [&](const Subset& u) {
    double acc = 0.0;
    for (const auto& [s, v] : by_support) {
      const bool hit = std::any_of(s.begin(), s.end(), [&](int j) { return std::binary_search(u.begin(), u.end(), j); });
      if (hit) acc += v;
    }
    return acc / total_var;
  };

  SobolReport report;
  report.estimator = "pce";
  report.dimension = dim;
  for (std::size_t j = 0; j < dim; ++j) {
    const Subset u{static_cast<int>(j)};
    auto& e = report.upsert(u);
    e.first_order = closed(u);
    e.total = total(u);
  }
  std::vector<Subset> higher;
  for (const auto& [s, v] : by_support) {
    if (s.size() >= 2 && s.size() <= max_order) higher.push_back(s);
  }
  std::stable_sort(higher.begin(), higher.end(), [](const Subset& a, const Subset& b) { return a.size() < b.size(); });
  for (const auto& u : higher) {
    auto& e = report.upsert(u);
    e.first_order = closed(u);
    e.total = total(u);
    e.higher_order = by_support.at(u) / total_var;
  }
  return report;
}

}  // namespace glamsa::pce
