#include "glamsa/sensitivity.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include "glamsa/errors.hpp"

namespace glamsa::sens {

namespace {

std::string format_param(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shortbuf[64];
    std::snprintf(shortbuf, sizeof shortbuf, "%.*g", prec, v);
    if (std::strtod(shortbuf, nullptr) == v) return shortbuf;
  }
  return buf;
}

std::uint64_t hash_point(std::span<const double> x) {
  std::uint64_t h = 0x2545f4914f6cdd1dULL;
  for (double v : x) h = mix64(h ^ std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v));
  return h;
}

double sample_variance(const Eigen::VectorXd& v) {
  const auto n = static_cast<double>(v.size());
  return (v.array() - v.mean()).square().sum() / (n - 1.0);
}

std::vector<double> row_of(const Eigen::MatrixXd& X, Eigen::Index i) {
  std::vector<double> r(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index j = 0; j < X.cols(); ++j) r[static_cast<std::size_t>(j)] = X(i, j);
  return r;
}

double janon_indexed(const Eigen::VectorXd& y, const Eigen::VectorXd& yf, const std::vector<std::size_t>& idx) {
  double sum = 0.0, prod = 0.0, sq = 0.0;
  for (auto k : idx) {
    const auto i = static_cast<Eigen::Index>(k);
    sum += y(i) + yf(i);
    prod += y(i) * yf(i);
    sq += y(i) * y(i) + yf(i) * yf(i);
  }
  const double n = static_cast<double>(idx.size());
  const double mu = sum / (2.0 * n);
  const double den = sq / (2.0 * n) - mu * mu;
  if (!(den > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return (prod / n - mu * mu) / den;
}

}  // namespace

// ---------------------------------------------------------------- QoI

void QoiSpec::validate() const {
  if ((kind == QoiKind::quantile || kind == QoiKind::superquantile) && !(param > 0.0 && param < 1.0)) {
    throw DomainError(label() + ": level must lie in (0,1)");
  }
  if (kind == QoiKind::entropy && n_mc == 0) throw DomainError("entropy needs at least one Monte Carlo sample");
  if (!std::isfinite(param)) throw DomainError("QoI parameter must be finite");
}

std::string QoiSpec::label() const {
  switch (kind) {
    case QoiKind::mean: return "mean";
    case QoiKind::variance: return "variance";
    case QoiKind::std: return "std";
    case QoiKind::quantile: return "quantile(" + format_param(param) + ")";
    case QoiKind::superquantile: return "superquantile(" + format_param(param) + ")";
    case QoiKind::expected_payoff: return "expected_payoff(" + format_param(param) + ")";
    case QoiKind::entropy: return n_mc == 10000 ? "entropy" : "entropy(" + std::to_string(n_mc) + ")";
  }
  return "unknown";
}

QoiSpec QoiSpec::parse(const std::string& text) {
  std::string name = text;
  std::string arg;
  const auto open = text.find('(');
  if (open != std::string::npos) {
    if (text.back() != ')') throw InputError("malformed QoI '" + text + "'");
    name = text.substr(0, open);
    arg = text.substr(open + 1, text.size() - open - 2);
  }
  auto number = [&]() {
    if (arg.empty()) throw InputError("QoI '" + name + "' needs a parameter");
    char* end = nullptr;
    const double v = std::strtod(arg.c_str(), &end);
    if (end == arg.c_str() || *end != '\0') throw InputError("bad QoI parameter '" + arg + "'");
    return v;
  };
  QoiSpec q;
  if (name == "mean") {
    q = mean();
  } else if (name == "variance") {
    q = variance();
  } else if (name == "std") {
    q = std_dev();
  } else if (name == "quantile") {
    q = quantile(number());
  } else if (name == "superquantile") {
    q = superquantile(number());
  } else if (name == "expected_payoff") {
    q = expected_payoff(arg.empty() ? 1.0 : number());
  } else if (name == "entropy") {
    q = entropy(arg.empty() ? 10000 : static_cast<std::size_t>(number()));
  } else {
    throw InputError("unknown QoI '" + text + "'");
  }
  try {
    q.validate();
  } catch (const DomainError& e) {
    throw InputError(e.what());
  }
  return q;
}

double qoi_value(const gld::GldParams& p, const QoiSpec& q, std::span<const double> x, std::uint64_t seed) {
  switch (q.kind) {
    case QoiKind::mean: return gld::mean(p);
    case QoiKind::variance: return gld::variance(p);
    case QoiKind::std: return std::sqrt(gld::variance(p));
    case QoiKind::quantile: return gld::quantile(p, q.param);
    case QoiKind::superquantile: return gld::superquantile(p, q.param);
    case QoiKind::expected_payoff: return gld::expected_payoff(p, q.param);
    case QoiKind::entropy: {
      Rng rng = Rng::substream(seed, {hash_point(x)});
      return gld::entropy_mc(p, rng, q.n_mc);
    }
  }
  throw DomainError("unknown QoI");
}

Surface qoi_surface(const glam::GlamModel& g, const QoiSpec& q, std::uint64_t seed) {
  q.validate();
  return [g, q, seed](const Eigen::MatrixXd& X) {
    const auto params = g.predict(X);
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const auto row = row_of(X, i);
      out(i) = qoi_value(params[static_cast<std::size_t>(i)], q, row, seed);
    }
    return out;
  };
}

Surface emulator_surface(const glam::GlamModel& g) {
  return [g](const Eigen::MatrixXd& Z) {
    const Eigen::Index m = Z.cols() - 1;
    const auto params = g.predict(Eigen::MatrixXd(Z.leftCols(m)));
    Eigen::VectorXd out(Z.rows());
    for (Eigen::Index i = 0; i < Z.rows(); ++i) out(i) = gld::quantile(params[static_cast<std::size_t>(i)], Z(i, m));
    return out;
  };
}

// ---------------------------------------------------------------- pick-freeze

double janon(const Eigen::VectorXd& y, const Eigen::VectorXd& y_frozen) {
  if (y.size() != y_frozen.size() || y.size() < 2) throw DomainError("pick-freeze samples must be paired");
  std::vector<std::size_t> idx(static_cast<std::size_t>(y.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const double s = janon_indexed(y, y_frozen, idx);
  if (std::isnan(s)) throw UndefinedIndex("zero output variance; Sobol' index undefined");
  return s;
}

Interval bootstrap_ci(const Eigen::VectorXd& y, const Eigen::VectorXd& y_frozen, std::size_t n_boot, double level,
                      Rng& rng, bool complement) {
  const double point = complement ? 1.0 - janon(y, y_frozen) : janon(y, y_frozen);
  if (n_boot <= 1) return {point, point};
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0,1)");
  const auto n = static_cast<std::size_t>(y.size());
  std::vector<std::size_t> idx(n);
  std::vector<double> stats;
  stats.reserve(n_boot);
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (auto& k : idx) k = static_cast<std::size_t>(rng.below(n));
    const double s = janon_indexed(y, y_frozen, idx);
    if (!std::isnan(s)) stats.push_back(complement ? 1.0 - s : s);
  }
  if (stats.empty()) return {point, point};
  std::sort(stats.begin(), stats.end());
  auto pick = [&](double p) {
    const double pos = p * static_cast<double>(stats.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, stats.size() - 1);
    return stats[lo] + (pos - static_cast<double>(lo)) * (stats[hi] - stats[lo]);
  };
  const double tail = 0.5 * (1.0 - level);
  return {pick(tail), pick(1.0 - tail)};
}

std::vector<Subset> default_subsets(std::size_t dim) {
  std::vector<Subset> out;
  for (std::size_t j = 0; j < dim; ++j) out.push_back({static_cast<int>(j)});
  if (dim > 1) {
    Subset all(dim);
    std::iota(all.begin(), all.end(), 0);
    out.push_back(all);
  }
  return out;
}

SobolReport pickfreeze(const Surface& f, const std::function<Eigen::MatrixXd(Rng&, std::size_t)>& sampler,
                       std::size_t dim, const std::vector<Subset>& subsets, std::size_t n_mc, Rng& rng,
                       const BootstrapOptions& boot) {
  if (n_mc < 100) throw DomainError("pick-freeze needs at least 100 samples");
  const Eigen::MatrixXd A = sampler(rng, n_mc);
  const Eigen::MatrixXd B = sampler(rng, n_mc);
  if (static_cast<std::size_t>(A.cols()) != dim) throw DomainError("sampler dimension mismatch");
  const Eigen::VectorXd ya = f(A);
  SobolReport report;
  report.estimator = "pick-freeze";
  report.sample_size = n_mc;
  report.dimension = dim;
  for (const auto& u : subsets) {
    for (int j : u) {
      if (j < 0 || static_cast<std::size_t>(j) >= dim) throw DomainError("subset index out of range");
    }
    Eigen::MatrixXd C = B;
    Eigen::MatrixXd D = A;
    for (int j : u) {
      C.col(j) = A.col(j);
      D.col(j) = B.col(j);
    }
    const Eigen::VectorXd yc = f(C);
    const Eigen::VectorXd yd = f(D);
    auto& e = report.upsert(u);
    e.first_order = janon(ya, yc);
    e.total = 1.0 - janon(ya, yd);
    if (boot.n_boot > 0) {
      e.first_order_ci = bootstrap_ci(ya, yc, boot.n_boot, boot.level, rng, false);
      e.total_ci = bootstrap_ci(ya, yd, boot.n_boot, boot.level, rng, true);
    }
  }
  return report;
}

SobolReport classical_sobol_pickfreeze(const glam::GlamModel& g, const pce::InputModel& input,
                                       const std::vector<Subset>& subsets, std::size_t n_mc, Rng& rng,
                                       const BootstrapOptions& boot) {
  const std::size_t m = input.dimension();
  auto sampler = [&input, m](Rng& r, std::size_t n) {
    Eigen::MatrixXd Z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m + 1));
    Z.leftCols(static_cast<Eigen::Index>(m)) = input.sample(r, n);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) Z(i, static_cast<Eigen::Index>(m)) = r.uniform();
    return Z;
  };
  auto report = pickfreeze(emulator_surface(g), sampler, m + 1, subsets.empty() ? default_subsets(m) : subsets, n_mc,
                           rng, boot);
  report.qoi = "classical";
  report.dimension = m;
  return report;
}

SobolReport surface_sobol_pickfreeze(const Surface& f, const pce::InputModel& input, const std::vector<Subset>& subsets,
                                     std::size_t n_mc, Rng& rng, const BootstrapOptions& boot) {
  auto sampler = [&input](Rng& r, std::size_t n) { return input.sample(r, n); };
  return pickfreeze(f, sampler, input.dimension(), subsets.empty() ? default_subsets(input.dimension()) : subsets,
                    n_mc, rng, boot);
}

// ---------------------------------------------------------------- PCE route

namespace {

pce::SparseFit fit_surface(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const pce::InputModel& input,
                           const PceSensitivityOptions& options) {
  if (!y.allFinite()) throw DomainError("surface produced non-finite values");
  return pce::aols(input, X, y, options.degrees, options.qnorms, options.adaptive);
}

void apply_quality_gate(SobolReport& report, double loo, const PceSensitivityOptions& options) {
  report.loo_error = loo;
  report.loo_warning = loo > options.loo_threshold;
  if (report.loo_warning) {
    report.note = "PCE leave-one-out error " + std::to_string(loo) + " exceeds " + std::to_string(options.loo_threshold);
  }
}

}  // namespace

SobolReport surface_sobol_pce(const Surface& f, const pce::InputModel& input, std::size_t n_pc, Rng& rng,
                              const PceSensitivityOptions& options) {
  if (n_pc < 10 * input.dimension()) throw DomainError("PCE route needs at least 10 samples per input");
  const Eigen::MatrixXd X = input.sample(rng, n_pc);
  const Eigen::VectorXd y = f(X);
  const auto fit = fit_surface(X, y, input, options);
  auto report = pce::sobol_from_pce(pce::PceModel{fit.basis, fit.coefficients, input}, options.max_order);
  report.sample_size = n_pc;
  apply_quality_gate(report, fit.loo_error, options);
  return report;
}

SobolReport qoi_sobol_pce(const glam::GlamModel& g, const pce::InputModel& input, const QoiSpec& q, std::size_t n_pc,
                          Rng& rng, const PceSensitivityOptions& options, std::uint64_t qoi_seed) {
  auto report = surface_sobol_pce(qoi_surface(g, q, qoi_seed), input, n_pc, rng, options);
  report.qoi = q.label();
  return report;
}

SobolReport classical_sobol_pce(const glam::GlamModel& g, const pce::InputModel& input, std::size_t n_pc, Rng& rng,
                                const PceSensitivityOptions& options) {
  const std::size_t m = input.dimension();
  if (n_pc < 10 * (m + 1)) throw DomainError("PCE route needs at least 10 samples per input");
  pce::InputModel augmented = input;
  augmented.marginals.push_back(pce::Marginal::uniform(0.0, 1.0));
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(n_pc), static_cast<Eigen::Index>(m + 1));
  Z.leftCols(static_cast<Eigen::Index>(m)) = input.sample(rng, n_pc);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) Z(i, static_cast<Eigen::Index>(m)) = rng.uniform();
  const Eigen::VectorXd y = emulator_surface(g)(Z);
  const auto fit = fit_surface(Z, y, augmented, options);

  std::map<Subset, double> by_support;
  double total_var = 0.0;
  for (std::size_t k = 0; k < fit.basis.size(); ++k) {
    Subset s;
    for (std::size_t j = 0; j <= m; ++j) {
      if (fit.basis.indices[k][j] > 0) s.push_back(static_cast<int>(j));
    }
    if (s.empty()) continue;
    const double c = fit.coefficients(static_cast<Eigen::Index>(k));
    by_support[s] += c * c;
    total_var += c * c;
  }
  if (!(total_var > 0.0)) throw UndefinedIndex("emulator output has zero variance");
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
      if (std::any_of(s.begin(), s.end(), [&](int j) { return std::binary_search(u.begin(), u.end(), j); })) acc += v;
    }
    return acc / total_var;
  };

  SobolReport report;
  report.qoi = "classical";
  report.estimator = "pce";
  report.sample_size = n_pc;
  report.dimension = m;
  for (std::size_t j = 0; j < m; ++j) {
    const Subset u{static_cast<int>(j)};
    auto& e = report.upsert(u);
    e.first_order = closed(u);
    e.total = total(u);
  }
  for (const auto& [s, v] : by_support) {
    if (s.size() < 2 || s.size() > options.max_order || s.back() == static_cast<int>(m)) continue;
    auto& e = report.upsert(s);
    e.first_order = closed(s);
    e.total = total(s);
    e.higher_order = v / total_var;
  }
  if (m > 1) {
    Subset all(m);
    std::iota(all.begin(), all.end(), 0);
    auto& e = report.upsert(all);
    e.first_order = closed(all);
    e.total = total(all);
  }
  apply_quality_gate(report, fit.loo_error, options);
  return report;
}

// ---------------------------------------------------------------- SNR and errors

double snr(const glam::GlamModel& g, const pce::InputModel& input, std::size_t n_mc, Rng& rng) {
  if (n_mc < 1000) throw DomainError("SNR estimation needs at least 1000 samples");
  const Eigen::MatrixXd X = input.sample(rng, n_mc);
  const auto params = g.predict(X);
  Eigen::VectorXd m(X.rows()), y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto& p = params[static_cast<std::size_t>(i)];
    m(i) = gld::mean(p);
    y(i) = gld::quantile(p, rng.uniform());
  }
  const double var_m = sample_variance(m);
  const double noise = sample_variance(y) - var_m;
  if (!(noise > 0.0)) throw UndefinedIndex("SNR undefined: estimated residual variance is not positive");
  return var_m / noise;
}

double snr_replicated(const std::function<double(std::span<const double>, Rng&)>& sim, const pce::InputModel& input,
                      std::size_t n_points, std::size_t R, std::uint64_t seed) {
  if (n_points < 2 || R < 2) throw DomainError("replicated SNR needs at least two points and two replications");
  Eigen::VectorXd means(static_cast<Eigen::Index>(n_points));
  double within = 0.0;
  for (std::size_t i = 0; i < n_points; ++i) {
    Rng xr = Rng::substream(seed, {i, ~std::uint64_t{0}});
    const Eigen::VectorXd x = input.sample(xr);
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    Eigen::VectorXd reps(static_cast<Eigen::Index>(R));
    for (std::size_t r = 0; r < R; ++r) {
      Rng rr = Rng::substream(seed, {i, r});
      reps(static_cast<Eigen::Index>(r)) = sim(xs, rr);
    }
    means(static_cast<Eigen::Index>(i)) = reps.mean();
    within += sample_variance(reps);
  }
  within /= static_cast<double>(n_points);
  const double var_m = sample_variance(means) - within / static_cast<double>(R);
  if (!(within > 0.0)) throw UndefinedIndex("SNR undefined: no intrinsic variance");
  return var_m / within;
}

double snr_analytic(const std::function<double(std::span<const double>)>& mean,
                    const std::function<double(std::span<const double>)>& variance, const pce::InputModel& input,
                    std::size_t n_mc, Rng& rng) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(n_mc));
  double v = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const Eigen::VectorXd x = input.sample(rng);
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    m(static_cast<Eigen::Index>(i)) = mean(xs);
    v += variance(xs);
  }
  v /= static_cast<double>(n_mc);
  if (!(v > 0.0)) throw UndefinedIndex("SNR undefined: no intrinsic variance");
  return sample_variance(m) / v;
}

double error_q_metric(const QuantileFn& candidate, const QuantileFn& reference, const pce::InputModel& input,
                      std::size_t n_test, Rng& rng) {
  if (n_test < 2) throw DomainError("error metric needs at least two test points");
  Eigen::VectorXd ref(static_cast<Eigen::Index>(n_test));
  double sq = 0.0;
  for (std::size_t i = 0; i < n_test; ++i) {
    const Eigen::VectorXd x = input.sample(rng);
    const double u = rng.uniform();
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    const double r = reference(u, xs);
    const double c = candidate(u, xs);
    ref(static_cast<Eigen::Index>(i)) = r;
    sq += (r - c) * (r - c);
  }
  const double var = sample_variance(ref);
  if (!(var > 0.0)) throw UndefinedIndex("reference quantiles have zero variance");
  return sq / static_cast<double>(n_test) / var;
}

double error_q_metric(const glam::GlamModel& g, const QuantileFn& reference, const pce::InputModel& input,
                      std::size_t n_test, Rng& rng) {
  if (n_test < 2) throw DomainError("error metric needs at least two test points");
  const Eigen::MatrixXd X = input.sample(rng, n_test);
  const auto params = g.predict(X);
  Eigen::VectorXd ref(X.rows());
  double sq = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double u = rng.uniform();
    const auto row = row_of(X, i);
    const double r = reference(u, row);
    const double c = gld::quantile(params[static_cast<std::size_t>(i)], u);
    ref(i) = r;
    sq += (r - c) * (r - c);
  }
  const double var = sample_variance(ref);
  if (!(var > 0.0)) throw UndefinedIndex("reference quantiles have zero variance");
  return sq / static_cast<double>(n_test) / var;
}

double error_qoi_metric(const Surface& candidate, const std::function<double(std::span<const double>)>& reference,
                        const pce::InputModel& input, std::size_t n_test, Rng& rng) {
  if (n_test < 2) throw DomainError("error metric needs at least two test points");
  const Eigen::MatrixXd X = input.sample(rng, n_test);
  const Eigen::VectorXd c = candidate(X);
  Eigen::VectorXd r(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) r(i) = reference(row_of(X, i));
  const double var = sample_variance(r);
  if (!(var > 0.0)) throw UndefinedIndex("reference QoI has zero variance");
  return (r - c).squaredNorm() / static_cast<double>(n_test) / var;
}

double error_qoi_metric(const glam::GlamModel& g, const std::function<double(std::span<const double>)>& reference,
                        const QoiSpec& q, const pce::InputModel& input, std::size_t n_test, Rng& rng,
                        std::uint64_t qoi_seed) {
  return error_qoi_metric(qoi_surface(g, q, qoi_seed), reference, input, n_test, rng);
}

}  // namespace glamsa::sens
