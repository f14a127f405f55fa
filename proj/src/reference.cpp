#include "glamsa/reference.hpp"

#include <algorithm>
#include <bit>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include "glamsa/errors.hpp"

namespace glamsa::ref {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t point_key(std::span<const double> x) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (double v : x) h = mix64(h ^ std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v));
  return h;
}

double variance_of(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double s = 0.0;
  for (double y : v) s += (y - m) * (y - m);
  return s / (n - 1.0);
}

std::vector<double> run_point(const sim::Simulator& sim, std::span<const double> x, std::size_t R,
                              std::uint64_t seed) {
  Rng rng = Rng::substream(seed, {point_key(x)});
  std::vector<double> out(R);
  for (auto& y : out) y = sim.eval(x, rng);
  return out;
}

}  // namespace

double sample_qoi(std::vector<double> v, const sens::QoiSpec& q) {
  q.validate();
  if (v.size() < 2) throw DomainError("sample QoI needs at least two runs");
  switch (q.kind) {
    case sens::QoiKind::mean:
      return sim::sample_mean(v);
    case sens::QoiKind::variance:
      return variance_of(v);
    case sens::QoiKind::std:
      return sim::sample_std(v);
    case sens::QoiKind::quantile: {
      std::sort(v.begin(), v.end());
      const auto k = std::min(v.size() - 1, static_cast<std::size_t>(std::floor(q.param * static_cast<double>(v.size()))));
      return v[k];
    }
    case sens::QoiKind::superquantile:
      return sim::sample_superquantile(std::move(v), q.param);
    case sens::QoiKind::expected_payoff: {
      double s = 0.0;
      for (double y : v) s += std::max(0.0, y - q.param);
      return s / static_cast<double>(v.size());
    }
    case sens::QoiKind::entropy:
      break;
  }
  throw DomainError("no replication estimate for " + q.label());
}

double toy_qoi(std::span<const double> x, const sens::QoiSpec& q) {
  q.validate();
  static const boost::math::normal_distribution<double> standard;
  // Y = shift + exp(mu + sigma Z).
  const double mu = x[0] / kPi, sigma = x[2];
  const double shift = sim::toy_mean(x) - std::exp(mu + 0.5 * sigma * sigma);
  const double lognormal_mean = std::exp(mu + 0.5 * sigma * sigma);
  switch (q.kind) {
    case sens::QoiKind::mean:
      return sim::toy_mean(x);
    case sens::QoiKind::variance:
      return sim::toy_variance(x);
    case sens::QoiKind::std:
      return std::sqrt(sim::toy_variance(x));
    case sens::QoiKind::quantile:
      return sim::toy_quantile(q.param, x);
    case sens::QoiKind::superquantile: {
      const double z = boost::math::quantile(standard, q.param);
      return shift + lognormal_mean * boost::math::cdf(boost::math::complement(standard, z - sigma)) / (1.0 - q.param);
    }
    case sens::QoiKind::expected_payoff: {
      const double k = q.param - shift;
      if (k <= 0.0) return sim::toy_mean(x) - q.param;
      const double d2 = (mu - std::log(k)) / sigma;
      return lognormal_mean * boost::math::cdf(standard, d2 + sigma) - k * boost::math::cdf(standard, d2);
    }
    case sens::QoiKind::entropy:
      return sim::toy_entropy(x);
  }
  throw DomainError("unknown QoI");
}

ReplicationReference make_replication_reference(const sim::Simulator& sim, std::size_t n_points, std::size_t R,
                                                std::uint64_t seed) {
  if (n_points < 2 || R < 2) throw DomainError("replication reference needs at least 2 points and 2 replications");
  Rng rng = Rng::substream(seed, {0x7265666572656e63ULL});
  ReplicationReference ref;
  ref.X = sim::lhs(n_points, sim.input, rng);
  ref.runs.resize(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const Eigen::VectorXd x = ref.X.row(static_cast<Eigen::Index>(i)).transpose();
    ref.runs[i] = sim::replicate(sim, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), R, seed, i);
    std::sort(ref.runs[i].begin(), ref.runs[i].end());
  }
  return ref;
}

double error_q_replicated(const glam::GlamModel& g, const ReplicationReference& ref) {
  std::vector<double> all;
  double sq = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < ref.X.rows(); ++i) {
    const Eigen::VectorXd x = ref.X.row(i).transpose();
    const auto p = g.predict(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    const auto& runs = ref.runs[static_cast<std::size_t>(i)];
    const double R = static_cast<double>(runs.size());
    for (std::size_t k = 0; k < runs.size(); ++k) {
      const double d = runs[k] - gld::quantile(p, (static_cast<double>(k) + 0.5) / R);
      sq += d * d;
      ++count;
    }
    all.insert(all.end(), runs.begin(), runs.end());
  }
  const double var = variance_of(all);
  if (!(var > 0.0)) throw UndefinedIndex("reference runs have zero variance");
  return sq / static_cast<double>(count) / var;
}

double error_qoi_replicated(const glam::GlamModel& g, const ReplicationReference& ref, const sens::QoiSpec& q,
                            std::uint64_t qoi_seed) {
  const Eigen::VectorXd fitted = sens::qoi_surface(g, q, qoi_seed)(ref.X);
  std::vector<double> truth(ref.runs.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i] = sample_qoi(ref.runs[i], q);
    const double d = truth[i] - fitted(static_cast<Eigen::Index>(i));
    sq += d * d;
  }
  const double var = variance_of(truth);
  if (!(var > 0.0)) throw UndefinedIndex("reference QoI has zero variance");
  return sq / static_cast<double>(truth.size()) / var;
}

SobolReport simulator_classical_indices(const sim::Simulator& sim, const std::vector<Subset>& subsets,
                                        std::size_t n_points, Rng& rng) {
  const std::size_t m = sim.input.dimension();
  auto sampler = [&sim, m](Rng& r, std::size_t n) {
    Eigen::MatrixXd Z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m + 1));
    Z.leftCols(static_cast<Eigen::Index>(m)) = sim.input.sample(r, n);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) Z(i, static_cast<Eigen::Index>(m)) = r.uniform();
    return Z;
  };
  // The last column seeds the run.
  const sens::Surface f = [&sim, m](const Eigen::MatrixXd& Z) {
    Eigen::VectorXd y(Z.rows());
    std::vector<double> x(m);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      for (std::size_t j = 0; j < m; ++j) x[j] = Z(i, static_cast<Eigen::Index>(j));
      Rng r(std::bit_cast<std::uint64_t>(Z(i, static_cast<Eigen::Index>(m))));
      y(i) = sim.eval(x, r);
    }
    return y;
  };
  auto report = sens::pickfreeze(f, sampler, m + 1, subsets.empty() ? sens::default_subsets(m) : subsets, n_points,
                                 rng);
  report.qoi = "classical";
  report.dimension = m;
  return report;
}

std::vector<SobolReport> simulator_qoi_indices(const sim::Simulator& sim, const std::vector<sens::QoiSpec>& qois,
                                               const std::vector<Subset>& subsets, std::size_t n_points,
                                               std::size_t R, std::uint64_t seed, Rng& rng) {
  for (const auto& q : qois) {
    if (q.kind == sens::QoiKind::entropy) throw DomainError("no replication estimate for entropy");
    q.validate();
  }
  std::unordered_map<std::uint64_t, std::vector<double>> cache;
  auto values_at = [&](std::span<const double> x) -> const std::vector<double>& {
    const auto key = point_key(x);
    auto it = cache.find(key);
    if (it == cache.end()) {
      const auto runs = run_point(sim, x, R, seed);
      std::vector<double> v;
      for (const auto& q : qois) v.push_back(sample_qoi(runs, q));
      it = cache.emplace(key, std::move(v)).first;
    }
    return it->second;
  };
  const std::size_t m = sim.input.dimension();
  const auto use = subsets.empty() ? sens::default_subsets(m) : subsets;
  std::vector<SobolReport> out;
  // Every QoI sees the same A/B matrices, so the cache is shared across them.
  const auto stream = std::bit_cast<std::uint64_t>(rng.uniform());
  for (std::size_t k = 0; k < qois.size(); ++k) {
    Rng local(stream);
    const sens::Surface f = [&, k](const Eigen::MatrixXd& X) {
      Eigen::VectorXd y(X.rows());
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Eigen::VectorXd x = X.row(i).transpose();
        y(i) = values_at(std::span<const double>(x.data(), m))[k];
      }
      return y;
    };
    auto report = sens::surface_sobol_pickfreeze(f, sim.input, use, n_points, local);
    report.qoi = qois[k].label();
    out.push_back(std::move(report));
  }
  return out;
}

}  // namespace glamsa::ref
