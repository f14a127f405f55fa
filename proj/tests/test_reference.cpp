#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "glamsa/errors.hpp"
#include "glamsa/reference.hpp"

using namespace glamsa;
using sens::QoiSpec;

namespace {

glam::GlamModel constant_model(const pce::InputModel& im, const gld::GldParams& p) {
  glam::GlamModel g;
  g.input = im;
  const double c[4] = {p.lambda1, std::log(p.lambda2), p.lambda3, p.lambda4};
  for (std::size_t l = 0; l < 4; ++l) {
    pce::BasisSet b;
    b.indices.push_back(pce::MultiIndex(im.dimension(), 0));
    g.lambdas[l] = pce::PceModel{b, Eigen::VectorXd::Constant(1, c[l]), im};
  }
  return g;
}

}  // namespace

TEST_CASE("toy closed-form QoIs against Monte Carlo") {
  const std::vector<std::vector<double>> points{{0.3, 1.0, 0.3}, {5.0, 4.0, 0.7}, {3.0, 0.1, 0.5}};
  const auto toy = sim::toy_simulator();
  for (const auto& x : points) {
    Rng rng(40);
    std::vector<double> v(400000);
    for (auto& y : v) y = toy.eval(x, rng);
    const double sd = sim::sample_std(v);
    const double se = sd / std::sqrt(static_cast<double>(v.size()));
    CHECK(std::abs(ref::toy_qoi(x, QoiSpec::mean()) - sim::sample_mean(v)) < 4 * se);
    CHECK(std::abs(ref::toy_qoi(x, QoiSpec::superquantile(0.9)) - ref::sample_qoi(v, QoiSpec::superquantile(0.9))) <
          0.02 * sd);
    const double mean = ref::toy_qoi(x, QoiSpec::mean());
    for (double k : {mean - 3 * sd, mean, mean + sd}) {
      CHECK(std::abs(ref::toy_qoi(x, QoiSpec::expected_payoff(k)) -
                     ref::sample_qoi(v, QoiSpec::expected_payoff(k))) < 4 * se);
    }
    CHECK(std::abs(ref::toy_qoi(x, QoiSpec::quantile(0.2)) - ref::sample_qoi(v, QoiSpec::quantile(0.2))) < 0.01 * sd);
    CHECK(ref::toy_qoi(x, QoiSpec::entropy()) == sim::toy_entropy(x));
  }
  CHECK_THROWS_AS(ref::sample_qoi({1.0, 2.0}, QoiSpec::entropy()), DomainError);
  CHECK(ref::sample_qoi({1, 2, 3, 4}, QoiSpec::quantile(0.5)) == 3.0);
  CHECK(ref::sample_qoi({1, 2, 3, 4}, QoiSpec::variance()) == doctest::Approx(5.0 / 3));
}

TEST_CASE("replication-based error metrics") {
  const pce::InputModel im{{pce::Marginal::uniform(0, 1)}};
  const gld::GldParams p{0.5, 2.0, 0.1, 0.3};
  const sim::Simulator exact{"gld", im, [p](std::span<const double>, Rng& r) { return gld::quantile(p, r.uniform()); }};
  const auto reference = ref::make_replication_reference(exact, 40, 400, 5);
  CHECK(reference.runs.size() == 40);
  CHECK(std::is_sorted(reference.runs[3].begin(), reference.runs[3].end()));
  const auto g = constant_model(im, p);
  const double eps = ref::error_q_replicated(g, reference);
  CHECK(eps < 0.01);
  auto shifted = p;
  shifted.lambda1 += 0.3;
  CHECK(ref::error_q_replicated(constant_model(im, shifted), reference) > eps + 0.05);
  // QoI constant in x: the reference has sampling variance only, so the error is O(1).
  CHECK(ref::error_qoi_replicated(g, reference, QoiSpec::mean()) > 0.5);
}

TEST_CASE("brute-force simulator indices on the toy") {
  const auto toy = sim::toy_simulator();
  Rng rng(41);
  const auto cl = ref::simulator_classical_indices(toy, {}, 40000, rng);
  CHECK(cl.qoi == "classical");
  CHECK(std::abs(*cl.find({0, 1, 2})->first_order - 1.4 / 2.4) < 0.03);
  CHECK(*cl.find({1})->first_order > *cl.find({0})->first_order);
  CHECK(*cl.find({0})->first_order > *cl.find({2})->first_order);

  // Mean indices from replications against the exact mean surface.
  Rng r2(42);
  const auto qi = ref::simulator_qoi_indices(toy, {QoiSpec::mean(), QoiSpec::std_dev()}, {}, 3000, 200, 7, r2);
  REQUIRE(qi.size() == 2);
  CHECK(qi[0].qoi == "mean");
  CHECK(qi[1].qoi == "std");
  Rng r3(43);
  const sens::Surface mean = [](const Eigen::MatrixXd& X) {
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double x[3] = {X(i, 0), X(i, 1), X(i, 2)};
      y(i) = sim::toy_mean(x);
    }
    return y;
  };
  const auto exact = sens::surface_sobol_pce(mean, toy.input, 4000, r3);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(*qi[0].find({j})->first_order - *exact.find({j})->first_order) < 0.06);
    CHECK(std::abs(*qi[0].find({j})->total - *exact.find({j})->total) < 0.06);
  }
  // The std of the toy depends on x1 and x3 only; with 200 runs per point the
  // sampling noise of the std still adds a few percent to every total.
  CHECK(*qi[1].find({1})->total < 0.08);
  CHECK(*qi[1].find({0})->total > 0.5);

  // Same seed, same numbers.
  Rng r4(42);
  const auto again = ref::simulator_qoi_indices(toy, {QoiSpec::mean(), QoiSpec::std_dev()}, {}, 3000, 200, 7, r4);
  CHECK(*again[1].find({0})->first_order == *qi[1].find({0})->first_order);
  CHECK_THROWS_AS(ref::simulator_qoi_indices(toy, {QoiSpec::entropy()}, {}, 100, 10, 1, r4), DomainError);
}
