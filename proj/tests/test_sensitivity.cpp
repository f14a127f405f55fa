#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "glamsa/errors.hpp"
#include "glamsa/glam.hpp"
#include "glamsa/gld.hpp"
#include "glamsa/sensitivity.hpp"
#include "glamsa/simulators.hpp"

using namespace glamsa;
using namespace glamsa::sens;
using pce::BasisSet;
using pce::InputModel;
using pce::Marginal;
using pce::MultiIndex;

namespace {

constexpr double kPi = std::numbers::pi;

InputModel unit_cube(std::size_t m) { return InputModel{std::vector<Marginal>(m, Marginal::uniform(0, 1))}; }

// GLaM on the unit cube; each lambda is a list of (multi-index, coefficient) terms.
using Terms = std::vector<std::pair<MultiIndex, double>>;

glam::GlamModel make_model(const InputModel& im, const std::array<Terms, 4>& terms) {
  glam::GlamModel g;
  g.input = im;
  for (std::size_t l = 0; l < 4; ++l) {
    BasisSet b;
    Eigen::VectorXd c(static_cast<Eigen::Index>(terms[l].size()));
    for (std::size_t k = 0; k < terms[l].size(); ++k) {
      b.indices.push_back(terms[l][k].first);
      c(static_cast<Eigen::Index>(k)) = terms[l][k].second;
    }
    g.lambdas[l] = pce::PceModel{b, c, im};
  }
  return g;
}

const glam::GlamModel& toy_fit() {
  static const glam::GlamModel model = [] {
    const auto sim = sim::toy_simulator();
    Rng rng(2024);
    glam::SampleSet s;
    s.X = sim::lhs(1000, sim.input, rng);
    s.y = sim::run_design(sim, s.X, 77);
    return glam::fit(s, sim.input).first;
  }();
  return model;
}

double get_first(const SobolReport& r, const Subset& u) { return r.find(u)->first_order.value(); }
double get_total(const SobolReport& r, const Subset& u) { return r.find(u)->total.value(); }

}  // namespace

TEST_CASE("QoiSpec labels, parsing and validation") {
  const std::vector<QoiSpec> specs{QoiSpec::mean(),           QoiSpec::variance(),         QoiSpec::std_dev(),
                                   QoiSpec::quantile(0.25),   QoiSpec::superquantile(0.95), QoiSpec::expected_payoff(1.5),
                                   QoiSpec::entropy(),        QoiSpec::entropy(5000)};
  for (const auto& q : specs) {
    const auto back = QoiSpec::parse(q.label());
    CHECK(back.kind == q.kind);
    CHECK(back.param == q.param);
    CHECK(back.n_mc == q.n_mc);
  }
  CHECK(QoiSpec::superquantile(0.95).label() == "superquantile(0.95)");
  CHECK(QoiSpec::entropy().label() == "entropy");
  CHECK_THROWS_AS(QoiSpec::quantile(1.0).validate(), DomainError);
  CHECK_THROWS_AS(QoiSpec::superquantile(0.0).validate(), DomainError);
  CHECK_THROWS_AS(QoiSpec::entropy(0).validate(), DomainError);
  CHECK_THROWS_AS(QoiSpec::parse("median"), InputError);
  CHECK_THROWS_AS(QoiSpec::parse("quantile(abc)"), InputError);
}

TEST_CASE("qoi_value and qoi_surface") {
  const gld::GldParams p{0.3, 1.2, 0.1, 0.25};
  const std::vector<double> x{0.5};
  CHECK(qoi_value(p, QoiSpec::mean(), x, 0) == doctest::Approx(gld::mean(p)));
  CHECK(qoi_value(p, QoiSpec::variance(), x, 0) == doctest::Approx(gld::variance(p)));
  CHECK(qoi_value(p, QoiSpec::std_dev(), x, 0) == doctest::Approx(std::sqrt(gld::variance(p))));
  CHECK(qoi_value(p, QoiSpec::quantile(0.3), x, 0) == doctest::Approx(gld::quantile(p, 0.3)));
  CHECK(qoi_value(p, QoiSpec::superquantile(0.9), x, 0) == doctest::Approx(gld::superquantile(p, 0.9)));
  CHECK(qoi_value(p, QoiSpec::expected_payoff(0.5), x, 0) == doctest::Approx(gld::expected_payoff(p, 0.5)));
  const double h = qoi_value(p, QoiSpec::entropy(), x, 9);
  CHECK(h == qoi_value(p, QoiSpec::entropy(), x, 9));
  CHECK(h != qoi_value(p, QoiSpec::entropy(), std::vector<double>{0.6}, 9));
  Rng rng(1);
  CHECK(std::abs(h - gld::entropy_mc(p, rng, 400000)) < 0.02);

  // Median of a symmetric GLD is lambda1.
  const auto im = unit_cube(2);
  const auto g = make_model(im, {Terms{{{0, 0}, 1.0}, {{1, 0}, 0.4}, {{0, 1}, -0.2}}, Terms{{{0, 0}, 0.3}},
                                 Terms{{{0, 0}, 0.2}}, Terms{{{0, 0}, 0.2}}});
  Rng r2(2);
  const Eigen::MatrixXd X = im.sample(r2, 50);
  const Eigen::VectorXd med = qoi_surface(g, QoiSpec::quantile(0.5))(X);
  const Eigen::VectorXd l1 = g.lambdas[0].evaluate(X);
  CHECK((med - l1).cwiseAbs().maxCoeff() < 1e-12);

  // Moment QoIs propagate MomentUndefined.
  const auto heavy = make_model(im, {Terms{{{0, 0}, 0.0}}, Terms{{{0, 0}, 0.0}}, Terms{{{0, 0}, -0.7}},
                                     Terms{{{0, 0}, 0.1}}});
  CHECK_THROWS_AS(qoi_surface(heavy, QoiSpec::variance())(X), MomentUndefined);
}

TEST_CASE("classical pick-freeze on a deterministic additive emulator") {
  // lambda1 = x1 + x2 written in orthonormal Legendre terms; lambda2 huge.
  const auto im = unit_cube(2);
  const double c = 1.0 / (2.0 * std::sqrt(3.0));
  const auto g = make_model(im, {Terms{{{0, 0}, 1.0}, {{1, 0}, c}, {{0, 1}, c}}, Terms{{{0, 0}, 15.0}},
                                 Terms{{{0, 0}, 1.0}}, Terms{{{0, 0}, 1.0}}});
  Rng rng(3);
  const auto r = classical_sobol_pickfreeze(g, im, {}, 100000, rng);
  CHECK(r.estimator == "pick-freeze");
  CHECK(r.qoi == "classical");
  CHECK(std::abs(get_first(r, {0}) - 0.5) < 0.02);
  CHECK(std::abs(get_first(r, {1}) - 0.5) < 0.02);
  CHECK(std::abs(get_total(r, {0}) - 0.5) < 0.02);
  CHECK(std::abs(get_first(r, {0, 1}) - 1.0) < 0.02);
  CHECK_THROWS_AS(classical_sobol_pickfreeze(g, im, {}, 50, rng), DomainError);

  const auto constant = make_model(im, {Terms{{{0, 0}, 1.0}}, Terms{{{0, 0}, 800.0}}, Terms{{{0, 0}, 1.0}},
                                        Terms{{{0, 0}, 1.0}}});
  CHECK_THROWS_AS(classical_sobol_pickfreeze(constant, im, {}, 1000, rng), UndefinedIndex);
}

TEST_CASE("PCE and pick-freeze agree on a linear surface") {
  const auto im = unit_cube(3);
  const Surface f = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return (1.0 + 2.0 * X.col(0).array() + X.col(1).array() + 0.5 * X.col(2).array()).matrix();
  };
  Rng rng(4);
  const auto pc = surface_sobol_pce(f, im, 500, rng);
  const auto pf = surface_sobol_pickfreeze(f, im, {}, 100000, rng);
  const double exact[3] = {4.0 / 5.25, 1.0 / 5.25, 0.25 / 5.25};
  for (int j = 0; j < 3; ++j) {
    CHECK(get_first(pc, {j}) == doctest::Approx(exact[j]).epsilon(1e-8));
    CHECK(get_total(pc, {j}) == doctest::Approx(exact[j]).epsilon(1e-8));
    CHECK(std::abs(get_first(pc, {j}) - get_first(pf, {j})) < 0.01);
    CHECK(std::abs(get_total(pc, {j}) - get_total(pf, {j})) < 0.01);
  }
  CHECK(pc.loo_error.value() < 1e-12);
  CHECK(!pc.loo_warning);

  // A rough surface trips the LOO quality gate without failing.
  const Surface rough = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return X.col(0).unaryExpr([](double v) { return v < 0.5 ? 0.0 : 1.0; });
  };
  PceSensitivityOptions o;
  o.degrees = {1, 2};
  const auto gate = surface_sobol_pce(rough, im, 300, rng, o);
  CHECK(gate.loo_warning);
  CHECK(!gate.note.empty());
}

TEST_CASE("PCE route: lambdas depending on one variable give zero totals elsewhere") {
  const auto im = unit_cube(3);
  const auto g = make_model(im, {Terms{{{0, 0, 0}, 1.0}, {{1, 0, 0}, 0.5}, {{2, 0, 0}, 0.3}},
                                 Terms{{{0, 0, 0}, 0.4}, {{1, 0, 0}, 0.2}}, Terms{{{0, 0, 0}, 1.0}},
                                 Terms{{{0, 0, 0}, 1.0}}});
  Rng rng(5);
  const auto mean = qoi_sobol_pce(g, im, QoiSpec::mean(), 400, rng);
  CHECK(get_total(mean, {0}) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(get_total(mean, {1}) < 1e-10);
  CHECK(get_total(mean, {2}) < 1e-10);
  const auto sd = qoi_sobol_pce(g, im, QoiSpec::std_dev(), 400, rng);
  CHECK(get_total(sd, {1}) < 1e-6);
  CHECK(get_total(sd, {2}) < 1e-6);
  const auto cl = classical_sobol_pce(g, im, 2000, rng);
  CHECK(get_total(cl, {1}) < 1e-6);
  CHECK(get_total(cl, {2}) < 1e-6);
  CHECK(get_first(cl, {0}) > 0.5);

  // x-independent lambdas: every classical index involving x vanishes. With
  // lambda3 = lambda4 = 1 the quantile is linear in u, so the expansion is exact.
  const auto flat = make_model(im, {Terms{{{0, 0, 0}, 1.0}}, Terms{{{0, 0, 0}, 0.4}}, Terms{{{0, 0, 0}, 1.0}},
                                    Terms{{{0, 0, 0}, 1.0}}});
  const auto fl = classical_sobol_pce(flat, im, 2000, rng);
  for (int j = 0; j < 3; ++j) CHECK(get_total(fl, {j}) < 1e-6);
  CHECK(get_first(fl, {0, 1, 2}) < 1e-6);

  // Indices from sums of squares are ordered and bounded.
  for (const auto* r : {&mean, &sd, &cl}) {
    for (const auto& e : r->entries) {
      CHECK(*e.first_order >= 0.0);
      CHECK(*e.first_order <= *e.total + 1e-15);
      CHECK(*e.total <= 1.0 + 1e-15);
    }
  }
}

TEST_CASE("bootstrap intervals") {
  const auto im = unit_cube(2);
  const Surface f = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return (X.col(0).array() + 0.5 * X.col(1).array()).matrix();
  };
  Rng rng(6);
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(100, 0, 1);
  const Eigen::VectorXd yf = y.reverse();
  const auto deg = bootstrap_ci(y, yf, 1, 0.95, rng);
  CHECK(deg.lower == deg.upper);
  CHECK(deg.lower == doctest::Approx(janon(y, yf)));

  // Width scales like 1/sqrt(n_mc).
  std::vector<double> widths;
  for (std::size_t n : {1000, 10000, 100000}) {
    const auto r = surface_sobol_pickfreeze(f, im, {{0}}, n, rng, {200, 0.95});
    const auto ci = r.find({0})->first_order_ci.value();
    widths.push_back(ci.upper - ci.lower);
  }
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const double ratio = widths[k] / widths[k + 1];
    CHECK(ratio > 2.2);
    CHECK(ratio < 4.5);
  }

  // Coverage of the true S_1 = 0.8 over 100 repetitions.
  int covered = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Rng r(1000 + static_cast<std::uint64_t>(rep));
    const auto rr = surface_sobol_pickfreeze(f, im, {{0}}, 500, r, {300, 0.95});
    const auto ci = rr.find({0})->first_order_ci.value();
    covered += (ci.lower <= 0.8 && 0.8 <= ci.upper) ? 1 : 0;
  }
  CHECK(covered >= 90);
}

TEST_CASE("SNR estimators") {
  const auto toy = sim::toy_simulator();
  Rng rng(7);
  const double analytic = snr_analytic(sim::toy_mean, sim::toy_variance, toy.input, 200000, rng);
  CHECK(std::abs(analytic - 1.4) < 0.14);
  const double replicated = snr_replicated(toy.eval, toy.input, 2000, 20, 8);
  CHECK(std::abs(replicated - 1.4) < 0.14);

  // GLaM with m(x) linear in x1 and constant spread: SNR = Var[m] / Var_GLD.
  const auto im = unit_cube(2);
  const auto g = make_model(im, {Terms{{{0, 0}, 0.0}, {{1, 0}, 0.4}}, Terms{{{0, 0}, 0.5}}, Terms{{{0, 0}, 0.2}},
                                 Terms{{{0, 0}, 0.2}}});
  const double exact = 0.16 / gld::variance({0.0, std::exp(0.5), 0.2, 0.2});
  CHECK(snr(g, im, 200000, rng) == doctest::Approx(exact).epsilon(0.05));

  const auto zero_var = [](std::span<const double>) { return 0.0; };
  CHECK_THROWS_AS(snr_analytic(sim::toy_mean, zero_var, toy.input, 1000, rng), UndefinedIndex);
}

TEST_CASE("error metrics vanish for an exact surrogate") {
  const auto im = unit_cube(2);
  const auto g = make_model(im, {Terms{{{0, 0}, 0.0}, {{1, 0}, 0.4}}, Terms{{{0, 0}, 0.5}, {{0, 1}, 0.3}},
                                 Terms{{{0, 0}, 0.2}}, Terms{{{0, 0}, 0.1}}});
  Rng rng(9);
  const QuantileFn ref = [&g](double u, std::span<const double> x) { return g.quantile(u, x); };
  CHECK(error_q_metric(g, ref, im, 10000, rng) == 0.0);
  const auto mean_ref = [&g](std::span<const double> x) { return gld::mean(g.predict(x)); };
  CHECK(error_qoi_metric(g, mean_ref, QoiSpec::mean(), im, 10000, rng) == 0.0);
  const QuantileFn shifted = [&g](double u, std::span<const double> x) { return g.quantile(u, x) + 0.1; };
  CHECK(error_q_metric(shifted, ref, im, 10000, rng) > 0.0);
}

TEST_CASE("toy GLaM: surfaces and indices") {
  const auto& g = toy_fit();
  const auto im = sim::toy_input();
  const std::vector<double> x{kPi / 2, kPi / 2, 0.5};
  const double expected = 8.0 + std::exp(0.625);
  Eigen::MatrixXd X(1, 3);
  X << x[0], x[1], x[2];
  CHECK(std::abs(qoi_surface(g, QoiSpec::mean())(X)(0) / expected - 1.0) < 0.05);

  Rng rng(10);
  const auto pf = classical_sobol_pickfreeze(g, im, {}, 100000, rng);
  const auto pc = classical_sobol_pce(g, im, 10000, rng);
  // S_{1,2,3} = 0.583 for the simulator; an N = 1000 fit is within a few percent.
  CHECK(std::abs(get_first(pf, {0, 1, 2}) - 0.583) < 0.05);
  double sum_first = 0.0;
  for (int j = 0; j < 3; ++j) {
    sum_first += get_first(pf, {j});
    CHECK(std::abs(get_first(pc, {j}) - get_first(pf, {j})) < 0.02);
  }
  CHECK(sum_first <= get_first(pf, {0, 1, 2}) + 0.02);
  CHECK(get_first(pc, {1}) > get_first(pc, {0}));
  CHECK(get_first(pc, {0}) > get_first(pc, {2}));
  CHECK(get_first(pc, {2}) < 0.05);

  // Classical and mean-based first-order indices share numerators, hence rankings.
  const auto mean_idx = qoi_sobol_pce(g, im, QoiSpec::mean(), 10000, rng);
  std::vector<int> order_classical{0, 1, 2}, order_mean{0, 1, 2};
  std::sort(order_classical.begin(), order_classical.end(),
            [&](int a, int b) { return get_first(pc, {a}) > get_first(pc, {b}); });
  std::sort(order_mean.begin(), order_mean.end(),
            [&](int a, int b) { return get_first(mean_idx, {a}) > get_first(mean_idx, {b}); });
  CHECK(order_classical == order_mean);
}

TEST_CASE("toy GLaM beats the oracle normal approximation at N=4000") {
  const auto sim = sim::toy_simulator();
  const QuantileFn truth = [](double u, std::span<const double> x) { return sim::toy_quantile(u, x); };
  // Normal with the exact conditional mean and variance.
  const QuantileFn normal = [](double u, std::span<const double> x) {
    double a = -12, b = 12;
    for (int k = 0; k < 100; ++k) {
      const double mid = 0.5 * (a + b);
      (0.5 * std::erfc(-mid / std::sqrt(2.0)) < u ? a : b) = mid;
    }
    return sim::toy_mean(x) + std::sqrt(sim::toy_variance(x)) * 0.5 * (a + b);
  };
  Rng test_rng(11);
  const double eps_normal = error_q_metric(normal, truth, sim.input, 20000, test_rng);

  std::vector<double> eps;
  for (std::uint64_t rep = 0; rep < 3; ++rep) {
    Rng rng(500 + rep);
    glam::SampleSet s;
    s.X = sim::lhs(4000, sim.input, rng);
    s.y = sim::run_design(sim, s.X, 600 + rep);
    glam::FitConfig cfg;
    cfg.restarts = 1;
    const auto g = glam::fit(s, sim.input, cfg).first;
    Rng tr(12);
    eps.push_back(error_q_metric(g, truth, sim.input, 20000, tr));
  }
  std::sort(eps.begin(), eps.end());
  CHECK(eps[1] < eps_normal);
}
