#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "glamsa/errors.hpp"
#include "glamsa/io.hpp"
#include "glamsa/simulators.hpp"

using namespace glamsa;

namespace {

glam::GlamModel small_toy_model() {
  const auto sim = sim::toy_simulator();
  Rng rng(31);
  glam::SampleSet s;
  s.X = sim::lhs(300, sim.input, rng);
  s.y = sim::run_design(sim, s.X, 32);
  glam::FitConfig cfg;
  cfg.restarts = 1;
  return glam::fit(s, sim.input, cfg).first;
}

}  // namespace

TEST_CASE("format_double round-trips") {
  Rng rng(1);
  for (int k = 0; k < 2000; ++k) {
    const double v = std::ldexp(rng.uniform() - 0.5, static_cast<int>(rng.uniform() * 200) - 100);
    CHECK(std::stod(io::format_double(v)) == v);
  }
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("GLaM model JSON round-trip is exact") {
  const auto g = small_toy_model();
  const auto text = io::to_json(g).dump(2);
  const auto back = io::glam_from_json(io::Json::parse(text));
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(back.lambdas[l].basis.indices == g.lambdas[l].basis.indices);
    CHECK(back.lambdas[l].basis.degree == g.lambdas[l].basis.degree);
    CHECK(back.lambdas[l].coefficients == g.lambdas[l].coefficients);
  }
  CHECK(back.input.marginals.size() == 3);
  CHECK(back.input.marginals[2].a == g.input.marginals[2].a);
  CHECK(io::to_json(back).dump(2) == text);
  const std::vector<double> x{1.0, 2.0, 0.4};
  CHECK(back.quantile(0.3, x) == g.quantile(0.3, x));

  auto bad = io::Json::parse(text);
  bad["lambdas"][1]["link"] = "identity";
  CHECK_THROWS_AS(io::glam_from_json(bad), InputError);
  bad = io::Json::parse(text);
  bad["lambdas"][0]["pce"]["coefficients"].push_back(1.0);
  CHECK_THROWS_AS(io::glam_from_json(bad), InputError);
  CHECK_THROWS_AS(io::glam_from_json(io::Json::parse("{\"type\":\"glam\"}")), InputError);
}

TEST_CASE("PCE model JSON round-trip") {
  pce::PceModel m;
  m.input = pce::InputModel{{pce::Marginal::uniform(-1, 2), pce::Marginal::gaussian(0.5, 3)}};
  m.basis = pce::enumerate_basis(2, 3, 0.75);
  m.coefficients = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(m.basis.size()), -1.0 / 3, 2.0 / 7);
  const auto back = io::pce_from_json(io::Json::parse(io::to_json(m).dump()));
  CHECK(back.basis == m.basis);
  CHECK(back.coefficients == m.coefficients);
  CHECK(back.input.marginals[1].kind == pce::MarginalKind::gaussian);
  CHECK(back.input.marginals[1].b == 3.0);
}

TEST_CASE("Sobol report JSON and CSV round-trips") {
  SobolReport r;
  r.qoi = "superquantile(0.95)";
  r.estimator = "pick-freeze";
  r.sample_size = 1000;
  r.dimension = 3;
  r.loo_error = 0.0123;
  auto& a = r.upsert({0});
  a.first_order = 0.31234567891234;
  a.total = 0.4;
  a.first_order_ci = Interval{0.25, 1.0 / 3};
  auto& b = r.upsert({1});
  b.first_order = -0.02;
  b.total = 0.05;
  auto& c = r.upsert({0, 2});
  c.first_order = 0.5;
  c.total = 0.7;
  c.higher_order = 0.1;

  const auto j = io::sobol_from_json(io::Json::parse(io::to_json(r).dump()));
  CHECK(io::to_json(j).dump() == io::to_json(r).dump());

  const auto csv = io::sobol_to_csv(r);
  const auto back = io::sobol_from_csv(csv);
  CHECK(back.qoi == r.qoi);
  CHECK(back.estimator == r.estimator);
  REQUIRE(back.entries.size() == r.entries.size());
  for (std::size_t k = 0; k < r.entries.size(); ++k) {
    const auto& e = r.entries[k];
    const auto& f = back.entries[k];
    CHECK(f.subset == e.subset);
    CHECK(f.first_order == e.first_order);
    CHECK(f.total == e.total);
    CHECK(f.higher_order == e.higher_order);
    CHECK(f.first_order_ci.has_value() == e.first_order_ci.has_value());
  }
  CHECK(back.entries[0].first_order_ci->upper == 1.0 / 3);
  // Raw negative estimate kept, display column clipped.
  CHECK(csv.find(",2,first_order,-0.02,-0.02,") != std::string::npos);
  CHECK_THROWS_AS(io::sobol_from_csv("h\nclassical,pce,1,bogus,0.1,0.1,,\n"), InputError);
}

TEST_CASE("sample set CSV") {
  glam::SampleSet s;
  s.X.resize(3, 2);
  s.X << 0.1, 0.2, 1e-300, -3.5, 7, 8;
  s.y = Eigen::Vector3d(1.0 / 3, -2, 1e10);
  const auto csv = io::sample_set_to_csv(s);
  CHECK(csv.rfind("x1,x2,y\n", 0) == 0);
  const auto back = io::sample_set_from_csv(csv);
  CHECK(back.X == s.X);
  CHECK(back.y == s.y);

  // Header is optional; comments and blank lines are skipped.
  const auto plain = io::sample_set_from_csv("# comment\n1,2,3\n\n4,5,6\n");
  CHECK(plain.X.rows() == 2);
  CHECK(plain.y(1) == 6.0);

  auto message = [](const std::string& text) {
    try {
      io::sample_set_from_csv(text, "data.csv");
    } catch (const InputError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("x1,y\n1,2\n3,abc\n").find("row 2") != std::string::npos);
  CHECK(message("x1,y\n1,2\n3,abc\n").find("data.csv") != std::string::npos);
  CHECK(message("x1,x2,y\n1,2,3\n4,5\n").find("row 2 (line 3)") != std::string::npos);
  CHECK(message("x1,y\n1,nan\n").find("row 1") != std::string::npos);
  CHECK(!message("x1,y\n").empty());
}

TEST_CASE("replication archive CSV") {
  const std::vector<io::ReplicationRow> rows{{0, 0, {1.0, 2.0}, 3.0}, {0, 1, {1.0, 2.0}, 3.5}};
  CHECK(io::replications_to_csv(rows) == "point,rep,x1,x2,y\n0,0,1,2,3\n0,1,1,2,3.5\n");
}

TEST_CASE("hashing and files") {
  CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(io::fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(io::hex64(0xabcULL) == "0000000000000abc");

  const auto dir = std::filesystem::temp_directory_path() / "glamsa_io_test";
  std::filesystem::remove_all(dir);
  const auto path = dir / "sub" / "f.txt";
  io::atomic_write(path, "one");
  io::atomic_write(path, "two");
  CHECK(io::read_file(path) == "two");
  CHECK(!std::filesystem::exists(dir / "sub" / "f.txt.tmp"));
  CHECK_THROWS_AS(io::read_file(dir / "missing"), InputError);
  std::filesystem::remove_all(dir);
}
