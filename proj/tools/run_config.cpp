#include "run_config.hpp"

#include <algorithm>
#include <numeric>

#include "glamsa/errors.hpp"

namespace glamsa::cli {

namespace {

using io::Json;

void check_keys(const Json& obj, const std::vector<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw InputError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw InputError("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw InputError(where + "." + key + " has the wrong type");
  }
}

std::size_t positive(const Json& obj, const char* key, std::size_t fallback, const std::string& where) {
  std::size_t v = fallback;
  if (obj.contains(key)) {
    if (!obj.at(key).is_number_integer() || obj.at(key).get<long long>() <= 0) {
      throw InputError(where + "." + key + " must be a positive integer");
    }
    v = obj.at(key).get<std::size_t>();
  }
  return v;
}

std::vector<sens::QoiSpec> read_qois(const Json& obj, const std::string& where) {
  std::vector<sens::QoiSpec> out;
  if (!obj.contains("qois")) return out;
  if (!obj.at("qois").is_array()) throw InputError(where + ".qois must be a list");
  for (const auto& q : obj.at("qois")) {
    if (!q.is_string()) throw InputError(where + ".qois entries must be strings");
    auto spec = sens::QoiSpec::parse(q.get<std::string>());
    try {
      spec.validate();
    } catch (const DomainError& e) {
      throw InputError(where + ".qois: " + e.what());
    }
    out.push_back(spec);
  }
  return out;
}

void parse_fit(const Json& j, glam::FitConfig& fit) {
  const std::string w = "fit";
  check_keys(j, {"restarts", "optimizer", "shape_degree", "shape_floor", "shape_floor_weight", "fgls_iterations",
                 "weight_floor_quantile", "max_degree", "min_points_per_coefficient"},
             w);
  read(j, "restarts", fit.restarts, w);
  if (fit.restarts < 1) throw InputError("fit.restarts must be at least 1");
  if (j.contains("optimizer")) {
    const auto name = j.at("optimizer").get<std::string>();
    if (name == "lbfgs") fit.optimizer = glam::Optimizer::lbfgs;
    else if (name == "nelder_mead") fit.optimizer = glam::Optimizer::nelder_mead;
    else throw InputError("fit.optimizer must be 'lbfgs' or 'nelder_mead'");
  }
  read(j, "shape_degree", fit.shape_degree, w);
  if (fit.shape_degree < 0) throw InputError("fit.shape_degree must be non-negative");
  read(j, "shape_floor", fit.shape_floor, w);
  read(j, "shape_floor_weight", fit.shape_floor_weight, w);
  read(j, "fgls_iterations", fit.fgls.iterations, w);
  if (fit.fgls.iterations < 1) throw InputError("fit.fgls_iterations must be at least 1");
  read(j, "weight_floor_quantile", fit.fgls.weight_floor_quantile, w);
  if (!(fit.fgls.weight_floor_quantile >= 0.0 && fit.fgls.weight_floor_quantile < 1.0)) {
    throw InputError("fit.weight_floor_quantile must lie in [0,1)");
  }
  read(j, "min_points_per_coefficient", fit.min_points_per_coefficient, w);
  if (j.contains("max_degree")) {
    int p = 0;
    read(j, "max_degree", p, w);
    if (p < 0) throw InputError("fit.max_degree must be non-negative");
    std::vector<int> degrees(static_cast<std::size_t>(p) + 1);
    std::iota(degrees.begin(), degrees.end(), 0);
    fit.fgls.mean_degrees = degrees;
    fit.fgls.var_degrees = degrees;
  }
}

}  // namespace

sim::Simulator RunConfig::make_simulator() const {
  if (simulator == "toy") return sim::toy_simulator();
  if (simulator == "heston") return sim::heston_simulator(heston);
  if (simulator == "sir") return sim::sir_simulator(sir);
  throw InputError("this command needs a simulator ('toy', 'heston' or 'sir')");
}

std::uint64_t RunConfig::master_seed() const { return *seed; }

std::string RunConfig::hash() const {
  // Key order in the file does not matter.
  return io::hex64(io::fnv1a(nlohmann::json::parse(canonical.dump()).dump()));
}

RunConfig parse_config(const io::Json& j, const std::filesystem::path& base_dir,
                       std::optional<std::uint64_t> seed_override) {
  check_keys(j, {"simulator", "data", "input", "heston", "sir", "seed", "N", "repetitions", "replications", "fit",
                 "sensitivity", "study", "reference"},
             "config");
  RunConfig c;
  read(j, "simulator", c.simulator, "config");
  if (!c.simulator.empty() && c.simulator != "toy" && c.simulator != "heston" && c.simulator != "sir") {
    throw InputError("unknown simulator '" + c.simulator + "'");
  }
  if (j.contains("heston")) {
    check_keys(j.at("heston"), {"dt", "horizon", "y0", "strike"}, "heston");
    read(j.at("heston"), "dt", c.heston.dt, "heston");
    read(j.at("heston"), "horizon", c.heston.horizon, "heston");
    read(j.at("heston"), "y0", c.heston.y0, "heston");
    read(j.at("heston"), "strike", c.heston.strike, "heston");
    if (!(c.heston.dt > 0.0)) throw InputError("heston.dt must be positive");
  }
  if (j.contains("sir")) {
    check_keys(j.at("sir"), {"population"}, "sir");
    read(j.at("sir"), "population", c.sir.population, "sir");
    if (c.sir.population < 20) throw InputError("sir.population must be at least 20");
  }
  if (j.contains("data")) {
    std::filesystem::path p = j.at("data").get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw InputError("data file not found: " + p.string());
    c.data = p;
    if (!j.contains("input")) throw InputError("external data needs an 'input' list of marginals");
  }
  if (j.contains("input")) {
    c.input = io::input_from_json(j.at("input"));
  } else if (!c.simulator.empty()) {
    c.input = c.make_simulator().input;
  }
  if (c.simulator.empty() && !c.data) throw InputError("config needs 'simulator' or 'data'");

  if (seed_override) {
    c.seed = seed_override;
  } else if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw InputError("seed must be a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (!c.seed) throw InputError("a seed is required (config 'seed' or --seed)");

  if (j.contains("N")) {
    const auto& n = j.at("N");
    c.N.clear();
    if (n.is_array()) {
      for (const auto& v : n) {
        if (!v.is_number_integer() || v.get<long long>() <= 0) throw InputError("N entries must be positive integers");
        c.N.push_back(v.get<std::size_t>());
      }
    } else if (n.is_number_integer() && n.get<long long>() > 0) {
      c.N.push_back(n.get<std::size_t>());
    } else {
      throw InputError("N must be a positive integer or a list of them");
    }
    if (c.N.empty()) throw InputError("N must not be empty");
  }
  c.repetitions = positive(j, "repetitions", c.repetitions, "config");
  c.replications = positive(j, "replications", c.replications, "config");
  c.fit.seed = *c.seed;
  if (j.contains("fit")) parse_fit(j.at("fit"), c.fit);

  if (j.contains("sensitivity")) {
    const auto& s = j.at("sensitivity");
    const std::string w = "sensitivity";
    check_keys(s, {"estimator", "n_mc", "n_pc", "bootstrap", "level", "classical", "max_order", "qois"}, w);
    read(s, "estimator", c.sens.estimator, w);
    if (c.sens.estimator != "pce" && c.sens.estimator != "pick-freeze" && c.sens.estimator != "both") {
      throw InputError("sensitivity.estimator must be 'pce', 'pick-freeze' or 'both'");
    }
    c.sens.n_mc = positive(s, "n_mc", c.sens.n_mc, w);
    c.sens.n_pc = positive(s, "n_pc", c.sens.n_pc, w);
    if (s.contains("bootstrap")) c.sens.n_boot = positive(s, "bootstrap", 1, w);
    read(s, "level", c.sens.level, w);
    if (!(c.sens.level > 0.0 && c.sens.level < 1.0)) throw InputError("sensitivity.level must lie in (0,1)");
    read(s, "classical", c.sens.classical, w);
    c.sens.max_order = positive(s, "max_order", c.sens.max_order, w);
    c.sens.qois = read_qois(s, w);
  }
  if (j.contains("study")) {
    const auto& s = j.at("study");
    const std::string w = "study";
    check_keys(s, {"metrics", "n_test", "reference_points", "reference_reps"}, w);
    read(s, "metrics", c.study.metrics, w);
    for (const auto& m : c.study.metrics) {
      const bool ok = m == "eps_Q" || m == "snr" || m == "indices" || m.rfind("eps_q:", 0) == 0;
      if (!ok) throw InputError("unknown study metric '" + m + "'");
      if (m.rfind("eps_q:", 0) == 0) sens::QoiSpec::parse(m.substr(6)).validate();
    }
    c.study.n_test = positive(s, "n_test", c.study.n_test, w);
    c.study.reference_points = positive(s, "reference_points", c.study.reference_points, w);
    c.study.reference_reps = positive(s, "reference_reps", c.study.reference_reps, w);
  }
  if (j.contains("reference")) {
    const auto& s = j.at("reference");
    const std::string w = "reference";
    check_keys(s, {"points", "reps", "classical", "qois"}, w);
    c.reference.points = positive(s, "points", c.reference.points, w);
    c.reference.reps = positive(s, "reps", c.reference.reps, w);
    read(s, "classical", c.reference.classical, w);
    c.reference.qois = read_qois(s, w);
  }

  c.canonical = j;
  c.canonical["seed"] = *c.seed;
  return c;
}

RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  const auto text = io::read_file(path);
  io::Json j;
  try {
    j = io::Json::parse(text);
  } catch (const io::Json::parse_error& e) {
    throw InputError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    return parse_config(j, path.parent_path(), seed_override);
  } catch (const io::Json::exception& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace glamsa::cli
