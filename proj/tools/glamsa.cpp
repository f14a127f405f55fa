#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <iostream>
#include <map>
#include <sstream>

#include "glamsa/errors.hpp"
#include "glamsa/io.hpp"
#include "glamsa/reference.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace glamsa;
using io::Json;

namespace {

constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kInput = 2;

struct Context {
  cli::RunConfig config;
  fs::path out;
  std::string command;
  unsigned threads = 1;
};

Json meta(const Context& ctx) {
  return Json{{"command", ctx.command}, {"config_hash", ctx.config.hash()}, {"seed", ctx.config.master_seed()}};
}

std::string csv_preamble(const Context& ctx) {
  return "# command=" + ctx.command + " config_hash=" + ctx.config.hash() +
         " seed=" + std::to_string(ctx.config.master_seed()) + "\n";
}

void write_json(const Context& ctx, const std::string& name, Json j) {
  Json out{{"meta", meta(ctx)}};
  for (auto& [k, v] : j.items()) out[k] = v;
  io::atomic_write(ctx.out / name, out.dump(2) + "\n");
}

void write_csv(const Context& ctx, const std::string& name, const std::string& body) {
  io::atomic_write(ctx.out / name, csv_preamble(ctx) + body);
}

std::string slug(const std::string& label) {
  std::string s;
  for (char c : label) {
    if (c == '(' || c == ',') s += '_';
    else if (c != ')') s += c;
  }
  return s;
}

glam::SampleSet simulate_design(const cli::RunConfig& c, const sim::Simulator& sim, std::size_t n,
                                std::uint64_t stream) {
  Rng rng = Rng::substream(c.master_seed(), {stream, n, 1});
  glam::SampleSet s;
  s.X = sim::lhs(n, sim.input, rng);
  s.y = sim::run_design(sim, s.X, mix64(c.master_seed() ^ mix64(stream + 2)));
  return s;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Context& ctx) {
  const auto& c = ctx.config;
  const auto sim = c.make_simulator();
  const std::size_t n = c.N.front();
  Rng rng = Rng::substream(c.master_seed(), {0, n, 1});
  glam::SampleSet s;
  s.X = sim::lhs(n, sim.input, rng);
  if (c.replications <= 1) {
    s.y = sim::run_design(sim, s.X, c.master_seed());
    write_csv(ctx, "design.csv", io::sample_set_to_csv(s));
    return kOk;
  }
  std::vector<io::ReplicationRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd x = s.X.row(static_cast<Eigen::Index>(i)).transpose();
    const std::vector<double> xv(x.data(), x.data() + x.size());
    const auto runs = sim::replicate(sim, xv, c.replications, c.master_seed(), i);
    for (std::size_t r = 0; r < runs.size(); ++r) rows.push_back({i, r, xv, runs[r]});
  }
  write_csv(ctx, "replications.csv", io::replications_to_csv(rows));
  return kOk;
}

// ---------------------------------------------------------------- fit

int cmd_fit(const Context& ctx, const std::optional<fs::path>& data_override) {
  const auto& c = ctx.config;
  glam::SampleSet data;
  const auto data_path = data_override ? data_override : c.data;
  if (data_path) {
    data = io::sample_set_from_csv(io::read_file(*data_path), data_path->string());
  } else {
    data = simulate_design(c, c.make_simulator(), c.N.front(), 0);
    write_csv(ctx, "design.csv", io::sample_set_to_csv(data));
  }
  if (static_cast<std::size_t>(data.X.cols()) != c.input.dimension()) {
    throw InputError("data has " + std::to_string(data.X.cols()) + " input columns, the input model has " +
                     std::to_string(c.input.dimension()));
  }
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    const Eigen::VectorXd x = data.X.row(i).transpose();
    try {
      c.input.check_domain(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    } catch (const DomainError& e) {
      throw InputError("data row " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  const auto [model, report] = glam::fit(data, c.input, c.fit);
  write_json(ctx, "model.json", io::to_json(model));
  Json r = io::to_json(report);
  r["sample_size"] = data.X.rows();
  write_json(ctx, "fit_report.json", Json{{"report", r}});
  return kOk;
}

// ---------------------------------------------------------------- sens

int cmd_sens(const Context& ctx, const fs::path& model_path) {
  const auto& c = ctx.config;
  Json model_json;
  try {
    model_json = Json::parse(io::read_file(model_path));
  } catch (const Json::parse_error& e) {
    throw InputError("model " + model_path.string() + " is not valid JSON: " + e.what());
  }
  const auto g = io::glam_from_json(model_json);
  const auto& input = g.input;
  const bool use_pce = c.sens.estimator != "pick-freeze";
  const bool use_pf = c.sens.estimator != "pce";
  sens::PceSensitivityOptions popt;
  popt.max_order = c.sens.max_order;
  const sens::BootstrapOptions boot{c.sens.n_boot, c.sens.level};

  Json files = Json::array();
  Json errors = Json::array();
  auto emit = [&](const SobolReport& r) {
    const std::string base = "sobol_" + slug(r.qoi) + "_" + slug(r.estimator == "pce" ? "pce" : "pf");
    write_json(ctx, base + ".json", Json{{"report", io::to_json(r)}});
    write_csv(ctx, base + ".csv", io::sobol_to_csv(r));
    files.push_back(base + ".json");
  };
  auto guarded = [&](const std::string& label, const std::string& estimator, auto&& run) {
    try {
      emit(run());
    } catch (const Error& e) {
      errors.push_back(Json{{"qoi", label}, {"estimator", estimator}, {"error", e.what()}});
    }
  };

  std::uint64_t stream = 0;
  if (c.sens.classical) {
    if (use_pce) {
      guarded("classical", "pce", [&] {
        Rng rng = Rng::substream(c.master_seed(), {stream, 1});
        return sens::classical_sobol_pce(g, input, c.sens.n_pc, rng, popt);
      });
    }
    if (use_pf) {
      guarded("classical", "pick-freeze", [&] {
        Rng rng = Rng::substream(c.master_seed(), {stream, 2});
        return sens::classical_sobol_pickfreeze(g, input, {}, c.sens.n_mc, rng, boot);
      });
    }
  }
  for (const auto& q : c.sens.qois) {
    ++stream;
    const std::uint64_t qoi_seed = mix64(c.master_seed() ^ stream);
    if (use_pce) {
      guarded(q.label(), "pce", [&] {
        Rng rng = Rng::substream(c.master_seed(), {stream, 1});
        auto r = sens::qoi_sobol_pce(g, input, q, c.sens.n_pc, rng, popt, qoi_seed);
        r.qoi = q.label();
        return r;
      });
    }
    if (use_pf) {
      guarded(q.label(), "pick-freeze", [&] {
        Rng rng = Rng::substream(c.master_seed(), {stream, 2});
        auto r = sens::surface_sobol_pickfreeze(sens::qoi_surface(g, q, qoi_seed), input, {}, c.sens.n_mc, rng, boot);
        r.qoi = q.label();
        return r;
      });
    }
  }
  Json summary{{"reports", files}, {"errors", errors}};
  try {
    Rng rng = Rng::substream(c.master_seed(), {0x736e72, 0});
    summary["snr"] = sens::snr(g, input, std::min<std::size_t>(c.sens.n_mc, 100000), rng);
  } catch (const Error& e) {
    summary["snr"] = nullptr;
    summary["snr_error"] = e.what();
  }
  write_json(ctx, "sens_summary.json", summary);
  return kOk;
}

// ---------------------------------------------------------------- study

struct RepResult {
  std::size_t N = 0;
  std::size_t rep = 0;
  std::vector<std::pair<std::string, double>> metrics;
  std::string error;
};

Json to_json(const RepResult& r) {
  Json m = Json::object();
  for (const auto& [k, v] : r.metrics) m[k] = v;
  Json j{{"N", r.N}, {"rep", r.rep}, {"metrics", m}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

RepResult rep_from_json(const Json& j) {
  RepResult r;
  r.N = j.at("N").get<std::size_t>();
  r.rep = j.at("rep").get<std::size_t>();
  for (const auto& [k, v] : j.at("metrics").items()) r.metrics.emplace_back(k, v.get<double>());
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  return r;
}

struct StudyReference {
  bool analytic = false;  // toy
  std::optional<ref::ReplicationReference> replications;
};

RepResult run_rep(const cli::RunConfig& c, const sim::Simulator& sim, const StudyReference& reference,
                  std::size_t N, std::size_t rep) {
  RepResult out{N, rep, {}, {}};
  const std::uint64_t stream = mix64(N) ^ mix64(rep + 0x51);
  try {
    const auto data = simulate_design(c, sim, N, stream);
    auto fit_cfg = c.fit;
    fit_cfg.seed = mix64(c.master_seed() ^ stream);
    const auto g = glam::fit(data, sim.input, fit_cfg).first;
    for (const auto& m : c.study.metrics) {
      Rng rng = Rng::substream(c.master_seed(), {0x7465, N, rep});
      try {
        if (m == "eps_Q") {
          if (reference.analytic) {
            const sens::QuantileFn truth = [](double u, std::span<const double> x) { return sim::toy_quantile(u, x); };
            out.metrics.emplace_back(m, sens::error_q_metric(g, truth, sim.input, c.study.n_test, rng));
          } else {
            out.metrics.emplace_back(m, ref::error_q_replicated(g, *reference.replications));
          }
        } else if (m.rfind("eps_q:", 0) == 0) {
          const auto q = sens::QoiSpec::parse(m.substr(6));
          if (reference.analytic) {
            const auto truth = [q](std::span<const double> x) { return ref::toy_qoi(x, q); };
            out.metrics.emplace_back(m, sens::error_qoi_metric(g, truth, q, sim.input, c.study.n_test, rng));
          } else {
            out.metrics.emplace_back(m, ref::error_qoi_replicated(g, *reference.replications, q));
          }
        } else if (m == "snr") {
          out.metrics.emplace_back(m, sens::snr(g, sim.input, c.study.n_test, rng));
        } else if (m == "indices") {
          const auto r = sens::classical_sobol_pce(g, sim.input, c.sens.n_pc, rng);
          for (std::size_t j = 0; j < sim.input.dimension(); ++j) {
            out.metrics.emplace_back("S_x" + std::to_string(j + 1), *r.find({static_cast<int>(j)})->first_order);
          }
        }
      } catch (const Error& e) {
        out.error += (out.error.empty() ? "" : "; ") + m + ": " + e.what();
      }
    }
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

std::string study_csv(const std::vector<RepResult>& rows) {
  std::ostringstream s;
  s << "N,rep,metric,value\n";
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.metrics) s << r.N << ',' << r.rep << ',' << k << ',' << io::format_double(v) << '\n';
  }
  return s.str();
}

double quantile_of(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string summary_csv(const std::vector<RepResult>& rows) {
  std::map<std::pair<std::size_t, std::string>, std::vector<double>> groups;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.metrics) groups[{r.N, k}].push_back(v);
  }
  std::ostringstream s;
  s << "N,metric,count,q1,median,q3\n";
  for (const auto& [key, v] : groups) {
    s << key.first << ',' << key.second << ',' << v.size() << ',' << io::format_double(quantile_of(v, 0.25)) << ','
      << io::format_double(quantile_of(v, 0.5)) << ',' << io::format_double(quantile_of(v, 0.75)) << '\n';
  }
  return s.str();
}

int cmd_study(const Context& ctx, std::size_t stop_after) {
  const auto& c = ctx.config;
  const auto sim = c.make_simulator();
  const fs::path manifest_path = ctx.out / "study_manifest.json";

  std::vector<RepResult> done;
  if (fs::exists(manifest_path)) {
    const auto m = Json::parse(io::read_file(manifest_path));
    if (m.at("meta").at("config_hash").get<std::string>() != c.hash()) {
      throw InputError("existing manifest in " + ctx.out.string() + " belongs to a different config");
    }
    for (const auto& r : m.at("completed")) done.push_back(rep_from_json(r));
  }
  auto is_done = [&](std::size_t N, std::size_t rep) {
    return std::any_of(done.begin(), done.end(), [&](const RepResult& r) { return r.N == N && r.rep == rep; });
  };
  std::vector<std::pair<std::size_t, std::size_t>> todo;
  for (std::size_t N : c.N) {
    for (std::size_t rep = 0; rep < c.repetitions; ++rep) {
      if (!is_done(N, rep)) todo.emplace_back(N, rep);
    }
  }
  if (stop_after > 0 && todo.size() > stop_after) todo.resize(stop_after);

  StudyReference reference;
  reference.analytic = c.simulator == "toy";
  const bool needs_replications = std::any_of(c.study.metrics.begin(), c.study.metrics.end(), [](const auto& m) {
    return m == "eps_Q" || m.rfind("eps_q:", 0) == 0;
  });
  if (!reference.analytic && needs_replications && !todo.empty()) {
    reference.replications = ref::make_replication_reference(sim, c.study.reference_points, c.study.reference_reps,
                                                             mix64(c.master_seed() ^ 0x726566));
  }

  auto save = [&] {
    auto sorted = done;
    std::sort(sorted.begin(), sorted.end(),
              [](const RepResult& a, const RepResult& b) { return std::tie(a.N, a.rep) < std::tie(b.N, b.rep); });
    Json completed = Json::array();
    for (const auto& r : sorted) completed.push_back(to_json(r));
    write_json(ctx, "study_manifest.json", Json{{"completed", completed}});
    return sorted;
  };

  const std::size_t batch = std::max(1u, ctx.threads);
  for (std::size_t start = 0; start < todo.size(); start += batch) {
    std::vector<std::future<RepResult>> jobs;
    for (std::size_t k = start; k < std::min(todo.size(), start + batch); ++k) {
      jobs.push_back(std::async(std::launch::async, run_rep, std::cref(c), std::cref(sim), std::cref(reference),
                                todo[k].first, todo[k].second));
    }
    for (auto& j : jobs) done.push_back(j.get());
    save();
  }
  const auto sorted = save();
  write_csv(ctx, "study.csv", study_csv(sorted));
  write_csv(ctx, "study_summary.csv", summary_csv(sorted));
  Json failures = Json::array();
  for (const auto& r : sorted) {
    if (!r.error.empty()) failures.push_back(Json{{"N", r.N}, {"rep", r.rep}, {"error", r.error}});
  }
  const std::size_t expected = c.N.size() * c.repetitions;
  write_json(ctx, "study_status.json",
             Json{{"completed", sorted.size()}, {"expected", expected}, {"complete", sorted.size() == expected},
                  {"failures", failures}});
  return kOk;
}

// ---------------------------------------------------------------- reference

int cmd_reference(const Context& ctx) {
  const auto& c = ctx.config;
  const auto sim = c.make_simulator();
  constexpr std::size_t kMinPoints = 100, kMinReps = 10;
  if (c.reference.points < kMinPoints || c.reference.reps < kMinReps) {
    throw InputError("reference budget too small: need points >= " + std::to_string(kMinPoints) +
                     " and reps >= " + std::to_string(kMinReps));
  }
  auto emit = [&](const SobolReport& r, const std::string& note) {
    auto copy = r;
    copy.estimator = "brute-force pick-freeze";
    copy.note = note;
    const std::string base = "reference_" + slug(r.qoi);
    write_json(ctx, base + ".json", Json{{"report", io::to_json(copy)}});
    write_csv(ctx, base + ".csv", io::sobol_to_csv(copy));
  };
  if (c.reference.classical) {
    Rng rng = Rng::substream(c.master_seed(), {0x636c, 0});
    emit(ref::simulator_classical_indices(sim, {}, c.reference.points, rng),
         std::to_string(c.reference.points) + " pick-freeze points, one run per point");
  }
  std::vector<sens::QoiSpec> replicated;
  for (const auto& q : c.reference.qois) {
    if (c.simulator == "toy") {
      // Exact QoI surface of the analytic toy.
      Rng rng = Rng::substream(c.master_seed(), {0x7179, static_cast<std::uint64_t>(q.kind)});
      const sens::Surface f = [q](const Eigen::MatrixXd& X) {
        Eigen::VectorXd y(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
          const double x[3] = {X(i, 0), X(i, 1), X(i, 2)};
          y(i) = ref::toy_qoi(x, q);
        }
        return y;
      };
      auto r = sens::surface_sobol_pickfreeze(f, sim.input, {}, c.reference.points, rng);
      r.qoi = q.label();
      emit(r, std::to_string(c.reference.points) + " pick-freeze points, closed-form QoI");
    } else {
      replicated.push_back(q);
    }
  }
  if (!replicated.empty()) {
    Rng rng = Rng::substream(c.master_seed(), {0x7179, 0});
    const auto reports = ref::simulator_qoi_indices(sim, replicated, {}, c.reference.points, c.reference.reps,
                                                    mix64(c.master_seed() ^ 0x7265), rng);
    for (const auto& r : reports) {
      emit(r, std::to_string(c.reference.points) + " pick-freeze points x " + std::to_string(c.reference.reps) +
                  " replications");
    }
  }
  return kOk;
}

// ---------------------------------------------------------------- main

int report_error(const std::string& type, const std::string& message, int code, const fs::path* out) {
  const Json e{{"error", {{"type", type}, {"message", message}, {"exit_code", code}}}};
  std::cerr << e.dump() << '\n';
  if (out && !out->empty()) {
    try {
      io::atomic_write(*out / "error.json", e.dump(2) + "\n");
    } catch (...) {
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GLaM emulation and Sobol' sensitivity analysis of stochastic simulators"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  unsigned threads = 1;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  };
  auto* fit = app.add_subcommand("fit", "fit a GLaM to simulated or external data");
  auto* sens_cmd = app.add_subcommand("sens", "Sobol' indices of a fitted model");
  auto* study = app.add_subcommand("study", "convergence study over design sizes and repetitions");
  auto* reference = app.add_subcommand("reference", "brute-force reference indices from the simulator");
  auto* simulate = app.add_subcommand("simulate", "run a simulator on a Latin hypercube design");
  for (auto* s : {fit, sens_cmd, study, reference, simulate}) common(s);
  std::string data_path, model_path;
  fit->add_option("--data", data_path, "CSV sample set (overrides the config)");
  sens_cmd->add_option("--model", model_path, "model JSON written by fit")->required();
  std::size_t stop_after = 0;
  study->add_option("--stop-after", stop_after, "stop after this many new repetitions (0 = run all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("UsageError", e.what(), kInput, nullptr);
  }

  const fs::path out = out_dir;
  try {
    Context ctx{cli::load_config(config_path, seed), out, app.get_subcommands().front()->get_name(), threads};
    if (fit->parsed()) return cmd_fit(ctx, data_path.empty() ? std::nullopt : std::optional<fs::path>(data_path));
    if (sens_cmd->parsed()) return cmd_sens(ctx, model_path);
    if (study->parsed()) return cmd_study(ctx, stop_after);
    if (reference->parsed()) return cmd_reference(ctx);
    if (simulate->parsed()) return cmd_simulate(ctx);
  } catch (const InputError& e) {
    return report_error("InputError", e.what(), kInput, &out);
  } catch (const FitError& e) {
    return report_error("FitError", e.what(), kInternal, &out);
  } catch (const Error& e) {
    return report_error("Error", e.what(), kInternal, &out);
  } catch (const std::exception& e) {
    return report_error("InternalError", e.what(), kInternal, &out);
  }
  return kInternal;
}
