#include "glamsa/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "glamsa/errors.hpp"

namespace glamsa::io {

namespace {

std::string kind_name(pce::MarginalKind k) { return k == pce::MarginalKind::uniform ? "uniform" : "gaussian"; }

const char* link_name(glam::Link l) { return l == glam::Link::log ? "log" : "identity"; }

constexpr const char* kLambdaNames[4] = {"lambda1", "lambda2", "lambda3", "lambda4"};

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw InputError(std::string("invalid ") + what + " JSON: " + e.what());
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

std::string subset_key(const Subset& s) {
  std::string out;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k) out += ' ';
    out += std::to_string(s[k] + 1);
  }
  return out;
}

Subset parse_subset_key(const std::string& key) {
  Subset s;
  std::istringstream in(key);
  int v;
  while (in >> v) s.push_back(v - 1);
  return s;
}

Json interval_json(const std::optional<Interval>& ci) {
  if (!ci) return nullptr;
  return Json{{"lower", ci->lower}, {"upper", ci->upper}};
}

std::optional<Interval> interval_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return Interval{j.at("lower").get<double>(), j.at("upper").get<double>()};
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------- models

Json to_json(const pce::InputModel& input) {
  Json arr = Json::array();
  for (const auto& m : input.marginals) arr.push_back({{"kind", kind_name(m.kind)}, {"a", m.a}, {"b", m.b}});
  return arr;
}

pce::InputModel input_from_json(const Json& j) {
  return guarded("input model", [&] {
    pce::InputModel im;
    for (const auto& m : j) {
      const auto kind = m.at("kind").get<std::string>();
      const double a = m.at("a").get<double>(), b = m.at("b").get<double>();
      if (kind == "uniform") {
        im.marginals.push_back(pce::Marginal::uniform(a, b));
      } else if (kind == "gaussian") {
        im.marginals.push_back(pce::Marginal::gaussian(a, b));
      } else {
        throw InputError("unknown marginal kind '" + kind + "'");
      }
    }
    return im;
  });
}

Json to_json(const pce::PceModel& model) {
  Json indices = Json::array();
  for (const auto& a : model.basis.indices) indices.push_back(a);
  std::vector<double> coef(model.coefficients.data(), model.coefficients.data() + model.coefficients.size());
  return Json{{"degree", model.basis.degree}, {"qnorm", model.basis.qnorm}, {"indices", indices},
              {"coefficients", coef},       {"input", to_json(model.input)}};
}

pce::PceModel pce_from_json(const Json& j) {
  return guarded("PCE model", [&] {
    pce::PceModel m;
    m.basis.degree = j.at("degree").get<int>();
    m.basis.qnorm = j.at("qnorm").get<double>();
    m.basis.indices = j.at("indices").get<std::vector<pce::MultiIndex>>();
    const auto coef = j.at("coefficients").get<std::vector<double>>();
    if (coef.size() != m.basis.indices.size()) throw InputError("PCE model: coefficient count differs from basis size");
    m.coefficients = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
    m.input = input_from_json(j.at("input"));
    for (const auto& a : m.basis.indices) {
      if (a.size() != m.input.dimension()) throw InputError("PCE model: multi-index dimension differs from input");
    }
    return m;
  });
}

Json to_json(const glam::GlamModel& model) {
  Json lambdas = Json::array();
  for (std::size_t l = 0; l < 4; ++l) {
    Json block = to_json(model.lambdas[l]);
    block.erase("input");
    lambdas.push_back(Json{{"name", kLambdaNames[l]}, {"link", link_name(glam::link_of(l))}, {"pce", block}});
  }
  return Json{{"type", "glam"}, {"input", to_json(model.input)}, {"lambdas", lambdas}};
}

glam::GlamModel glam_from_json(const Json& j) {
  return guarded("GLaM model", [&] {
    if (j.value("type", "") != "glam") throw InputError("not a GLaM model file");
    glam::GlamModel g;
    g.input = input_from_json(j.at("input"));
    const auto& lambdas = j.at("lambdas");
    if (!lambdas.is_array() || lambdas.size() != 4) throw InputError("GLaM model needs four lambda blocks");
    for (std::size_t l = 0; l < 4; ++l) {
      const auto& b = lambdas[l];
      if (b.at("link").get<std::string>() != link_name(glam::link_of(l))) {
        throw InputError(std::string("unexpected link for ") + kLambdaNames[l]);
      }
      Json block = b.at("pce");
      block["input"] = j.at("input");
      g.lambdas[l] = pce_from_json(block);
    }
    return g;
  });
}

Json to_json(const glam::FitReport& r) {
  Json bases = Json::array();
  for (const auto& b : r.bases) {
    bases.push_back(Json{{"degree", b.degree}, {"qnorm", b.qnorm}, {"size", b.size()}, {"indices", b.indices}});
  }
  return Json{{"nll_initial", r.nll_initial},
              {"nll", r.nll},
              {"restart_nll", r.restart_nll},
              {"iterations", r.iterations},
              {"evaluations", r.evaluations},
              {"optimizer", r.optimizer},
              {"admissible_set", r.admissible_set},
              {"fgls_loo_errors", r.fgls_loo_errors},
              {"fgls_best_iteration", r.fgls_best_iteration},
              {"jittered_residuals", r.jittered_residuals},
              {"bases", bases}};
}

// ---------------------------------------------------------------- reports

Json to_json(const SobolReport& report) {
  Json entries = Json::array();
  for (const auto& e : report.entries) {
    entries.push_back(Json{{"subset", e.subset},
                           {"label", subset_label(e.subset)},
                           {"first_order", optional_json(e.first_order)},
                           {"total", optional_json(e.total)},
                           {"higher_order", optional_json(e.higher_order)},
                           {"first_order_ci", interval_json(e.first_order_ci)},
                           {"total_ci", interval_json(e.total_ci)}});
  }
  return Json{{"qoi", report.qoi},
              {"estimator", report.estimator},
              {"sample_size", report.sample_size},
              {"dimension", report.dimension},
              {"loo_error", optional_json(report.loo_error)},
              {"loo_warning", report.loo_warning},
              {"note", report.note},
              {"entries", entries}};
}

SobolReport sobol_from_json(const Json& j) {
  return guarded("Sobol report", [&] {
    SobolReport r;
    r.qoi = j.at("qoi").get<std::string>();
    r.estimator = j.at("estimator").get<std::string>();
    r.sample_size = j.at("sample_size").get<std::size_t>();
    r.dimension = j.at("dimension").get<std::size_t>();
    r.loo_error = optional_from(j.at("loo_error"));
    r.loo_warning = j.at("loo_warning").get<bool>();
    r.note = j.at("note").get<std::string>();
    for (const auto& e : j.at("entries")) {
      IndexEstimate est;
      est.subset = e.at("subset").get<Subset>();
      est.first_order = optional_from(e.at("first_order"));
      est.total = optional_from(e.at("total"));
      est.higher_order = optional_from(e.at("higher_order"));
      est.first_order_ci = interval_from(e.at("first_order_ci"));
      est.total_ci = interval_from(e.at("total_ci"));
      r.entries.push_back(std::move(est));
    }
    return r;
  });
}

std::string sobol_to_csv(const SobolReport& report) {
  std::ostringstream out;
  out << "qoi,estimator,subset,index,value,display,ci_lower,ci_upper\n";
  auto row = [&](const IndexEstimate& e, const char* name, const std::optional<double>& v,
                 const std::optional<Interval>& ci) {
    if (!v) return;
    out << report.qoi << ',' << report.estimator << ',' << subset_key(e.subset) << ',' << name << ','
        << format_double(*v) << ',' << format_double(clip_index(*v)) << ',';
    if (ci) out << format_double(ci->lower) << ',' << format_double(ci->upper);
    else out << ',';
    out << '\n';
  };
  for (const auto& e : report.entries) {
    row(e, "first_order", e.first_order, e.first_order_ci);
    row(e, "total", e.total, e.total_ci);
    row(e, "higher_order", e.higher_order, std::nullopt);
  }
  return out.str();
}

SobolReport sobol_from_csv(const std::string& text) {
  SobolReport r;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 8) throw InputError("report CSV line " + std::to_string(lineno) + ": expected 8 fields");
    r.qoi = f[0];
    r.estimator = f[1];
    double value = 0.0;
    if (!parse_double(f[4], value)) throw InputError("report CSV line " + std::to_string(lineno) + ": bad value");
    auto& e = r.upsert(parse_subset_key(f[2]));
    std::optional<Interval> ci;
    if (!trim(f[6]).empty()) {
      Interval iv{};
      if (!parse_double(f[6], iv.lower) || !parse_double(f[7], iv.upper)) {
        throw InputError("report CSV line " + std::to_string(lineno) + ": bad interval");
      }
      ci = iv;
    }
    if (f[3] == "first_order") {
      e.first_order = value;
      e.first_order_ci = ci;
    } else if (f[3] == "total") {
      e.total = value;
      e.total_ci = ci;
    } else if (f[3] == "higher_order") {
      e.higher_order = value;
    } else {
      throw InputError("report CSV line " + std::to_string(lineno) + ": unknown index '" + f[3] + "'");
    }
  }
  return r;
}

// ---------------------------------------------------------------- sample sets

std::string sample_set_to_csv(const glam::SampleSet& data) {
  std::ostringstream out;
  const auto m = data.X.cols();
  for (Eigen::Index j = 0; j < m; ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < m; ++j) out << format_double(data.X(i, j)) << ',';
    out << format_double(data.y(i)) << '\n';
  }
  return out.str();
}

glam::SampleSet sample_set_from_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0, row = 0;
  std::size_t width = 0;
  bool seen_first = false;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || line[0] == '#') continue;
    const auto f = split(line, ',');
    if (!seen_first) {
      seen_first = true;
      width = f.size();
      double probe;
      if (!parse_double(f[0], probe)) continue;  // header
    }
    ++row;
    const std::string where = source + ": row " + std::to_string(row) + " (line " + std::to_string(lineno) + ")";
    if (f.size() != width) {
      throw InputError(where + ": expected " + std::to_string(width) + " fields, found " + std::to_string(f.size()));
    }
    for (std::size_t k = 0; k < f.size(); ++k) {
      double v;
      if (!parse_double(f[k], v) || !std::isfinite(v)) {
        throw InputError(where + ": field " + std::to_string(k + 1) + " is not a finite number ('" + trim(f[k]) + "')");
      }
      values.push_back(v);
    }
  }
  if (row == 0) throw InputError(source + ": no data rows");
  if (width < 2) throw InputError(source + ": need at least one input column and the output column");
  glam::SampleSet s;
  const auto n = static_cast<Eigen::Index>(row), w = static_cast<Eigen::Index>(width);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> all(values.data(), n,
                                                                                                     w);
  s.X = all.leftCols(w - 1);
  s.y = all.col(w - 1);
  return s;
}

std::string replications_to_csv(const std::vector<ReplicationRow>& rows) {
  std::ostringstream out;
  const std::size_t m = rows.empty() ? 0 : rows.front().x.size();
  out << "point,rep,";
  for (std::size_t j = 0; j < m; ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  for (const auto& r : rows) {
    out << r.point << ',' << r.rep << ',';
    for (double v : r.x) out << format_double(v) << ',';
    out << format_double(r.y) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------- files

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int k = 15; k >= 0; --k, v >>= 4) s[static_cast<std::size_t>(k)] = digits[v & 0xf];
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace glamsa::io
