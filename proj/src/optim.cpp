#include "glamsa/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <vector>

namespace glamsa::optim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool small_improvement(double f_prev, double f, double tol) { return f_prev - f < tol * (1.0 + std::abs(f)); }

}  // namespace

Result lbfgs(const Objective& objective, const Eigen::VectorXd& x0, const Options& options) {
  Result res;
  res.x = x0;
  Eigen::VectorXd g(x0.size());
  res.f = objective(res.x, &g);
  res.evaluations = 1;
  if (!std::isfinite(res.f) || !g.allFinite()) return res;

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;
  int quiet = 0;
  bool reset_once = false;

  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    if (g.lpNorm<Eigen::Infinity>() < options.g_tol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion for the search direction.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[static_cast<std::size_t>(i)] = rho_hist[static_cast<std::size_t>(i)] * s_hist[static_cast<std::size_t>(i)].dot(q);
      q -= alpha[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) {
      gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      gamma = 1.0 / std::max(1.0, g.norm());
    }
    Eigen::VectorXd dir = gamma * q;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(dir);
      dir += (alpha[i] - beta) * s_hist[i];
    }
    dir = -dir;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g * gamma;
      slope = g.dot(dir);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    Eigen::VectorXd x_new;
    Eigen::VectorXd g_new(g.size());
    double f_new = kInf;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = res.x + step * dir;
      f_new = objective(x_new, &g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (reset_once || s_hist.empty()) break;
      reset_once = true;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }
    reset_once = false;

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double f_prev = res.f;
    res.x = x_new;
    res.f = f_new;
    g = g_new;
    quiet = small_improvement(f_prev, f_new, options.f_tol) ? quiet + 1 : 0;
    if (quiet >= 2) {
      res.converged = true;
      ++res.iterations;
      break;
    }
  }
  return res;
}

Result nelder_mead(const Objective& objective, const Eigen::VectorXd& x0, double step, const Options& options) {
  const auto n = x0.size();
  const double dn = static_cast<double>(n);
  // Gao & Han coefficients, well-behaved in higher dimensions.
  const double reflect = 1.0;
  const double expand = 1.0 + 2.0 / dn;
  const double contract = 0.75 - 1.0 / (2.0 * dn);
  const double shrink = 1.0 - 1.0 / dn;

  Result res;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    const double f = objective(x, nullptr);
    return std::isfinite(f) ? f : kInf;
  };

  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(n) + 1, x0);
  std::vector<double> values(simplex.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& v = simplex[static_cast<std::size_t>(i) + 1];
    v(i) += x0(i) != 0.0 ? step * std::max(1.0, std::abs(x0(i))) : step;
  }
  for (std::size_t i = 0; i < simplex.size(); ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(simplex.size());
  double last_best = kInf;
  int quiet = 0;
  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];
    if (std::isfinite(last_best) && small_improvement(last_best, values[best], options.f_tol) &&
        values[worst] - values[best] < options.f_tol * (1.0 + std::abs(values[best]))) {
      if (++quiet >= static_cast<int>(n)) {
        res.converged = true;
        break;
      }
    } else {
      quiet = 0;
    }
    last_best = values[best];

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= dn;
    const Eigen::VectorXd xr = centroid + reflect * (centroid - simplex[worst]);
    const double fr = eval(xr);
    if (fr < values[best]) {
      const Eigen::VectorXd xe = centroid + expand * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        values[worst] = fe;
      } else {
        simplex[worst] = xr;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = xr;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const Eigen::VectorXd xc =
        outside ? Eigen::VectorXd(centroid + contract * (xr - centroid))
                : Eigen::VectorXd(centroid - contract * (centroid - simplex[worst]));
    const double fc = eval(xc);
    if (fc < std::min(fr, values[worst])) {
      simplex[worst] = xc;
      values[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + shrink * (simplex[i] - simplex[best]);
      values[i] = eval(simplex[i]);
    }
  }
  const auto it = std::min_element(values.begin(), values.end());
  res.x = simplex[static_cast<std::size_t>(it - values.begin())];
  res.f = *it;
  return res;
}

}  // namespace glamsa::optim
