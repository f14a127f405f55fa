#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace glamsa {

/// Zero-based input variable indices, sorted ascending.
using Subset = std::vector<int>;

struct Interval {
  double lower;
  double upper;
};

/// Index estimates for one variable subset u.
///
/// first_order is the closed index Var[E[Y|X_u]]/Var[Y]; total is 1 - S_{~u};
/// higher_order is the pure interaction part (only for |u| >= 2).
/// Values are raw estimates; Monte Carlo noise may push them outside [0,1].
struct IndexEstimate {
  Subset subset;
  std::optional<double> first_order;
  std::optional<double> total;
  std::optional<double> higher_order;
  std::optional<Interval> first_order_ci;
  std::optional<Interval> total_ci;
};

struct SobolReport {
  std::string qoi;        // "classical", "mean", "entropy", "superquantile(0.95)", ...
  std::string estimator;  // "pick-freeze" or "pce"
  std::size_t sample_size = 0;
  std::size_t dimension = 0;
  std::vector<IndexEstimate> entries;
  std::optional<double> loo_error;
  bool loo_warning = false;
  std::string note;

  /// Entry for `subset`, or nullptr.
  const IndexEstimate* find(const Subset& subset) const;
  IndexEstimate& upsert(const Subset& subset);
};

/// Clamp to the [-0.1, 1.1] display range.
double clip_index(double value);

/// "x1", "x1,x3", ... (one-based labels).
std::string subset_label(const Subset& subset);

}  // namespace glamsa
