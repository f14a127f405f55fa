#pragma once

// Brute-force references from direct simulator runs: replication-based QoI
// values at fixed points, pick-freeze indices of the simulator itself, and
// closed-form QoIs of the analytic toy simulator.

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "glamsa/glam.hpp"
#include "glamsa/sensitivity.hpp"
#include "glamsa/simulators.hpp"

namespace glamsa::ref {

/// QoI of an empirical sample. Entropy is not available (throws DomainError).
double sample_qoi(std::vector<double> samples, const sens::QoiSpec& q);

/// Exact QoI of the toy simulator at x (all kinds, entropy included).
double toy_qoi(std::span<const double> x, const sens::QoiSpec& q);

/// n points (LHS) with R sorted replications each.
struct ReplicationReference {
  Eigen::MatrixXd X;                       // n x M
  std::vector<std::vector<double>> runs;   // n x R, each sorted ascending
};

ReplicationReference make_replication_reference(const sim::Simulator& sim, std::size_t n_points, std::size_t R,
                                                std::uint64_t seed);

/// epsilon_Q with the empirical quantile function of the replications as reference:
/// mean over points and u_k = (k + 1/2)/R of (Q_ref - Q_GLaM)^2, divided by the variance
/// of all runs.
double error_q_replicated(const glam::GlamModel& g, const ReplicationReference& ref);

/// epsilon_q for a QoI: sample QoIs at the reference points against the emulator's.
double error_qoi_replicated(const glam::GlamModel& g, const ReplicationReference& ref, const sens::QoiSpec& q,
                            std::uint64_t qoi_seed = 0);

/// Classical indices of the simulator by pick-freeze; the simulator noise enters as an
/// extra unreported input, so frozen and resampled rows get independent runs.
SobolReport simulator_classical_indices(const sim::Simulator& sim, const std::vector<Subset>& subsets,
                                        std::size_t n_points, Rng& rng);

/// Pick-freeze indices of x -> QoI estimated from R replications at x. All QoIs share
/// the same runs; the runs at x come from a substream keyed by (seed, bits of x).
std::vector<SobolReport> simulator_qoi_indices(const sim::Simulator& sim, const std::vector<sens::QoiSpec>& qois,
                                               const std::vector<Subset>& subsets, std::size_t n_points,
                                               std::size_t R, std::uint64_t seed, Rng& rng);

}  // namespace glamsa::ref
