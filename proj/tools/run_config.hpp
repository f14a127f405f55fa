#pragma once

// Run configuration of the command-line tool, read from a JSON file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "glamsa/glam.hpp"
#include "glamsa/io.hpp"
#include "glamsa/sensitivity.hpp"
#include "glamsa/simulators.hpp"

namespace glamsa::cli {

struct SensSettings {
  std::string estimator = "pce";  // pce, pick-freeze or both
  std::size_t n_mc = 100000;
  std::size_t n_pc = 10000;
  std::size_t n_boot = 0;
  double level = 0.95;
  bool classical = true;
  std::size_t max_order = 3;
  std::vector<sens::QoiSpec> qois;
};

struct StudySettings {
  std::vector<std::string> metrics{"eps_Q"};
  std::size_t n_test = 10000;
  std::size_t reference_points = 200;
  std::size_t reference_reps = 1000;
};

struct ReferenceSettings {
  std::size_t points = 1000;
  std::size_t reps = 1000;
  bool classical = true;
  std::vector<sens::QoiSpec> qois;
};

struct RunConfig {
  std::string simulator;                    // toy, heston, sir; empty with external data
  std::optional<std::filesystem::path> data;
  pce::InputModel input;                    // from the simulator, or given with external data
  sim::HestonConfig heston;
  sim::SirConfig sir;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> N{1000};
  std::size_t repetitions = 1;
  std::size_t replications = 1;  // simulate: runs per design point
  glam::FitConfig fit;
  SensSettings sens;
  StudySettings study;
  ReferenceSettings reference;
  io::Json canonical;  // parsed config with the seed applied

  sim::Simulator make_simulator() const;
  std::uint64_t master_seed() const;
  std::string hash() const;
};

/// Throws InputError on unknown keys, bad values, missing files or a missing seed.
RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override);
RunConfig parse_config(const io::Json& j, const std::filesystem::path& base_dir,
                       std::optional<std::uint64_t> seed_override);

}  // namespace glamsa::cli
