#pragma once

// JSON and CSV exchange formats for models, reports and sample sets, plus
// small file helpers (hashing, atomic writes).

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "glamsa/glam.hpp"
#include "glamsa/pce.hpp"
#include "glamsa/sobol_report.hpp"

namespace glamsa::io {

using Json = nlohmann::ordered_json;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

Json to_json(const pce::InputModel& input);
pce::InputModel input_from_json(const Json& j);

Json to_json(const pce::PceModel& model);
pce::PceModel pce_from_json(const Json& j);

Json to_json(const glam::GlamModel& model);
glam::GlamModel glam_from_json(const Json& j);

Json to_json(const glam::FitReport& report);

Json to_json(const SobolReport& report);
SobolReport sobol_from_json(const Json& j);

/// Columns: qoi, estimator, subset, index, value, display, ci_lower, ci_upper.
/// One row per subset and index type (first_order, total, higher_order).
std::string sobol_to_csv(const SobolReport& report);
/// Reads back the entries (and qoi/estimator) written by sobol_to_csv.
SobolReport sobol_from_csv(const std::string& text);

/// Header x1..xM,y followed by one row per design point. Lines starting with
/// '#' are comments.
std::string sample_set_to_csv(const glam::SampleSet& data);
/// Throws InputError naming the offending data row (1-based) and file line.
glam::SampleSet sample_set_from_csv(const std::string& text, const std::string& source = "<csv>");

/// Replication archive: columns point, rep, x1..xM, y.
struct ReplicationRow {
  std::size_t point = 0;
  std::size_t rep = 0;
  std::vector<double> x;
  double y = 0.0;
};
std::string replications_to_csv(const std::vector<ReplicationRow>& rows);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data);
std::string hex64(std::uint64_t v);

/// Throws InputError if the file cannot be read.
std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);

}  // namespace glamsa::io
