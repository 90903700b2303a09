#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lossdyn/trajectory.hpp"

namespace lossdyn {

struct GradientNormRecord {
  std::int64_t step = 0;
  std::map<std::string, double> norms;
  friend bool operator==(const GradientNormRecord&, const GradientNormRecord&) = default;
};

struct GroupCosineRecord {
  std::int64_t step = 0;
  /// Empty when either aggregate gradient has zero norm.
  std::optional<double> cosine;
  friend bool operator==(const GroupCosineRecord&, const GroupCosineRecord&) = default;
};

/// Everything one training run logs: the meta header, one trajectory per
/// tracked uid, and optional per-checkpoint sidecar records.
struct RunLog {
  RunMeta meta;
  std::vector<LossTrajectory> trajectories;
  std::vector<GradientNormRecord> gradient_norms;
  std::vector<GroupCosineRecord> group_cosines;

  std::vector<std::string> uids() const;
};

bool operator==(const RunLog& a, const RunLog& b);

/// Line-delimited JSON: a meta record, then one record per checkpoint, then
/// sidecars. Doubles are written in shortest round-trip form.
void write_run_log(std::ostream& out, const RunLog& log);
RunLog read_run_log(std::istream& in);

RunLog ingest_log(const std::filesystem::path& path);
void emit_log(const std::filesystem::path& path, const RunLog& log);

/// Writes `contents` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace lossdyn
