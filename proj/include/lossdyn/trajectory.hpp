#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lossdyn/annotation.hpp"

namespace lossdyn {

/// Strictly increasing global-step indices at which per-example losses are logged.
class CheckpointSchedule {
 public:
  CheckpointSchedule() = default;
  explicit CheckpointSchedule(std::vector<std::int64_t> steps);

  const std::vector<std::int64_t>& steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return steps_.size(); }
  std::optional<std::size_t> index_of(std::int64_t step) const;

  friend bool operator==(const CheckpointSchedule&, const CheckpointSchedule&) = default;

 private:
  std::vector<std::int64_t> steps_;
};

/// Per-checkpoint loss (nats) of one example, optionally with the gold-class
/// probability and the full predicted distribution (T x C).
struct LossTrajectory {
  std::string uid;
  Eigen::VectorXd losses;
  std::optional<Eigen::VectorXd> gold_probs;
  std::optional<Eigen::MatrixXd> pred_dists;

  std::size_t size() const noexcept { return static_cast<std::size_t>(losses.size()); }
  void validate() const;
};

bool operator==(const LossTrajectory& a, const LossTrajectory& b);

enum class Method { LowRank, Full, Scaling };

std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view name);

struct RunMeta {
  std::string run_id;
  Method method = Method::LowRank;
  int rank = 0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::string dataset;
  CheckpointSchedule schedule;
  /// Steps of the schedule that coincide with epoch boundaries.
  std::vector<std::int64_t> epoch_steps;
  std::map<std::string, std::string> tags;

  void validate() const;
  /// Schedule indices of the epoch-boundary checkpoints.
  std::vector<std::size_t> epoch_indices() const;

  friend bool operator==(const RunMeta&, const RunMeta&) = default;
};

/// Mean loss over all checkpoints; lower means learned faster.
double aulc(const LossTrajectory& traj);

/// Last-checkpoint loss minus first-checkpoint loss; positive means un-learning.
double delta_loss(const LossTrajectory& traj);

struct Cartography {
  double confidence = 0.0;
  double variability = 0.0;
};

/// Mean and population standard deviation of the gold-class probability
/// over the given checkpoint indices.
Cartography cartography_stats(const LossTrajectory& traj, std::span<const std::size_t> checkpoint_indices);

/// One joined (annotation, trajectory) row.
struct TableRow {
  std::string uid;
  double entropy = 0.0;
  EntropyCategory category = EntropyCategory::Clean;
  std::size_t bin = 0;
  int gold = 0;
  double aulc = 0.0;
  double delta = 0.0;
  std::optional<Cartography> cartography;
  std::optional<double> text_length;
};

struct AnalysisTable {
  std::vector<TableRow> rows;
  std::size_t dropped_annotations = 0;
  std::size_t dropped_trajectories = 0;
};

struct JoinOptions {
  FixedThresholds categories{};
  /// Optional extra binning (e.g. quartiles) recorded in TableRow::bin.
  std::optional<BinningScheme> bins;
  /// Checkpoint indices used for cartography; empty disables it.
  std::vector<std::size_t> cartography_indices;
};

/// Aligns annotations and trajectories on uid, in annotation order.
AnalysisTable join(std::span<const AnnotationRecord> records, std::span<const LossTrajectory> trajectories,
                   const JoinOptions& options = {});

}  // namespace lossdyn
