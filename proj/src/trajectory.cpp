#include "lossdyn/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "lossdyn/error.hpp"

namespace lossdyn {

CheckpointSchedule::CheckpointSchedule(std::vector<std::int64_t> steps) : steps_(std::move(steps)) {
  if (steps_.empty()) throw Error(Errc::header, "checkpoint schedule is empty");
  for (std::size_t i = 1; i < steps_.size(); ++i) {
    if (steps_[i] <= steps_[i - 1]) throw Error(Errc::header, "checkpoint schedule must be strictly increasing");
  }
}

std::optional<std::size_t> CheckpointSchedule::index_of(std::int64_t step) const {
  const auto it = std::lower_bound(steps_.begin(), steps_.end(), step);
  if (it == steps_.end() || *it != step) return std::nullopt;
  return static_cast<std::size_t>(it - steps_.begin());
}

void LossTrajectory::validate() const {
  if (losses.size() == 0) throw Error(Errc::empty_input, "trajectory '" + uid + "' is empty");
  for (Eigen::Index t = 0; t < losses.size(); ++t) {
    if (!std::isfinite(losses(t)) || losses(t) < 0.0) {
      throw Error(Errc::invalid_trajectory,
                  "trajectory '" + uid + "' has invalid loss at checkpoint " + std::to_string(t));
    }
  }
  if (gold_probs) {
    if (gold_probs->size() != losses.size()) throw Error(Errc::shape, "gold_probs length mismatch for '" + uid + "'");
    if ((gold_probs->array() < 0.0).any() || (gold_probs->array() > 1.0).any() || !gold_probs->allFinite()) {
      throw Error(Errc::invalid_trajectory, "gold_probs outside [0,1] for '" + uid + "'");
    }
  }
  if (pred_dists) {
    if (pred_dists->rows() != losses.size()) throw Error(Errc::shape, "pred_dists length mismatch for '" + uid + "'");
    for (Eigen::Index t = 0; t < pred_dists->rows(); ++t) {
      if (std::abs(pred_dists->row(t).sum() - 1.0) > 1e-6 || (pred_dists->row(t).array() < 0.0).any()) {
        throw Error(Errc::invalid_trajectory, "pred_dists row is not a distribution for '" + uid + "'");
      }
    }
  }
}

bool operator==(const LossTrajectory& a, const LossTrajectory& b) {
  if (a.uid != b.uid || a.losses.size() != b.losses.size() || a.losses != b.losses) return false;
  if (a.gold_probs.has_value() != b.gold_probs.has_value()) return false;
  if (a.gold_probs && (a.gold_probs->size() != b.gold_probs->size() || *a.gold_probs != *b.gold_probs)) return false;
  if (a.pred_dists.has_value() != b.pred_dists.has_value()) return false;
  if (a.pred_dists) {
    if (a.pred_dists->rows() != b.pred_dists->rows() || a.pred_dists->cols() != b.pred_dists->cols()) return false;
    if (*a.pred_dists != *b.pred_dists) return false;
  }
  return true;
}

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::LowRank: return "lowrank";
    case Method::Full: return "full";
    case Method::Scaling: return "scaling";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "lowrank" || name == "lora") return Method::LowRank;
  if (name == "full") return Method::Full;
  if (name == "scaling" || name == "ia3") return Method::Scaling;
  throw Error(Errc::config, "unknown method '" + std::string(name) + "'");
}

void RunMeta::validate() const {
  if (method == Method::LowRank && rank < 1) throw Error(Errc::header, "lowrank run needs rank >= 1");
  if (schedule.size() == 0) throw Error(Errc::header, "run meta has an empty schedule");
  for (auto s : epoch_steps) {
    if (!schedule.index_of(s)) throw Error(Errc::header, "epoch step " + std::to_string(s) + " is not in the schedule");
  }
}

std::vector<std::size_t> RunMeta::epoch_indices() const {
  std::vector<std::size_t> out;
  for (auto s : epoch_steps) {
    if (auto idx = schedule.index_of(s)) out.push_back(*idx);
  }
  return out;
}

namespace {

void check_losses(const LossTrajectory& traj) {
  if (traj.losses.size() == 0) throw Error(Errc::empty_input, "trajectory '" + traj.uid + "' is empty");
  if (!traj.losses.allFinite()) throw Error(Errc::invalid_trajectory, "trajectory '" + traj.uid + "' has a non-finite loss");
  if ((traj.losses.array() < 0.0).any()) throw Error(Errc::invalid_trajectory, "trajectory '" + traj.uid + "' has a negative loss");
}

}  // namespace

double aulc(const LossTrajectory& traj) {
  check_losses(traj);
  return traj.losses.mean();
}

double delta_loss(const LossTrajectory& traj) {
  if (traj.losses.size() < 2) {
    throw Error(Errc::insufficient_checkpoints, "delta loss of '" + traj.uid + "' needs at least 2 checkpoints");
  }
  check_losses(traj);
  return traj.losses(traj.losses.size() - 1) - traj.losses(0);
}

Cartography cartography_stats(const LossTrajectory& traj, std::span<const std::size_t> checkpoint_indices) {
  if (!traj.gold_probs) throw Error(Errc::missing_data, "trajectory '" + traj.uid + "' has no gold probabilities");
  if (checkpoint_indices.empty()) throw Error(Errc::empty_input, "cartography needs at least one checkpoint");
  const auto& gp = *traj.gold_probs;
  double sum = 0.0;
  for (auto i : checkpoint_indices) {
    if (i >= static_cast<std::size_t>(gp.size())) throw Error(Errc::shape, "cartography checkpoint index out of range");
    sum += gp(static_cast<Eigen::Index>(i));
  }
  const double n = static_cast<double>(checkpoint_indices.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (auto i : checkpoint_indices) {
    const double d = gp(static_cast<Eigen::Index>(i)) - mean;
    ss += d * d;
  }
  return {mean, std::sqrt(ss / n)};
}

namespace {

std::optional<double> text_length(const AnnotationRecord& r) {
  if (!r.text) return std::nullopt;
  // Whitespace-delimited token count of the payload.
  double tokens = 0;
  bool in_token = false;
  for (char c : *r.text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
    if (!space && !in_token) ++tokens;
    in_token = !space;
  }
  return tokens;
}

}  // namespace

AnalysisTable join(std::span<const AnnotationRecord> records, std::span<const LossTrajectory> trajectories,
                   const JoinOptions& options) {
  std::unordered_map<std::string, const LossTrajectory*> by_uid;
  by_uid.reserve(trajectories.size());
  for (const auto& t : trajectories) by_uid.emplace(t.uid, &t);

  AnalysisTable table;
  std::unordered_set<std::string> matched;
  for (const auto& r : records) {
    auto it = by_uid.find(r.uid);
    if (it == by_uid.end()) {
      ++table.dropped_annotations;
      continue;
    }
    matched.insert(r.uid);
    const LossTrajectory& traj = *it->second;
    TableRow row;
    row.uid = r.uid;
    row.entropy = entropy(r);
    row.category = categorize(row.entropy, options.categories, r.num_classes());
    row.bin = options.bins ? bin_index(row.entropy, *options.bins, r.num_classes())
                           : static_cast<std::size_t>(row.category);
    row.gold = r.gold;
    row.aulc = aulc(traj);
    row.delta = traj.size() >= 2 ? delta_loss(traj) : 0.0;
    if (!options.cartography_indices.empty() && traj.gold_probs) {
      row.cartography = cartography_stats(traj, options.cartography_indices);
    }
    row.text_length = text_length(r);
    table.rows.push_back(std::move(row));
  }
  table.dropped_trajectories = trajectories.size() - matched.size();
  if (table.rows.empty()) throw Error(Errc::join, "annotations and trajectories share no uid");
  return table;
}

}  // namespace lossdyn
