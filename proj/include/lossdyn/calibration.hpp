#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "lossdyn/annotation.hpp"

namespace lossdyn {

/// Entropy in nats of a predicted distribution; rejects non-simplex input.
double prediction_entropy(const Eigen::Ref<const Eigen::VectorXd>& dist);

/// Expected calibration error over equal-width confidence bins (lo, hi],
/// with the first bin closed at 0. Rows of `dists` are predictions.
double ece(const Eigen::MatrixXd& dists, std::span<const int> golds, std::size_t bins = 10);

struct CalibrationMetrics {
  std::size_t n = 0;
  double mean_prediction_entropy = 0.0;
  double mean_max_confidence = 0.0;
  double ece = 0.0;
  double accuracy = 0.0;
};

CalibrationMetrics calibration_metrics(const Eigen::MatrixXd& dists, std::span<const int> golds,
                                       std::size_t bins = 10);

struct CalibrationReport {
  std::size_t bins = 10;
  CalibrationMetrics overall;
  /// Indexed by EntropyCategory; empty when the category has no examples.
  std::vector<std::optional<CalibrationMetrics>> by_category;
  std::vector<EntropyCategory> omitted;
};

CalibrationReport calibration_by_category(const Eigen::MatrixXd& dists, std::span<const int> golds,
                                          std::span<const EntropyCategory> categories, std::size_t bins = 10);

}  // namespace lossdyn
