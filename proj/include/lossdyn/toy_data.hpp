#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lossdyn/annotation.hpp"
#include "lossdyn/toy_config.hpp"

namespace lossdyn {

struct SyntheticExample {
  std::string uid;
  Eigen::VectorXd features;
  /// Latent annotator distribution the counts were drawn from.
  Eigen::VectorXd distribution;
  std::vector<std::int64_t> counts;
  int gold = 0;
  EntropyCategory tier = EntropyCategory::Clean;
  bool bulk = false;

  /// Empirical annotator distribution counts / K.
  Eigen::VectorXd annotator_distribution() const;
  AnnotationRecord record() const;
};

struct ToyDataset {
  std::vector<SyntheticExample> probe;
  std::vector<SyntheticExample> bulk;
  /// Class centroids as rows (C x d), pairwise distance = separation.
  Eigen::MatrixXd centroids;
};

/// Entropy band [lo, hi) of a tier; the contested band is closed at ln C.
std::pair<double, double> tier_band(EntropyCategory tier, const ToyConfig& config);

/// Exact per-tier probe counts by largest remainder.
std::array<int, 3> tier_counts(const ToyConfig& config);

ToyDataset generate_dataset(const ToyConfig& config, std::uint64_t seed);

struct ProbeSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Stratified by tier; indices into the probe list, in probe order.
ProbeSplit split_probe(const std::vector<SyntheticExample>& probe, double train_fraction, std::uint64_t seed);

std::vector<AnnotationRecord> probe_records(const ToyDataset& data);

Eigen::MatrixXd feature_matrix(const std::vector<SyntheticExample>& examples);

}  // namespace lossdyn
