#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "lossdyn/trajectory.hpp"

namespace lossdyn {

/// Generative and training configuration of the desk-scale lab.
struct ToyConfig {
  // Data generation.
  int feature_dim = 16;
  int num_classes = 3;
  int probe_size = 300;
  std::array<double, 3> tier_proportions{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  /// Symmetric Dirichlet concentration proposed for each tier before rejection.
  std::array<double, 3> tier_concentrations{0.15, 1.0, 8.0};
  FixedThresholds tier_thresholds{};
  int bulk_size = 3000;
  double centroid_separation = 3.5;
  double noise_sigma = 1.0;
  int annotators = 100;
  std::string dataset = "toy";

  // Model.
  /// Width of the frozen tanh encoder; 0 gives a purely linear model.
  int hidden_dim = 128;
  Method method = Method::LowRank;
  int rank = 2;
  std::optional<double> alpha;
  double dropout = 0.05;

  // Pretraining of the base model on the bulk set.
  double pretrain_lr = 1e-3;
  int pretrain_epochs = 1;

  // Fine-tuning.
  double lr = 7.5e-3;
  int epochs = 5;
  int batch_size = 32;
  double warmup_fraction = 0.06;
  double clip_norm = 1.0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int log_every = 13;
  double probe_train_fraction = 0.8;

  std::uint64_t seed = 42;

  double effective_alpha() const { return alpha.value_or(2.0 * rank); }
  void validate() const;
};

std::string config_to_json(const ToyConfig& config);
ToyConfig config_from_json(const std::string& text);
/// Applies a JSON object of overrides on top of `base`; unknown keys are errors.
ToyConfig apply_overrides(const ToyConfig& base, const std::string& overrides_json);
ToyConfig load_config(const std::filesystem::path& path);

}  // namespace lossdyn
