#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <random>
#include <vector>

#include "lossdyn/toy_config.hpp"
#include "lossdyn/toy_data.hpp"

namespace lossdyn {

enum class Param : std::size_t { W0, B0, Head, Bias, LoraA, LoraB, Scale };
inline constexpr std::size_t kNumParams = 7;

std::string_view to_string(Param p) noexcept;

/// Frozen base (input weights W0, optional tanh layer with bias b0 and head)
/// plus the method-specific trainable adapter. Biases and vectors are stored
/// as single-row matrices so every tensor shares one type.
struct AdapterModel {
  Method method = Method::LowRank;
  int rank = 0;
  double alpha = 0.0;
  double dropout = 0.0;
  /// Base weights W0 (d x H, or d x C when there is no hidden layer).
  Eigen::MatrixXd w0;
  Eigen::MatrixXd b0;
  Eigen::MatrixXd head;
  Eigen::MatrixXd bias;
  /// Low-rank factors: B (d x r), A (r x cols(W0)).
  Eigen::MatrixXd lora_a;
  Eigen::MatrixXd lora_b;
  /// Per-input-feature scaling of W0 rows (1 x d).
  Eigen::MatrixXd scale;

  bool has_hidden() const noexcept { return head.size() > 0; }
  int num_classes() const noexcept { return static_cast<int>(bias.cols()); }
  int feature_dim() const noexcept { return static_cast<int>(w0.rows()); }
  double scaling() const noexcept { return rank > 0 ? alpha / rank : 0.0; }

  Eigen::MatrixXd& tensor(Param p);
  const Eigen::MatrixXd& tensor(Param p) const;
  /// Parameters that receive updates under the current method.
  std::vector<Param> trainable() const;
  /// W0 + (alpha/r) B A, W0 with scaled rows, or W0.
  Eigen::MatrixXd effective_weight() const;
};

/// Gradients indexed by Param; untrainable entries stay empty.
using Gradients = std::array<Eigen::MatrixXd, kNumParams>;

double global_norm(const Gradients& grads);

/// Fresh base model drawn from `rng`; the method is Full so everything trains.
AdapterModel init_base_model(const ToyConfig& config, std::mt19937_64& rng);

/// Switches a pretrained base to `config.method`, initialising the adapter
/// (A ~ N(0, 0.02^2), B = 0, or scale = 1).
AdapterModel attach_adapter(const AdapterModel& base, const ToyConfig& config, std::mt19937_64& rng);

/// Logits (n x C) in inference mode.
Eigen::MatrixXd logits(const AdapterModel& model, const Eigen::MatrixXd& x);

/// Softmax of the effective logits, one row per example.
Eigen::MatrixXd predict_distributions(const AdapterModel& model, const Eigen::MatrixXd& x);
Eigen::MatrixXd predict_distributions(const AdapterModel& model, const std::vector<SyntheticExample>& examples);

/// Per-example hard-label cross-entropy in inference mode.
Eigen::VectorXd example_losses(const AdapterModel& model, const Eigen::MatrixXd& x, const std::vector<int>& labels);

/// Weighted cross-entropy sum_i sum_c T_ic (-log q_ic) / sum T, where row i
/// of `targets` is the target distribution times the class weights. With
/// one-hot rows this is the class-weighted mean CE. `dropout_mask` (n x d,
/// already divided by the keep probability) applies to the adapter input.
double batch_loss(const AdapterModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets,
                  const Eigen::MatrixXd* dropout_mask = nullptr);

double loss_and_gradient(const AdapterModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets,
                         Gradients& grads, const Eigen::MatrixXd* dropout_mask = nullptr);

/// One-hot target rows scaled by the per-class weights.
Eigen::MatrixXd weighted_targets(const std::vector<int>& labels, const Eigen::VectorXd& class_weights);

/// L2 norm of the unweighted CE gradient of one example w.r.t. the trainable parameters.
double per_example_gradient_norm(const AdapterModel& model, const SyntheticExample& example);
double per_example_gradient_norm(const AdapterModel& model, const Eigen::VectorXd& features, int label);

/// Cosine between the mean-loss gradients of two groups; empty when either has zero norm.
std::optional<double> group_gradient_cosine(const AdapterModel& model, const std::vector<SyntheticExample>& group_a,
                                            const std::vector<SyntheticExample>& group_b);
std::optional<double> group_gradient_cosine(const AdapterModel& model, const Eigen::MatrixXd& xa,
                                            const std::vector<int>& ya, const Eigen::MatrixXd& xb,
                                            const std::vector<int>& yb);

}  // namespace lossdyn
