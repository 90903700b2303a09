#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lossdyn/toy_config.hpp"
#include "lossdyn/toy_data.hpp"
#include "lossdyn/toy_model.hpp"
#include "lossdyn/trajectory_log.hpp"

namespace lossdyn {

/// Linear warmup to `peak` over `warmup_steps`, then cosine decay to 0 at `total_steps`.
struct LrSchedule {
  double peak = 0.0;
  std::int64_t total_steps = 0;
  std::int64_t warmup_steps = 0;

  double at(std::int64_t step) const;
};

LrSchedule make_schedule(double peak, std::int64_t total_steps, double warmup_fraction);

/// Decoupled weight decay Adam over the trainable tensors of one model.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double epsilon, double weight_decay);
  void step(AdapterModel& model, const Gradients& grads, double lr);
  std::int64_t steps() const noexcept { return t_; }

 private:
  double beta1_;
  double beta2_;
  double epsilon_;
  double weight_decay_;
  std::int64_t t_ = 0;
  Gradients m_;
  Gradients v_;
};

/// Decay applies to weight and adapter tensors, never to biases.
bool decays(Param p) noexcept;

/// Rescales `grads` so their global norm is at most `max_norm`; returns the pre-clip norm.
double clip_gradients(Gradients& grads, double max_norm);

double accuracy(const AdapterModel& model, const std::vector<SyntheticExample>& examples);

/// Full-parameter AdamW on the bulk set with unweighted CE at a constant rate.
AdapterModel pretrain_base(const std::vector<SyntheticExample>& bulk, const ToyConfig& config);

/// Generated data, probe split and pretrained base shared by every run at one seed.
struct ToyLab {
  ToyConfig config;
  ToyDataset data;
  ProbeSplit split;
  AdapterModel base;
  double base_accuracy = 0.0;

  std::vector<SyntheticExample> tracked_examples() const;
};

ToyLab prepare_lab(const ToyConfig& config);

enum class LossMode { Hard, Soft };
enum class Composition { All, LowOnly, HighOnly, Balanced };

std::string_view to_string(LossMode m) noexcept;
std::string_view to_string(Composition c) noexcept;
Composition parse_composition(std::string_view name);

struct FinetuneOptions {
  LossMode loss = LossMode::Hard;
  Composition composition = Composition::All;
  /// Training-label replacements by uid; tracking still uses the original gold.
  std::map<std::string, int> label_overrides;
  bool track_gradient_norms = false;
  bool track_group_cosine = false;
  std::string run_id;
  std::map<std::string, std::string> tags;
};

struct FinetuneResult {
  RunLog log;
  AdapterModel model;
  /// Probe indices of the tracked (probe-train) examples, in log order.
  std::vector<std::size_t> tracked;
  Eigen::VectorXd class_weights;
  /// Number of training batches each tracked uid appeared in.
  std::map<std::string, std::int64_t> training_presence;
  double max_post_clip_norm = 0.0;
};

/// Class-weight vector: inverse frequency, normalised to mean 1 over present classes.
Eigen::VectorXd inverse_frequency_weights(const std::vector<int>& labels, int num_classes);

/// Probe-train indices that join the training union under `mode`.
std::vector<std::size_t> select_training_probe(const ToyLab& lab, Composition mode);

/// Fine-tunes `lab.base` under `config` (method, rank, rates) and logs every tracked example.
FinetuneResult finetune(const ToyLab& lab, const ToyConfig& config, const FinetuneOptions& options = {});

std::string default_run_id(const ToyConfig& config);

}  // namespace lossdyn
