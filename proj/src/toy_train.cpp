#include "lossdyn/toy_train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lossdyn/error.hpp"
#include "lossdyn/math.hpp"
#include "lossdyn/random.hpp"

namespace lossdyn {

namespace {

std::vector<int> gold_labels(const std::vector<SyntheticExample>& examples) {
  std::vector<int> y;
  y.reserve(examples.size());
  for (const auto& ex : examples) y.push_back(ex.gold);
  return y;
}

Eigen::MatrixXd dropout_mask(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double rate) {
  std::bernoulli_distribution keep(1.0 - rate);
  Eigen::MatrixXd mask(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = keep(rng) ? scale : 0.0;
  }
  return mask;
}

void check_finite(const AdapterModel& model, std::int64_t step) {
  for (Param p : model.trainable()) {
    if (!model.tensor(p).allFinite()) {
      throw Error(Errc::training, "non-finite parameter " + std::string(to_string(p)) + " at step " + std::to_string(step));
    }
  }
}

void check_compatible(const ToyConfig& lab, const ToyConfig& run) {
  if (lab.feature_dim != run.feature_dim || lab.num_classes != run.num_classes || lab.hidden_dim != run.hidden_dim ||
      lab.seed != run.seed || lab.probe_size != run.probe_size || lab.bulk_size != run.bulk_size) {
    throw Error(Errc::config, "run config is incompatible with the prepared lab (data or base model differ)");
  }
}

}  // namespace

double LrSchedule::at(std::int64_t step) const {
  if (step <= warmup_steps) return warmup_steps > 0 ? peak * static_cast<double>(step) / static_cast<double>(warmup_steps) : peak;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

LrSchedule make_schedule(double peak, std::int64_t total_steps, double warmup_fraction) {
  if (total_steps < 1) throw Error(Errc::config, "schedule needs at least one step");
  LrSchedule s;
  s.peak = peak;
  s.total_steps = total_steps;
  s.warmup_steps = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(warmup_fraction * static_cast<double>(total_steps))),
                                          total_steps - 1);
  return s;
}

AdamW::AdamW(double beta1, double beta2, double epsilon, double weight_decay)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), weight_decay_(weight_decay) {}

bool decays(Param p) noexcept { return p != Param::Bias && p != Param::B0; }

void AdamW::step(AdapterModel& model, const Gradients& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param p : model.trainable()) {
    const auto k = static_cast<std::size_t>(p);
    const Eigen::MatrixXd& g = grads[k];
    Eigen::MatrixXd& w = model.tensor(p);
    if (g.rows() != w.rows() || g.cols() != w.cols()) throw Error(Errc::shape, "gradient shape mismatch");
    if (m_[k].size() == 0) {
      m_[k] = Eigen::MatrixXd::Zero(w.rows(), w.cols());
      v_[k] = Eigen::MatrixXd::Zero(w.rows(), w.cols());
    }
    if (decays(p)) w *= 1.0 - lr * weight_decay_;
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseAbs2();
    w.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + epsilon_);
  }
}

double clip_gradients(Gradients& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& g : grads) g *= factor;
  }
  return norm;
}

double accuracy(const AdapterModel& model, const std::vector<SyntheticExample>& examples) {
  if (examples.empty()) throw Error(Errc::empty_input, "accuracy of no examples");
  const Eigen::MatrixXd z = logits(model, feature_matrix(examples));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Eigen::Index argmax = 0;
    z.row(static_cast<Eigen::Index>(i)).maxCoeff(&argmax);
    if (argmax == examples[i].gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

AdapterModel pretrain_base(const std::vector<SyntheticExample>& bulk, const ToyConfig& config) {
  if (bulk.empty()) throw Error(Errc::empty_input, "pretraining needs a non-empty bulk set");
  auto init_rng = make_rng(config.seed, Stream::PretrainInit);
  AdapterModel model = init_base_model(config, init_rng);
  auto shuffle_rng = make_rng(config.seed, Stream::PretrainShuffle);
  const Eigen::MatrixXd x = feature_matrix(bulk);
  const std::vector<int> y = gold_labels(bulk);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(config.num_classes);
  AdamW opt(config.beta1, config.beta2, config.epsilon, config.weight_decay);
  std::vector<Eigen::Index> order(bulk.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);
  Gradients grads;
  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> yb;
      for (auto i : idx) yb.push_back(y[static_cast<std::size_t>(i)]);
      loss_and_gradient(model, x(idx, Eigen::all), weighted_targets(yb, ones), grads);
      opt.step(model, grads, config.pretrain_lr);
      check_finite(model, opt.steps());
    }
  }
  return model;
}

std::vector<SyntheticExample> ToyLab::tracked_examples() const {
  std::vector<SyntheticExample> out;
  for (auto i : split.train) out.push_back(data.probe[i]);
  return out;
}

ToyLab prepare_lab(const ToyConfig& config) {
  config.validate();
  ToyLab lab;
  lab.config = config;
  lab.data = generate_dataset(config, config.seed);
  lab.split = split_probe(lab.data.probe, config.probe_train_fraction, config.seed);
  lab.base = pretrain_base(lab.data.bulk, config);
  lab.base_accuracy = accuracy(lab.base, lab.data.bulk);
  return lab;
}

std::string_view to_string(LossMode m) noexcept { return m == LossMode::Hard ? "hard" : "soft"; }

std::string_view to_string(Composition c) noexcept {
  switch (c) {
    case Composition::All: return "all";
    case Composition::LowOnly: return "low-only";
    case Composition::HighOnly: return "high-only";
    case Composition::Balanced: return "balanced";
  }
  return "unknown";
}

Composition parse_composition(std::string_view name) {
  for (auto c : {Composition::All, Composition::LowOnly, Composition::HighOnly, Composition::Balanced}) {
    if (name == to_string(c)) return c;
  }
  throw Error(Errc::config, "unknown composition mode '" + std::string(name) + "'");
}

Eigen::VectorXd inverse_frequency_weights(const std::vector<int>& labels, int num_classes) {
  if (labels.empty()) throw Error(Errc::empty_input, "class weights of no labels");
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(num_classes);
  for (int y : labels) freq(y) += 1.0;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(num_classes);
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (freq(c) > 0.0) {
      w(c) = 1.0 / freq(c);
      ++present;
    }
  }
  return w * (static_cast<double>(present) / w.sum());
}

std::vector<std::size_t> select_training_probe(const ToyLab& lab, Composition mode) {
  std::array<std::vector<std::size_t>, kNumCategories> by_tier;
  for (auto i : lab.split.train) by_tier[static_cast<std::size_t>(lab.data.probe[i].tier)].push_back(i);
  std::vector<std::size_t> out;
  switch (mode) {
    case Composition::All: out = lab.split.train; break;
    case Composition::LowOnly: out = by_tier[static_cast<std::size_t>(EntropyCategory::Clean)]; break;
    case Composition::HighOnly: out = by_tier[static_cast<std::size_t>(EntropyCategory::Contested)]; break;
    case Composition::Balanced: {
      std::size_t n = by_tier[0].size();
      for (const auto& t : by_tier) n = std::min(n, t.size());
      for (const auto& t : by_tier) out.insert(out.end(), t.begin(), t.begin() + static_cast<std::ptrdiff_t>(n));
      std::sort(out.begin(), out.end());
      break;
    }
  }
  if (out.empty()) {
    throw Error(Errc::protocol, "composition '" + std::string(to_string(mode)) + "' selects no training examples");
  }
  return out;
}

std::string default_run_id(const ToyConfig& config) {
  std::string id(to_string(config.method));
  if (config.method == Method::LowRank) id += "-r" + std::to_string(config.rank);
  return id + "-s" + std::to_string(config.seed);
}

FinetuneResult finetune(const ToyLab& lab, const ToyConfig& config, const FinetuneOptions& options) {
  config.validate();
  check_compatible(lab.config, config);
  const int num_classes = config.num_classes;

  // Training union: bulk first, then the selected probe-train examples.
  const std::vector<std::size_t> selected = select_training_probe(lab, options.composition);
  std::vector<const SyntheticExample*> train;
  for (const auto& ex : lab.data.bulk) train.push_back(&ex);
  for (auto i : selected) train.push_back(&lab.data.probe[i]);
  std::vector<int> train_labels;
  for (const auto* ex : train) {
    const auto it = options.label_overrides.find(ex->uid);
    const int y = it != options.label_overrides.end() ? it->second : ex->gold;
    if (y < 0 || y >= num_classes) throw Error(Errc::config, "label override out of range for '" + ex->uid + "'");
    train_labels.push_back(y);
  }

  FinetuneResult result;
  result.class_weights = inverse_frequency_weights(train_labels, num_classes);
  const auto n_train = static_cast<Eigen::Index>(train.size());
  Eigen::MatrixXd x_train(n_train, config.feature_dim);
  Eigen::MatrixXd t_train = Eigen::MatrixXd::Zero(n_train, num_classes);
  for (Eigen::Index i = 0; i < n_train; ++i) {
    const auto* ex = train[static_cast<std::size_t>(i)];
    x_train.row(i) = ex->features.transpose();
    if (options.loss == LossMode::Soft && !ex->bulk) {
      t_train.row(i) = ex->annotator_distribution().cwiseProduct(result.class_weights).transpose();
    } else {
      const int y = train_labels[static_cast<std::size_t>(i)];
      t_train(i, y) = result.class_weights(y);
    }
  }

  result.tracked = lab.split.train;
  std::vector<SyntheticExample> tracked = lab.tracked_examples();
  if (tracked.empty()) throw Error(Errc::config, "no probe examples to track");
  const Eigen::MatrixXd x_tracked = feature_matrix(tracked);
  const std::vector<int> y_tracked = gold_labels(tracked);
  for (const auto& ex : tracked) result.training_presence[ex.uid] = 0;
  std::map<const SyntheticExample*, std::string> tracked_uid;
  for (const auto* ex : train) {
    if (!ex->bulk) tracked_uid[ex] = ex->uid;
  }

  std::vector<std::size_t> clean_rows;
  std::vector<std::size_t> contested_rows;
  for (std::size_t i = 0; i < tracked.size(); ++i) {
    if (tracked[i].tier == EntropyCategory::Clean) clean_rows.push_back(i);
    if (tracked[i].tier == EntropyCategory::Contested) contested_rows.push_back(i);
  }

  auto init_rng = make_rng(config.seed, Stream::AdapterInit);
  AdapterModel model = attach_adapter(lab.base, config, init_rng);
  auto shuffle_rng = make_rng(config.seed, Stream::FinetuneShuffle);
  auto dropout_rng = make_rng(config.seed, Stream::Dropout);

  const auto batch = static_cast<std::size_t>(config.batch_size);
  const auto steps_per_epoch = static_cast<std::int64_t>((train.size() + batch - 1) / batch);
  const std::int64_t total_steps = steps_per_epoch * config.epochs;
  const LrSchedule schedule = make_schedule(config.lr, total_steps, config.warmup_fraction);
  AdamW opt(config.beta1, config.beta2, config.epsilon, config.weight_decay);

  std::vector<std::int64_t> steps;
  std::vector<std::int64_t> epoch_steps;
  std::vector<Eigen::VectorXd> losses;
  std::vector<Eigen::MatrixXd> dists;
  RunLog& log = result.log;

  const auto record_checkpoint = [&](std::int64_t step) {
    const Eigen::MatrixXd z = logits(model, x_tracked);
    Eigen::VectorXd l(z.rows());
    Eigen::MatrixXd q(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double lse = log_sum_exp(z.row(i).transpose());
      l(i) = lse - z(i, y_tracked[static_cast<std::size_t>(i)]);
      q.row(i) = (z.row(i).array() - lse).exp();
    }
    if (!l.allFinite()) throw Error(Errc::training, "non-finite tracking loss at step " + std::to_string(step));
    steps.push_back(step);
    losses.push_back(std::move(l));
    dists.push_back(std::move(q));
    if (options.track_gradient_norms) {
      GradientNormRecord rec;
      rec.step = step;
      for (std::size_t i = 0; i < tracked.size(); ++i) {
        rec.norms[tracked[i].uid] = per_example_gradient_norm(model, tracked[i].features, tracked[i].gold);
      }
      log.gradient_norms.push_back(std::move(rec));
    }
    if (options.track_group_cosine) {
      GroupCosineRecord rec;
      rec.step = step;
      if (!clean_rows.empty() && !contested_rows.empty()) {
        std::vector<int> ya;
        std::vector<int> yb;
        for (auto i : clean_rows) ya.push_back(y_tracked[i]);
        for (auto i : contested_rows) yb.push_back(y_tracked[i]);
        const std::vector<Eigen::Index> ra(clean_rows.begin(), clean_rows.end());
        const std::vector<Eigen::Index> rb(contested_rows.begin(), contested_rows.end());
        rec.cosine = group_gradient_cosine(model, x_tracked(ra, Eigen::all), ya, x_tracked(rb, Eigen::all), yb);
      }
      log.group_cosines.push_back(rec);
    }
  };

  std::vector<Eigen::Index> order(train.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Gradients grads;
  std::int64_t step = 0;
  const bool use_dropout = model.method == Method::LowRank && model.dropout > 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      ++step;
      const std::size_t end = std::min(order.size(), start + batch);
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      for (auto i : idx) {
        const auto it = tracked_uid.find(train[static_cast<std::size_t>(i)]);
        if (it != tracked_uid.end()) ++result.training_presence[it->second];
      }
      const Eigen::MatrixXd xb = x_train(idx, Eigen::all);
      Eigen::MatrixXd mask;
      if (use_dropout) mask = dropout_mask(dropout_rng, xb.rows(), xb.cols(), model.dropout);
      try {
        loss_and_gradient(model, xb, t_train(idx, Eigen::all), grads, use_dropout ? &mask : nullptr);
      } catch (const Error& e) {
        throw Error(Errc::training, std::string(e.what()) + " at step " + std::to_string(step));
      }
      clip_gradients(grads, config.clip_norm);
      result.max_post_clip_norm = std::max(result.max_post_clip_norm, global_norm(grads));
      opt.step(model, grads, schedule.at(step));
      check_finite(model, step);
      const bool epoch_end = step % steps_per_epoch == 0;
      if (epoch_end) epoch_steps.push_back(step);
      if (epoch_end || step % config.log_every == 0) record_checkpoint(step);
    }
  }

  const auto T = static_cast<Eigen::Index>(steps.size());
  log.meta.run_id = options.run_id.empty() ? default_run_id(config) : options.run_id;
  log.meta.method = config.method;
  log.meta.rank = model.rank;
  log.meta.alpha = model.alpha;
  log.meta.seed = config.seed;
  log.meta.dataset = config.dataset;
  log.meta.schedule = CheckpointSchedule(steps);
  log.meta.epoch_steps = epoch_steps;
  log.meta.tags = options.tags;
  log.meta.tags["loss"] = std::string(to_string(options.loss));
  log.meta.tags["composition"] = std::string(to_string(options.composition));
  for (std::size_t i = 0; i < tracked.size(); ++i) {
    LossTrajectory traj;
    traj.uid = tracked[i].uid;
    traj.losses.resize(T);
    traj.gold_probs = Eigen::VectorXd(T);
    traj.pred_dists = Eigen::MatrixXd(T, num_classes);
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto row = static_cast<Eigen::Index>(i);
      traj.losses(t) = losses[static_cast<std::size_t>(t)](row);
      traj.pred_dists->row(t) = dists[static_cast<std::size_t>(t)].row(row);
      (*traj.gold_probs)(t) = (*traj.pred_dists)(t, y_tracked[i]);
    }
    log.trajectories.push_back(std::move(traj));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace lossdyn
