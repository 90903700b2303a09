#include "lossdyn/toy_model.hpp"

#include <algorithm>
#include <cmath>

#include "lossdyn/error.hpp"
#include "lossdyn/math.hpp"
#include "lossdyn/random.hpp"

namespace lossdyn {

namespace {

constexpr double kAdapterInitStd = 0.02;
constexpr double kHeadInitStd = 0.1;

struct Forward {
  Eigen::MatrixXd adapter_input;
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd logits;
};

Forward forward(const AdapterModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd* mask) {
  Forward f;
  Eigen::MatrixXd pre;
  if (m.method == Method::LowRank) {
    f.adapter_input = mask != nullptr ? Eigen::MatrixXd(x.cwiseProduct(*mask)) : x;
    pre = x * m.w0 + m.scaling() * (f.adapter_input * m.lora_b) * m.lora_a;
  } else {
    pre = x * m.effective_weight();
  }
  if (m.has_hidden()) {
    f.hidden = (pre.rowwise() + m.b0.row(0)).array().tanh().matrix();
    f.logits = (f.hidden * m.head).rowwise() + m.bias.row(0);
  } else {
    f.logits = pre.rowwise() + m.bias.row(0);
  }
  return f;
}

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = z.row(i).array() - log_sum_exp(z.row(i).transpose());
  return out;
}

double weighted_ce(const Eigen::MatrixXd& log_q, const Eigen::MatrixXd& targets) {
  const double total = targets.sum();
  if (!(total > 0.0)) throw Error(Errc::training, "target weights sum to zero");
  const double loss = -(targets.cwiseProduct(log_q)).sum() / total;
  if (!std::isfinite(loss)) throw Error(Errc::training, "non-finite loss");
  return loss;
}

void check_targets(const AdapterModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets) {
  if (x.cols() != m.feature_dim()) throw Error(Errc::shape, "feature dimension mismatch");
  if (targets.rows() != x.rows() || targets.cols() != m.num_classes()) throw Error(Errc::shape, "target shape mismatch");
}

}  // namespace

std::string_view to_string(Param p) noexcept {
  switch (p) {
    case Param::W0: return "W0";
    case Param::B0: return "b0";
    case Param::Head: return "head";
    case Param::Bias: return "bias";
    case Param::LoraA: return "A";
    case Param::LoraB: return "B";
    case Param::Scale: return "scale";
  }
  return "unknown";
}

Eigen::MatrixXd& AdapterModel::tensor(Param p) {
  return const_cast<Eigen::MatrixXd&>(static_cast<const AdapterModel&>(*this).tensor(p));
}

const Eigen::MatrixXd& AdapterModel::tensor(Param p) const {
  switch (p) {
    case Param::W0: return w0;
    case Param::B0: return b0;
    case Param::Head: return head;
    case Param::Bias: return bias;
    case Param::LoraA: return lora_a;
    case Param::LoraB: return lora_b;
    case Param::Scale: return scale;
  }
  return w0;
}

std::vector<Param> AdapterModel::trainable() const {
  switch (method) {
    case Method::Full:
      if (has_hidden()) return {Param::W0, Param::B0, Param::Head, Param::Bias};
      return {Param::W0, Param::Bias};
    case Method::LowRank: return {Param::LoraA, Param::LoraB, Param::Bias};
    case Method::Scaling: return {Param::Scale, Param::Bias};
  }
  return {};
}

Eigen::MatrixXd AdapterModel::effective_weight() const {
  switch (method) {
    case Method::LowRank: return w0 + scaling() * lora_b * lora_a;
    case Method::Scaling: return scale.row(0).transpose().asDiagonal() * w0;
    case Method::Full: return w0;
  }
  return w0;
}

double global_norm(const Gradients& grads) {
  double s = 0.0;
  for (const auto& g : grads) s += g.squaredNorm();
  return std::sqrt(s);
}

AdapterModel init_base_model(const ToyConfig& config, std::mt19937_64& rng) {
  AdapterModel m;
  m.method = Method::Full;
  const int d = config.feature_dim;
  const int c = config.num_classes;
  if (config.hidden_dim > 0) {
    const int h = config.hidden_dim;
    m.w0 = normal_matrix(rng, d, h, 1.0 / std::sqrt(static_cast<double>(d)));
    m.b0 = Eigen::MatrixXd::Zero(1, h);
    m.head = normal_matrix(rng, h, c, kHeadInitStd);
  } else {
    m.w0 = normal_matrix(rng, d, c, kHeadInitStd);
  }
  m.bias = Eigen::MatrixXd::Zero(1, c);
  return m;
}

AdapterModel attach_adapter(const AdapterModel& base, const ToyConfig& config, std::mt19937_64& rng) {
  AdapterModel m = base;
  m.method = config.method;
  m.lora_a.resize(0, 0);
  m.lora_b.resize(0, 0);
  m.scale.resize(0, 0);
  m.rank = 0;
  m.alpha = 0.0;
  m.dropout = 0.0;
  if (m.method == Method::LowRank) {
    m.rank = config.rank;
    m.alpha = config.effective_alpha();
    m.dropout = config.dropout;
    m.lora_a = normal_matrix(rng, config.rank, m.w0.cols(), kAdapterInitStd);
    m.lora_b = Eigen::MatrixXd::Zero(m.w0.rows(), config.rank);
  } else if (m.method == Method::Scaling) {
    m.scale = Eigen::MatrixXd::Ones(1, m.w0.rows());
  }
  return m;
}

Eigen::MatrixXd logits(const AdapterModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.feature_dim()) throw Error(Errc::shape, "feature dimension mismatch");
  return forward(model, x, nullptr).logits;
}

Eigen::MatrixXd predict_distributions(const AdapterModel& model, const Eigen::MatrixXd& x) {
  return softmax_rows(logits(model, x));
}

Eigen::MatrixXd predict_distributions(const AdapterModel& model, const std::vector<SyntheticExample>& examples) {
  return predict_distributions(model, feature_matrix(examples));
}

Eigen::VectorXd example_losses(const AdapterModel& model, const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw Error(Errc::shape, "label count mismatch");
  const Eigen::MatrixXd log_q = log_softmax_rows(logits(model, x));
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = -log_q(i, labels[static_cast<std::size_t>(i)]);
  return out;
}

double batch_loss(const AdapterModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets,
                  const Eigen::MatrixXd* dropout_mask) {
  check_targets(model, x, targets);
  return weighted_ce(log_softmax_rows(forward(model, x, dropout_mask).logits), targets);
}

double loss_and_gradient(const AdapterModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets,
                         Gradients& grads, const Eigen::MatrixXd* dropout_mask) {
  check_targets(model, x, targets);
  const Forward f = forward(model, x, dropout_mask);
  const Eigen::MatrixXd log_q = log_softmax_rows(f.logits);
  const double loss = weighted_ce(log_q, targets);

  // dL/dz_i = (sum_c T_ic) q_i - T_i, over the total target weight.
  const Eigen::MatrixXd q = log_q.array().exp().matrix();
  const Eigen::MatrixXd dz = (q.array().colwise() * targets.rowwise().sum().array() - targets.array()).matrix() / targets.sum();

  for (auto& g : grads) g.resize(0, 0);
  const auto trainable = model.trainable();
  const auto wants = [&](Param p) { return std::find(trainable.begin(), trainable.end(), p) != trainable.end(); };

  grads[static_cast<std::size_t>(Param::Bias)] = dz.colwise().sum();
  Eigen::MatrixXd dpre;
  if (model.has_hidden()) {
    if (wants(Param::Head)) grads[static_cast<std::size_t>(Param::Head)] = f.hidden.transpose() * dz;
    dpre = ((dz * model.head.transpose()).array() * (1.0 - f.hidden.array().square())).matrix();
    if (wants(Param::B0)) grads[static_cast<std::size_t>(Param::B0)] = dpre.colwise().sum();
  } else {
    dpre = dz;
  }
  switch (model.method) {
    case Method::Full:
      grads[static_cast<std::size_t>(Param::W0)] = x.transpose() * dpre;
      break;
    case Method::LowRank: {
      const double s = model.scaling();
      grads[static_cast<std::size_t>(Param::LoraB)] = s * f.adapter_input.transpose() * dpre * model.lora_a.transpose();
      grads[static_cast<std::size_t>(Param::LoraA)] = s * (f.adapter_input * model.lora_b).transpose() * dpre;
      break;
    }
    case Method::Scaling:
      grads[static_cast<std::size_t>(Param::Scale)] = x.cwiseProduct(dpre * model.w0.transpose()).colwise().sum();
      break;
  }
  return loss;
}

Eigen::MatrixXd weighted_targets(const std::vector<int>& labels, const Eigen::VectorXd& class_weights) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), class_weights.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= class_weights.size()) throw Error(Errc::domain, "label out of range");
    t(static_cast<Eigen::Index>(i), y) = class_weights(y);
  }
  return t;
}

double per_example_gradient_norm(const AdapterModel& model, const Eigen::VectorXd& features, int label) {
  Gradients g;
  loss_and_gradient(model, features.transpose(), weighted_targets({label}, Eigen::VectorXd::Ones(model.num_classes())), g);
  return global_norm(g);
}

double per_example_gradient_norm(const AdapterModel& model, const SyntheticExample& example) {
  return per_example_gradient_norm(model, example.features, example.gold);
}

std::optional<double> group_gradient_cosine(const AdapterModel& model, const Eigen::MatrixXd& xa,
                                            const std::vector<int>& ya, const Eigen::MatrixXd& xb,
                                            const std::vector<int>& yb) {
  if (ya.empty() || yb.empty()) throw Error(Errc::empty_input, "gradient cosine needs two non-empty groups");
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(model.num_classes());
  Gradients ga;
  Gradients gb;
  loss_and_gradient(model, xa, weighted_targets(ya, ones), ga);
  loss_and_gradient(model, xb, weighted_targets(yb, ones), gb);
  const double na = global_norm(ga);
  const double nb = global_norm(gb);
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  double dot = 0.0;
  for (std::size_t k = 0; k < kNumParams; ++k) {
    if (ga[k].size() > 0) dot += ga[k].cwiseProduct(gb[k]).sum();
  }
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

std::optional<double> group_gradient_cosine(const AdapterModel& model, const std::vector<SyntheticExample>& group_a,
                                            const std::vector<SyntheticExample>& group_b) {
  const auto labels = [](const std::vector<SyntheticExample>& g) {
    std::vector<int> y;
    for (const auto& ex : g) y.push_back(ex.gold);
    return y;
  };
  if (group_a.empty() || group_b.empty()) throw Error(Errc::empty_input, "gradient cosine needs two non-empty groups");
  return group_gradient_cosine(model, feature_matrix(group_a), labels(group_a), feature_matrix(group_b), labels(group_b));
}

}  // namespace lossdyn
