#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lossdyn/annotation.hpp"
#include "lossdyn/error.hpp"
#include "lossdyn/math.hpp"
#include "lossdyn/random.hpp"
#include "lossdyn/toy_config.hpp"
#include "lossdyn/toy_data.hpp"
#include "lossdyn/toy_model.hpp"
#include "lossdyn/toy_train.hpp"
#include "oracles.hpp"

using namespace lossdyn;

namespace {

ToyConfig small_config(Method method, int hidden, int rank = 2) {
  ToyConfig c;
  c.feature_dim = 6;
  c.hidden_dim = hidden;
  c.method = method;
  c.rank = rank;
  c.probe_size = 60;
  c.bulk_size = 200;
  c.epochs = 2;
  return c;
}

AdapterModel random_model(const ToyConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AdapterModel m = attach_adapter(init_base_model(c, rng), c, rng);
  for (auto p : m.trainable()) {
    auto& t = m.tensor(p);
    t += normal_matrix(rng, t.rows(), t.cols(), 0.3);
  }
  return m;
}

Eigen::MatrixXd soft_targets(std::mt19937_64& rng, int n, int classes) {
  Eigen::MatrixXd t(n, classes);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < classes; ++c) t(i, c) = u(rng);
  }
  return t;
}

const ToyLab& default_lab() {
  static const ToyLab lab = prepare_lab(ToyConfig{});
  return lab;
}

}  // namespace

TEST(ToyData, GenerationIsDeterministicPerSeed) {
  const ToyConfig c = small_config(Method::LowRank, 0);
  const auto a = generate_dataset(c, 5);
  const auto b = generate_dataset(c, 5);
  const auto other = generate_dataset(c, 6);
  ASSERT_EQ(a.probe.size(), b.probe.size());
  for (std::size_t i = 0; i < a.probe.size(); ++i) {
    EXPECT_EQ(a.probe[i].features, b.probe[i].features);
    EXPECT_EQ(a.probe[i].counts, b.probe[i].counts);
  }
  EXPECT_NE(a.probe[0].features, other.probe[0].features);
}

TEST(ToyData, TierCountsAndBandsHold) {
  const ToyConfig c;
  const auto counts = tier_counts(c);
  EXPECT_EQ(counts, (std::array<int, 3>{100, 100, 100}));
  const auto data = generate_dataset(c, 42);
  ASSERT_EQ(data.probe.size(), 300u);
  ASSERT_EQ(data.bulk.size(), 3000u);
  std::array<int, 3> seen{};
  for (const auto& e : data.probe) {
    ++seen[static_cast<std::size_t>(e.tier)];
    const double h = entropy(e.counts);
    const auto [lo, hi] = tier_band(e.tier, c);
    EXPECT_GE(h, lo);
    EXPECT_TRUE(h < hi || (e.tier == EntropyCategory::Contested && h <= hi));
    EXPECT_EQ(categorize(h), e.tier);
    std::int64_t k = 0;
    for (auto v : e.counts) k += v;
    EXPECT_EQ(k, c.annotators);
    EXPECT_EQ(e.gold, majority_label(e.counts));
  }
  EXPECT_EQ(seen, counts);
}

TEST(ToyData, LargestRemainderTierCounts) {
  ToyConfig c;
  c.probe_size = 10;
  EXPECT_EQ(tier_counts(c), (std::array<int, 3>{4, 3, 3}));
}

TEST(ToyData, ZeroNoisePlacesExamplesOnCentroids) {
  ToyConfig c = small_config(Method::LowRank, 0);
  c.noise_sigma = 0.0;
  const auto data = generate_dataset(c, 9);
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      EXPECT_NEAR((data.centroids.row(a) - data.centroids.row(b)).norm(), c.centroid_separation, 1e-12);
    }
  }
  for (const auto& e : data.bulk) EXPECT_NEAR((e.features.transpose() - data.centroids.row(e.gold)).norm(), 0.0, 1e-12);
  for (const auto& e : data.probe) {
    const Eigen::VectorXd expected = data.centroids.transpose() * e.distribution;
    EXPECT_NEAR((e.features - expected).norm(), 0.0, 1e-12);
  }
}

TEST(ToyData, SplitIsStratifiedAndDisjoint) {
  const ToyConfig c;
  const auto data = generate_dataset(c, 42);
  const auto split = split_probe(data.probe, 0.8, 42);
  EXPECT_EQ(split.train.size(), 240u);
  EXPECT_EQ(split.validation.size(), 60u);
  std::array<int, 3> per_tier{};
  for (auto i : split.train) ++per_tier[static_cast<std::size_t>(data.probe[i].tier)];
  EXPECT_EQ(per_tier, (std::array<int, 3>{80, 80, 80}));
  std::vector<std::size_t> all = split.train;
  all.insert(all.end(), split.validation.begin(), split.validation.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
}

TEST(ToyModel, AnalyticGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(13);
  for (Method method : {Method::LowRank, Method::Full, Method::Scaling}) {
    for (int hidden : {0, 5}) {
      for (int rank : {1, 2}) {
        if (method != Method::LowRank && rank == 2) continue;
        const ToyConfig c = small_config(method, hidden, rank);
        const AdapterModel m = random_model(c, rng());
        const Eigen::MatrixXd x = normal_matrix(rng, 7, c.feature_dim, 1.0);
        const Eigen::MatrixXd t = soft_targets(rng, 7, 3);
        const auto check = oracle::finite_difference_check(m, x, t);
        EXPECT_GT(check.entries, 0u);
        EXPECT_LT(check.max_rel_error, 1e-4) << to_string(method) << " hidden=" << hidden << " r=" << rank;
      }
    }
  }
}

TEST(ToyModel, DropoutMaskGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(17);
  const ToyConfig c = small_config(Method::LowRank, 4);
  const AdapterModel m = random_model(c, 3);
  const Eigen::MatrixXd x = normal_matrix(rng, 5, c.feature_dim, 1.0);
  Eigen::MatrixXd mask(5, c.feature_dim);
  std::bernoulli_distribution keep(0.7);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = keep(rng) ? 1.0 / 0.7 : 0.0;
  const auto check = oracle::finite_difference_check(m, x, soft_targets(rng, 5, 3), &mask);
  EXPECT_LT(check.max_rel_error, 1e-4);
}

TEST(ToyModel, TrainableSetsPerMethod) {
  const auto sorted = [](std::vector<Param> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  EXPECT_EQ(sorted(random_model(small_config(Method::LowRank, 4), 1).trainable()),
            (std::vector<Param>{Param::Bias, Param::LoraA, Param::LoraB}));
  EXPECT_EQ(sorted(random_model(small_config(Method::Scaling, 4), 1).trainable()),
            (std::vector<Param>{Param::Bias, Param::Scale}));
  EXPECT_EQ(sorted(random_model(small_config(Method::Full, 4), 1).trainable()),
            (std::vector<Param>{Param::W0, Param::B0, Param::Head, Param::Bias}));
}

TEST(ToyModel, FreshAdapterLeavesBaseOutputUnchanged) {
  const ToyConfig c = small_config(Method::LowRank, 4);
  std::mt19937_64 rng(2);
  const AdapterModel base = init_base_model(c, rng);
  std::mt19937_64 x_rng(4);
  const Eigen::MatrixXd x = normal_matrix(x_rng, 6, c.feature_dim, 1.0);
  for (Method method : {Method::LowRank, Method::Scaling}) {
    ToyConfig mc = c;
    mc.method = method;
    const AdapterModel m = attach_adapter(base, mc, rng);
    EXPECT_LT((logits(m, x) - logits(base, x)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(ToyModel, LowRankUpdateHasRankAtMostR) {
  ToyConfig c = small_config(Method::LowRank, 8, 2);
  const AdapterModel m = random_model(c, 5);
  const Eigen::MatrixXd delta = m.effective_weight() - m.w0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(delta);
  const auto s = svd.singularValues();
  EXPECT_GT(s(1), 1e-8);
  for (Eigen::Index i = 2; i < s.size(); ++i) EXPECT_LT(s(i), 1e-12);
  EXPECT_DOUBLE_EQ(m.scaling(), 2.0);
}

TEST(ToyModel, SoftmaxMatchesLogSumExpOracle) {
  const ToyConfig c = small_config(Method::Full, 4);
  const AdapterModel m = random_model(c, 8);
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = normal_matrix(rng, 5, c.feature_dim, 3.0);
  const Eigen::MatrixXd z = logits(m, x);
  const Eigen::MatrixXd q = predict_distributions(m, x);
  std::vector<int> labels{0, 1, 2, 0, 1};
  const Eigen::VectorXd losses = example_losses(m, x, labels);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double lse = log_sum_exp(z.row(i).transpose());
    for (Eigen::Index k = 0; k < z.cols(); ++k) EXPECT_NEAR(std::log(q(i, k)), z(i, k) - lse, 1e-12);
    EXPECT_NEAR(losses(i), lse - z(i, labels[static_cast<std::size_t>(i)]), 1e-12);
  }
}

TEST(ToyModel, ZeroModelPredictsUniform) {
  const ToyConfig c = small_config(Method::Full, 0);
  std::mt19937_64 rng(1);
  AdapterModel m = init_base_model(c, rng);
  for (auto p : m.trainable()) m.tensor(p).setZero();
  const Eigen::MatrixXd q = predict_distributions(m, normal_matrix(rng, 4, c.feature_dim, 1.0));
  EXPECT_LT((q.array() - 1.0 / 3).abs().maxCoeff(), 1e-15);
}

TEST(ToyModel, GroupCosineSelfAndAntiparallel) {
  const ToyConfig c = small_config(Method::Full, 0);
  std::mt19937_64 rng(1);
  AdapterModel m = init_base_model(c, rng);
  const Eigen::MatrixXd xa = normal_matrix(rng, 4, c.feature_dim, 1.0);
  const std::vector<int> ya{0, 1, 2, 1};
  EXPECT_NEAR(*group_gradient_cosine(m, xa, ya, xa, ya), 1.0, 1e-12);

  for (auto p : m.trainable()) m.tensor(p).setZero();
  const Eigen::MatrixXd v = normal_matrix(rng, 1, c.feature_dim, 1.0);
  Eigen::MatrixXd xb(2, c.feature_dim);
  xb << v, v;
  EXPECT_NEAR(*group_gradient_cosine(m, v, {0}, xb, {1, 2}), -1.0, 1e-12);
}

TEST(ToyModel, PerExampleGradientNormMatchesFullGradient) {
  const ToyConfig c = small_config(Method::LowRank, 4);
  const AdapterModel m = random_model(c, 12);
  std::mt19937_64 rng(3);
  const Eigen::VectorXd x = normal_matrix(rng, c.feature_dim, 1, 1.0);
  Gradients g;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(1, 3);
  t(0, 1) = 1.0;
  loss_and_gradient(m, x.transpose(), t, g);
  EXPECT_NEAR(per_example_gradient_norm(m, x, 1), global_norm(g), 1e-12);
}

TEST(ToyModel, WeightedTargetsGiveClassWeightedMean) {
  const ToyConfig c = small_config(Method::LowRank, 0);
  const AdapterModel m = random_model(c, 4);
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd x = normal_matrix(rng, 3, c.feature_dim, 1.0);
  const std::vector<int> y{0, 1, 1};
  const Eigen::VectorXd w = Eigen::Vector3d(2.0, 0.5, 1.0);
  const Eigen::VectorXd l = example_losses(m, x, y);
  const double expected = (2.0 * l(0) + 0.5 * l(1) + 0.5 * l(2)) / 3.0;
  EXPECT_NEAR(batch_loss(m, x, weighted_targets(y, w)), expected, 1e-12);
}

TEST(Optimizer, ScheduleEndpoints) {
  const auto s = make_schedule(0.01, 100, 0.06);
  EXPECT_EQ(s.warmup_steps, 6);
  EXPECT_EQ(s.at(0), 0.0);
  EXPECT_DOUBLE_EQ(s.at(3), 0.005);
  EXPECT_DOUBLE_EQ(s.at(6), 0.01);
  EXPECT_NEAR(s.at(53), 0.005, 1e-15);
  EXPECT_NEAR(s.at(100), 0.0, 1e-18);
  for (int t = 7; t <= 100; ++t) EXPECT_LE(s.at(t), s.at(t - 1));
}

TEST(Optimizer, ClippingBoundsGlobalNorm) {
  std::mt19937_64 rng(2);
  Gradients g;
  g[0] = normal_matrix(rng, 3, 4, 5.0);
  g[3] = normal_matrix(rng, 1, 3, 5.0);
  const double before = global_norm(g);
  EXPECT_DOUBLE_EQ(clip_gradients(g, 1.0), before);
  EXPECT_LE(global_norm(g), 1.0 + 1e-12);
  Gradients small;
  small[3] = Eigen::MatrixXd::Constant(1, 3, 0.1);
  const Eigen::MatrixXd copy = small[3];
  clip_gradients(small, 1.0);
  EXPECT_EQ(small[3], copy);
}

TEST(Optimizer, AdamWFirstStepMovesByLearningRate) {
  const ToyConfig c = small_config(Method::Scaling, 0);
  AdapterModel m = random_model(c, 1);
  const AdapterModel before = m;
  Gradients g;
  g[static_cast<std::size_t>(Param::Bias)] = Eigen::MatrixXd::Constant(1, 3, 0.3);
  g[static_cast<std::size_t>(Param::Scale)] = Eigen::MatrixXd::Constant(1, c.feature_dim, -2.0);
  AdamW opt(0.9, 0.999, 1e-8, 0.01);
  opt.step(m, g, 0.1);
  EXPECT_NEAR((m.bias - before.bias).maxCoeff(), -0.1, 1e-6);
  const Eigen::MatrixXd expected_scale = before.scale * (1.0 - 0.1 * 0.01) + Eigen::MatrixXd::Constant(1, c.feature_dim, 0.1);
  EXPECT_LT((m.scale - expected_scale).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_FALSE(decays(Param::Bias));
  EXPECT_FALSE(decays(Param::B0));
  EXPECT_TRUE(decays(Param::LoraA));
}

TEST(ClassWeights, InverseFrequencyNormalisedOverPresentClasses) {
  const auto w = inverse_frequency_weights({0, 0, 0, 1}, 3);
  EXPECT_NEAR(w(0), 0.5, 1e-15);
  EXPECT_NEAR(w(1), 1.5, 1e-15);
  EXPECT_EQ(w(2), 0.0);
  const auto single = inverse_frequency_weights({2, 2, 2}, 3);
  EXPECT_EQ(single(2), 1.0);
  EXPECT_EQ(single(0), 0.0);
}

TEST(Config, ValidationNamesField) {
  ToyConfig c;
  c.rank = 0;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
    EXPECT_NE(std::string(e.what()).find("rank"), std::string::npos);
  }
}

TEST(Config, JsonRoundTripAndOverrides) {
  ToyConfig c;
  c.alpha = 3.0;
  c.method = Method::Scaling;
  const ToyConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  const ToyConfig o = apply_overrides(ToyConfig{}, R"({"lr": 0.001, "rank": 4})");
  EXPECT_EQ(o.lr, 0.001);
  EXPECT_EQ(o.rank, 4);
  EXPECT_EQ(o.effective_alpha(), 8.0);
  EXPECT_THROW(apply_overrides(ToyConfig{}, R"({"learning_rate": 0.1})"), Error);
}

TEST(Config, ShippedDefaultFileMatchesDefaults) {
  const ToyConfig c = load_config(std::string(LOSSDYN_SOURCE_DIR) + "/configs/default.json");
  EXPECT_EQ(config_to_json(c), config_to_json(ToyConfig{}));
}

TEST(Finetune, PretrainedBaseIsAccurate) { EXPECT_GE(default_lab().base_accuracy, 0.9); }

TEST(Finetune, DeterministicForFixedSeed) {
  const ToyLab& lab = default_lab();
  const auto a = finetune(lab, lab.config);
  const auto b = finetune(lab, lab.config);
  EXPECT_TRUE(a.log == b.log);
}

TEST(Finetune, AdapterMethodsKeepBaseFrozenAndClip) {
  const ToyLab& lab = default_lab();
  for (Method method : {Method::LowRank, Method::Scaling}) {
    ToyConfig c = lab.config;
    c.method = method;
    const auto r = finetune(lab, c);
    EXPECT_EQ(r.model.w0, lab.base.w0);
    EXPECT_EQ(r.model.b0, lab.base.b0);
    EXPECT_EQ(r.model.head, lab.base.head);
    EXPECT_NE(r.model.bias, lab.base.bias);
    EXPECT_LE(r.max_post_clip_norm, 1.0 + 1e-9);
  }
}

TEST(Finetune, CheckpointScheduleAndTrackedSet) {
  const ToyLab& lab = default_lab();
  const auto r = finetune(lab, lab.config);
  const auto& meta = r.log.meta;
  EXPECT_EQ(r.log.trajectories.size(), lab.split.train.size());
  const std::int64_t per_epoch = (3000 + 240 + 31) / 32;
  ASSERT_EQ(meta.epoch_steps.size(), 5u);
  for (int e = 0; e < 5; ++e) EXPECT_EQ(meta.epoch_steps[static_cast<std::size_t>(e)], per_epoch * (e + 1));
  for (auto s : meta.schedule.steps()) {
    const bool epoch_end = std::find(meta.epoch_steps.begin(), meta.epoch_steps.end(), s) != meta.epoch_steps.end();
    EXPECT_TRUE(s % lab.config.log_every == 0 || epoch_end);
  }
  EXPECT_EQ(meta.schedule.steps().front(), lab.config.log_every);
  EXPECT_EQ(meta.schedule.steps().back(), per_epoch * 5);
  EXPECT_EQ(meta.run_id, "lowrank-r2-s42");
  EXPECT_DOUBLE_EQ(meta.alpha, 4.0);
}

TEST(Finetune, ZeroLearningRateGivesConstantTrajectories) {
  const ToyLab& lab = default_lab();
  ToyConfig c = lab.config;
  c.lr = 0.0;
  const auto r = finetune(lab, c);
  for (const auto& t : r.log.trajectories) {
    EXPECT_EQ(t.losses.maxCoeff(), t.losses.minCoeff()) << t.uid;
  }
}

TEST(Finetune, IncompatibleLabIsConfigError) {
  const ToyLab& lab = default_lab();
  ToyConfig c = lab.config;
  c.feature_dim = 8;
  try {
    finetune(lab, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
  }
}

TEST(Finetune, CompositionSelections) {
  const ToyLab& lab = default_lab();
  const auto low = select_training_probe(lab, Composition::LowOnly);
  const auto high = select_training_probe(lab, Composition::HighOnly);
  const auto balanced = select_training_probe(lab, Composition::Balanced);
  EXPECT_EQ(low.size(), 80u);
  EXPECT_EQ(high.size(), 80u);
  EXPECT_EQ(balanced.size(), 240u);
  for (auto i : low) EXPECT_EQ(lab.data.probe[i].tier, EntropyCategory::Clean);
  for (auto i : high) EXPECT_EQ(lab.data.probe[i].tier, EntropyCategory::Contested);
  EXPECT_EQ(parse_composition("low-only"), Composition::LowOnly);
  EXPECT_THROW(parse_composition("mixed"), Error);
}
