#include "lossdyn/toy_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "lossdyn/error.hpp"
#include "lossdyn/random.hpp"

namespace lossdyn {

namespace {

constexpr int kMaxRejections = 100000;

std::string make_uid(char prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%05zu", prefix, index);
  return buf;
}

Eigen::MatrixXd make_centroids(std::mt19937_64& rng, int d, int num_classes, double separation) {
  // Orthonormal directions scaled so every pair sits `separation` apart.
  const Eigen::MatrixXd g = normal_matrix(rng, d, d, 1.0);
  const Eigen::MatrixXd q = g.householderQr().householderQ();
  return q.leftCols(num_classes).transpose() * (separation / std::sqrt(2.0));
}

}  // namespace

Eigen::VectorXd SyntheticExample::annotator_distribution() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(counts.size()));
  double total = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    p(static_cast<Eigen::Index>(c)) = static_cast<double>(counts[c]);
    total += static_cast<double>(counts[c]);
  }
  return p / total;
}

AnnotationRecord SyntheticExample::record() const { return make_record(uid, counts); }

std::pair<double, double> tier_band(EntropyCategory tier, const ToyConfig& config) {
  const double max_h = std::log(static_cast<double>(config.num_classes));
  switch (tier) {
    case EntropyCategory::Clean: return {0.0, config.tier_thresholds.lower};
    case EntropyCategory::Ambiguous: return {config.tier_thresholds.lower, config.tier_thresholds.upper};
    case EntropyCategory::Contested: return {config.tier_thresholds.upper, max_h};
  }
  return {0.0, max_h};
}

std::array<int, 3> tier_counts(const ToyConfig& config) {
  std::array<int, 3> counts{};
  std::array<double, 3> remainders{};
  int assigned = 0;
  for (std::size_t t = 0; t < 3; ++t) {
    const double exact = config.tier_proportions[t] * config.probe_size;
    counts[t] = static_cast<int>(std::floor(exact + 1e-9));
    remainders[t] = exact - counts[t];
    assigned += counts[t];
  }
  while (assigned < config.probe_size) {
    const auto t = static_cast<std::size_t>(std::max_element(remainders.begin(), remainders.end()) - remainders.begin());
    ++counts[t];
    remainders[t] = -1.0;
    ++assigned;
  }
  return counts;
}

ToyDataset generate_dataset(const ToyConfig& config, std::uint64_t seed) {
  config.validate();
  auto rng = make_rng(seed, Stream::Generation);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int d = config.feature_dim;
  const int num_classes = config.num_classes;

  ToyDataset data;
  data.centroids = make_centroids(rng, d, num_classes, config.centroid_separation);

  const auto features_for = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd x = data.centroids.transpose() * p;
    for (int j = 0; j < d; ++j) x(j) += config.noise_sigma * noise(rng);
    return x;
  };

  // Tier order is a seeded shuffle of the exact per-tier counts.
  const auto counts = tier_counts(config);
  std::vector<EntropyCategory> tiers;
  for (std::size_t t = 0; t < 3; ++t) tiers.insert(tiers.end(), static_cast<std::size_t>(counts[t]), static_cast<EntropyCategory>(t));
  std::shuffle(tiers.begin(), tiers.end(), rng);

  for (std::size_t i = 0; i < tiers.size(); ++i) {
    const EntropyCategory tier = tiers[i];
    const auto [lo, hi] = tier_band(tier, config);
    const double concentration = config.tier_concentrations[static_cast<std::size_t>(tier)];
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxRejections && !accepted; ++attempt) {
      Eigen::VectorXd p = dirichlet(rng, concentration, num_classes);
      auto annot = multinomial(rng, config.annotators, p);
      const double h = entropy(annot);
      const bool in_band = h >= lo && (tier == EntropyCategory::Contested ? h <= hi + 1e-12 : h < hi);
      if (!in_band) continue;
      SyntheticExample ex;
      ex.uid = make_uid('p', i);
      ex.distribution = std::move(p);
      ex.counts = std::move(annot);
      ex.gold = majority_label(ex.counts);
      ex.tier = tier;
      ex.features = features_for(ex.distribution);
      data.probe.push_back(std::move(ex));
      accepted = true;
    }
    if (!accepted) {
      throw Error(Errc::generation, "could not draw a " + std::string(to_string(tier)) + " example within " +
                                        std::to_string(kMaxRejections) + " attempts");
    }
  }

  std::uniform_int_distribution<int> pick_class(0, num_classes - 1);
  for (int i = 0; i < config.bulk_size; ++i) {
    SyntheticExample ex;
    ex.uid = make_uid('b', static_cast<std::size_t>(i));
    ex.gold = pick_class(rng);
    ex.distribution = Eigen::VectorXd::Unit(num_classes, ex.gold);
    ex.counts.assign(static_cast<std::size_t>(num_classes), 0);
    ex.counts[static_cast<std::size_t>(ex.gold)] = config.annotators;
    ex.tier = EntropyCategory::Clean;
    ex.bulk = true;
    ex.features = features_for(ex.distribution);
    data.bulk.push_back(std::move(ex));
  }
  return data;
}

ProbeSplit split_probe(const std::vector<SyntheticExample>& probe, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw Error(Errc::config, "train fraction must lie in (0, 1]");
  auto rng = make_rng(seed, Stream::Split);
  std::vector<bool> is_train(probe.size(), false);
  for (std::size_t t = 0; t < kNumCategories; ++t) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      if (static_cast<std::size_t>(probe[i].tier) == t) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < n_train; ++k) is_train[members[k]] = true;
  }
  ProbeSplit split;
  for (std::size_t i = 0; i < probe.size(); ++i) (is_train[i] ? split.train : split.validation).push_back(i);
  return split;
}

std::vector<AnnotationRecord> probe_records(const ToyDataset& data) {
  std::vector<AnnotationRecord> out;
  out.reserve(data.probe.size());
  for (const auto& ex : data.probe) out.push_back(ex.record());
  return out;
}

Eigen::MatrixXd feature_matrix(const std::vector<SyntheticExample>& examples) {
  if (examples.empty()) return {};
  Eigen::MatrixXd x(static_cast<Eigen::Index>(examples.size()), examples.front().features.size());
  for (std::size_t i = 0; i < examples.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = examples[i].features.transpose();
  return x;
}

}  // namespace lossdyn
