#include "lossdyn/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "lossdyn/error.hpp"
#include "lossdyn/math.hpp"

namespace lossdyn {

namespace {

constexpr double kSimplexTolerance = 1e-6;

void check_simplex(const Eigen::Ref<const Eigen::VectorXd>& dist) {
  if (dist.size() == 0) throw Error(Errc::domain, "empty distribution");
  if ((dist.array() < 0.0).any() || !dist.allFinite()) throw Error(Errc::domain, "distribution has negative entries");
  if (std::abs(dist.sum() - 1.0) > kSimplexTolerance) throw Error(Errc::domain, "distribution does not sum to 1");
}

void check_aligned(const Eigen::MatrixXd& dists, std::span<const int> golds) {
  if (dists.rows() == 0) throw Error(Errc::empty_input, "no predictions");
  if (static_cast<std::size_t>(dists.rows()) != golds.size()) {
    throw Error(Errc::shape, "prediction and gold label counts differ");
  }
  for (int g : golds) {
    if (g < 0 || g >= dists.cols()) throw Error(Errc::domain, "gold label out of range");
  }
}

std::size_t confidence_bin(double conf, std::size_t bins) {
  // Smallest b with conf <= (b + 1) / bins.
  const auto b = static_cast<std::size_t>(std::ceil(conf * static_cast<double>(bins)));
  return std::min(b == 0 ? 0 : b - 1, bins - 1);
}

}  // namespace

double prediction_entropy(const Eigen::Ref<const Eigen::VectorXd>& dist) {
  check_simplex(dist);
  return distribution_entropy(dist);
}

double ece(const Eigen::MatrixXd& dists, std::span<const int> golds, std::size_t bins) {
  check_aligned(dists, golds);
  if (bins < 1) throw Error(Errc::domain, "ECE needs at least one bin");
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> correct(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (Eigen::Index i = 0; i < dists.rows(); ++i) {
    Eigen::Index argmax = 0;
    const double conf = dists.row(i).maxCoeff(&argmax);
    const std::size_t b = confidence_bin(conf, bins);
    conf_sum[b] += conf;
    correct[b] += argmax == golds[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    ++count[b];
  }
  const double n = static_cast<double>(dists.rows());
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double nb = static_cast<double>(count[b]);
    total += nb / n * std::abs(correct[b] / nb - conf_sum[b] / nb);
  }
  return total;
}

CalibrationMetrics calibration_metrics(const Eigen::MatrixXd& dists, std::span<const int> golds, std::size_t bins) {
  check_aligned(dists, golds);
  CalibrationMetrics m;
  m.n = golds.size();
  double correct = 0.0;
  for (Eigen::Index i = 0; i < dists.rows(); ++i) {
    const Eigen::VectorXd row = dists.row(i).transpose();
    m.mean_prediction_entropy += prediction_entropy(row);
    Eigen::Index argmax = 0;
    m.mean_max_confidence += row.maxCoeff(&argmax);
    correct += argmax == golds[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(m.n);
  m.mean_prediction_entropy /= n;
  m.mean_max_confidence /= n;
  m.accuracy = correct / n;
  m.ece = ece(dists, golds, bins);
  return m;
}

CalibrationReport calibration_by_category(const Eigen::MatrixXd& dists, std::span<const int> golds,
                                          std::span<const EntropyCategory> categories, std::size_t bins) {
  check_aligned(dists, golds);
  if (categories.size() != golds.size()) throw Error(Errc::shape, "category and gold label counts differ");
  CalibrationReport report;
  report.bins = bins;
  report.overall = calibration_metrics(dists, golds, bins);
  report.by_category.resize(kNumCategories);
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    std::vector<Eigen::Index> rows;
    std::vector<int> sub_golds;
    for (std::size_t i = 0; i < categories.size(); ++i) {
      if (static_cast<std::size_t>(categories[i]) == c) {
        rows.push_back(static_cast<Eigen::Index>(i));
        sub_golds.push_back(golds[i]);
      }
    }
    if (rows.empty()) {
      report.omitted.push_back(static_cast<EntropyCategory>(c));
      continue;
    }
    const Eigen::MatrixXd sub = dists(rows, Eigen::all);
    report.by_category[c] = calibration_metrics(sub, sub_golds, bins);
  }
  return report;
}

}  // namespace lossdyn
