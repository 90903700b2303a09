#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lossdyn {

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

struct CorrelationResult {
  double coefficient = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Average ranks (1-based) with ties sharing the mean of their positions.
Eigen::VectorXd midranks(const VectorRef& x);

/// Pearson correlation coefficient; throws on zero variance.
double pearson(const VectorRef& x, const VectorRef& y);

enum class PValueMethod { TApproximation, Permutation };

struct SpearmanOptions {
  PValueMethod method = PValueMethod::TApproximation;
  std::size_t permutations = 10000;
  std::uint64_t seed = 0;
};

CorrelationResult spearman(const VectorRef& x, const VectorRef& y, const SpearmanOptions& options = {});

/// Spearman coefficient only; defined for n >= 2.
double spearman_coefficient(const VectorRef& x, const VectorRef& y);

/// Tie-corrected Kendall tau-b with an asymptotic normal p-value.
CorrelationResult kendall_tau_b(const VectorRef& x, const VectorRef& y);

/// Spearman correlation of x and y after rank-residualizing both on `controls`
/// (one control per column) plus an intercept.
CorrelationResult partial_spearman(const VectorRef& x, const VectorRef& y, const Eigen::MatrixXd& controls);

struct RegressionResult {
  /// Coefficient names; index 0 is the intercept.
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd t_statistics;
  Eigen::VectorXd p_values;
  Eigen::VectorXd residuals;
  double r_squared = 0.0;
  std::size_t n = 0;
  bool standardized = false;
};

/// Least squares of y on X plus an intercept. With `standardize`, y and every
/// predictor column are z-scored first.
RegressionResult ols_regression(const VectorRef& y, const Eigen::MatrixXd& X, bool standardize = false,
                                std::vector<std::string> names = {});

enum class WilcoxonMethod { Auto, Exact, Normal };

struct WilcoxonResult {
  double statistic = 0.0;  ///< min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_value = 1.0;
  std::size_t n_nonzero = 0;
  bool exact = false;
  /// All differences were zero: no statistic, p = 1.
  bool degenerate = false;
};

/// Paired signed-rank test. Auto uses exact enumeration for n <= 25 nonzero
/// differences and the continuity-corrected normal approximation above.
WilcoxonResult wilcoxon_signed_rank(const VectorRef& before, const VectorRef& after,
                                    WilcoxonMethod method = WilcoxonMethod::Auto);

struct KruskalWallisResult {
  double h = 0.0;
  double p_value = 1.0;
  std::size_t df = 0;
};

KruskalWallisResult kruskal_wallis(const std::vector<Eigen::VectorXd>& groups);

double cohens_d(const VectorRef& a, const VectorRef& b);

double bonferroni(double alpha, std::size_t m);

std::vector<bool> benjamini_hochberg(const std::vector<double>& p_values, double q);

struct SeedAggregate {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
  /// Only one value: std is reported as 0.
  bool single = false;
};

SeedAggregate seed_aggregate(const VectorRef& values);

double median(std::vector<double> values);

}  // namespace lossdyn
