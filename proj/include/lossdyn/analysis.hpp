#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lossdyn/annotation.hpp"
#include "lossdyn/calibration.hpp"
#include "lossdyn/stats.hpp"
#include "lossdyn/trajectory_log.hpp"

namespace lossdyn {

/// Mean and sample standard deviation; std is 0 for a single value.
struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

Summary summarize(const VectorRef& values);

struct CategoryStats {
  EntropyCategory category = EntropyCategory::Clean;
  Summary aulc;
  Summary delta;
};

struct BinStats {
  std::size_t bin = 0;
  Summary aulc;
  Summary delta;
};

/// Mean tracked loss of one category at one checkpoint, with a normal 95% CI.
struct HeroPoint {
  EntropyCategory category = EntropyCategory::Clean;
  std::int64_t step = 0;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
  double ci_half_width = 0.0;
};

struct GradNormPoint {
  std::string uid;
  EntropyCategory category = EntropyCategory::Clean;
  /// Median over checkpoints of the per-example gradient norm.
  double median_norm = 0.0;
};

struct GradNormSummary {
  std::vector<GradNormPoint> points;
  std::optional<KruskalWallisResult> kruskal;
};

struct CartographyPoint {
  std::string uid;
  EntropyCategory category = EntropyCategory::Clean;
  double confidence = 0.0;
  double variability = 0.0;
  double aulc = 0.0;
};

struct CartographySummary {
  std::vector<CartographyPoint> points;
  /// Spearman correlation between confidence and AULC.
  std::optional<CorrelationResult> confidence_vs_aulc;
};

struct AnalysisReport {
  std::string run_id;
  Method method = Method::LowRank;
  int rank = 0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::string dataset;
  std::map<std::string, std::string> tags;

  std::size_t n = 0;
  std::size_t checkpoints = 0;
  std::size_t dropped_annotations = 0;
  std::size_t dropped_trajectories = 0;

  CorrelationResult spearman;
  CorrelationResult kendall;
  std::vector<std::string> controls;
  std::optional<CorrelationResult> partial;
  std::optional<RegressionResult> regression;

  std::vector<CategoryStats> categories;
  std::string binning;
  std::vector<BinStats> bins;

  std::optional<CalibrationReport> calibration;
  std::optional<CartographySummary> cartography;
  std::optional<GradNormSummary> gradient_norms;
  std::vector<GroupCosineRecord> cosines;
  std::vector<HeroPoint> hero;

  const CategoryStats* category(EntropyCategory c) const;
};

struct AnalysisOptions {
  FixedThresholds thresholds{};
  /// Extra binning for the robustness rows; empty means none.
  std::optional<BinningScheme> bins;
  /// When > 0 and `bins` is empty, percentile bins with this many groups are
  /// derived from the entropies of the analysed rows.
  std::size_t percentile_k = 0;
  /// Covariates for partial correlation and regression: "length" and/or "gold".
  std::vector<std::string> controls;
  std::size_t ece_bins = 10;
  double ci_z = 1.96;
};

/// Applies a binning flag: "fixed:<lo>,<hi>", "quartile" or "tercile".
void apply_bins_flag(std::string_view flag, AnalysisOptions& options);

inline const std::vector<std::string> kKnownControls{"length", "gold"};

/// Builds the control matrix (n x k) and column names for the given rows.
Eigen::MatrixXd control_matrix(const AnalysisTable& table, const std::vector<std::string>& controls, int num_classes,
                               std::vector<std::string>& names);

AnalysisReport analyze_run(std::span<const AnnotationRecord> records, const RunLog& log,
                           const AnalysisOptions& options = {});

/// Seed aggregate of one (method, rank, dataset) condition.
struct ConditionAggregate {
  Method method = Method::LowRank;
  int rank = 0;
  std::string dataset;
  std::vector<std::uint64_t> seeds;
  SeedAggregate rho;
  SeedAggregate tau;
  /// Median Spearman p across seeds; the condition-level p for corrections.
  double p_median = 1.0;
  std::optional<SeedAggregate> delta_clean;
  std::optional<SeedAggregate> delta_contested;
  std::optional<SeedAggregate> partial_rho;
  bool reduced_seeds = false;
};

ConditionAggregate aggregate_condition(std::span<const AnalysisReport> runs, std::size_t expected_seeds = 3);

struct CorrectionVerdicts {
  double alpha = 0.05;
  double q = 0.05;
  double bonferroni_threshold = 0.0;
  std::vector<bool> bonferroni;
  std::vector<bool> benjamini_hochberg;
};

CorrectionVerdicts apply_corrections(const std::vector<double>& p_values, double alpha = 0.05, double q = 0.05);

}  // namespace lossdyn
