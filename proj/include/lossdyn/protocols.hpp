#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lossdyn/analysis.hpp"
#include "lossdyn/serialize.hpp"
#include "lossdyn/toy_train.hpp"

namespace lossdyn {

struct RunArtifact {
  RunLog log;
  AnalysisReport report;
  /// Final-checkpoint model, for follow-up measurements.
  AdapterModel model;
};

/// Prepared labs keyed by seed so runs that share data also share the base model.
class LabCache {
 public:
  const ToyLab& get(const ToyConfig& config);

 private:
  std::map<std::uint64_t, ToyLab> labs_;
};

RunArtifact run_and_analyze(const ToyLab& lab, const ToyConfig& config, const FinetuneOptions& finetune_options = {},
                            const AnalysisOptions& analysis_options = {});

struct RankSweepResult {
  std::vector<int> ranks;
  std::vector<double> rhos;
  std::vector<RunArtifact> runs;
  /// Spearman correlation between rank and rho; empty for fewer than two ranks.
  std::optional<double> monotonicity;
  bool partial = false;
  std::string failure;
};

RankSweepResult rank_sweep(const ToyConfig& config, const std::vector<int>& ranks, LabCache& labs,
                           const FinetuneOptions& finetune_options = {}, const AnalysisOptions& analysis_options = {});

/// Replacement training labels for a `fraction` of the tracked Clean
/// examples, drawn uniformly over C (the original label may recur).
std::map<std::string, int> noise_overrides(const ToyLab& lab, double fraction, std::size_t* selected = nullptr);

struct NoiseRow {
  std::uint64_t seed = 0;
  double fraction = 0.0;
  std::string run_id;
  std::size_t selected = 0;
  std::size_t flipped = 0;
  double clean_aulc_mean = 0.0;
  /// Paired by uid against the fraction-0 run over the tracked Clean uids.
  WilcoxonResult wilcoxon;
  std::optional<double> cohens_d;
  CorrelationResult rho;
};

struct NoiseResult {
  std::vector<NoiseRow> rows;
  std::vector<RunArtifact> runs;
};

NoiseResult noise_injection(const ToyConfig& config, const std::vector<double>& fractions,
                            const std::vector<std::uint64_t>& seeds, LabCache& labs,
                            const FinetuneOptions& finetune_options = {}, const AnalysisOptions& analysis_options = {});

struct SoftLabelResult {
  RunArtifact hard;
  RunArtifact soft;
  double delta_contested_hard = 0.0;
  double delta_contested_soft = 0.0;
};

SoftLabelResult soft_label_run(const ToyConfig& config, LabCache& labs, const FinetuneOptions& finetune_options = {},
                               const AnalysisOptions& analysis_options = {});

struct CompositionRow {
  Composition mode = Composition::All;
  std::string run_id;
  std::size_t trained_probe = 0;
  CorrelationResult rho;
};

struct CompositionResult {
  std::vector<CompositionRow> rows;
  std::vector<RunArtifact> runs;
  /// max - min of rho over modes.
  double spread = 0.0;
};

CompositionResult composition_ablation(const ToyConfig& config, const std::vector<Composition>& modes, LabCache& labs,
                                       const FinetuneOptions& finetune_options = {},
                                       const AnalysisOptions& analysis_options = {});

struct Condition {
  Method method = Method::LowRank;
  int rank = 2;
  std::vector<std::uint64_t> seeds;
};

struct ConditionResult {
  Condition condition;
  std::vector<RunArtifact> runs;
  std::vector<std::string> failures;
  std::optional<ConditionAggregate> aggregate;
};

struct MatrixResult {
  std::vector<ConditionResult> conditions;
  std::optional<CorrectionVerdicts> verdicts;
};

MatrixResult condition_matrix(const ToyConfig& config, const std::vector<Condition>& conditions, double alpha, double q,
                              LabCache& labs, const FinetuneOptions& finetune_options = {},
                              const AnalysisOptions& analysis_options = {});

/// Runs one condition from already-analysed reports (ingested logs).
MatrixResult aggregate_matrix(const std::vector<std::vector<AnalysisReport>>& condition_runs, double alpha, double q,
                              std::size_t expected_seeds = 3);

struct Manifest {
  std::string protocol = "train";
  ToyConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<int> ranks{1, 2, 4, 8};
  std::vector<double> fractions{0.0, 0.3, 0.6};
  std::vector<Composition> modes{Composition::LowOnly, Composition::HighOnly, Composition::Balanced, Composition::All};
  std::vector<Condition> conditions;
  double alpha = 0.05;
  double q = 0.05;
  bool track_gradient_norms = false;
  bool track_group_cosine = false;
  AnalysisOptions analysis;
};

inline const std::vector<std::string> kProtocols{"train", "sweep", "noise", "softlabel", "composition", "matrix"};

/// Parses a manifest on top of `base_config`; schema errors name the field path.
Manifest parse_manifest(const std::string& text, const ToyConfig& base_config = {});
Manifest load_manifest(const std::filesystem::path& path, const ToyConfig& base_config = {});

struct IndexEntry {
  std::string kind;
  std::string path;
  std::string run_id;
  std::string status = "ok";
  std::string message;
};

struct ManifestOutcome {
  std::vector<IndexEntry> index;
  std::vector<std::string> summary;
  bool failed = false;
};

/// Executes the manifest and writes logs/, annotations/, reports/ and index.json under `out_dir`.
ManifestOutcome run_manifest(const Manifest& manifest, const std::filesystem::path& out_dir);

Json report_json(const RunArtifact& run);

}  // namespace lossdyn
