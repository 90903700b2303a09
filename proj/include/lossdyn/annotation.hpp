#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lossdyn {

/// One example's annotator label counts plus its majority-vote label.
struct AnnotationRecord {
  std::string uid;
  std::vector<std::int64_t> counts;
  int gold = 0;
  std::optional<std::string> text;

  int num_classes() const noexcept { return static_cast<int>(counts.size()); }
  std::int64_t total() const noexcept;
};

/// Majority label; ties go to the lowest class index.
int majority_label(std::span<const std::int64_t> counts);

/// Validates counts and fills in the recomputed gold label.
AnnotationRecord make_record(std::string uid, std::vector<std::int64_t> counts,
                             std::optional<std::string> text = std::nullopt);

/// Annotation entropy in nats of the empirical annotator distribution.
double entropy(std::span<const std::int64_t> counts);
double entropy(const AnnotationRecord& record);

enum class EntropyCategory { Clean = 0, Ambiguous = 1, Contested = 2 };

inline constexpr int kNumCategories = 3;

std::string_view to_string(EntropyCategory c) noexcept;
EntropyCategory parse_category(std::string_view name);

struct FixedThresholds {
  double lower = 0.4;
  double upper = 0.7;
};

/// Data-derived cut points; bin j holds values in [cuts[j-1], cuts[j]).
struct PercentileBins {
  std::vector<double> cuts;
  std::size_t bins() const noexcept { return cuts.size() + 1; }
};

using BinningScheme = std::variant<FixedThresholds, PercentileBins>;

void validate(const FixedThresholds& scheme, int num_classes = 3);

EntropyCategory categorize(double h, const FixedThresholds& scheme = {}, int num_classes = 3);

/// Bin index of h under any scheme. Fixed thresholds map to the category index.
std::size_t bin_index(double h, const BinningScheme& scheme, int num_classes = 3);
std::size_t bin_count(const BinningScheme& scheme) noexcept;
std::string describe(const BinningScheme& scheme);

/// Linear-interpolation (type 7) quantile of already sorted data.
double quantile_sorted(std::span<const double> sorted, double q);

/// Cut points at the j/k quantiles; every bin is non-empty on `values`.
PercentileBins percentile_bins(std::span<const double> values, std::size_t k);

struct AnnotationSet {
  std::vector<AnnotationRecord> records;
  std::vector<std::string> warnings;
};

AnnotationSet parse_annotations(std::istream& in);
AnnotationSet load_annotations(const std::filesystem::path& path);
void write_annotations(std::ostream& out, std::span<const AnnotationRecord> records);

struct DistributionSummary {
  std::vector<std::size_t> counts;
  std::vector<double> fractions;
  std::size_t n = 0;
};

DistributionSummary distribution_summary(std::span<const AnnotationRecord> records,
                                         const BinningScheme& scheme = FixedThresholds{});

}  // namespace lossdyn
