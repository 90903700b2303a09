#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lossdyn/analysis.hpp"

namespace lossdyn {

enum class ColumnType { Text, Integer, Real };

struct Column {
  std::string name;
  ColumnType type = ColumnType::Text;
  friend bool operator==(const Column&, const Column&) = default;
};

/// Empty cells are std::monostate.
using Cell = std::variant<std::monostate, std::string, std::int64_t, double>;

/// Rounds to the 6 significant digits used in CSV tables.
double round_sig6(double x);

/// A typed table; real cells are stored already rounded so CSV round-trips.
struct ReportTable {
  std::string name;
  std::vector<Column> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<std::string> footnotes;

  void add_row(std::vector<Cell> row);
  friend bool operator==(const ReportTable&, const ReportTable&) = default;
};

Cell text(std::string s);
Cell integer(std::int64_t v);
Cell real(double v);
Cell real_or_empty(const std::optional<double>& v);

std::string emit_csv(const ReportTable& table);
/// Parses CSV written by emit_csv against the expected column schema.
ReportTable parse_csv(const std::string& text, const std::string& name, const std::vector<Column>& columns);

void write_table(const std::filesystem::path& path, const ReportTable& table);

// Tables behind the CLI commands.

ReportTable entropy_table(std::span<const AnnotationRecord> records, const AnalysisOptions& options);
ReportTable entropy_summary_table(std::span<const AnnotationRecord> records, const AnalysisOptions& options);

ReportTable main_correlation_table(std::span<const AnalysisReport> reports,
                                   const std::vector<ConditionAggregate>& aggregates);
ReportTable delta_table(std::span<const AnalysisReport> reports);
ReportTable regression_table(std::span<const AnalysisReport> reports);
ReportTable calibration_table(std::span<const AnalysisReport> reports);

inline const std::vector<std::string> kFigures{"hero", "gradnorm", "cosine", "calibration", "cartography"};

/// Plot-ready series of one figure for one run report.
ReportTable figure_table(const AnalysisReport& report, const std::string& figure);
/// Series of every run, with a leading run_id column where the figure lacks one.
ReportTable figure_series(std::span<const AnalysisReport> reports, const std::string& figure);
/// Throws a config error listing the valid names when `figure` is unknown.
void check_figure(const std::string& figure);

}  // namespace lossdyn
