#include "lossdyn/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "lossdyn/error.hpp"

namespace lossdyn {

namespace {

std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw Error(Errc::parse, "line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

Cell parse_cell(const std::string& s, ColumnType type, std::size_t line_no, const std::string& column) {
  if (s.empty()) return std::monostate{};
  const auto fail = [&]() -> Cell {
    throw Error(Errc::parse, "line " + std::to_string(line_no) + ": bad value '" + s + "' in column '" + column + "'");
  };
  switch (type) {
    case ColumnType::Text: return s;
    case ColumnType::Integer: {
      std::int64_t v = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) return fail();
      return v;
    }
    case ColumnType::Real: {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size()) return fail();
      return v;
    }
  }
  return fail();
}

std::string cell_text(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return "";
  if (const auto* s = std::get_if<std::string>(&c)) return quote(*s);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  return format_real(std::get<double>(c));
}

std::string category_label(const AnalysisOptions& options, const AnnotationRecord& r,
                           const std::optional<BinningScheme>& bins) {
  if (bins) return "q" + std::to_string(bin_index(entropy(r), *bins, r.num_classes()) + 1);
  return std::string(to_string(categorize(entropy(r), options.thresholds, r.num_classes())));
}

std::optional<BinningScheme> bins_for(std::span<const AnnotationRecord> records, const AnalysisOptions& options) {
  if (options.bins) return options.bins;
  if (options.percentile_k == 0) return std::nullopt;
  std::vector<double> h;
  for (const auto& r : records) h.push_back(entropy(r));
  return percentile_bins(h, options.percentile_k);
}

}  // namespace

double round_sig6(double x) {
  if (!std::isfinite(x)) return x;
  return std::strtod(format_real(x).c_str(), nullptr);
}

Cell text(std::string s) { return s; }
Cell integer(std::int64_t v) { return v; }
Cell real(double v) { return round_sig6(v); }
Cell real_or_empty(const std::optional<double>& v) { return v ? real(*v) : Cell{}; }

void ReportTable::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) throw Error(Errc::shape, "row width does not match table '" + name + "'");
  for (std::size_t j = 0; j < row.size(); ++j) {
    const Cell& c = row[j];
    const bool ok = std::holds_alternative<std::monostate>(c) ||
                    (columns[j].type == ColumnType::Text && std::holds_alternative<std::string>(c)) ||
                    (columns[j].type == ColumnType::Integer && std::holds_alternative<std::int64_t>(c)) ||
                    (columns[j].type == ColumnType::Real && std::holds_alternative<double>(c));
    if (!ok) throw Error(Errc::shape, "cell type does not match column '" + columns[j].name + "'");
  }
  rows.push_back(std::move(row));
}

std::string emit_csv(const ReportTable& table) {
  std::ostringstream os;
  for (std::size_t j = 0; j < table.columns.size(); ++j) os << (j ? "," : "") << quote(table.columns[j].name);
  os << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << cell_text(row[j]);
    os << '\n';
  }
  for (const auto& f : table.footnotes) os << "# " << f << '\n';
  return os.str();
}

ReportTable parse_csv(const std::string& text, const std::string& name, const std::vector<Column>& columns) {
  ReportTable t;
  t.name = name;
  t.columns = columns;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.starts_with("# ")) {
      t.footnotes.push_back(line.substr(2));
      continue;
    }
    const auto fields = split_csv_line(line, line_no);
    if (!header) {
      if (fields.size() != columns.size()) throw Error(Errc::header, "header has " + std::to_string(fields.size()) + " columns, expected " + std::to_string(columns.size()));
      for (std::size_t j = 0; j < fields.size(); ++j) {
        if (fields[j] != columns[j].name) throw Error(Errc::header, "unexpected column '" + fields[j] + "'");
      }
      header = true;
      continue;
    }
    if (fields.size() != columns.size()) throw Error(Errc::parse, "line " + std::to_string(line_no) + ": wrong field count");
    std::vector<Cell> row;
    for (std::size_t j = 0; j < fields.size(); ++j) row.push_back(parse_cell(fields[j], columns[j].type, line_no, columns[j].name));
    t.rows.push_back(std::move(row));
  }
  if (!header) throw Error(Errc::header, "missing header row");
  return t;
}

void write_table(const std::filesystem::path& path, const ReportTable& table) { write_file_atomic(path, emit_csv(table)); }

ReportTable entropy_table(std::span<const AnnotationRecord> records, const AnalysisOptions& options) {
  ReportTable t;
  t.name = "entropy";
  t.columns = {{"uid", ColumnType::Text}, {"entropy", ColumnType::Real}, {"category", ColumnType::Text}};
  const auto bins = bins_for(records, options);
  for (const auto& r : records) t.add_row({text(r.uid), real(entropy(r)), text(category_label(options, r, bins))});
  return t;
}

ReportTable entropy_summary_table(std::span<const AnnotationRecord> records, const AnalysisOptions& options) {
  ReportTable t;
  t.name = "entropy_summary";
  t.columns = {{"category", ColumnType::Text},
               {"count", ColumnType::Integer},
               {"fraction", ColumnType::Real},
               {"mean_entropy", ColumnType::Real}};
  const auto bins = bins_for(records, options);
  const BinningScheme scheme = bins ? *bins : BinningScheme{options.thresholds};
  const DistributionSummary s = distribution_summary(records, scheme);
  std::vector<double> sums(s.counts.size(), 0.0);
  for (const auto& r : records) sums[bin_index(entropy(r), scheme, r.num_classes())] += entropy(r);
  for (std::size_t b = 0; b < s.counts.size(); ++b) {
    const std::string label = bins ? "q" + std::to_string(b + 1) : std::string(to_string(static_cast<EntropyCategory>(b)));
    t.add_row({text(label), integer(static_cast<std::int64_t>(s.counts[b])), real(s.fractions[b]),
               s.counts[b] ? real(sums[b] / static_cast<double>(s.counts[b])) : Cell{}});
  }
  t.add_row({text("all"), integer(static_cast<std::int64_t>(s.n)), real(1.0), Cell{}});
  t.footnotes.push_back("binning " + describe(scheme));
  return t;
}

ReportTable main_correlation_table(std::span<const AnalysisReport> reports,
                                   const std::vector<ConditionAggregate>& aggregates) {
  ReportTable t;
  t.name = "main_correlation";
  t.columns = {{"run_id", ColumnType::Text},      {"method", ColumnType::Text},      {"rank", ColumnType::Integer},
               {"seed", ColumnType::Text},        {"n", ColumnType::Integer},        {"rho", ColumnType::Real},
               {"rho_std", ColumnType::Real},     {"p", ColumnType::Real},           {"tau", ColumnType::Real},
               {"tau_std", ColumnType::Real},     {"tau_p", ColumnType::Real},       {"partial_rho", ColumnType::Real},
               {"partial_p", ColumnType::Real}};
  for (const auto& r : reports) {
    t.add_row({text(r.run_id), text(std::string(to_string(r.method))), integer(r.rank), text(std::to_string(r.seed)),
               integer(static_cast<std::int64_t>(r.n)), real(r.spearman.coefficient), Cell{}, real(r.spearman.p_value),
               real(r.kendall.coefficient), Cell{}, real(r.kendall.p_value),
               r.partial ? real(r.partial->coefficient) : Cell{}, r.partial ? real(r.partial->p_value) : Cell{}});
  }
  for (const auto& a : aggregates) {
    std::string seeds;
    for (std::size_t i = 0; i < a.seeds.size(); ++i) seeds += (i ? ";" : "") + std::to_string(a.seeds[i]);
    t.add_row({text("aggregate"), text(std::string(to_string(a.method))), integer(a.rank), text(seeds),
               Cell{}, real(a.rho.mean), a.rho.single ? Cell{} : real(a.rho.std), real(a.p_median), real(a.tau.mean),
               a.tau.single ? Cell{} : real(a.tau.std), Cell{}, a.partial_rho ? real(a.partial_rho->mean) : Cell{}, Cell{}});
    if (a.reduced_seeds) t.footnotes.push_back("aggregate " + std::string(to_string(a.method)) + " rank " + std::to_string(a.rank) + " has fewer seeds than expected");
  }
  if (!aggregates.empty()) t.footnotes.push_back("aggregate p is the median of per-seed p-values");
  return t;
}

ReportTable delta_table(std::span<const AnalysisReport> reports) {
  ReportTable t;
  t.name = "delta_by_category";
  t.columns = {{"run_id", ColumnType::Text},     {"scheme", ColumnType::Text},     {"group", ColumnType::Text},
               {"n", ColumnType::Integer},       {"aulc_mean", ColumnType::Real},  {"aulc_std", ColumnType::Real},
               {"delta_mean", ColumnType::Real}, {"delta_std", ColumnType::Real}};
  for (const auto& r : reports) {
    for (const auto& c : r.categories) {
      t.add_row({text(r.run_id), text("fixed"), text(std::string(to_string(c.category))), integer(static_cast<std::int64_t>(c.delta.n)),
                 real(c.aulc.mean), real(c.aulc.std), real(c.delta.mean), real(c.delta.std)});
    }
    for (const auto& b : r.bins) {
      t.add_row({text(r.run_id), text(r.binning), text("q" + std::to_string(b.bin + 1)), integer(static_cast<std::int64_t>(b.delta.n)),
                 real(b.aulc.mean), real(b.aulc.std), real(b.delta.mean), real(b.delta.std)});
    }
  }
  return t;
}

ReportTable regression_table(std::span<const AnalysisReport> reports) {
  ReportTable t;
  t.name = "regression";
  t.columns = {{"run_id", ColumnType::Text}, {"term", ColumnType::Text}, {"beta", ColumnType::Real},
               {"se", ColumnType::Real},     {"t", ColumnType::Real},    {"p", ColumnType::Real},
               {"r_squared", ColumnType::Real}};
  for (const auto& r : reports) {
    if (!r.regression) continue;
    const auto& g = *r.regression;
    for (std::size_t k = 0; k < g.names.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      t.add_row({text(r.run_id), text(g.names[k]), real(g.beta(i)), real(g.standard_errors(i)), real(g.t_statistics(i)),
                 real(g.p_values(i)), real(g.r_squared)});
    }
  }
  t.footnotes.push_back("standardized coefficients; response is AULC");
  return t;
}

ReportTable calibration_table(std::span<const AnalysisReport> reports) {
  ReportTable t;
  t.name = "calibration";
  t.columns = {{"run_id", ColumnType::Text},
               {"group", ColumnType::Text},
               {"n", ColumnType::Integer},
               {"prediction_entropy", ColumnType::Real},
               {"max_confidence", ColumnType::Real},
               {"ece", ColumnType::Real},
               {"accuracy", ColumnType::Real},
               {"bins", ColumnType::Integer}};
  for (const auto& r : reports) {
    if (!r.calibration) continue;
    const auto& c = *r.calibration;
    const auto add = [&](const std::string& group, const CalibrationMetrics& m) {
      t.add_row({text(r.run_id), text(group), integer(static_cast<std::int64_t>(m.n)), real(m.mean_prediction_entropy),
                 real(m.mean_max_confidence), real(m.ece), real(m.accuracy), integer(static_cast<std::int64_t>(c.bins))});
    };
    add("all", c.overall);
    for (std::size_t k = 0; k < c.by_category.size(); ++k) {
      if (c.by_category[k]) add(std::string(to_string(static_cast<EntropyCategory>(k))), *c.by_category[k]);
    }
    for (auto o : c.omitted) t.footnotes.push_back(r.run_id + ": category " + std::string(to_string(o)) + " has no examples");
  }
  return t;
}

ReportTable figure_table(const AnalysisReport& report, const std::string& figure) {
  ReportTable t;
  t.name = figure;
  if (figure == "hero") {
    t.columns = {{"category", ColumnType::Text}, {"step", ColumnType::Integer}, {"mean", ColumnType::Real},
                 {"sd", ColumnType::Real},       {"n", ColumnType::Integer},    {"ci_half_width", ColumnType::Real}};
    for (const auto& h : report.hero) {
      t.add_row({text(std::string(to_string(h.category))), integer(h.step), real(h.mean), real(h.sd),
                 integer(static_cast<std::int64_t>(h.n)), real(h.ci_half_width)});
    }
    t.footnotes.push_back("95% CI half-width = 1.96 * sd / sqrt(n)");
  } else if (figure == "gradnorm") {
    if (!report.gradient_norms) throw Error(Errc::missing_data, "run '" + report.run_id + "' has no gradient-norm records");
    t.columns = {{"uid", ColumnType::Text}, {"category", ColumnType::Text}, {"median_norm", ColumnType::Real}};
    for (const auto& p : report.gradient_norms->points) {
      t.add_row({text(p.uid), text(std::string(to_string(p.category))), real(p.median_norm)});
    }
    if (report.gradient_norms->kruskal) {
      std::ostringstream os;
      os << "kruskal-wallis H=" << format_real(report.gradient_norms->kruskal->h)
         << " p=" << format_real(report.gradient_norms->kruskal->p_value);
      t.footnotes.push_back(os.str());
    }
  } else if (figure == "cosine") {
    if (report.cosines.empty()) throw Error(Errc::missing_data, "run '" + report.run_id + "' has no group-cosine records");
    t.columns = {{"step", ColumnType::Integer}, {"cosine", ColumnType::Real}};
    for (const auto& c : report.cosines) t.add_row({integer(c.step), real_or_empty(c.cosine)});
  } else if (figure == "calibration") {
    if (!report.calibration) throw Error(Errc::missing_data, "run '" + report.run_id + "' has no predicted distributions");
    t = calibration_table(std::span<const AnalysisReport>(&report, 1));
    t.name = figure;
  } else if (figure == "cartography") {
    if (!report.cartography) throw Error(Errc::missing_data, "run '" + report.run_id + "' has no gold-class probabilities");
    t.columns = {{"uid", ColumnType::Text},        {"category", ColumnType::Text}, {"confidence", ColumnType::Real},
                 {"variability", ColumnType::Real}, {"aulc", ColumnType::Real}};
    for (const auto& p : report.cartography->points) {
      t.add_row({text(p.uid), text(std::string(to_string(p.category))), real(p.confidence), real(p.variability), real(p.aulc)});
    }
  } else {
    check_figure(figure);
  }
  return t;
}

void check_figure(const std::string& figure) {
  if (std::find(kFigures.begin(), kFigures.end(), figure) != kFigures.end()) return;
  std::string names;
  for (const auto& f : kFigures) names += (names.empty() ? "" : ", ") + f;
  throw Error(Errc::config, "unknown figure '" + figure + "' (valid: " + names + ")");
}

ReportTable figure_series(std::span<const AnalysisReport> reports, const std::string& figure) {
  check_figure(figure);
  if (reports.empty()) throw Error(Errc::empty_input, "report bundle has no runs");
  ReportTable out;
  out.name = figure;
  for (const auto& r : reports) {
    ReportTable t = figure_table(r, figure);
    const bool has_run = !t.columns.empty() && t.columns.front().name == "run_id";
    if (out.columns.empty()) {
      out.columns = t.columns;
      if (!has_run) out.columns.insert(out.columns.begin(), Column{"run_id", ColumnType::Text});
    }
    for (auto& row : t.rows) {
      if (!has_run) row.insert(row.begin(), text(r.run_id));
      out.add_row(std::move(row));
    }
    for (auto& f : t.footnotes) out.footnotes.push_back(has_run ? f : r.run_id + ": " + f);
  }
  return out;
}

}  // namespace lossdyn
