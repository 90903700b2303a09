#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "lossdyn/analysis.hpp"
#include "lossdyn/annotation.hpp"
#include "lossdyn/error.hpp"
#include "lossdyn/protocols.hpp"
#include "lossdyn/report.hpp"
#include "lossdyn/serialize.hpp"
#include "lossdyn/trajectory_log.hpp"

namespace fs = std::filesystem;
using namespace lossdyn;

namespace {

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  std::string bins;
  std::string controls;
  std::string out = ".";
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

AnalysisOptions analysis_options(const GlobalFlags& g) {
  AnalysisOptions o;
  if (!g.bins.empty()) apply_bins_flag(g.bins, o);
  o.controls = split_list(g.controls);
  for (const auto& c : o.controls) {
    if (std::find(kKnownControls.begin(), kKnownControls.end(), c) == kKnownControls.end()) {
      throw Error(Errc::config, "controls: unknown control '" + c + "' (valid: length, gold)");
    }
  }
  return o;
}

AnnotationSet read_annotations(const fs::path& path) {
  AnnotationSet set = load_annotations(path);
  for (const auto& w : set.warnings) std::cerr << "warning: " << w << '\n';
  return set;
}

int cmd_entropy(const GlobalFlags& g, const fs::path& annotations) {
  const AnalysisOptions options = analysis_options(g);
  const AnnotationSet set = read_annotations(annotations);
  const ReportTable per_uid = entropy_table(set.records, options);
  const ReportTable summary = entropy_summary_table(set.records, options);
  const fs::path out(g.out);
  write_table(out / "entropy.csv", per_uid);
  write_table(out / "entropy_summary.csv", summary);
  std::cout << emit_csv(summary);
  return 0;
}

int cmd_analyze(const GlobalFlags& g, const fs::path& annotations, const std::vector<fs::path>& logs) {
  const AnalysisOptions options = analysis_options(g);
  const AnnotationSet set = read_annotations(annotations);
  std::vector<AnalysisReport> reports;
  for (const auto& path : logs) reports.push_back(analyze_run(set.records, ingest_log(path), options));

  std::vector<ConditionAggregate> aggregates;
  if (reports.size() > 1) {
    std::vector<std::tuple<Method, int, std::string>> keys;
    std::map<std::tuple<Method, int, std::string>, std::vector<AnalysisReport>> groups;
    for (const auto& r : reports) {
      const auto key = std::make_tuple(r.method, r.rank, r.dataset);
      if (!groups.count(key)) keys.push_back(key);
      groups[key].push_back(r);
    }
    for (const auto& k : keys) aggregates.push_back(aggregate_condition(groups[k]));
  }

  Json bundle = Json::object();
  bundle["runs"] = Json::array();
  for (const auto& r : reports) bundle["runs"].push_back(r);
  bundle["aggregates"] = Json::array();
  for (const auto& a : aggregates) bundle["aggregates"].push_back(a);

  const ReportTable main = main_correlation_table(reports, aggregates);
  const fs::path out(g.out);
  write_table(out / "main_correlation.csv", main);
  write_table(out / "delta_by_category.csv", delta_table(reports));
  write_table(out / "regression.csv", regression_table(reports));
  write_table(out / "calibration.csv", calibration_table(reports));
  write_file_atomic(out / "bundle.json", dump_report(bundle));
  std::cout << emit_csv(main);
  return 0;
}

int cmd_toy(const GlobalFlags& g, const fs::path& manifest_path) {
  Manifest manifest = load_manifest(manifest_path);
  if (g.seed) {
    manifest.seeds = {*g.seed};
    manifest.config.seed = *g.seed;
  }
  if (!g.bins.empty()) apply_bins_flag(g.bins, manifest.analysis);
  if (!g.controls.empty()) manifest.analysis.controls = analysis_options(g).controls;
  const ManifestOutcome outcome = run_manifest(manifest, fs::path(g.out));
  for (const auto& line : outcome.summary) std::cout << line << '\n';
  if (outcome.failed) {
    for (const auto& e : outcome.index) {
      if (e.status != "ok") std::cerr << "error: " << e.run_id << ": " << e.message << '\n';
    }
    return 1;
  }
  return 0;
}

std::vector<AnalysisReport> read_bundle(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open report bundle '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(Errc::parse, "report bundle '" + path.string() + "': " + e.what());
  }
  if (!j.is_object() || !j.contains("runs") || !j["runs"].is_array()) {
    throw Error(Errc::header, "report bundle '" + path.string() + "' has no runs array");
  }
  try {
    return j["runs"].get<std::vector<AnalysisReport>>();
  } catch (const Json::exception& e) {
    throw Error(Errc::parse, "report bundle '" + path.string() + "': " + e.what());
  }
}

int cmd_plotdata(const GlobalFlags& g, const fs::path& bundle, const std::string& figure) {
  check_figure(figure);
  const auto reports = read_bundle(bundle);
  const ReportTable t = figure_series(reports, figure);
  write_table(fs::path(g.out) / (figure + ".csv"), t);
  std::cout << "wrote " << t.rows.size() << " rows to " << (fs::path(g.out) / (figure + ".csv")).string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-example loss dynamics against annotation entropy"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--seed", g.seed, "Seed override for toy runs");
  app.add_option("--bins", g.bins, "Binning: fixed:<lo>,<hi> | quartile | tercile");
  app.add_option("--controls", g.controls, "Comma-separated controls: length, gold");
  app.add_option("--out", g.out, "Output directory");

  std::string annotations;
  std::vector<std::string> logs;
  std::string manifest;
  std::string bundle;
  std::string figure;

  auto* entropy = app.add_subcommand("entropy", "Per-example entropy and category summary");
  entropy->fallthrough();
  entropy->add_option("annotations", annotations, "Annotation JSONL file")->required();

  auto* analyze = app.add_subcommand("analyze", "Correlate trajectories with annotation entropy");
  analyze->fallthrough();
  analyze->add_option("annotations", annotations, "Annotation JSONL file")->required();
  analyze->add_option("logs", logs, "Trajectory log files")->required();

  auto* toy = app.add_subcommand("toy", "Run a toy-lab manifest");
  toy->fallthrough();
  toy->add_option("manifest", manifest, "Manifest JSON file")->required();

  auto* plotdata = app.add_subcommand("plotdata", "Emit plot-ready series from a report bundle");
  plotdata->fallthrough();
  plotdata->add_option("bundle", bundle, "Report bundle JSON")->required();
  plotdata->add_option("figure", figure, "hero | gradnorm | cosine | calibration | cartography")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*entropy) return cmd_entropy(g, annotations);
    if (*analyze) {
      std::vector<fs::path> paths(logs.begin(), logs.end());
      return cmd_analyze(g, annotations, paths);
    }
    if (*toy) return cmd_toy(g, manifest);
    if (*plotdata) return cmd_plotdata(g, bundle, figure);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
