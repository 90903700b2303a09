#include "lossdyn/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lossdyn/error.hpp"
#include "lossdyn/random.hpp"

namespace lossdyn {

namespace {

std::string fraction_tag(double f) {
  std::ostringstream os;
  os << f;
  return os.str();
}

std::vector<std::uint64_t> seeds_or_default(const std::vector<std::uint64_t>& seeds, const ToyConfig& config) {
  return seeds.empty() ? std::vector<std::uint64_t>{config.seed} : seeds;
}

ToyConfig with_seed(ToyConfig config, std::uint64_t seed) {
  config.seed = seed;
  return config;
}

Eigen::VectorXd clean_aulcs(const RunLog& log, const std::vector<std::string>& uids) {
  std::map<std::string, const LossTrajectory*> by_uid;
  for (const auto& t : log.trajectories) by_uid[t.uid] = &t;
  Eigen::VectorXd v(static_cast<Eigen::Index>(uids.size()));
  for (std::size_t i = 0; i < uids.size(); ++i) v(static_cast<Eigen::Index>(i)) = aulc(*by_uid.at(uids[i]));
  return v;
}

}  // namespace

const ToyLab& LabCache::get(const ToyConfig& config) {
  auto it = labs_.find(config.seed);
  if (it == labs_.end()) it = labs_.emplace(config.seed, prepare_lab(config)).first;
  return it->second;
}

RunArtifact run_and_analyze(const ToyLab& lab, const ToyConfig& config, const FinetuneOptions& finetune_options,
                            const AnalysisOptions& analysis_options) {
  FinetuneResult result = finetune(lab, config, finetune_options);
  RunArtifact run;
  run.report = analyze_run(probe_records(lab.data), result.log, analysis_options);
  run.log = std::move(result.log);
  run.model = std::move(result.model);
  return run;
}

RankSweepResult rank_sweep(const ToyConfig& config, const std::vector<int>& ranks, LabCache& labs,
                           const FinetuneOptions& finetune_options, const AnalysisOptions& analysis_options) {
  if (ranks.empty()) throw Error(Errc::config, "rank sweep needs at least one rank");
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] < 1 || (i > 0 && ranks[i] <= ranks[i - 1])) {
      throw Error(Errc::config, "rank sweep ranks must be positive and strictly increasing");
    }
  }
  RankSweepResult out;
  const ToyLab& lab = labs.get(config);
  for (int r : ranks) {
    ToyConfig rc = config;
    rc.method = Method::LowRank;
    rc.rank = r;
    try {
      out.runs.push_back(run_and_analyze(lab, rc, finetune_options, analysis_options));
    } catch (const Error& e) {
      out.partial = true;
      out.failure = "rank " + std::to_string(r) + ": " + e.what();
      break;
    }
    out.ranks.push_back(r);
    out.rhos.push_back(out.runs.back().report.spearman.coefficient);
  }
  if (out.ranks.size() >= 2) {
    Eigen::VectorXd rk(static_cast<Eigen::Index>(out.ranks.size()));
    for (std::size_t i = 0; i < out.ranks.size(); ++i) rk(static_cast<Eigen::Index>(i)) = out.ranks[i];
    const Eigen::Map<const Eigen::VectorXd> rho(out.rhos.data(), static_cast<Eigen::Index>(out.rhos.size()));
    try {
      out.monotonicity = spearman_coefficient(rk, rho);
    } catch (const Error& e) {
      if (e.code() != Errc::undefined_correlation) throw;
    }
  }
  return out;
}

std::map<std::string, int> noise_overrides(const ToyLab& lab, double fraction, std::size_t* selected) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(Errc::config, "noise fraction must lie in [0, 1]");
  std::vector<std::size_t> clean;
  for (auto i : lab.split.train) {
    if (lab.data.probe[i].tier == EntropyCategory::Clean) clean.push_back(i);
  }
  if (clean.empty()) throw Error(Errc::protocol, "noise injection needs Clean probe examples");
  auto rng = make_rng(lab.config.seed, Stream::Noise);
  std::shuffle(clean.begin(), clean.end(), rng);
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(clean.size())));
  std::uniform_int_distribution<int> label(0, lab.config.num_classes - 1);
  std::map<std::string, int> out;
  for (std::size_t j = 0; j < k; ++j) out[lab.data.probe[clean[j]].uid] = label(rng);
  if (selected != nullptr) *selected = k;
  return out;
}

NoiseResult noise_injection(const ToyConfig& config, const std::vector<double>& fractions,
                            const std::vector<std::uint64_t>& seeds, LabCache& labs,
                            const FinetuneOptions& finetune_options, const AnalysisOptions& analysis_options) {
  if (fractions.empty()) throw Error(Errc::config, "noise injection needs at least one fraction");
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw Error(Errc::config, "noise fractions must lie in [0, 1]");
  }
  NoiseResult out;
  for (std::uint64_t seed : seeds_or_default(seeds, config)) {
    const ToyConfig sc = with_seed(config, seed);
    const ToyLab& lab = labs.get(sc);
    std::vector<std::string> clean_uids;
    for (auto i : lab.split.train) {
      if (lab.data.probe[i].tier == EntropyCategory::Clean) clean_uids.push_back(lab.data.probe[i].uid);
    }
    std::optional<RunArtifact> baseline;
    const auto run_fraction = [&](double f) {
      std::size_t selected = 0;
      FinetuneOptions opts = finetune_options;
      opts.label_overrides = noise_overrides(lab, f, &selected);
      opts.run_id = default_run_id(sc) + "-noise" + fraction_tag(f);
      opts.tags["noise_fraction"] = fraction_tag(f);
      RunArtifact run = run_and_analyze(lab, sc, opts, analysis_options);
      std::size_t flipped = 0;
      for (const auto& [uid, y] : opts.label_overrides) {
        const auto it = std::find_if(lab.data.probe.begin(), lab.data.probe.end(),
                                     [&](const SyntheticExample& ex) { return ex.uid == uid; });
        if (it->gold != y) ++flipped;
      }
      return std::make_tuple(std::move(run), selected, flipped);
    };
    auto [base_run, base_sel, base_flip] = run_fraction(0.0);
    baseline = std::move(base_run);
    const Eigen::VectorXd before = clean_aulcs(baseline->log, clean_uids);
    for (double f : fractions) {
      NoiseRow row;
      row.seed = seed;
      row.fraction = f;
      RunArtifact run;
      if (f == 0.0) {
        run = *baseline;
        row.selected = base_sel;
        row.flipped = base_flip;
      } else {
        auto [r, sel, flip] = run_fraction(f);
        run = std::move(r);
        row.selected = sel;
        row.flipped = flip;
      }
      const Eigen::VectorXd after = clean_aulcs(run.log, clean_uids);
      row.run_id = run.log.meta.run_id;
      row.clean_aulc_mean = after.mean();
      row.wilcoxon = wilcoxon_signed_rank(before, after);
      try {
        row.cohens_d = cohens_d(after, before);
      } catch (const Error& e) {
        if (e.code() != Errc::undefined_effect && e.code() != Errc::domain) throw;
      }
      row.rho = run.report.spearman;
      out.rows.push_back(row);
      out.runs.push_back(std::move(run));
    }
  }
  return out;
}

SoftLabelResult soft_label_run(const ToyConfig& config, LabCache& labs, const FinetuneOptions& finetune_options,
                               const AnalysisOptions& analysis_options) {
  const ToyLab& lab = labs.get(config);
  for (const auto& ex : lab.data.probe) {
    if (ex.counts.empty()) throw Error(Errc::protocol, "soft labels need annotator counts for '" + ex.uid + "'");
  }
  SoftLabelResult out;
  FinetuneOptions hard = finetune_options;
  hard.loss = LossMode::Hard;
  hard.run_id = default_run_id(config) + "-hard";
  FinetuneOptions soft = finetune_options;
  soft.loss = LossMode::Soft;
  soft.run_id = default_run_id(config) + "-soft";
  out.hard = run_and_analyze(lab, config, hard, analysis_options);
  out.soft = run_and_analyze(lab, config, soft, analysis_options);
  const auto contested = [](const AnalysisReport& r) {
    const auto* c = r.category(EntropyCategory::Contested);
    if (c == nullptr) throw Error(Errc::protocol, "no contested examples tracked");
    return c->delta.mean;
  };
  out.delta_contested_hard = contested(out.hard.report);
  out.delta_contested_soft = contested(out.soft.report);
  return out;
}

CompositionResult composition_ablation(const ToyConfig& config, const std::vector<Composition>& modes, LabCache& labs,
                                       const FinetuneOptions& finetune_options,
                                       const AnalysisOptions& analysis_options) {
  if (modes.empty()) throw Error(Errc::config, "composition ablation needs at least one mode");
  const ToyLab& lab = labs.get(config);
  CompositionResult out;
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    FinetuneOptions opts = finetune_options;
    opts.composition = modes[k];
    opts.run_id = default_run_id(config) + "-comp-" + std::string(to_string(modes[k]));
    RunArtifact run = run_and_analyze(lab, config, opts, analysis_options);
    CompositionRow row;
    row.mode = modes[k];
    row.run_id = run.log.meta.run_id;
    row.trained_probe = select_training_probe(lab, modes[k]).size();
    row.rho = run.report.spearman;
    lo = k == 0 ? row.rho.coefficient : std::min(lo, row.rho.coefficient);
    hi = k == 0 ? row.rho.coefficient : std::max(hi, row.rho.coefficient);
    out.rows.push_back(row);
    out.runs.push_back(std::move(run));
  }
  out.spread = hi - lo;
  return out;
}

MatrixResult aggregate_matrix(const std::vector<std::vector<AnalysisReport>>& condition_runs, double alpha, double q,
                              std::size_t expected_seeds) {
  MatrixResult out;
  std::vector<double> p;
  for (const auto& runs : condition_runs) {
    ConditionResult c;
    if (!runs.empty()) {
      c.condition.method = runs.front().method;
      c.condition.rank = runs.front().rank;
      for (const auto& r : runs) c.condition.seeds.push_back(r.seed);
      c.aggregate = aggregate_condition(runs, expected_seeds);
      p.push_back(c.aggregate->p_median);
    }
    out.conditions.push_back(std::move(c));
  }
  if (!p.empty()) out.verdicts = apply_corrections(p, alpha, q);
  return out;
}

MatrixResult condition_matrix(const ToyConfig& config, const std::vector<Condition>& conditions, double alpha, double q,
                              LabCache& labs, const FinetuneOptions& finetune_options,
                              const AnalysisOptions& analysis_options) {
  if (conditions.empty()) throw Error(Errc::config, "condition matrix needs at least one condition");
  MatrixResult out;
  std::vector<double> p;
  for (const auto& cond : conditions) {
    ConditionResult c;
    c.condition = cond;
    const auto seeds = seeds_or_default(cond.seeds, config);
    std::vector<AnalysisReport> reports;
    for (std::uint64_t seed : seeds) {
      ToyConfig rc = with_seed(config, seed);
      rc.method = cond.method;
      rc.rank = cond.rank;
      try {
        c.runs.push_back(run_and_analyze(labs.get(rc), rc, finetune_options, analysis_options));
        reports.push_back(c.runs.back().report);
      } catch (const Error& e) {
        c.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
      }
    }
    if (!reports.empty()) {
      c.aggregate = aggregate_condition(reports, seeds.size());
      c.aggregate->reduced_seeds = reports.size() < seeds.size();
      p.push_back(c.aggregate->p_median);
    }
    out.conditions.push_back(std::move(c));
  }
  if (!p.empty()) out.verdicts = apply_corrections(p, alpha, q);
  return out;
}

// Manifest parsing.

namespace {

[[noreturn]] void manifest_error(const std::string& path, const std::string& what) {
  throw Error(Errc::config, "manifest." + path + ": " + what);
}

template <typename T>
T manifest_get(const Json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    manifest_error(path, "wrong type");
  }
}

}  // namespace

Manifest parse_manifest(const std::string& text, const ToyConfig& base_config) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::config, std::string("manifest: malformed JSON (") + e.what() + ")");
  }
  if (!j.is_object()) throw Error(Errc::config, "manifest: expected a JSON object");
  static const std::set<std::string> known{"protocol", "config", "seed",    "seeds",    "ranks", "fractions", "modes",
                                           "conditions", "alpha", "q",      "track",    "controls", "bins"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) manifest_error(key, "unknown field");
  }
  Manifest m;
  m.config = base_config;
  if (!j.contains("protocol")) manifest_error("protocol", "required field missing");
  m.protocol = manifest_get<std::string>(j["protocol"], "protocol");
  if (std::find(kProtocols.begin(), kProtocols.end(), m.protocol) == kProtocols.end()) {
    manifest_error("protocol", "unknown protocol '" + m.protocol + "' (train, sweep, noise, softlabel, composition, matrix)");
  }
  if (j.contains("config")) {
    if (!j["config"].is_object()) manifest_error("config", "expected an object");
    try {
      m.config = apply_overrides(base_config, j["config"].dump());
    } catch (const Error& e) {
      throw Error(Errc::config, std::string("manifest.") + e.what());
    }
  }
  if (j.contains("seed")) m.seeds = {manifest_get<std::uint64_t>(j["seed"], "seed")};
  if (j.contains("seeds")) m.seeds = manifest_get<std::vector<std::uint64_t>>(j["seeds"], "seeds");
  if (m.seeds.empty()) m.seeds = {m.config.seed};
  if (j.contains("ranks")) m.ranks = manifest_get<std::vector<int>>(j["ranks"], "ranks");
  if (j.contains("fractions")) m.fractions = manifest_get<std::vector<double>>(j["fractions"], "fractions");
  if (j.contains("modes")) {
    m.modes.clear();
    const auto names = manifest_get<std::vector<std::string>>(j["modes"], "modes");
    for (std::size_t i = 0; i < names.size(); ++i) {
      try {
        m.modes.push_back(parse_composition(names[i]));
      } catch (const Error&) {
        manifest_error("modes[" + std::to_string(i) + "]", "unknown mode '" + names[i] + "'");
      }
    }
  }
  if (j.contains("conditions")) {
    if (!j["conditions"].is_array()) manifest_error("conditions", "expected an array");
    for (std::size_t i = 0; i < j["conditions"].size(); ++i) {
      const Json& c = j["conditions"][i];
      const std::string path = "conditions[" + std::to_string(i) + "]";
      if (!c.is_object()) manifest_error(path, "expected an object");
      Condition cond;
      if (!c.contains("method")) manifest_error(path + ".method", "required field missing");
      try {
        cond.method = parse_method(manifest_get<std::string>(c["method"], path + ".method"));
      } catch (const Error& e) {
        if (e.code() == Errc::config) throw;
        manifest_error(path + ".method", e.what());
      }
      cond.rank = c.contains("rank") ? manifest_get<int>(c["rank"], path + ".rank") : m.config.rank;
      if (cond.method == Method::LowRank && cond.rank < 1) manifest_error(path + ".rank", "must be >= 1");
      cond.seeds = c.contains("seeds") ? manifest_get<std::vector<std::uint64_t>>(c["seeds"], path + ".seeds") : m.seeds;
      m.conditions.push_back(cond);
    }
  }
  if (m.protocol == "matrix" && m.conditions.empty()) manifest_error("conditions", "matrix protocol needs conditions");
  if (j.contains("alpha")) m.alpha = manifest_get<double>(j["alpha"], "alpha");
  if (j.contains("q")) m.q = manifest_get<double>(j["q"], "q");
  if (!(m.alpha > 0.0 && m.alpha < 1.0)) manifest_error("alpha", "must lie in (0, 1)");
  if (!(m.q > 0.0 && m.q < 1.0)) manifest_error("q", "must lie in (0, 1)");
  if (j.contains("track")) {
    const Json& t = j["track"];
    if (!t.is_object()) manifest_error("track", "expected an object");
    for (const auto& [key, value] : t.items()) {
      if (key == "gradient_norms") {
        m.track_gradient_norms = manifest_get<bool>(value, "track.gradient_norms");
      } else if (key == "group_cosine") {
        m.track_group_cosine = manifest_get<bool>(value, "track.group_cosine");
      } else {
        manifest_error("track." + key, "unknown field");
      }
    }
  }
  if (j.contains("controls")) {
    m.analysis.controls = manifest_get<std::vector<std::string>>(j["controls"], "controls");
    for (std::size_t i = 0; i < m.analysis.controls.size(); ++i) {
      const auto& c = m.analysis.controls[i];
      if (std::find(kKnownControls.begin(), kKnownControls.end(), c) == kKnownControls.end()) {
        manifest_error("controls[" + std::to_string(i) + "]", "unknown control '" + c + "'");
      }
    }
  }
  if (j.contains("bins")) {
    try {
      apply_bins_flag(manifest_get<std::string>(j["bins"], "bins"), m.analysis);
    } catch (const Error& e) {
      if (e.code() != Errc::config) throw;
      manifest_error("bins", e.what());
    }
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, const ToyConfig& base_config) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open manifest '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), base_config);
}

Json report_json(const RunArtifact& run) { return Json(run.report); }

// Manifest execution.

namespace {

struct Writer {
  std::filesystem::path root;
  ManifestOutcome& outcome;
  std::set<std::string> annotations_written;

  void log(const RunArtifact& run) {
    const std::string rel = "logs/" + run.log.meta.run_id + ".jsonl";
    emit_log(root / rel, run.log);
    outcome.index.push_back({"log", rel, run.log.meta.run_id, "ok", ""});
    std::ostringstream line;
    line << run.log.meta.run_id << " rho=" << run.report.spearman.coefficient << " p=" << run.report.spearman.p_value
         << " tau=" << run.report.kendall.coefficient << " n=" << run.report.n;
    outcome.summary.push_back(line.str());
  }

  void annotations(const ToyLab& lab) {
    const std::string rel = "annotations/" + lab.config.dataset + "-s" + std::to_string(lab.config.seed) + ".jsonl";
    if (!annotations_written.insert(rel).second) return;
    std::ostringstream os;
    const auto records = probe_records(lab.data);
    write_annotations(os, records);
    write_file_atomic(root / rel, os.str());
    outcome.index.push_back({"annotations", rel, "", "ok", ""});
  }

  void report(const std::string& protocol, const Json& j) {
    const std::string rel = "reports/" + protocol + ".json";
    write_file_atomic(root / rel, dump_report(j));
    outcome.index.push_back({"report", rel, "", "ok", ""});
  }

  void failure(const std::string& run_id, const std::string& message) {
    outcome.index.push_back({"run", "", run_id, "failed", message});
    outcome.summary.push_back(run_id + " FAILED: " + message);
    outcome.failed = true;
  }
};

Json runs_json(const std::vector<RunArtifact>& runs) {
  Json a = Json::array();
  for (const auto& r : runs) a.push_back(r.report);
  return a;
}

}  // namespace

ManifestOutcome run_manifest(const Manifest& manifest, const std::filesystem::path& out_dir) {
  ManifestOutcome outcome;
  Writer w{out_dir, outcome, {}};
  LabCache labs;
  FinetuneOptions fopts;
  fopts.track_gradient_norms = manifest.track_gradient_norms;
  fopts.track_group_cosine = manifest.track_group_cosine;
  const AnalysisOptions& aopts = manifest.analysis;

  Json report = Json::object();
  report["protocol"] = manifest.protocol;
  report["config"] = Json::parse(config_to_json(manifest.config));
  report["seeds"] = manifest.seeds;

  const auto base_for = [&](std::uint64_t seed) {
    const ToyConfig c = with_seed(manifest.config, seed);
    const ToyLab& lab = labs.get(c);
    w.annotations(lab);
    report["base_accuracy"][std::to_string(seed)] = lab.base_accuracy;
    return c;
  };

  if (manifest.protocol == "train") {
    std::vector<RunArtifact> runs;
    for (std::uint64_t seed : manifest.seeds) {
      const ToyConfig c = base_for(seed);
      try {
        runs.push_back(run_and_analyze(labs.get(c), c, fopts, aopts));
        w.log(runs.back());
      } catch (const Error& e) {
        w.failure(default_run_id(c), e.what());
      }
    }
    report["runs"] = runs_json(runs);
  } else if (manifest.protocol == "sweep") {
    Json sweeps = Json::array();
    std::vector<RunArtifact> all;
    for (std::uint64_t seed : manifest.seeds) {
      const ToyConfig c = base_for(seed);
      RankSweepResult s = rank_sweep(c, manifest.ranks, labs, fopts, aopts);
      for (const auto& r : s.runs) w.log(r);
      if (s.partial) w.failure(default_run_id(c), s.failure);
      Json js{{"seed", seed}, {"ranks", s.ranks}, {"rhos", s.rhos},
              {"monotonicity", s.monotonicity ? Json(*s.monotonicity) : Json(nullptr)}, {"partial", s.partial}};
      sweeps.push_back(js);
      std::ostringstream line;
      line << "sweep seed=" << seed << " monotonicity=";
      if (s.monotonicity) {
        line << *s.monotonicity;
      } else {
        line << "undefined";
      }
      outcome.summary.push_back(line.str());
      for (auto& r : s.runs) all.push_back(std::move(r));
    }
    report["sweeps"] = sweeps;
    report["runs"] = runs_json(all);
  } else if (manifest.protocol == "noise") {
    for (std::uint64_t seed : manifest.seeds) base_for(seed);
    NoiseResult n = noise_injection(manifest.config, manifest.fractions, manifest.seeds, labs, fopts, aopts);
    std::set<std::string> logged;
    for (const auto& r : n.runs) {
      if (logged.insert(r.log.meta.run_id).second) w.log(r);
    }
    Json rows = Json::array();
    for (const auto& row : n.rows) {
      rows.push_back(Json{{"seed", row.seed},
                          {"fraction", row.fraction},
                          {"run_id", row.run_id},
                          {"selected", row.selected},
                          {"flipped", row.flipped},
                          {"clean_aulc_mean", row.clean_aulc_mean},
                          {"wilcoxon", row.wilcoxon},
                          {"cohens_d", row.cohens_d ? Json(*row.cohens_d) : Json(nullptr)},
                          {"rho", row.rho}});
    }
    report["rows"] = rows;
    report["runs"] = runs_json(n.runs);
  } else if (manifest.protocol == "softlabel") {
    Json rows = Json::array();
    std::vector<RunArtifact> all;
    for (std::uint64_t seed : manifest.seeds) {
      const ToyConfig c = base_for(seed);
      SoftLabelResult s = soft_label_run(c, labs, fopts, aopts);
      w.log(s.hard);
      w.log(s.soft);
      rows.push_back(Json{{"seed", seed},
                          {"delta_contested_hard", s.delta_contested_hard},
                          {"delta_contested_soft", s.delta_contested_soft},
                          {"sign_agreement", (s.delta_contested_hard > 0) == (s.delta_contested_soft > 0)},
                          {"tracking_loss", "hard-label cross-entropy in both modes"}});
      all.push_back(std::move(s.hard));
      all.push_back(std::move(s.soft));
    }
    report["rows"] = rows;
    report["runs"] = runs_json(all);
  } else if (manifest.protocol == "composition") {
    Json results = Json::array();
    std::vector<RunArtifact> all;
    for (std::uint64_t seed : manifest.seeds) {
      const ToyConfig c = base_for(seed);
      CompositionResult comp = composition_ablation(c, manifest.modes, labs, fopts, aopts);
      Json rows = Json::array();
      for (const auto& row : comp.rows) {
        rows.push_back(Json{{"mode", std::string(to_string(row.mode))},
                            {"run_id", row.run_id},
                            {"trained_probe", row.trained_probe},
                            {"rho", row.rho}});
      }
      for (const auto& r : comp.runs) w.log(r);
      results.push_back(Json{{"seed", seed}, {"rows", rows}, {"spread", comp.spread}});
      std::ostringstream line;
      line << "composition seed=" << seed << " spread=" << comp.spread;
      outcome.summary.push_back(line.str());
      for (auto& r : comp.runs) all.push_back(std::move(r));
    }
    report["results"] = results;
    report["runs"] = runs_json(all);
  } else if (manifest.protocol == "matrix") {
    for (const auto& cond : manifest.conditions) {
      for (auto seed : cond.seeds) base_for(seed);
    }
    MatrixResult mr = condition_matrix(manifest.config, manifest.conditions, manifest.alpha, manifest.q, labs, fopts, aopts);
    Json conds = Json::array();
    std::vector<RunArtifact> all;
    for (auto& c : mr.conditions) {
      for (const auto& r : c.runs) w.log(r);
      for (const auto& f : c.failures) {
        ToyConfig rc = manifest.config;
        rc.method = c.condition.method;
        rc.rank = c.condition.rank;
        w.failure(default_run_id(rc), f);
      }
      Json jc{{"method", std::string(to_string(c.condition.method))},
              {"rank", c.condition.rank},
              {"seeds", c.condition.seeds},
              {"failures", c.failures}};
      jc["aggregate"] = c.aggregate ? Json(*c.aggregate) : Json(nullptr);
      conds.push_back(jc);
      for (auto& r : c.runs) all.push_back(std::move(r));
    }
    report["conditions"] = conds;
    report["verdicts"] = mr.verdicts ? Json(*mr.verdicts) : Json(nullptr);
    report["runs"] = runs_json(all);
  }

  w.report(manifest.protocol, report);
  Json index = Json::object();
  index["protocol"] = manifest.protocol;
  Json entries = Json::array();
  for (const auto& e : outcome.index) {
    entries.push_back(Json{{"kind", e.kind}, {"path", e.path}, {"run_id", e.run_id}, {"status", e.status}, {"message", e.message}});
  }
  index["entries"] = entries;
  index["failed"] = outcome.failed;
  write_file_atomic(out_dir / "index.json", dump_report(index));
  return outcome;
}

}  // namespace lossdyn
