#include "lossdyn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "lossdyn/error.hpp"

namespace lossdyn {

namespace {

Eigen::VectorXd column(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Summary summarize(const VectorRef& values) {
  if (values.size() == 0) throw Error(Errc::empty_input, "summary of no values");
  Summary s;
  s.n = static_cast<std::size_t>(values.size());
  s.mean = values.mean();
  if (s.n > 1) s.std = std::sqrt((values.array() - s.mean).square().sum() / static_cast<double>(s.n - 1));
  return s;
}

const CategoryStats* AnalysisReport::category(EntropyCategory c) const {
  for (const auto& s : categories) {
    if (s.category == c) return &s;
  }
  return nullptr;
}

Eigen::MatrixXd control_matrix(const AnalysisTable& table, const std::vector<std::string>& controls, int num_classes,
                               std::vector<std::string>& names) {
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  std::vector<Eigen::VectorXd> cols;
  names.clear();
  for (const auto& control : controls) {
    if (control == "length") {
      Eigen::VectorXd c(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& len = table.rows[static_cast<std::size_t>(i)].text_length;
        if (!len) throw Error(Errc::missing_data, "control 'length' needs a text payload for uid '" + table.rows[static_cast<std::size_t>(i)].uid + "'");
        c(i) = *len;
      }
      cols.push_back(c);
      names.push_back("length");
    } else if (control == "gold") {
      // Dummy coding with class 0 as the reference; absent classes are skipped.
      for (int k = 1; k < num_classes; ++k) {
        Eigen::VectorXd c(n);
        for (Eigen::Index i = 0; i < n; ++i) c(i) = table.rows[static_cast<std::size_t>(i)].gold == k ? 1.0 : 0.0;
        if (c.sum() == 0.0) continue;
        cols.push_back(c);
        names.push_back("gold_" + std::to_string(k));
      }
    } else {
      throw Error(Errc::config, "unknown control '" + control + "' (known: length, gold)");
    }
  }
  Eigen::MatrixXd m(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = cols[j];
  return m;
}

void apply_bins_flag(std::string_view flag, AnalysisOptions& options) {
  if (flag == "quartile") {
    options.percentile_k = 4;
  } else if (flag == "tercile") {
    options.percentile_k = 3;
  } else if (flag.starts_with("fixed:")) {
    const std::string body(flag.substr(6));
    const auto comma = body.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("missing comma");
      std::size_t used = 0;
      const std::string lo = body.substr(0, comma);
      const std::string hi = body.substr(comma + 1);
      options.thresholds.lower = std::stod(lo, &used);
      if (used != lo.size()) throw std::invalid_argument("trailing characters");
      options.thresholds.upper = std::stod(hi, &used);
      if (used != hi.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::logic_error&) {
      throw Error(Errc::config, "bins: expected fixed:<lo>,<hi>, got '" + std::string(flag) + "'");
    }
    options.percentile_k = 0;
  } else {
    throw Error(Errc::config, "bins: expected fixed:<lo>,<hi>, quartile or tercile, got '" + std::string(flag) + "'");
  }
}

AnalysisReport analyze_run(std::span<const AnnotationRecord> records, const RunLog& log, const AnalysisOptions& options) {
  log.meta.validate();
  JoinOptions join_options;
  join_options.categories = options.thresholds;
  join_options.bins = options.bins;
  if (!join_options.bins && options.percentile_k > 0) {
    std::set<std::string> logged;
    for (const auto& t : log.trajectories) logged.insert(t.uid);
    std::vector<double> h;
    for (const auto& rec : records) {
      if (logged.contains(rec.uid)) h.push_back(entropy(rec));
    }
    join_options.bins = percentile_bins(h, options.percentile_k);
  }
  join_options.cartography_indices = log.meta.epoch_indices();
  const AnalysisTable table = join(records, log.trajectories, join_options);

  AnalysisReport r;
  r.run_id = log.meta.run_id;
  r.method = log.meta.method;
  r.rank = log.meta.rank;
  r.alpha = log.meta.alpha;
  r.seed = log.meta.seed;
  r.dataset = log.meta.dataset;
  r.tags = log.meta.tags;
  r.n = table.rows.size();
  r.checkpoints = log.meta.schedule.size();
  r.dropped_annotations = table.dropped_annotations;
  r.dropped_trajectories = table.dropped_trajectories;

  const auto n = static_cast<Eigen::Index>(r.n);
  Eigen::VectorXd aulc_v(n);
  Eigen::VectorXd entropy_v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    aulc_v(i) = table.rows[static_cast<std::size_t>(i)].aulc;
    entropy_v(i) = table.rows[static_cast<std::size_t>(i)].entropy;
  }
  r.spearman = spearman(aulc_v, entropy_v);
  r.kendall = kendall_tau_b(aulc_v, entropy_v);

  const int num_classes = records.empty() ? 3 : records.front().num_classes();
  if (!options.controls.empty()) {
    std::vector<std::string> names;
    const Eigen::MatrixXd controls = control_matrix(table, options.controls, num_classes, names);
    r.controls = names;
    r.partial = partial_spearman(aulc_v, entropy_v, controls);
    Eigen::MatrixXd predictors(n, controls.cols() + 1);
    predictors.col(0) = entropy_v;
    predictors.rightCols(controls.cols()) = controls;
    std::vector<std::string> reg_names{"entropy"};
    reg_names.insert(reg_names.end(), names.begin(), names.end());
    r.regression = ols_regression(aulc_v, predictors, true, reg_names);
  }

  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_cat;
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_bin;
  for (const auto& row : table.rows) {
    auto& c = by_cat[static_cast<std::size_t>(row.category)];
    c.first.push_back(row.aulc);
    c.second.push_back(row.delta);
    auto& b = by_bin[row.bin];
    b.first.push_back(row.aulc);
    b.second.push_back(row.delta);
  }
  for (const auto& [c, v] : by_cat) {
    r.categories.push_back({static_cast<EntropyCategory>(c), summarize(column(v.first)), summarize(column(v.second))});
  }
  if (join_options.bins) {
    r.binning = describe(*join_options.bins);
    for (const auto& [b, v] : by_bin) r.bins.push_back({b, summarize(column(v.first)), summarize(column(v.second))});
  }

  // Trajectory lookup in table order for the per-checkpoint series.
  std::map<std::string, const LossTrajectory*> traj_by_uid;
  for (const auto& t : log.trajectories) traj_by_uid[t.uid] = &t;
  const auto& steps = log.meta.schedule.steps();
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    std::vector<const LossTrajectory*> members;
    for (const auto& row : table.rows) {
      if (static_cast<std::size_t>(row.category) == c) members.push_back(traj_by_uid.at(row.uid));
    }
    if (members.empty()) continue;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(members.size()));
      for (std::size_t i = 0; i < members.size(); ++i) v(static_cast<Eigen::Index>(i)) = members[i]->losses(static_cast<Eigen::Index>(t));
      const Summary s = summarize(v);
      r.hero.push_back({static_cast<EntropyCategory>(c), steps[t], s.mean, s.std, s.n,
                        options.ci_z * s.std / std::sqrt(static_cast<double>(s.n))});
    }
  }

  const bool have_dists = std::all_of(log.trajectories.begin(), log.trajectories.end(),
                                      [](const LossTrajectory& t) { return t.pred_dists.has_value(); });
  if (have_dists && !log.trajectories.empty()) {
    Eigen::MatrixXd final_dists(n, num_classes);
    std::vector<int> golds;
    std::vector<EntropyCategory> cats;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = table.rows[static_cast<std::size_t>(i)];
      const auto& d = *traj_by_uid.at(row.uid)->pred_dists;
      final_dists.row(i) = d.row(d.rows() - 1);
      golds.push_back(row.gold);
      cats.push_back(row.category);
    }
    r.calibration = calibration_by_category(final_dists, golds, cats, options.ece_bins);
  }

  if (!table.rows.empty() && table.rows.front().cartography) {
    CartographySummary cart;
    Eigen::VectorXd conf(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = table.rows[static_cast<std::size_t>(i)];
      cart.points.push_back({row.uid, row.category, row.cartography->confidence, row.cartography->variability, row.aulc});
      conf(i) = row.cartography->confidence;
    }
    try {
      cart.confidence_vs_aulc = spearman(conf, aulc_v);
    } catch (const Error& e) {
      if (e.code() != Errc::undefined_correlation && e.code() != Errc::domain) throw;
    }
    r.cartography = std::move(cart);
  }

  if (!log.gradient_norms.empty()) {
    GradNormSummary g;
    std::vector<std::vector<double>> groups(kNumCategories);
    for (const auto& row : table.rows) {
      std::vector<double> norms;
      for (const auto& rec : log.gradient_norms) {
        const auto it = rec.norms.find(row.uid);
        if (it != rec.norms.end()) norms.push_back(it->second);
      }
      if (norms.empty()) continue;
      const double m = median(norms);
      g.points.push_back({row.uid, row.category, m});
      groups[static_cast<std::size_t>(row.category)].push_back(m);
    }
    std::vector<Eigen::VectorXd> present;
    for (const auto& grp : groups) {
      if (!grp.empty()) present.push_back(column(grp));
    }
    if (present.size() >= 2) {
      try {
        g.kruskal = kruskal_wallis(present);
      } catch (const Error& e) {
        if (e.code() != Errc::domain) throw;
      }
    }
    r.gradient_norms = std::move(g);
  }
  r.cosines = log.group_cosines;
  return r;
}

ConditionAggregate aggregate_condition(std::span<const AnalysisReport> runs, std::size_t expected_seeds) {
  if (runs.empty()) throw Error(Errc::empty_input, "condition has no runs");
  ConditionAggregate a;
  a.method = runs.front().method;
  a.rank = runs.front().rank;
  a.dataset = runs.front().dataset;
  std::vector<double> rho;
  std::vector<double> tau;
  std::vector<double> p;
  std::vector<double> clean;
  std::vector<double> contested;
  std::vector<double> partial;
  for (const auto& run : runs) {
    if (run.method != a.method || run.rank != a.rank || run.dataset != a.dataset) {
      throw Error(Errc::protocol, "runs of different conditions cannot be aggregated");
    }
    a.seeds.push_back(run.seed);
    rho.push_back(run.spearman.coefficient);
    tau.push_back(run.kendall.coefficient);
    p.push_back(run.spearman.p_value);
    if (const auto* c = run.category(EntropyCategory::Clean)) clean.push_back(c->delta.mean);
    if (const auto* c = run.category(EntropyCategory::Contested)) contested.push_back(c->delta.mean);
    if (run.partial) partial.push_back(run.partial->coefficient);
  }
  a.rho = seed_aggregate(column(rho));
  a.tau = seed_aggregate(column(tau));
  a.p_median = median(p);
  if (!clean.empty()) a.delta_clean = seed_aggregate(column(clean));
  if (!contested.empty()) a.delta_contested = seed_aggregate(column(contested));
  if (partial.size() == runs.size()) a.partial_rho = seed_aggregate(column(partial));
  a.reduced_seeds = runs.size() < expected_seeds;
  return a;
}

CorrectionVerdicts apply_corrections(const std::vector<double>& p_values, double alpha, double q) {
  CorrectionVerdicts v;
  v.alpha = alpha;
  v.q = q;
  v.bonferroni_threshold = bonferroni(alpha, p_values.size());
  for (double p : p_values) v.bonferroni.push_back(p <= v.bonferroni_threshold);
  v.benjamini_hochberg = benjamini_hochberg(p_values, q);
  return v;
}

}  // namespace lossdyn
