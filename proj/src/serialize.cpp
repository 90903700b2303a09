#include "lossdyn/serialize.hpp"

#include <cmath>
#include <limits>

#include "lossdyn/error.hpp"

namespace lossdyn {

namespace {

std::string cat_name(EntropyCategory c) { return std::string(to_string(c)); }

template <typename T>
std::optional<T> optional_from(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

template <typename T>
void optional_to(Json& j, const char* key, const std::optional<T>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v(i)));
  return a;
}

Eigen::VectorXd vector_from(const Json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_or_nan(a[i]);
  return v;
}

}  // namespace

Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

double number_or_nan(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string dump_report(const Json& j) { return j.dump(2) + "\n"; }

void to_json(Json& j, const Summary& v) { j = Json{{"mean", v.mean}, {"std", v.std}, {"n", v.n}}; }
void from_json(const Json& j, Summary& v) {
  v.mean = j.at("mean").get<double>();
  v.std = j.at("std").get<double>();
  v.n = j.at("n").get<std::size_t>();
}

void to_json(Json& j, const CorrelationResult& v) {
  j = Json{{"coefficient", v.coefficient}, {"p_value", v.p_value}, {"n", v.n}};
}
void from_json(const Json& j, CorrelationResult& v) {
  v.coefficient = j.at("coefficient").get<double>();
  v.p_value = j.at("p_value").get<double>();
  v.n = j.at("n").get<std::size_t>();
}

void to_json(Json& j, const RegressionResult& v) {
  j = Json{{"names", v.names},
           {"beta", vector_json(v.beta)},
           {"standard_errors", vector_json(v.standard_errors)},
           {"t_statistics", vector_json(v.t_statistics)},
           {"p_values", vector_json(v.p_values)},
           {"r_squared", v.r_squared},
           {"n", v.n},
           {"standardized", v.standardized}};
}
void from_json(const Json& j, RegressionResult& v) {
  v.names = j.at("names").get<std::vector<std::string>>();
  v.beta = vector_from(j.at("beta"));
  v.standard_errors = vector_from(j.at("standard_errors"));
  v.t_statistics = vector_from(j.at("t_statistics"));
  v.p_values = vector_from(j.at("p_values"));
  v.r_squared = j.at("r_squared").get<double>();
  v.n = j.at("n").get<std::size_t>();
  v.standardized = j.at("standardized").get<bool>();
}

void to_json(Json& j, const KruskalWallisResult& v) { j = Json{{"h", v.h}, {"p_value", v.p_value}, {"df", v.df}}; }
void from_json(const Json& j, KruskalWallisResult& v) {
  v.h = j.at("h").get<double>();
  v.p_value = j.at("p_value").get<double>();
  v.df = j.at("df").get<std::size_t>();
}

void to_json(Json& j, const WilcoxonResult& v) {
  j = Json{{"statistic", v.statistic}, {"w_plus", v.w_plus},         {"w_minus", v.w_minus},
           {"p_value", v.p_value},     {"n_nonzero", v.n_nonzero},   {"exact", v.exact},
           {"degenerate", v.degenerate}};
}

void to_json(Json& j, const SeedAggregate& v) {
  j = Json{{"mean", v.mean}, {"std", v.std}, {"n", v.n}, {"single", v.single}};
}
void from_json(const Json& j, SeedAggregate& v) {
  v.mean = j.at("mean").get<double>();
  v.std = j.at("std").get<double>();
  v.n = j.at("n").get<std::size_t>();
  v.single = j.at("single").get<bool>();
}

void to_json(Json& j, const CalibrationMetrics& v) {
  j = Json{{"n", v.n},
           {"mean_prediction_entropy", v.mean_prediction_entropy},
           {"mean_max_confidence", v.mean_max_confidence},
           {"ece", v.ece},
           {"accuracy", v.accuracy}};
}
void from_json(const Json& j, CalibrationMetrics& v) {
  v.n = j.at("n").get<std::size_t>();
  v.mean_prediction_entropy = j.at("mean_prediction_entropy").get<double>();
  v.mean_max_confidence = j.at("mean_max_confidence").get<double>();
  v.ece = j.at("ece").get<double>();
  v.accuracy = j.at("accuracy").get<double>();
}

void to_json(Json& j, const CalibrationReport& v) {
  j = Json{{"bins", v.bins}, {"overall", v.overall}};
  Json cats = Json::object();
  for (std::size_t c = 0; c < v.by_category.size(); ++c) {
    const std::string name = cat_name(static_cast<EntropyCategory>(c));
    if (v.by_category[c]) {
      cats[name] = *v.by_category[c];
    } else {
      cats[name] = nullptr;
    }
  }
  j["by_category"] = cats;
  Json omitted = Json::array();
  for (auto c : v.omitted) omitted.push_back(cat_name(c));
  j["omitted"] = omitted;
}
void from_json(const Json& j, CalibrationReport& v) {
  v.bins = j.at("bins").get<std::size_t>();
  v.overall = j.at("overall").get<CalibrationMetrics>();
  v.by_category.assign(kNumCategories, std::nullopt);
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    v.by_category[c] = optional_from<CalibrationMetrics>(j.at("by_category"), cat_name(static_cast<EntropyCategory>(c)).c_str());
  }
  v.omitted.clear();
  for (const auto& name : j.at("omitted")) v.omitted.push_back(parse_category(name.get<std::string>()));
}

void to_json(Json& j, const AnalysisReport& v) {
  j = Json::object();
  j["run_id"] = v.run_id;
  j["method"] = std::string(to_string(v.method));
  j["rank"] = v.rank;
  j["alpha"] = v.alpha;
  j["seed"] = v.seed;
  j["dataset"] = v.dataset;
  j["tags"] = v.tags;
  j["n"] = v.n;
  j["checkpoints"] = v.checkpoints;
  j["dropped_annotations"] = v.dropped_annotations;
  j["dropped_trajectories"] = v.dropped_trajectories;
  j["spearman"] = v.spearman;
  j["kendall"] = v.kendall;
  j["controls"] = v.controls;
  optional_to(j, "partial", v.partial);
  optional_to(j, "regression", v.regression);
  Json cats = Json::array();
  for (const auto& c : v.categories) cats.push_back(Json{{"category", cat_name(c.category)}, {"aulc", c.aulc}, {"delta", c.delta}});
  j["categories"] = cats;
  j["binning"] = v.binning;
  Json bins = Json::array();
  for (const auto& b : v.bins) bins.push_back(Json{{"bin", b.bin}, {"aulc", b.aulc}, {"delta", b.delta}});
  j["bins"] = bins;
  optional_to(j, "calibration", v.calibration);
  if (v.cartography) {
    Json pts = Json::array();
    for (const auto& p : v.cartography->points) {
      pts.push_back(Json{{"uid", p.uid}, {"category", cat_name(p.category)}, {"confidence", p.confidence},
                         {"variability", p.variability}, {"aulc", p.aulc}});
    }
    Json c{{"points", pts}};
    optional_to(c, "confidence_vs_aulc", v.cartography->confidence_vs_aulc);
    j["cartography"] = c;
  } else {
    j["cartography"] = nullptr;
  }
  if (v.gradient_norms) {
    Json pts = Json::array();
    for (const auto& p : v.gradient_norms->points) {
      pts.push_back(Json{{"uid", p.uid}, {"category", cat_name(p.category)}, {"median_norm", p.median_norm}});
    }
    Json g{{"points", pts}};
    optional_to(g, "kruskal", v.gradient_norms->kruskal);
    j["gradient_norms"] = g;
  } else {
    j["gradient_norms"] = nullptr;
  }
  Json cos = Json::array();
  for (const auto& c : v.cosines) cos.push_back(Json{{"step", c.step}, {"cosine", c.cosine ? Json(*c.cosine) : Json(nullptr)}});
  j["cosines"] = cos;
  Json hero = Json::array();
  for (const auto& h : v.hero) {
    hero.push_back(Json{{"category", cat_name(h.category)}, {"step", h.step}, {"mean", h.mean}, {"sd", h.sd},
                        {"n", h.n}, {"ci_half_width", h.ci_half_width}});
  }
  j["hero"] = hero;
}

void from_json(const Json& j, AnalysisReport& v) {
  try {
    v.run_id = j.at("run_id").get<std::string>();
    v.method = parse_method(j.at("method").get<std::string>());
    v.rank = j.at("rank").get<int>();
    v.alpha = j.at("alpha").get<double>();
    v.seed = j.at("seed").get<std::uint64_t>();
    v.dataset = j.at("dataset").get<std::string>();
    v.tags = j.at("tags").get<std::map<std::string, std::string>>();
    v.n = j.at("n").get<std::size_t>();
    v.checkpoints = j.at("checkpoints").get<std::size_t>();
    v.dropped_annotations = j.at("dropped_annotations").get<std::size_t>();
    v.dropped_trajectories = j.at("dropped_trajectories").get<std::size_t>();
    v.spearman = j.at("spearman").get<CorrelationResult>();
    v.kendall = j.at("kendall").get<CorrelationResult>();
    v.controls = j.at("controls").get<std::vector<std::string>>();
    v.partial = optional_from<CorrelationResult>(j, "partial");
    v.regression = optional_from<RegressionResult>(j, "regression");
    v.categories.clear();
    for (const auto& c : j.at("categories")) {
      v.categories.push_back({parse_category(c.at("category").get<std::string>()), c.at("aulc").get<Summary>(),
                              c.at("delta").get<Summary>()});
    }
    v.binning = j.at("binning").get<std::string>();
    v.bins.clear();
    for (const auto& b : j.at("bins")) {
      v.bins.push_back({b.at("bin").get<std::size_t>(), b.at("aulc").get<Summary>(), b.at("delta").get<Summary>()});
    }
    v.calibration = optional_from<CalibrationReport>(j, "calibration");
    v.cartography.reset();
    if (!j.at("cartography").is_null()) {
      CartographySummary c;
      for (const auto& p : j["cartography"].at("points")) {
        c.points.push_back({p.at("uid").get<std::string>(), parse_category(p.at("category").get<std::string>()),
                            p.at("confidence").get<double>(), p.at("variability").get<double>(), p.at("aulc").get<double>()});
      }
      c.confidence_vs_aulc = optional_from<CorrelationResult>(j["cartography"], "confidence_vs_aulc");
      v.cartography = std::move(c);
    }
    v.gradient_norms.reset();
    if (!j.at("gradient_norms").is_null()) {
      GradNormSummary g;
      for (const auto& p : j["gradient_norms"].at("points")) {
        g.points.push_back({p.at("uid").get<std::string>(), parse_category(p.at("category").get<std::string>()),
                            p.at("median_norm").get<double>()});
      }
      g.kruskal = optional_from<KruskalWallisResult>(j["gradient_norms"], "kruskal");
      v.gradient_norms = std::move(g);
    }
    v.cosines.clear();
    for (const auto& c : j.at("cosines")) {
      GroupCosineRecord rec;
      rec.step = c.at("step").get<std::int64_t>();
      if (!c.at("cosine").is_null()) rec.cosine = c["cosine"].get<double>();
      v.cosines.push_back(rec);
    }
    v.hero.clear();
    for (const auto& h : j.at("hero")) {
      v.hero.push_back({parse_category(h.at("category").get<std::string>()), h.at("step").get<std::int64_t>(),
                        h.at("mean").get<double>(), h.at("sd").get<double>(), h.at("n").get<std::size_t>(),
                        h.at("ci_half_width").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("malformed analysis report: ") + e.what());
  }
}

void to_json(Json& j, const ConditionAggregate& v) {
  j = Json::object();
  j["method"] = std::string(to_string(v.method));
  j["rank"] = v.rank;
  j["dataset"] = v.dataset;
  j["seeds"] = v.seeds;
  j["rho"] = v.rho;
  j["tau"] = v.tau;
  j["p_median"] = v.p_median;
  optional_to(j, "delta_clean", v.delta_clean);
  optional_to(j, "delta_contested", v.delta_contested);
  optional_to(j, "partial_rho", v.partial_rho);
  j["reduced_seeds"] = v.reduced_seeds;
}

void to_json(Json& j, const CorrectionVerdicts& v) {
  j = Json{{"alpha", v.alpha},
           {"q", v.q},
           {"bonferroni_threshold", v.bonferroni_threshold},
           {"bonferroni", v.bonferroni},
           {"benjamini_hochberg", v.benjamini_hochberg}};
}

}  // namespace lossdyn
