#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lossdyn/analysis.hpp"
#include "lossdyn/calibration.hpp"
#include "lossdyn/error.hpp"
#include "lossdyn/protocols.hpp"
#include "lossdyn/random.hpp"
#include "lossdyn/stats.hpp"
#include "lossdyn/trajectory_log.hpp"
#include "oracles.hpp"

using namespace lossdyn;
namespace fs = std::filesystem;

namespace {

const std::vector<std::uint64_t> kSeeds{42, 123, 456};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Eigen::VectorXd vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

LabCache& labs() {
  static LabCache cache;
  return cache;
}

ToyConfig config_for(std::uint64_t seed, Method method = Method::LowRank, int rank = 2) {
  ToyConfig c;
  c.seed = seed;
  c.method = method;
  c.rank = rank;
  return c;
}

const RunArtifact& run(std::uint64_t seed, Method method = Method::LowRank, int rank = 2) {
  static std::map<std::tuple<std::uint64_t, Method, int>, RunArtifact> cache;
  const auto key = std::make_tuple(seed, method, rank);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const ToyConfig c = config_for(seed, method, rank);
    it = cache.emplace(key, run_and_analyze(labs().get(c), c)).first;
  }
  return it->second;
}

double category_delta(const AnalysisReport& r, EntropyCategory c) {
  const auto* s = r.category(c);
  return s ? s->delta.mean : std::nan("");
}

Outcome criterion1() {
  const std::vector<std::int64_t> uniform{1, 1, 1};
  const double h = entropy(uniform);
  const bool entropy_ok = std::abs(h - std::log(3.0)) <= 1e-12;
  const bool bonf_ok = bonferroni(0.05, 25) == 0.002;
  const auto agg = seed_aggregate(vec({0.304, 0.327, 0.295}));
  const bool agg_ok = std::round(agg.mean * 1000) == 309 && std::round(agg.std * 1000) == 17;
  return {entropy_ok && bonf_ok && agg_ok,
          "H(uniform3)=" + fmt("%.15f", h) + " bonferroni(0.05,25)=" + fmt("%.6g", bonferroni(0.05, 25)) +
              " seed_aggregate=" + fmt("%.3f", agg.mean) + "+-" + fmt("%.3f", agg.std)};
}

Outcome criterion2() {
  std::mt19937_64 rng(20240);
  double max_rho = 0, max_tau = 0, max_w = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int n = 3 + static_cast<int>(rng() % 10);
    const bool tied = inst % 2 == 0;
    std::vector<double> x(static_cast<std::size_t>(n)), y(x.size());
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<int> small(0, 4);
    do {
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = tied ? small(rng) : nd(rng);
        y[i] = tied ? small(rng) : 0.5 * x[i] + nd(rng);
      }
    } while (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
             std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; }));
    max_rho = std::max(max_rho, std::abs(spearman(vec(x), vec(y)).coefficient - oracle::spearman(x, y)));
    max_tau = std::max(max_tau, std::abs(kendall_tau_b(vec(x), vec(y)).coefficient - oracle::kendall_tau_b(x, y)));
    const auto w = wilcoxon_signed_rank(vec(x), vec(y));
    max_w = std::max(max_w, std::abs(w.p_value - oracle::wilcoxon_exact_p(x, y)));
  }
  return {max_rho <= 1e-10 && max_tau <= 1e-10 && max_w <= 0.02,
          "1000 instances: max|drho|=" + fmt("%.2e", max_rho) + " max|dtau|=" + fmt("%.2e", max_tau) +
              " max|dp_wilcoxon|=" + fmt("%.2e", max_w)};
}

Outcome criterion3() {
  std::mt19937_64 rng(777);
  double worst = 0;
  int configs = 0;
  const std::array<Method, 3> methods{Method::LowRank, Method::Full, Method::Scaling};
  for (int k = 0; k < 100; ++k) {
    ToyConfig c;
    c.method = methods[static_cast<std::size_t>(k % 3)];
    c.feature_dim = 2 + static_cast<int>(rng() % 7);
    c.rank = 1 + static_cast<int>(rng() % 2);
    c.hidden_dim = (k / 3) % 2 == 0 ? 0 : 2 + static_cast<int>(rng() % 5);
    std::mt19937_64 mrng(rng());
    AdapterModel m = attach_adapter(init_base_model(c, mrng), c, mrng);
    for (auto p : m.trainable()) {
      auto& t = m.tensor(p);
      t += normal_matrix(mrng, t.rows(), t.cols(), 0.3);
    }
    const int n = 3 + static_cast<int>(rng() % 6);
    const Eigen::MatrixXd x = normal_matrix(mrng, n, c.feature_dim, 1.0);
    Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(n, 3);
    std::uniform_real_distribution<double> u(0.2, 2.0);
    for (int i = 0; i < n; ++i) {
      if (k % 2 == 0) {
        targets(i, static_cast<Eigen::Index>(mrng() % 3)) = u(mrng);
      } else {
        for (int j = 0; j < 3; ++j) targets(i, j) = u(mrng);
      }
    }
    Eigen::MatrixXd mask;
    const Eigen::MatrixXd* mask_ptr = nullptr;
    if (c.method == Method::LowRank && k % 4 == 0) {
      mask = Eigen::MatrixXd(n, c.feature_dim);
      std::bernoulli_distribution keep(0.9);
      for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = keep(mrng) ? 1.0 / 0.9 : 0.0;
      mask_ptr = &mask;
    }
    worst = std::max(worst, oracle::finite_difference_check(m, x, targets, mask_ptr).max_rel_error);
    ++configs;
  }
  return {worst < 1e-4, std::to_string(configs) + " configurations (lowrank/full/scaling): max relative error " +
                            fmt("%.2e", worst)};
}

Outcome criterion4() {
  int lowrank_ok = 0, full_ok = 0;
  std::string detail;
  for (auto s : kSeeds) {
    const auto& lr = run(s).report;
    const auto& full = run(s, Method::Full, 0).report;
    const double dc = category_delta(lr, EntropyCategory::Contested);
    const double dk = category_delta(lr, EntropyCategory::Clean);
    const double df = category_delta(full, EntropyCategory::Contested);
    if (dc > 0 && dk < 0) ++lowrank_ok;
    if (df < 0) ++full_ok;
    detail += " s" + std::to_string(s) + "[lowrank contested " + fmt("%+.3f", dc) + " clean " + fmt("%+.3f", dk) +
              "; full contested " + fmt("%+.3f", df) + "]";
  }
  return {lowrank_ok >= 2 && full_ok >= 2,
          "lowrank sign pattern " + std::to_string(lowrank_ok) + "/3, full contested<0 " + std::to_string(full_ok) + "/3;" +
              detail};
}

Outcome criterion5() {
  bool all_sig = true;
  std::string detail;
  for (auto s : kSeeds) {
    const auto& r = run(s).report.spearman;
    all_sig = all_sig && r.coefficient > 0 && r.p_value < 0.01;
    detail += " s" + std::to_string(s) + " rho=" + fmt("%.4f", r.coefficient) + " p=" + fmt("%.2e", r.p_value);
  }
  std::vector<double> ranks, rhos;
  for (int r : {1, 2, 4, 8}) {
    ranks.push_back(r);
    rhos.push_back(run(42, Method::LowRank, r).report.spearman.coefficient);
  }
  const double mono = spearman_coefficient(vec(ranks), vec(rhos));
  int inversions = 0;
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    for (std::size_t j = i + 1; j < rhos.size(); ++j) inversions += rhos[j] < rhos[i] ? 1 : 0;
  }
  detail += "; rank sweep s42 rho(r=1,2,4,8)=";
  for (double r : rhos) detail += fmt("%.5f", r) + " ";
  detail += "monotonicity=" + fmt("%.2f", mono) + " inversions=" + std::to_string(inversions);
  return {all_sig && mono >= 0.8 - 1e-12 && inversions <= 1, detail};
}

Outcome criterion6() {
  const auto r = composition_ablation(config_for(42),
                                      {Composition::LowOnly, Composition::HighOnly, Composition::Balanced, Composition::All},
                                      labs());
  std::string detail = "spread=" + fmt("%.4f", r.spread) + " (";
  for (const auto& row : r.rows) detail += std::string(to_string(row.mode)) + " " + fmt("%.4f", row.rho.coefficient) + " ";
  detail += ")";
  return {r.spread < 0.1, detail};
}

Outcome criterion7() {
  const auto r = noise_injection(config_for(42), {0.0, 0.3, 0.6}, kSeeds, labs());
  int monotone = 0, significant = 0;
  std::string detail;
  for (auto s : kSeeds) {
    std::vector<const NoiseRow*> rows;
    for (const auto& row : r.rows) {
      if (row.seed == s) rows.push_back(&row);
    }
    bool nondecreasing = true;
    for (std::size_t i = 1; i < rows.size(); ++i) nondecreasing = nondecreasing && rows[i]->clean_aulc_mean >= rows[i - 1]->clean_aulc_mean;
    if (nondecreasing) ++monotone;
    const NoiseRow* last = rows.back();
    if (last->wilcoxon.p_value < 0.05) ++significant;
    detail += " s" + std::to_string(s) + "[aulc";
    for (const auto* row : rows) detail += " " + fmt("%.4f", row->clean_aulc_mean);
    detail += "; p(0.6)=" + fmt("%.2e", last->wilcoxon.p_value) +
              " d=" + (last->cohens_d ? fmt("%.3f", *last->cohens_d) : std::string("n/a")) + "]";
  }
  return {monotone >= 2 && significant >= 2,
          "non-decreasing " + std::to_string(monotone) + "/3, p<0.05 at f=0.6 " + std::to_string(significant) + "/3;" +
              detail};
}

Outcome criterion8() {
  const int n = 1000;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> uh(0.0, std::log(3.0));
  std::vector<double> h(n), a(n);
  for (int i = 0; i < n; ++i) {
    h[static_cast<std::size_t>(i)] = uh(rng);
    a[static_cast<std::size_t>(i)] = 0.5 + h[static_cast<std::size_t>(i)] + 0.3 * nd(rng);
  }
  const Eigen::VectorXd av = vec(a);
  int ok = 0;
  double worst = 0;
  for (int draw = 0; draw < 200; ++draw) {
    std::vector<double> p = h;
    std::shuffle(p.begin(), p.end(), rng);
    const auto r = spearman(vec(p), av);
    worst = std::max(worst, std::abs(r.coefficient));
    if (std::abs(r.coefficient) < 0.08 && r.p_value > 0.01) ++ok;
  }
  const double unpermuted = spearman(vec(h), av).coefficient;
  return {ok >= 190, std::to_string(ok) + "/200 draws with |rho|<0.08 and p>0.01; max|rho|=" + fmt("%.4f", worst) +
                         " (unpermuted rho=" + fmt("%.3f", unpermuted) + ")"};
}

Outcome criterion9() {
  Eigen::MatrixXd confident(3, 3);
  confident << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const double e1 = ece(confident, std::vector<int>{0, 1, 2});
  const double e2 = ece(Eigen::MatrixXd::Constant(3, 3, 1.0 / 3), std::vector<int>{0, 1, 2});
  int sharper = 0;
  std::string detail = "ECE confident=" + fmt("%.2g", e1) + " uniform=" + fmt("%.2g", e2) + ";";
  for (auto s : kSeeds) {
    const double full = run(s, Method::Full, 0).report.calibration->overall.mean_prediction_entropy;
    const double lr = run(s).report.calibration->overall.mean_prediction_entropy;
    if (full < lr) ++sharper;
    detail += " s" + std::to_string(s) + " H_pred full=" + fmt("%.3f", full) + " lowrank=" + fmt("%.3f", lr);
  }
  return {std::abs(e1) < 1e-12 && std::abs(e2) < 1e-12 && sharper >= 2,
          detail + "; full sharper in " + std::to_string(sharper) + "/3"};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

RunLog random_log(std::mt19937_64& rng, int id) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> ex(0.5);
  RunLog log;
  log.meta.run_id = "rand-" + std::to_string(id);
  log.meta.method = static_cast<Method>(rng() % 3);
  log.meta.rank = log.meta.method == Method::LowRank ? 1 + static_cast<int>(rng() % 8) : 0;
  log.meta.alpha = 2.0 * log.meta.rank;
  log.meta.seed = rng();
  log.meta.dataset = id % 2 ? "toy" : "other, \"quoted\"";
  std::vector<std::int64_t> steps;
  std::int64_t s = 0;
  const int T = 2 + static_cast<int>(rng() % 8);
  for (int t = 0; t < T; ++t) steps.push_back(s += 1 + static_cast<std::int64_t>(rng() % 20));
  log.meta.schedule = CheckpointSchedule(steps);
  log.meta.epoch_steps = {steps.back()};
  if (id % 3 == 0) log.meta.tags = {{"loss", "soft"}, {"note", "x y"}};
  const int n = 1 + static_cast<int>(rng() % 30);
  const bool with_probs = id % 2 == 0;
  for (int i = 0; i < n; ++i) {
    LossTrajectory t;
    t.uid = "u" + std::to_string(i) + (i % 7 == 0 ? "-é" : "");
    t.losses = Eigen::VectorXd(T);
    for (int k = 0; k < T; ++k) t.losses(k) = k % 5 == 4 ? 0.0 : ex(rng) * std::pow(10.0, static_cast<int>(rng() % 9) - 4);
    if (with_probs) {
      t.gold_probs = Eigen::VectorXd(T);
      t.pred_dists = Eigen::MatrixXd(T, 3);
      for (int k = 0; k < T; ++k) {
        Eigen::Vector3d q(u(rng), u(rng), u(rng));
        q /= q.sum();
        t.pred_dists->row(k) = q.transpose();
        (*t.gold_probs)(k) = q(0);
      }
    }
    log.trajectories.push_back(t);
  }
  if (id % 4 == 0) {
    GradientNormRecord g{steps.front(), {}};
    for (const auto& t : log.trajectories) g.norms[t.uid] = ex(rng);
    log.gradient_norms.push_back(g);
    log.group_cosines = {{steps.front(), 2 * u(rng) - 1}, {steps.back(), std::nullopt}};
  }
  return log;
}

Outcome criterion10() {
  const fs::path dir = fs::temp_directory_path() / "lossdyn_acceptance";
  fs::remove_all(dir);
  bool identical = true;
  std::size_t files = 0;
  for (const char* text : {R"({"protocol": "train", "seeds": [42, 123]})",
                           R"({"protocol": "noise", "seed": 42, "fractions": [0.0, 0.3]})"}) {
    const Manifest m = parse_manifest(text);
    run_manifest(m, dir / "a");
    run_manifest(m, dir / "b");
    const auto a = tree(dir / "a");
    const auto b = tree(dir / "b");
    identical = identical && a == b && !a.empty();
    files = a.size();
    fs::remove_all(dir);
  }
  std::mt19937_64 rng(10);
  int round_trips = 0;
  for (int i = 0; i < 100; ++i) {
    const RunLog log = random_log(rng, i);
    std::ostringstream out;
    write_run_log(out, log);
    std::istringstream in(out.str());
    const RunLog back = read_run_log(in);
    std::ostringstream again;
    write_run_log(again, back);
    if (back == log && again.str() == out.str()) ++round_trips;
  }
  return {identical && round_trips == 100, std::string("manifest reruns byte-identical: ") + (identical ? "yes" : "no") +
                                               " (" + std::to_string(files) + " files); ingest(emit) identity " +
                                               std::to_string(round_trips) + "/100"};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %zu: %s %s [%.1fs]\n", i + 1, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
