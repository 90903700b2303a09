#include "lossdyn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "lossdyn/error.hpp"
#include "lossdyn/special_functions.hpp"

namespace lossdyn {

namespace {

constexpr double kUnitSnap = 1e-13;

void require_same_length(const VectorRef& x, const VectorRef& y) {
  if (x.size() != y.size()) {
    throw Error(Errc::shape, "length mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
}

void require_varying(const VectorRef& x, const char* what) {
  if (x.size() == 0 || (x.array() == x(0)).all()) {
    throw Error(Errc::undefined_correlation, std::string(what) + " is constant");
  }
}

double floor_p(double p) { return std::max(p, std::numeric_limits<double>::min()); }

double snap_unit(double r) {
  r = std::clamp(r, -1.0, 1.0);
  if (1.0 - std::abs(r) < kUnitSnap) return r > 0 ? 1.0 : -1.0;
  return r;
}

double correlation_t_p_value(double r, double df) {
  if (std::abs(r) == 1.0) return 0.0;
  const double t = r * std::sqrt(df / ((1.0 - r) * (1.0 + r)));
  return floor_p(special::student_t_two_sided(t, df));
}

std::vector<Eigen::Index> sorted_order(const VectorRef& x) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a) < x(b); });
  return idx;
}

/// Sum over tie groups of f(t) for group size t.
template <typename F>
double tie_sum(const VectorRef& x, F f) {
  std::vector<double> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  double s = 0.0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i + 1;
    while (j < v.size() && v[j] == v[i]) ++j;
    s += f(static_cast<double>(j - i));
    i = j;
  }
  return s;
}

// Merge sort that counts strict inversions (i < j, a[i] > a[j]).
std::int64_t count_inversions(std::vector<double>& a, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t inv = count_inversions(a, buf, lo, mid) + count_inversions(a, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (a[j] < a[i]) {
      inv += static_cast<std::int64_t>(mid - i);
      buf[k++] = a[j++];
    } else {
      buf[k++] = a[i++];
    }
  }
  while (i < mid) buf[k++] = a[i++];
  while (j < hi) buf[k++] = a[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            a.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

Eigen::VectorXd residualize(const Eigen::MatrixXd& design, const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                            const Eigen::VectorXd& v) {
  return v - design * qr.solve(v);
}

double sample_variance(const VectorRef& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

Eigen::VectorXd midranks(const VectorRef& x) {
  const auto order = sorted_order(x);
  Eigen::VectorXd ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x(order[j]) == x(order[i])) ++j;
    // Positions i..j-1 (0-based) share the rank ((i+1) + j) / 2.
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks(order[k]) = r;
    i = j;
  }
  return ranks;
}

double pearson(const VectorRef& x, const VectorRef& y) {
  require_same_length(x, y);
  if (x.size() < 2) throw Error(Errc::domain, "correlation needs at least 2 points");
  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double sxx = xc.squaredNorm();
  const double syy = yc.squaredNorm();
  if (sxx == 0.0 || syy == 0.0) throw Error(Errc::undefined_correlation, "zero variance input");
  return std::clamp(xc.dot(yc) / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

double spearman_coefficient(const VectorRef& x, const VectorRef& y) {
  require_same_length(x, y);
  require_varying(x, "x");
  require_varying(y, "y");
  return snap_unit(pearson(midranks(x), midranks(y)));
}

CorrelationResult spearman(const VectorRef& x, const VectorRef& y, const SpearmanOptions& options) {
  require_same_length(x, y);
  if (x.size() < 3) throw Error(Errc::domain, "Spearman correlation needs n >= 3");
  require_varying(x, "x");
  require_varying(y, "y");
  const Eigen::VectorXd rx = midranks(x);
  Eigen::VectorXd ry = midranks(y);
  CorrelationResult out;
  out.n = static_cast<std::size_t>(x.size());
  out.coefficient = snap_unit(pearson(rx, ry));
  if (options.method == PValueMethod::TApproximation) {
    out.p_value = correlation_t_p_value(out.coefficient, static_cast<double>(out.n) - 2.0);
    return out;
  }
  std::mt19937_64 rng(options.seed);
  std::size_t extreme = 0;
  const double observed = std::abs(out.coefficient) - 1e-12;
  for (std::size_t i = 0; i < options.permutations; ++i) {
    std::shuffle(ry.data(), ry.data() + ry.size(), rng);
    if (std::abs(pearson(rx, ry)) >= observed) ++extreme;
  }
  out.p_value = static_cast<double>(extreme + 1) / static_cast<double>(options.permutations + 1);
  return out;
}

CorrelationResult kendall_tau_b(const VectorRef& x, const VectorRef& y) {
  require_same_length(x, y);
  if (x.size() < 3) throw Error(Errc::domain, "Kendall tau needs n >= 3");
  require_varying(x, "x");
  require_varying(y, "y");
  const auto n = static_cast<std::size_t>(x.size());

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return x(a) < x(b) || (x(a) == x(b) && y(a) < y(b));
  });

  // Pairs tied in x, and pairs tied in both x and y.
  std::int64_t x_ties = 0;
  std::int64_t joint_ties = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && x(order[j]) == x(order[i])) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    x_ties += t * (t - 1) / 2;
    std::size_t k = i;
    while (k < j) {
      std::size_t l = k + 1;
      while (l < j && y(order[l]) == y(order[k])) ++l;
      const auto u = static_cast<std::int64_t>(l - k);
      joint_ties += u * (u - 1) / 2;
      k = l;
    }
    i = j;
  }

  std::vector<double> ys(n);
  for (std::size_t k = 0; k < n; ++k) ys[k] = y(order[k]);
  std::vector<double> buf(n);
  const std::int64_t discordant = count_inversions(ys, buf, 0, n);

  // ys is now sorted; count pairs tied in y.
  std::int64_t y_ties = 0;
  i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && ys[j] == ys[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    y_ties += t * (t - 1) / 2;
    i = j;
  }

  const auto total = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t s = total - x_ties - y_ties + joint_ties - 2 * discordant;
  const double denom = std::sqrt(static_cast<double>(total - x_ties) * static_cast<double>(total - y_ties));

  CorrelationResult out;
  out.n = n;
  out.coefficient = snap_unit(static_cast<double>(s) / denom);

  const double nd = static_cast<double>(n);
  const double v0 = nd * (nd - 1.0) * (2.0 * nd + 5.0);
  const auto tie_terms = [](const VectorRef& v) {
    return std::array<double, 3>{
        tie_sum(v, [](double t) { return t * (t - 1.0) * (2.0 * t + 5.0); }),
        tie_sum(v, [](double t) { return t * (t - 1.0); }),
        tie_sum(v, [](double t) { return t * (t - 1.0) * (t - 2.0); }),
    };
  };
  const auto tx = tie_terms(x);
  const auto ty = tie_terms(y);
  const double var_s = (v0 - tx[0] - ty[0]) / 18.0 + tx[1] * ty[1] / (2.0 * nd * (nd - 1.0)) +
                       tx[2] * ty[2] / (9.0 * nd * (nd - 1.0) * (nd - 2.0));
  out.p_value = var_s > 0.0 ? floor_p(special::normal_two_sided(static_cast<double>(s) / std::sqrt(var_s))) : 1.0;
  return out;
}

CorrelationResult partial_spearman(const VectorRef& x, const VectorRef& y, const Eigen::MatrixXd& controls) {
  require_same_length(x, y);
  const Eigen::Index n = x.size();
  const Eigen::Index k = controls.cols();
  if (controls.rows() != n) throw Error(Errc::shape, "control matrix row count differs from n");
  if (n <= k + 2) throw Error(Errc::domain, "partial correlation needs n > #controls + 2");
  require_varying(x, "x");
  require_varying(y, "y");

  Eigen::MatrixXd design(n, k + 1);
  design.col(0).setOnes();
  for (Eigen::Index j = 0; j < k; ++j) design.col(j + 1) = midranks(controls.col(j));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < k + 1) throw Error(Errc::collinearity, "control matrix is rank deficient");

  const Eigen::VectorXd rx = midranks(x);
  const Eigen::VectorXd ry = midranks(y);
  const Eigen::VectorXd ex = residualize(design, qr, rx);
  const Eigen::VectorXd ey = residualize(design, qr, ry);
  const double scale_x = (rx.array() - rx.mean()).square().sum();
  const double scale_y = (ry.array() - ry.mean()).square().sum();
  if (ex.squaredNorm() <= 1e-20 * scale_x || ey.squaredNorm() <= 1e-20 * scale_y) {
    throw Error(Errc::collinearity, "controls explain x or y exactly (degenerate residuals)");
  }
  CorrelationResult out;
  out.n = static_cast<std::size_t>(n);
  out.coefficient = snap_unit(pearson(ex, ey));
  out.p_value = correlation_t_p_value(out.coefficient, static_cast<double>(n - 2 - k));
  return out;
}

RegressionResult ols_regression(const VectorRef& y_in, const Eigen::MatrixXd& X_in, bool standardize,
                                std::vector<std::string> names) {
  const Eigen::Index n = y_in.size();
  const Eigen::Index p = X_in.cols();
  if (X_in.rows() != n) throw Error(Errc::shape, "predictor matrix row count differs from n");
  if (n <= p + 1) throw Error(Errc::domain, "regression needs n > p + 1");

  Eigen::VectorXd y = y_in;
  Eigen::MatrixXd X = X_in;
  if (standardize) {
    const auto zscore = [](auto&& v) {
      const double sd = std::sqrt(sample_variance(v));
      if (sd == 0.0) throw Error(Errc::collinearity, "constant column cannot be standardized");
      v = (v.array() - v.mean()) / sd;
    };
    zscore(y);
    for (Eigen::Index j = 0; j < p; ++j) {
      Eigen::VectorXd c = X.col(j);
      zscore(c);
      X.col(j) = c;
    }
  }

  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < p + 1) throw Error(Errc::collinearity, "design matrix is rank deficient");

  RegressionResult out;
  out.n = static_cast<std::size_t>(n);
  out.standardized = standardize;
  out.beta = qr.solve(y);
  out.residuals = y - design * out.beta;
  const double rss = out.residuals.squaredNorm();
  const double tss = (y.array() - y.mean()).square().sum();
  if (tss == 0.0) throw Error(Errc::domain, "response is constant");
  out.r_squared = std::clamp(1.0 - rss / tss, 0.0, 1.0);

  const double df = static_cast<double>(n - p - 1);
  const double sigma2 = rss / df;
  const Eigen::MatrixXd gram_inv =
      (design.transpose() * design).ldlt().solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
  out.standard_errors = (sigma2 * gram_inv.diagonal().array()).sqrt();
  out.t_statistics.resize(p + 1);
  out.p_values.resize(p + 1);
  for (Eigen::Index j = 0; j <= p; ++j) {
    const double se = out.standard_errors(j);
    const double b = out.beta(j);
    if (se == 0.0) {
      out.t_statistics(j) = b == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), b);
      out.p_values(j) = b == 0.0 ? 1.0 : 0.0;
    } else {
      out.t_statistics(j) = b / se;
      out.p_values(j) = floor_p(special::student_t_two_sided(out.t_statistics(j), df));
    }
  }
  if (names.empty()) {
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(names.size()) != p) throw Error(Errc::shape, "predictor name count differs from p");
  out.names.push_back("(intercept)");
  out.names.insert(out.names.end(), names.begin(), names.end());
  return out;
}

WilcoxonResult wilcoxon_signed_rank(const VectorRef& before, const VectorRef& after, WilcoxonMethod method) {
  require_same_length(before, after);
  std::vector<double> diffs;
  for (Eigen::Index i = 0; i < before.size(); ++i) {
    const double d = after(i) - before(i);
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult out;
  out.n_nonzero = diffs.size();
  if (diffs.empty()) {
    out.degenerate = true;
    out.p_value = 1.0;
    return out;
  }
  const auto n = static_cast<Eigen::Index>(diffs.size());
  Eigen::VectorXd abs_d(n);
  for (Eigen::Index i = 0; i < n; ++i) abs_d(i) = std::abs(diffs[static_cast<std::size_t>(i)]);
  const Eigen::VectorXd ranks = midranks(abs_d);
  for (Eigen::Index i = 0; i < n; ++i) {
    (diffs[static_cast<std::size_t>(i)] > 0 ? out.w_plus : out.w_minus) += ranks(i);
  }
  out.statistic = std::min(out.w_plus, out.w_minus);

  const bool exact = method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && n <= 25);
  out.exact = exact;
  if (exact) {
    // Doubled mid-ranks are integers, so the null distribution of 2*W+ over
    // all 2^n sign assignments is a subset-sum count.
    std::vector<std::int64_t> doubled(static_cast<std::size_t>(n));
    std::int64_t total = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      doubled[static_cast<std::size_t>(i)] = std::llround(2.0 * ranks(i));
      total += doubled[static_cast<std::size_t>(i)];
    }
    std::vector<double> ways(static_cast<std::size_t>(total + 1), 0.0);
    ways[0] = 1.0;
    std::int64_t reach = 0;
    for (auto r : doubled) {
      for (std::int64_t s = reach; s >= 0; --s) {
        if (ways[static_cast<std::size_t>(s)] != 0.0) ways[static_cast<std::size_t>(s + r)] += ways[static_cast<std::size_t>(s)];
      }
      reach += r;
    }
    const auto limit = std::llround(2.0 * out.statistic);
    double tail = 0.0;
    for (std::int64_t s = 0; s <= limit; ++s) tail += ways[static_cast<std::size_t>(s)];
    out.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
    return out;
  }
  const double nd = static_cast<double>(n);
  const double mean = nd * (nd + 1.0) / 4.0;
  const double ties = tie_sum(abs_d, [](double t) { return t * t * t - t; });
  const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - ties / 48.0;
  if (var <= 0.0) {
    out.p_value = 1.0;
    return out;
  }
  const double z = std::max(0.0, std::abs(out.w_plus - mean) - 0.5) / std::sqrt(var);
  out.p_value = std::min(1.0, floor_p(special::normal_two_sided(z)));
  return out;
}

KruskalWallisResult kruskal_wallis(const std::vector<Eigen::VectorXd>& groups) {
  if (groups.size() < 2) throw Error(Errc::domain, "Kruskal-Wallis needs at least 2 groups");
  Eigen::Index total = 0;
  for (const auto& g : groups) {
    if (g.size() == 0) throw Error(Errc::domain, "Kruskal-Wallis group is empty");
    total += g.size();
  }
  if (total < 3) throw Error(Errc::domain, "Kruskal-Wallis needs n >= 3");
  Eigen::VectorXd pooled(total);
  Eigen::Index offset = 0;
  for (const auto& g : groups) {
    pooled.segment(offset, g.size()) = g;
    offset += g.size();
  }
  const Eigen::VectorXd ranks = midranks(pooled);
  const double nd = static_cast<double>(total);
  double sum = 0.0;
  offset = 0;
  for (const auto& g : groups) {
    const double r = ranks.segment(offset, g.size()).sum();
    sum += r * r / static_cast<double>(g.size());
    offset += g.size();
  }
  KruskalWallisResult out;
  out.df = groups.size() - 1;
  const double correction = 1.0 - tie_sum(pooled, [](double t) { return t * t * t - t; }) / (nd * nd * nd - nd);
  if (correction <= 0.0) return out;  // every value tied: H = 0, p = 1
  out.h = std::max(0.0, (12.0 / (nd * (nd + 1.0)) * sum - 3.0 * (nd + 1.0)) / correction);
  out.p_value = floor_p(special::chi_square_upper(out.h, static_cast<double>(out.df)));
  return out;
}

double cohens_d(const VectorRef& a, const VectorRef& b) {
  if (a.size() < 2 || b.size() < 2) throw Error(Errc::domain, "Cohen's d needs at least 2 values per group");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double pooled = ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / (na + nb - 2.0);
  if (!(pooled > 0.0)) throw Error(Errc::undefined_effect, "pooled variance is zero");
  return (a.mean() - b.mean()) / std::sqrt(pooled);
}

double bonferroni(double alpha, std::size_t m) {
  if (m == 0) throw Error(Errc::domain, "Bonferroni correction needs m >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::domain, "alpha must lie in (0, 1)");
  return alpha / static_cast<double>(m);
}

std::vector<bool> benjamini_hochberg(const std::vector<double>& p_values, double q) {
  if (!(q > 0.0 && q < 1.0)) throw Error(Errc::domain, "q must lie in (0, 1)");
  const std::size_t m = p_values.size();
  std::vector<bool> reject(m, false);
  if (m == 0) return reject;
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::domain, "p-values must lie in [0, 1]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::size_t largest = 0;
  for (std::size_t k = 1; k <= m; ++k) {
    if (p_values[order[k - 1]] <= static_cast<double>(k) * q / static_cast<double>(m)) largest = k;
  }
  for (std::size_t k = 0; k < largest; ++k) reject[order[k]] = true;
  return reject;
}

SeedAggregate seed_aggregate(const VectorRef& values) {
  if (values.size() == 0) throw Error(Errc::empty_input, "seed aggregate of no values");
  SeedAggregate out;
  out.n = static_cast<std::size_t>(values.size());
  out.mean = values.mean();
  if (out.n == 1) {
    out.single = true;
    return out;
  }
  out.std = std::sqrt(sample_variance(values));
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(Errc::empty_input, "median of no values");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

}  // namespace lossdyn
