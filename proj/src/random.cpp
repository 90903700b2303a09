#include "lossdyn/random.hpp"

#include <algorithm>

namespace lossdyn {

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Eigen::MatrixXd normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill keeps draws independent of Eigen's storage order.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

Eigen::VectorXd dirichlet(std::mt19937_64& rng, double concentration, int dim) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  Eigen::VectorXd p(dim);
  do {
    for (int c = 0; c < dim; ++c) p(c) = gamma(rng);
  } while (p.sum() <= 0.0);
  return p / p.sum();
}

std::vector<std::int64_t> multinomial(std::mt19937_64& rng, int trials, const Eigen::VectorXd& p) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(p.size()), 0);
  int remaining = trials;
  double mass = 1.0;
  for (Eigen::Index c = 0; c + 1 < p.size() && remaining > 0; ++c) {
    const double q = mass > 0.0 ? std::clamp(p(c) / mass, 0.0, 1.0) : 0.0;
    std::binomial_distribution<int> binomial(remaining, q);
    const int k = binomial(rng);
    counts[static_cast<std::size_t>(c)] = k;
    remaining -= k;
    mass -= p(c);
  }
  counts.back() += remaining;
  return counts;
}

}  // namespace lossdyn
