#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

namespace lossdyn {

/// Independent named random streams derived from one run seed.
enum class Stream : std::uint32_t {
  Generation = 1,
  Split,
  PretrainInit,
  PretrainShuffle,
  AdapterInit,
  FinetuneShuffle,
  Dropout,
  Noise,
  Permutation,
};

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream);

Eigen::MatrixXd normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev);
Eigen::VectorXd dirichlet(std::mt19937_64& rng, double concentration, int dim);
std::vector<std::int64_t> multinomial(std::mt19937_64& rng, int trials, const Eigen::VectorXd& p);

}  // namespace lossdyn
