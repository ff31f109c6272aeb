#pragma once

#include <random>
#include <vector>

#include "costlab/cost_matrix.hpp"

namespace costlab::testing {

/// Uniform draw from the simplex (normalized exponentials).
inline SimplexDist random_simplex(std::mt19937_64& rng, std::size_t n) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> w(n);
    for (double& v : w) v = e(rng);
    return SimplexDist::normalized(std::move(w));
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = g(rng);
    return v;
}

/// Every cost matrix the experiments use.
inline std::vector<CostMatrix> stock_cost_matrices() {
    return {costs::binary_alpha(1.0 / 6.0), costs::binary_alpha(0.25), costs::zero_one(2), costs::zero_one(3),
            costs::german_credit(), costs::german_credit_deferral(), costs::three_class_ordinal()};
}

}  // namespace costlab::testing
