#pragma once

#include <vector>

#include "gsbog/graph.hpp"

namespace gsbog {

/// Running cost f_k(x, p_hat_k). Stateless; the marginal snapshot is passed in.
double eval_cost(const RunningCostSpec& spec, int k, NodeId x, const std::vector<double>& p_hat_k);

/// Full (K+1) x N table of f values for a frozen set of empirical marginals.
std::vector<std::vector<double>> cost_table(const RunningCostSpec& spec,
                                            const std::vector<std::vector<double>>& p_hat);

/// Node free energies from a stationary distribution: F_i = -log pi_i,
/// with an epsilon floor for zero-mass nodes.
std::vector<double> free_energy_table(const Marginal& stationary, double eps = 1e-12);

}  // namespace gsbog
