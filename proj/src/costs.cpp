#include "gsbog/costs.hpp"

#include <algorithm>
#include <cmath>

namespace gsbog {

double eval_cost(const RunningCostSpec& spec, int /*k*/, NodeId x,
                 const std::vector<double>& p_hat_k) {
    switch (spec.kind) {
        case CostKind::Zero:
            return 0.0;
        case CostKind::NodeTable:
            return spec.node_table[static_cast<std::size_t>(x)];
        case CostKind::Congestion: {
            if (std::find(spec.exclude.begin(), spec.exclude.end(), x) != spec.exclude.end())
                return 0.0;
            return spec.weight * p_hat_k[static_cast<std::size_t>(x)] * spec.b_scale;
        }
    }
    return 0.0;
}

std::vector<std::vector<double>> cost_table(const RunningCostSpec& spec,
                                            const std::vector<std::vector<double>>& p_hat) {
    std::vector<std::vector<double>> table(p_hat.size());
    for (std::size_t k = 0; k < p_hat.size(); ++k) {
        table[k].resize(p_hat[k].size());
        for (std::size_t x = 0; x < p_hat[k].size(); ++x)
            table[k][x] = eval_cost(spec, static_cast<int>(k), static_cast<NodeId>(x), p_hat[k]);
    }
    return table;
}

std::vector<double> free_energy_table(const Marginal& stationary, double eps) {
    std::vector<double> f(stationary.p.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = -std::log(std::max(stationary.p[i], eps));
    return f;
}

}  // namespace gsbog
