#pragma once

#include <vector>

#include "gsbog/ctmc.hpp"
#include "gsbog/flow.hpp"
#include "gsbog/graph.hpp"
#include "gsbog/objectives.hpp"

namespace gsbog {

/// Exact solution of the f = 0 Schrodinger system on the discrete Euler
/// chain. log_phi / log_phihat are (K+1) x N (minus infinity off support);
/// rates[k][e] is the exact bridge rate of step k, the h-transform of the
/// one-step kernel. marginals() returns p*_k = phi_k phihat_k.
struct BridgeSolution {
    std::vector<std::vector<double>> log_phi;
    std::vector<std::vector<double>> log_phihat;
    std::vector<std::vector<double>> rates;  // K x E
    int iterations = 0;
    double residual_mu = 0.0;
    double residual_nu = 0.0;

    std::vector<std::vector<double>> marginals() const;
};

BridgeSolution solve_bridge_exact(const RateGenerator& reference, const Marginal& mu,
                                  const Marginal& nu, TimeGrid grid, double tol = 1e-12,
                                  int max_iters = 5000);

/// Forward rate policy reading the bridge's per-step rate table.
class BridgeRatePolicy : public RatePolicy {
public:
    BridgeRatePolicy(std::shared_ptr<const DirectedGraph> graph,
                     std::vector<std::vector<double>> rates)
        : graph_(std::move(graph)), rates_(std::move(rates)) {}
    Direction direction() const override { return Direction::Forward; }
    const DirectedGraph& rollout_graph() const override { return *graph_; }
    double rate(int k, NodeId, EdgeId e) const override {
        return rates_[static_cast<std::size_t>(k)][static_cast<std::size_t>(e)];
    }
    NodeId next_node(EdgeId e) const override { return graph_->edge(e).dst; }

private:
    std::shared_ptr<const DirectedGraph> graph_;
    std::vector<std::vector<double>> rates_;
};

/// Exact KL between the discrete Euler chains of u and r by exhaustive path
/// enumeration (size-guarded: N <= 4, K <= 8).
double brute_force_path_kl(const RatePolicy& controlled, const RateGenerator& reference,
                           const Marginal& mu, TimeGrid grid);

/// Exact optimal transport plan between p0 and p1 under cost matrix C
/// (n x n row-major), solved as a bipartite min-cost flow on scaled integers.
struct TransportPlan {
    int n = 0;
    std::vector<double> pi;  // n x n row-major, mass units
    double cost = 0.0;       // <C, pi>

    double at(int i, int j) const {
        return pi[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                  static_cast<std::size_t>(j)];
    }
};

TransportPlan solve_transport_lp(const std::vector<double>& cost_matrix, const Marginal& p0,
                                 const Marginal& p1, std::int64_t mass_scale = 1000000,
                                 std::int64_t cost_scale = 1000000);

/// Max-abs residual of the discrete HJB equation for a dual table V,
/// a diagnostic for V = -Y of a learned or exact bridge.
double hjb_residual(const std::vector<std::vector<double>>& v, const RateGenerator& reference,
                    const FTable& f, TimeGrid grid);

/// Forward committor of a row-stochastic kernel T (dense, row-major):
/// probability of hitting F before U, with q = 0 on U and q = 1 on F.
/// Solves the interior Dirichlet system directly.
std::vector<double> committor(const std::vector<std::vector<double>>& kernel,
                              const std::vector<NodeId>& unfolded,
                              const std::vector<NodeId>& folded);

/// Dense one-step Euler kernel of a rate generator: T[x][y] = P(y | x).
std::vector<std::vector<double>> euler_kernel(const RateGenerator& reference, int k, double dt);

}  // namespace gsbog
