#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "gsbog/ctmc.hpp"
#include "gsbog/flow.hpp"
#include "gsbog/graph.hpp"

namespace gsbog {

/// Row-stochastic per-step kernel over the edges of a fixed graph, plus
/// implicit self-loop mass. Stores one probability row per step (or a single
/// shared row for time-constant kernels).
class TimeVaryingKernel : public KernelPolicy {
public:
    TimeVaryingKernel(std::shared_ptr<const DirectedGraph> graph,
                      std::vector<std::vector<double>> edge_probs, bool time_constant);

    Direction direction() const override { return Direction::Forward; }
    const DirectedGraph& rollout_graph() const override { return *graph_; }
    void step(int k, NodeId x, StepDistribution& out) const override;
    NodeId next_node(EdgeId e) const override { return graph_->edge(e).dst; }

    double edge_prob(int k, EdgeId e) const {
        return probs_[time_constant_ ? 0 : static_cast<std::size_t>(k)]
                     [static_cast<std::size_t>(e)];
    }

    /// Exact marginal propagation of the embedded kernels from rho_0.
    std::vector<std::vector<double>> propagate(const Marginal& rho0, int steps) const;

    void write_csv(std::ostream& out, int steps) const;  // t,src,dst,prob rows

private:
    std::shared_ptr<const DirectedGraph> graph_;
    std::vector<std::vector<double>> probs_;  // rows x E
    bool time_constant_;
};

/// Reference dynamics rolled as-is.
std::shared_ptr<KernelPolicy> uncontrolled_policy(std::shared_ptr<const RateGenerator> reference,
                                                  TimeGrid grid,
                                                  std::shared_ptr<EngineTelemetry> telemetry = {});

struct AttractionFlowParams {
    double move_fraction = 1.0;  // jump mass per step when a downhill neighbor exists
};

/// Target-attracting potential routing: per step solve the grounded graph
/// Poisson equation L phi = rho_t - rho_1 on the underlying undirected
/// Laplacian, route mass along downhill out-edges proportionally to the
/// potential drop, and advance rho by the embedded kernel.
std::shared_ptr<TimeVaryingKernel> attraction_flow_policy(
    std::shared_ptr<const DirectedGraph> graph, const Marginal& rho0, const Marginal& rho1,
    int steps, const AttractionFlowParams& params = {});

struct W1FlowParams {
    double smoothing = 0.0;  // mass spread uniformly over out-edges of each visited node
    std::int64_t mass_scale = 1000000;
    std::int64_t cost_scale = 1000000;
};

/// Markovian embedding of the time-expanded min-cost flow:
/// P_t(y | x) proportional to the arc flow (t,x)->(t+1,y), holdover included.
std::shared_ptr<TimeVaryingKernel> w1_flow_policy(std::shared_ptr<const DirectedGraph> graph,
                                                  const Marginal& mu, const Marginal& nu, int K,
                                                  double mass, const W1FlowParams& params = {});

/// Doob h-transform of a one-step kernel with h = max(q, eps):
/// T_h(x -> y) = T(x -> y) h(y) / sum_z T(x -> z) h(z).
std::shared_ptr<TimeVaryingKernel> doob_policy(std::shared_ptr<const DirectedGraph> graph,
                                               const std::vector<std::vector<double>>& kernel,
                                               const std::vector<double>& committor_values,
                                               double eps = 1e-10);

}  // namespace gsbog
