#include "gsbog/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace gsbog {

TimeVaryingKernel::TimeVaryingKernel(std::shared_ptr<const DirectedGraph> graph,
                                     std::vector<std::vector<double>> edge_probs,
                                     bool time_constant)
    : graph_(std::move(graph)), probs_(std::move(edge_probs)), time_constant_(time_constant) {
    if (probs_.empty()) throw std::invalid_argument("TimeVaryingKernel: empty probability table");
    for (const auto& row : probs_) {
        if (row.size() != static_cast<std::size_t>(graph_->edge_count()))
            throw std::invalid_argument("TimeVaryingKernel: row length != edge count");
    }
    // Row-stochasticity per (step, node): jump mass must not exceed 1.
    for (std::size_t k = 0; k < probs_.size(); ++k)
        for (NodeId x = 0; x < graph_->node_count(); ++x) {
            double total = 0.0;
            for (EdgeId e : graph_->out_edges(x)) total += probs_[k][static_cast<std::size_t>(e)];
            if (total > 1.0 + 1e-9)
                throw std::invalid_argument("TimeVaryingKernel: jump mass " +
                                            std::to_string(total) + " > 1 at node " +
                                            std::to_string(x));
        }
}

void TimeVaryingKernel::step(int k, NodeId x, StepDistribution& out) const {
    const auto& row = probs_[time_constant_ ? 0 : static_cast<std::size_t>(k)];
    const std::vector<EdgeId>& candidates = graph_->out_edges(x);
    out.edges = &candidates;
    out.jump_probs.resize(candidates.size());
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        out.jump_probs[i] = row[static_cast<std::size_t>(candidates[i])];
        total += out.jump_probs[i];
    }
    out.stay_prob = std::max(0.0, 1.0 - total);
}

std::vector<std::vector<double>> TimeVaryingKernel::propagate(const Marginal& rho0,
                                                              int steps) const {
    std::vector<std::vector<double>> table(static_cast<std::size_t>(steps + 1));
    table[0] = rho0.p;
    for (int k = 0; k < steps; ++k) {
        const auto& row = probs_[time_constant_ ? 0 : static_cast<std::size_t>(k)];
        const auto& p = table[static_cast<std::size_t>(k)];
        std::vector<double> next = p;
        for (EdgeId e = 0; e < graph_->edge_count(); ++e) {
            const double q = row[static_cast<std::size_t>(e)];
            if (q == 0.0) continue;
            const Edge& ed = graph_->edge(e);
            const double moved = q * p[static_cast<std::size_t>(ed.src)];
            next[static_cast<std::size_t>(ed.src)] -= moved;
            next[static_cast<std::size_t>(ed.dst)] += moved;
        }
        table[static_cast<std::size_t>(k + 1)] = std::move(next);
    }
    return table;
}

void TimeVaryingKernel::write_csv(std::ostream& out, int steps) const {
    out << "t,src,dst,prob\n";
    for (int k = 0; k < steps; ++k) {
        const auto& row = probs_[time_constant_ ? 0 : static_cast<std::size_t>(k)];
        for (EdgeId e = 0; e < graph_->edge_count(); ++e) {
            if (row[static_cast<std::size_t>(e)] == 0.0) continue;
            const Edge& ed = graph_->edge(e);
            out << k << "," << ed.src << "," << ed.dst << "," << row[static_cast<std::size_t>(e)]
                << "\n";
        }
    }
}

std::shared_ptr<KernelPolicy> uncontrolled_policy(std::shared_ptr<const RateGenerator> reference,
                                                  TimeGrid grid,
                                                  std::shared_ptr<EngineTelemetry> telemetry) {
    auto rates = std::make_shared<ReferenceRatePolicy>(std::move(reference));
    return std::make_shared<EulerKernel>(rates, grid, std::move(telemetry));
}

std::shared_ptr<TimeVaryingKernel> attraction_flow_policy(
    std::shared_ptr<const DirectedGraph> graph, const Marginal& rho0, const Marginal& rho1,
    int steps, const AttractionFlowParams& params) {
    const int n = graph->node_count();
    if (params.move_fraction <= 0.0 || params.move_fraction > 1.0)
        throw std::invalid_argument("attraction_flow_policy: move_fraction must be in (0, 1]");

    // Combinatorial Laplacian of the underlying undirected graph, grounded at
    // the max-degree node (kernels depend only on potential differences).
    std::vector<std::vector<NodeId>> neighbors(static_cast<std::size_t>(n));
    for (EdgeId e = 0; e < graph->edge_count(); ++e) {
        const Edge& ed = graph->edge(e);
        neighbors[static_cast<std::size_t>(ed.src)].push_back(ed.dst);
        neighbors[static_cast<std::size_t>(ed.dst)].push_back(ed.src);
    }
    for (auto& list : neighbors) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    NodeId ground = 0;
    for (NodeId x = 1; x < n; ++x)
        if (neighbors[static_cast<std::size_t>(x)].size() >
            neighbors[static_cast<std::size_t>(ground)].size())
            ground = x;

    std::vector<int> compact(static_cast<std::size_t>(n), -1);
    int m = 0;
    for (NodeId x = 0; x < n; ++x)
        if (x != ground) compact[static_cast<std::size_t>(x)] = m++;

    Eigen::SparseMatrix<double> laplacian(m, m);
    std::vector<Eigen::Triplet<double>> triplets;
    for (NodeId x = 0; x < n; ++x) {
        if (x == ground) continue;
        const int i = compact[static_cast<std::size_t>(x)];
        triplets.emplace_back(i, i, static_cast<double>(neighbors[static_cast<std::size_t>(x)].size()));
        for (NodeId y : neighbors[static_cast<std::size_t>(x)])
            if (y != ground) triplets.emplace_back(i, compact[static_cast<std::size_t>(y)], -1.0);
    }
    laplacian.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(laplacian);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("attraction_flow_policy: Laplacian factorization failed "
                                 "(disconnected graph?)");

    std::vector<std::vector<double>> probs(
        static_cast<std::size_t>(steps),
        std::vector<double>(static_cast<std::size_t>(graph->edge_count()), 0.0));
    std::vector<double> rho = rho0.p;
    Eigen::VectorXd rhs(m), phi_compact(m);
    std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
    for (int t = 0; t < steps; ++t) {
        for (NodeId x = 0; x < n; ++x)
            if (x != ground)
                rhs(compact[static_cast<std::size_t>(x)]) =
                    rho[static_cast<std::size_t>(x)] - rho1[x];
        phi_compact = solver.solve(rhs);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("attraction_flow_policy: Poisson solve failed");
        for (NodeId x = 0; x < n; ++x)
            phi[static_cast<std::size_t>(x)] =
                x == ground ? 0.0 : phi_compact(compact[static_cast<std::size_t>(x)]);

        auto& row = probs[static_cast<std::size_t>(t)];
        for (NodeId x = 0; x < n; ++x) {
            double downhill = 0.0;
            for (EdgeId e : graph->out_edges(x))
                downhill += std::max(0.0, phi[static_cast<std::size_t>(x)] -
                                              phi[static_cast<std::size_t>(graph->edge(e).dst)]);
            if (downhill <= 0.0) continue;  // fallback: full self-loop mass
            for (EdgeId e : graph->out_edges(x)) {
                const double drop = std::max(0.0, phi[static_cast<std::size_t>(x)] -
                                                      phi[static_cast<std::size_t>(graph->edge(e).dst)]);
                row[static_cast<std::size_t>(e)] = params.move_fraction * drop / downhill;
            }
        }
        // Advance rho with the kernel just built.
        std::vector<double> next = rho;
        for (EdgeId e = 0; e < graph->edge_count(); ++e) {
            const double q = row[static_cast<std::size_t>(e)];
            if (q == 0.0) continue;
            const Edge& ed = graph->edge(e);
            const double moved = q * rho[static_cast<std::size_t>(ed.src)];
            next[static_cast<std::size_t>(ed.src)] -= moved;
            next[static_cast<std::size_t>(ed.dst)] += moved;
        }
        rho = std::move(next);
    }
    return std::make_shared<TimeVaryingKernel>(graph, std::move(probs), false);
}

std::shared_ptr<TimeVaryingKernel> w1_flow_policy(std::shared_ptr<const DirectedGraph> graph,
                                                  const Marginal& mu, const Marginal& nu, int K,
                                                  double mass, const W1FlowParams& params) {
    const TimeExpandedFlow expanded =
        build_time_expanded(*graph, mu, nu, K, mass, params.mass_scale, params.cost_scale);
    const FlowSolution sol = min_cost_flow(expanded.network);

    const int n = graph->node_count();
    std::vector<std::vector<double>> probs(
        static_cast<std::size_t>(K),
        std::vector<double>(static_cast<std::size_t>(graph->edge_count()), 0.0));
    for (int t = 0; t < K; ++t) {
        std::vector<double> outflow(static_cast<std::size_t>(n), 0.0);
        for (EdgeId e = 0; e < graph->edge_count(); ++e)
            outflow[static_cast<std::size_t>(graph->edge(e).src)] +=
                static_cast<double>(sol.flow[expanded.transport_arc(t, e)]);
        for (NodeId x = 0; x < n; ++x)
            outflow[static_cast<std::size_t>(x)] +=
                static_cast<double>(sol.flow[expanded.holdover_arc(t, x)]);
        auto& row = probs[static_cast<std::size_t>(t)];
        for (EdgeId e = 0; e < graph->edge_count(); ++e) {
            const NodeId x = graph->edge(e).src;
            const double total = outflow[static_cast<std::size_t>(x)];
            if (total <= 0.0) continue;  // node carries no flow at this layer: stay put
            row[static_cast<std::size_t>(e)] =
                static_cast<double>(sol.flow[expanded.transport_arc(t, e)]) / total;
        }
        if (params.smoothing > 0.0) {
            for (NodeId x = 0; x < n; ++x) {
                const auto& out = graph->out_edges(x);
                if (out.empty()) continue;
                const double spread = params.smoothing / static_cast<double>(out.size());
                for (EdgeId e : out)
                    row[static_cast<std::size_t>(e)] =
                        (1.0 - params.smoothing) * row[static_cast<std::size_t>(e)] + spread;
            }
        }
    }
    return std::make_shared<TimeVaryingKernel>(graph, std::move(probs), false);
}

std::shared_ptr<TimeVaryingKernel> doob_policy(std::shared_ptr<const DirectedGraph> graph,
                                               const std::vector<std::vector<double>>& kernel,
                                               const std::vector<double>& committor_values,
                                               double eps) {
    const int n = graph->node_count();
    std::vector<double> h(static_cast<std::size_t>(n));
    for (int x = 0; x < n; ++x)
        h[static_cast<std::size_t>(x)] = std::max(committor_values[static_cast<std::size_t>(x)], eps);

    std::vector<std::vector<double>> probs(
        1, std::vector<double>(static_cast<std::size_t>(graph->edge_count()), 0.0));
    auto& row = probs[0];
    for (NodeId x = 0; x < n; ++x) {
        double norm = kernel[static_cast<std::size_t>(x)][static_cast<std::size_t>(x)] *
                      h[static_cast<std::size_t>(x)];
        for (EdgeId e : graph->out_edges(x)) {
            const NodeId y = graph->edge(e).dst;
            norm += kernel[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] *
                    h[static_cast<std::size_t>(y)];
        }
        if (norm <= 0.0)
            throw std::runtime_error("doob_policy: zero row normalizer at node " +
                                     std::to_string(x));
        for (EdgeId e : graph->out_edges(x)) {
            const NodeId y = graph->edge(e).dst;
            row[static_cast<std::size_t>(e)] =
                kernel[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] *
                h[static_cast<std::size_t>(y)] / norm;
        }
    }
    return std::make_shared<TimeVaryingKernel>(graph, std::move(probs), true);
}

}  // namespace gsbog
