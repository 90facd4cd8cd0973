#pragma once

#include <string>
#include <vector>

#include "gsbog/ctmc.hpp"
#include "gsbog/graph.hpp"
#include "gsbog/oracle.hpp"

namespace gsbog {

/// Balanced assignment encoded as graph transport: supply nodes A_i, one
/// intermediate node E_ij per pair carrying the pairwise cost as a state
/// cost, and demand nodes B_j. Edges A_i -> E_ij -> B_j.
struct AssignmentInstance {
    int n = 0;
    std::vector<double> cost;  // n x n row-major, original units
    Marginal p0, p1;           // over the n supply / demand slots
    double cost_scale = 1.0;   // multiplier applied to the running-cost table
    ProblemInstance encoded;

    NodeId a_node(int i) const { return i; }
    NodeId e_node(int i, int j) const { return n + i * n + j; }
    NodeId b_node(int j) const { return n + n * n + j; }

    double cost_at(int i, int j) const {
        return cost[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                    static_cast<std::size_t>(j)];
    }
};

struct AssignmentEncodeParams {
    double edge_rate = 3.0;    // uniform reference rate on every encoded edge
    double cost_scale = 40.0;  // running-cost multiplier (f = cost_scale * C on E nodes)
};

AssignmentInstance encode_assignment(const std::vector<double>& cost_matrix, const Marginal& p0,
                                     const Marginal& p1, int K,
                                     const AssignmentEncodeParams& params = {});

/// Synthetic instance: Dirichlet(1) marginals and 2-D embedding costs
/// C_ij = ||u_i - v_j||_2 with points uniform in the unit square.
AssignmentInstance generate_assignment_instance(int n, std::uint64_t seed, int K,
                                                const AssignmentEncodeParams& params = {});

/// Decode a soft plan from the expected A_i -> E_ij flux of a batch, then
/// Sinkhorn-project it onto the (p0, p1) transportation polytope.
TransportPlan decode_plan(const RolloutBatch& batch, const AssignmentInstance& instance,
                          double tol = 1e-6, int max_iters = 1000);

struct AssignmentReport {
    int n = 0;
    double optimal_cost = 0.0;
    double assigned_cost = 0.0;
    double cost_gap = 0.0;          // relative
    double marginal_tv = 0.0;       // TV(rows, p0) + TV(cols, p1)
    double mean_row_entropy = 0.0;  // rows normalized to distributions
    double mass_on_optimal = 0.0;
    double accuracy = 0.0;          // hard-assignment overlap with supp(pi*)
    std::string to_json() const;
};

/// Compare a decoded plan against the exact LP plan. The hard assignment is
/// extracted by re-solving the LP on -log(plan) scores, which resolves
/// row-argmax collisions.
AssignmentReport assignment_metrics(const TransportPlan& plan, const TransportPlan& oracle,
                                    const std::vector<double>& cost_matrix, const Marginal& p0,
                                    const Marginal& p1);

}  // namespace gsbog
