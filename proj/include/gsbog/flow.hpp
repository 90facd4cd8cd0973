#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gsbog/graph.hpp"

namespace gsbog {

/// Integer min-cost-flow network. Parallel arcs are allowed; imbalances must
/// sum to zero. Costs may be negative (handled by a Bellman-Ford potential
/// initialization), capacities must be nonnegative.
struct FlowArc {
    int src = 0;
    int dst = 0;
    std::int64_t capacity = 0;
    std::int64_t cost = 0;
};

struct FlowNetwork {
    int node_count = 0;
    std::vector<FlowArc> arcs;
    std::vector<std::int64_t> imbalance;  // supply (+) / demand (-) per node

    void validate() const;
};

struct FlowSolution {
    std::vector<std::int64_t> flow;  // per arc
    std::int64_t total_cost = 0;
    std::vector<std::int64_t> potentials;  // reduced-cost certificate
    bool certificate_valid = false;
};

/// Exact successive-shortest-paths solver with node potentials. Throws on
/// infeasibility, naming the violated cut (the node set still holding excess).
FlowSolution min_cost_flow(const FlowNetwork& network);

/// Verify the reduced-cost optimality certificate of a solution.
bool validate_certificate(const FlowNetwork& network, const FlowSolution& solution);

/// Largest-remainder quantization of a nonnegative mass vector to integers
/// summing exactly to `total`.
std::vector<std::int64_t> masses_to_integers(const std::vector<double>& masses,
                                             std::int64_t total);

/// Layered time-expanded network: nodes (t, x), transport arcs per original
/// edge per step (inherited capacity/cost) and zero-cost holdover arcs of
/// capacity M. Sources M mu at layer 0, sinks M nu at layer K.
struct TimeExpandedFlow {
    FlowNetwork network;
    int node_count = 0;   // N of the base graph
    int steps = 0;        // K
    std::int64_t mass_scale = 0;   // flow units carried by the full mass
    std::int64_t cost_scale = 0;
    int transport_arcs_per_step = 0;

    int layered_id(int t, NodeId x) const { return t * node_count + x; }
    /// Arc index of edge e at step t (transport arcs precede holdovers per step).
    std::size_t transport_arc(int t, EdgeId e) const {
        return static_cast<std::size_t>(t) *
                   static_cast<std::size_t>(transport_arcs_per_step + node_count) +
               static_cast<std::size_t>(e);
    }
    std::size_t holdover_arc(int t, NodeId x) const {
        return static_cast<std::size_t>(t) *
                   static_cast<std::size_t>(transport_arcs_per_step + node_count) +
               static_cast<std::size_t>(transport_arcs_per_step) + static_cast<std::size_t>(x);
    }
};

TimeExpandedFlow build_time_expanded(const DirectedGraph& graph, const Marginal& mu,
                                     const Marginal& nu, int K, double mass,
                                     std::int64_t mass_scale = 1000000,
                                     std::int64_t cost_scale = 1000000);

/// CSV export of a solved time-expanded flow: t,src,dst,flow (mass units).
void write_flow_csv(const TimeExpandedFlow& expanded, const FlowSolution& solution, double mass,
                    std::ostream& out);

}  // namespace gsbog
