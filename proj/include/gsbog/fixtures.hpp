#pragma once

#include <string>

#include "gsbog/graph.hpp"

namespace gsbog {
namespace fixtures {

/// 3-node chain 0 <-> 1 <-> 2, unit rates, delta endpoints, f = 0.
ProblemInstance three_node_bridge(int K = 32);

/// Two endpoint clusters joined by one cheap low-capacity bottleneck path and
/// several costlier parallel detours (~60 nodes). Reference rates are
/// inverse-cost, so uncontrolled mass prefers the bottleneck. congestion_weight
/// installs the occupancy cost (0 disables it).
ProblemInstance bottleneck(double congestion_weight, int K = 40);

/// Double-well birth-death chain of 40 nodes: basin floors near both ends,
/// a +6 barrier between them, and high confining walls whose noisy shoulders
/// discriminate wandering policies from direct ones. With with_energy_cost the
/// running cost charges the node energy (scaled by energy_cost_weight).
ProblemInstance double_well(bool with_energy_cost, int K = 200,
                            double energy_cost_weight = 1.0);

/// A 6-node DIMACS min-cost-flow instance as file text.
std::string tiny_dimacs_text();

}  // namespace fixtures
}  // namespace gsbog
