#include "gsbog/fixtures.hpp"

#include <cmath>
#include <memory>
#include <vector>

namespace gsbog {
namespace fixtures {

ProblemInstance three_node_bridge(int K) {
    ProblemInstance inst;
    inst.graph = std::make_shared<const DirectedGraph>(
        3, std::vector<Edge>{{0, 1}, {1, 2}, {1, 0}, {2, 1}});
    inst.reference = std::make_shared<const RateGenerator>(
        inst.graph, std::vector<double>{1.0, 1.0, 1.0, 1.0});
    inst.mu = Marginal::delta(3, 0);
    inst.nu = Marginal::delta(3, 2);
    inst.grid = TimeGrid(K);
    inst.validate();
    return inst;
}

ProblemInstance bottleneck(double congestion_weight, int K) {
    // Layout: 12 source nodes -> collector -> {2-hub bottleneck | 6 four-node
    // detours} -> distributor -> 12 target nodes.
    constexpr int kCluster = 12;
    constexpr int kDetours = 6;
    constexpr int kDetourLen = 4;
    const NodeId collector = kCluster;            // 12
    const NodeId hub1 = collector + 1;            // 13
    const NodeId hub2 = collector + 2;            // 14
    const NodeId distributor = collector + 3;     // 15
    const NodeId detour_base = distributor + 1;   // 16
    const NodeId target_base = detour_base + kDetours * kDetourLen;  // 40
    const int n = target_base + kCluster;                            // 52

    std::vector<Edge> edges;
    std::vector<double> caps, costs;
    auto add = [&](NodeId s, NodeId d, double cap, double cost) {
        edges.push_back(Edge{s, d});
        caps.push_back(cap);
        costs.push_back(cost);
    };
    for (NodeId s = 0; s < kCluster; ++s) add(s, collector, 1.0, 1.0);
    add(collector, hub1, 0.3, 1.0);
    add(hub1, hub2, 0.3, 1.0);
    add(hub2, distributor, 0.3, 1.0);
    for (int p = 0; p < kDetours; ++p) {
        const NodeId first = detour_base + p * kDetourLen;
        add(collector, first, 1.0, 3.0);
        for (int h = 0; h + 1 < kDetourLen; ++h) add(first + h, first + h + 1, 1.0, 3.0);
        add(first + kDetourLen - 1, distributor, 1.0, 3.0);
    }
    for (NodeId t = 0; t < kCluster; ++t) add(distributor, target_base + t, 1.0, 1.0);

    ProblemInstance inst;
    inst.graph = std::make_shared<const DirectedGraph>(n, std::move(edges), std::move(caps),
                                                       std::move(costs));
    inst.reference = std::make_shared<const RateGenerator>(
        inst.graph, preset_edge_rates(*inst.graph, RatePreset::InverseCost, 2.0));

    std::vector<double> mu(static_cast<std::size_t>(n), 0.0), nu(static_cast<std::size_t>(n), 0.0);
    for (int s = 0; s < kCluster; ++s) mu[static_cast<std::size_t>(s)] = 1.0 / kCluster;
    for (int t = 0; t < kCluster; ++t)
        nu[static_cast<std::size_t>(target_base + t)] = 1.0 / kCluster;
    inst.mu = Marginal(std::move(mu));
    inst.nu = Marginal(std::move(nu));
    inst.grid = TimeGrid(K);
    inst.mass = 1.0;
    if (congestion_weight > 0.0) {
        inst.cost.kind = CostKind::Congestion;
        inst.cost.weight = congestion_weight;
        inst.cost.exclude = inst.endpoint_nodes();
        inst.cost.b_scale = 1.0;
    }
    inst.validate();
    return inst;
}

ProblemInstance double_well(bool with_energy_cost, int K, double energy_cost_weight) {
    constexpr int n = 40;
    // Two basins with noisy high shoulders near the supports, a +6 barrier at
    // node 20 and confining walls above the barrier at both chain ends.
    const std::vector<double> energy = {
        9.0, 8.2, 7.4, 6.6,                          // left wall
        2.2, 0.8, 0.0, 0.5, 1.3, 2.1,                // left basin (floor at 6)
        2.7, 3.1, 3.5, 3.9, 4.3, 4.7, 5.1, 5.4, 5.7, 5.9,  // ascent
        6.0,                                         // apex
        5.8, 5.5, 5.1, 4.7, 4.2, 3.7, 3.1, 2.5, 1.9, 1.4,  // descent
        0.9, 0.5, 0.2, 0.1, 0.4, 0.9,                // right basin (floor at 33)
        5.2, 6.8, 8.5};                              // right wall shoulder
    const std::vector<NodeId> unfolded = {4, 5, 6, 7, 8, 9};
    const std::vector<NodeId> folded = {31, 32, 33, 34, 35, 36};

    std::vector<Edge> edges;
    std::vector<double> rates;
    constexpr double kBaseRate = 60.0;
    constexpr double kSoftTemp = 3.0;  // softened Metropolis bias
    for (NodeId i = 0; i + 1 < n; ++i) {
        edges.push_back(Edge{i, i + 1});
        rates.push_back(kBaseRate * std::exp(-(energy[static_cast<std::size_t>(i + 1)] -
                                               energy[static_cast<std::size_t>(i)]) /
                                             (2.0 * kSoftTemp)));
        edges.push_back(Edge{i + 1, i});
        rates.push_back(kBaseRate * std::exp(-(energy[static_cast<std::size_t>(i)] -
                                               energy[static_cast<std::size_t>(i + 1)]) /
                                             (2.0 * kSoftTemp)));
    }

    ProblemInstance inst;
    inst.graph = std::make_shared<const DirectedGraph>(n, std::move(edges));
    inst.reference = std::make_shared<const RateGenerator>(inst.graph, std::move(rates));

    // Endpoint marginals: stationary weights restricted to the basins.
    std::vector<double> mu(static_cast<std::size_t>(n), 0.0), nu(static_cast<std::size_t>(n), 0.0);
    double mu_sum = 0.0, nu_sum = 0.0;
    for (NodeId x : unfolded) {
        mu[static_cast<std::size_t>(x)] = std::exp(-energy[static_cast<std::size_t>(x)]);
        mu_sum += mu[static_cast<std::size_t>(x)];
    }
    for (NodeId x : folded) {
        nu[static_cast<std::size_t>(x)] = std::exp(-energy[static_cast<std::size_t>(x)]);
        nu_sum += nu[static_cast<std::size_t>(x)];
    }
    for (double& v : mu) v /= mu_sum;
    for (double& v : nu) v /= nu_sum;
    inst.mu = Marginal(std::move(mu));
    inst.nu = Marginal(std::move(nu));
    inst.grid = TimeGrid(K);
    inst.energies = energy;
    inst.basin_unfolded = unfolded;
    inst.basin_folded = folded;
    if (with_energy_cost) {
        inst.cost.kind = CostKind::NodeTable;
        inst.cost.node_table.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            inst.cost.node_table[static_cast<std::size_t>(i)] =
                energy_cost_weight * energy[static_cast<std::size_t>(i)];
    }
    inst.validate();
    return inst;
}

std::string tiny_dimacs_text() {
    return "c tiny min-cost-flow fixture\n"
           "p min 6 8\n"
           "n 1 4\n"
           "n 2 2\n"
           "n 5 -3\n"
           "n 6 -3\n"
           "a 1 3 0 4 2\n"
           "a 1 4 0 2 5\n"
           "a 2 3 0 3 1\n"
           "a 2 4 0 2 2\n"
           "a 3 5 0 5 1\n"
           "a 3 6 0 2 4\n"
           "a 4 5 0 2 2\n"
           "a 4 6 0 4 1\n";
}

}  // namespace fixtures
}  // namespace gsbog
