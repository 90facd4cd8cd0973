#include "gsbog/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <stdexcept>

namespace gsbog {

void FlowNetwork::validate() const {
    if (node_count <= 0) throw std::invalid_argument("FlowNetwork: node_count must be positive");
    if (imbalance.size() != static_cast<std::size_t>(node_count))
        throw std::invalid_argument("FlowNetwork: imbalance length != node count");
    std::int64_t total = 0;
    for (std::int64_t b : imbalance) total += b;
    if (total != 0) throw std::invalid_argument("FlowNetwork: imbalances do not sum to zero");
    for (std::size_t i = 0; i < arcs.size(); ++i) {
        const FlowArc& a = arcs[i];
        if (a.src < 0 || a.src >= node_count || a.dst < 0 || a.dst >= node_count)
            throw std::invalid_argument("FlowNetwork: arc " + std::to_string(i) +
                                        " endpoint out of range");
        if (a.capacity < 0)
            throw std::invalid_argument("FlowNetwork: arc " + std::to_string(i) +
                                        " has negative capacity");
    }
}

namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;

// Residual arc pair layout: arc i has forward slot 2i and backward slot 2i+1.
struct Residual {
    std::vector<int> head;          // per slot: target node
    std::vector<std::int64_t> cap;  // per slot: residual capacity
    std::vector<std::int64_t> cost;
    std::vector<std::vector<int>> out;  // per node: slot ids
};

Residual build_residual(const FlowNetwork& net) {
    Residual r;
    const std::size_t slots = net.arcs.size() * 2;
    r.head.resize(slots);
    r.cap.resize(slots);
    r.cost.resize(slots);
    r.out.assign(static_cast<std::size_t>(net.node_count), {});
    for (std::size_t i = 0; i < net.arcs.size(); ++i) {
        const FlowArc& a = net.arcs[i];
        r.head[2 * i] = a.dst;
        r.cap[2 * i] = a.capacity;
        r.cost[2 * i] = a.cost;
        r.head[2 * i + 1] = a.src;
        r.cap[2 * i + 1] = 0;
        r.cost[2 * i + 1] = -a.cost;
        r.out[static_cast<std::size_t>(a.src)].push_back(static_cast<int>(2 * i));
        r.out[static_cast<std::size_t>(a.dst)].push_back(static_cast<int>(2 * i + 1));
    }
    return r;
}

}  // namespace

FlowSolution min_cost_flow(const FlowNetwork& net) {
    net.validate();
    const int n = net.node_count;
    Residual res = build_residual(net);
    std::vector<std::int64_t> excess = net.imbalance;
    std::vector<std::int64_t> pi(static_cast<std::size_t>(n), 0);

    // Bellman-Ford potentials when negative costs are present, so reduced
    // costs start nonnegative for Dijkstra.
    bool has_negative = false;
    for (const FlowArc& a : net.arcs) has_negative = has_negative || a.cost < 0;
    if (has_negative) {
        std::vector<std::int64_t> dist(static_cast<std::size_t>(n), 0);
        for (int it = 0; it < n; ++it) {
            bool changed = false;
            for (const FlowArc& a : net.arcs) {
                if (a.capacity > 0 &&
                    dist[static_cast<std::size_t>(a.src)] + a.cost <
                        dist[static_cast<std::size_t>(a.dst)]) {
                    dist[static_cast<std::size_t>(a.dst)] =
                        dist[static_cast<std::size_t>(a.src)] + a.cost;
                    changed = true;
                }
            }
            if (!changed) break;
            if (it == n - 1)
                throw std::runtime_error("min_cost_flow: negative cycle in input costs");
        }
        pi = dist;
    }

    std::vector<std::int64_t> dist(static_cast<std::size_t>(n));
    std::vector<int> parent_slot(static_cast<std::size_t>(n));
    using HeapItem = std::pair<std::int64_t, int>;

    while (true) {
        int source = -1;
        for (int x = 0; x < n; ++x)
            if (excess[static_cast<std::size_t>(x)] > 0) {
                source = x;
                break;
            }
        if (source < 0) break;

        // Dijkstra over residual arcs with reduced costs.
        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(parent_slot.begin(), parent_slot.end(), -1);
        dist[static_cast<std::size_t>(source)] = 0;
        std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<>> heap;
        heap.push({0, source});
        while (!heap.empty()) {
            const auto [d, x] = heap.top();
            heap.pop();
            if (d > dist[static_cast<std::size_t>(x)]) continue;
            for (int slot : res.out[static_cast<std::size_t>(x)]) {
                if (res.cap[static_cast<std::size_t>(slot)] <= 0) continue;
                const int y = res.head[static_cast<std::size_t>(slot)];
                const std::int64_t rc = res.cost[static_cast<std::size_t>(slot)] +
                                        pi[static_cast<std::size_t>(x)] -
                                        pi[static_cast<std::size_t>(y)];
                if (d + rc < dist[static_cast<std::size_t>(y)]) {
                    dist[static_cast<std::size_t>(y)] = d + rc;
                    parent_slot[static_cast<std::size_t>(y)] = slot;
                    heap.push({d + rc, y});
                }
            }
        }

        int sink = -1;
        std::int64_t best = kInf;
        for (int x = 0; x < n; ++x)
            if (excess[static_cast<std::size_t>(x)] < 0 &&
                dist[static_cast<std::size_t>(x)] < best) {
                best = dist[static_cast<std::size_t>(x)];
                sink = x;
            }
        if (sink < 0) {
            std::string cut = "{";
            for (int x = 0; x < n; ++x)
                if (dist[static_cast<std::size_t>(x)] < kInf)
                    cut += (cut.size() > 1 ? "," : "") + std::to_string(x);
            cut += "}";
            throw std::runtime_error(
                "min_cost_flow: infeasible, no residual path from excess node " +
                std::to_string(source) + "; violated cut " + cut);
        }

        // Bottleneck along the path.
        std::int64_t push = std::min(excess[static_cast<std::size_t>(source)],
                                     -excess[static_cast<std::size_t>(sink)]);
        for (int x = sink; x != source;) {
            const int slot = parent_slot[static_cast<std::size_t>(x)];
            push = std::min(push, res.cap[static_cast<std::size_t>(slot)]);
            x = res.head[static_cast<std::size_t>(slot ^ 1)];
        }
        for (int x = sink; x != source;) {
            const int slot = parent_slot[static_cast<std::size_t>(x)];
            res.cap[static_cast<std::size_t>(slot)] -= push;
            res.cap[static_cast<std::size_t>(slot ^ 1)] += push;
            x = res.head[static_cast<std::size_t>(slot ^ 1)];
        }
        excess[static_cast<std::size_t>(source)] -= push;
        excess[static_cast<std::size_t>(sink)] += push;

        // Standard potential update keeps all residual reduced costs >= 0.
        const std::int64_t d_sink = dist[static_cast<std::size_t>(sink)];
        for (int x = 0; x < n; ++x)
            pi[static_cast<std::size_t>(x)] +=
                std::min(dist[static_cast<std::size_t>(x)], d_sink);
    }

    FlowSolution sol;
    sol.flow.resize(net.arcs.size());
    sol.total_cost = 0;
    for (std::size_t i = 0; i < net.arcs.size(); ++i) {
        sol.flow[i] = res.cap[2 * i + 1];  // backward residual equals pushed flow
        sol.total_cost += sol.flow[i] * net.arcs[i].cost;
    }
    sol.potentials = pi;
    sol.certificate_valid = validate_certificate(net, sol);
    return sol;
}

bool validate_certificate(const FlowNetwork& net, const FlowSolution& sol) {
    for (std::size_t i = 0; i < net.arcs.size(); ++i) {
        const FlowArc& a = net.arcs[i];
        const std::int64_t rc = a.cost + sol.potentials[static_cast<std::size_t>(a.src)] -
                                sol.potentials[static_cast<std::size_t>(a.dst)];
        if (sol.flow[i] < a.capacity && rc < 0) return false;  // forward residual arc
        if (sol.flow[i] > 0 && -rc < 0) return false;          // backward residual arc
    }
    return true;
}

std::vector<std::int64_t> masses_to_integers(const std::vector<double>& masses,
                                             std::int64_t total) {
    double sum = 0.0;
    for (double m : masses) {
        if (m < 0.0) throw std::invalid_argument("masses_to_integers: negative mass");
        sum += m;
    }
    if (sum <= 0.0) throw std::invalid_argument("masses_to_integers: zero total mass");
    std::vector<std::int64_t> out(masses.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;  // (-frac, index)
    std::int64_t assigned = 0;
    for (std::size_t i = 0; i < masses.size(); ++i) {
        const double exact = masses[i] / sum * static_cast<double>(total);
        out[i] = static_cast<std::int64_t>(std::floor(exact));
        assigned += out[i];
        remainders.emplace_back(-(exact - std::floor(exact)), i);
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::int64_t r = 0; r < total - assigned; ++r)
        ++out[remainders[static_cast<std::size_t>(r)].second];
    return out;
}

TimeExpandedFlow build_time_expanded(const DirectedGraph& graph, const Marginal& mu,
                                     const Marginal& nu, int K, double mass,
                                     std::int64_t mass_scale, std::int64_t cost_scale) {
    if (K < 1) throw std::invalid_argument("build_time_expanded: K must be >= 1");
    if (!(mass > 0.0)) throw std::invalid_argument("build_time_expanded: mass must be positive");
    const int n = graph.node_count();
    TimeExpandedFlow expanded;
    expanded.node_count = n;
    expanded.steps = K;
    expanded.mass_scale = mass_scale;
    expanded.cost_scale = cost_scale;
    expanded.transport_arcs_per_step = graph.edge_count();

    FlowNetwork& net = expanded.network;
    net.node_count = (K + 1) * n;
    net.imbalance.assign(static_cast<std::size_t>(net.node_count), 0);

    const double units_per_mass = static_cast<double>(mass_scale) / mass;
    for (int t = 0; t < K; ++t) {
        for (EdgeId e = 0; e < graph.edge_count(); ++e) {
            const Edge& ed = graph.edge(e);
            const std::int64_t cap =
                graph.has_capacities()
                    ? static_cast<std::int64_t>(std::llround(graph.capacity(e) * units_per_mass))
                    : mass_scale;
            const std::int64_t cost =
                graph.has_costs()
                    ? static_cast<std::int64_t>(std::llround(graph.cost(e) *
                                                             static_cast<double>(cost_scale)))
                    : 0;
            net.arcs.push_back(FlowArc{expanded.layered_id(t, ed.src),
                                       expanded.layered_id(t + 1, ed.dst), cap, cost});
        }
        for (NodeId x = 0; x < n; ++x)
            net.arcs.push_back(FlowArc{expanded.layered_id(t, x), expanded.layered_id(t + 1, x),
                                       mass_scale, 0});
    }

    const std::vector<std::int64_t> supplies = masses_to_integers(mu.p, mass_scale);
    const std::vector<std::int64_t> demands = masses_to_integers(nu.p, mass_scale);
    for (NodeId x = 0; x < n; ++x) {
        net.imbalance[static_cast<std::size_t>(expanded.layered_id(0, x))] +=
            supplies[static_cast<std::size_t>(x)];
        net.imbalance[static_cast<std::size_t>(expanded.layered_id(K, x))] -=
            demands[static_cast<std::size_t>(x)];
    }
    return expanded;
}

void write_flow_csv(const TimeExpandedFlow& expanded, const FlowSolution& solution, double mass,
                    std::ostream& out) {
    out << "t,src,dst,flow\n";
    const double mass_per_unit = mass / static_cast<double>(expanded.mass_scale);
    for (int t = 0; t < expanded.steps; ++t) {
        for (EdgeId e = 0; e < expanded.transport_arcs_per_step; ++e) {
            const std::int64_t q = solution.flow[expanded.transport_arc(t, e)];
            if (q == 0) continue;
            const FlowArc& arc = expanded.network.arcs[expanded.transport_arc(t, e)];
            out << t << "," << arc.src % expanded.node_count << ","
                << arc.dst % expanded.node_count << ","
                << static_cast<double>(q) * mass_per_unit << "\n";
        }
        for (NodeId x = 0; x < expanded.node_count; ++x) {
            const std::int64_t q = solution.flow[expanded.holdover_arc(t, x)];
            if (q == 0) continue;
            out << t << "," << x << "," << x << "," << static_cast<double>(q) * mass_per_unit
                << "\n";
        }
    }
}

}  // namespace gsbog
