#include "gsbog/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>

#include "json.hpp"

namespace gsbog {

double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("tv_distance: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
    return 0.5 * sum;
}

double terminal_tv(const RolloutBatch& batch, const Marginal& nu) {
    std::vector<double> p_hat(nu.p.size(), 0.0);
    const int K = batch.grid.steps;
    for (int b = 0; b < batch.B; ++b)
        p_hat[static_cast<std::size_t>(batch.at(b, K))] += 1.0 / static_cast<double>(batch.B);
    return tv_distance(p_hat, nu.p);
}

CongestionStats congestion_stats(const OccupancyField& occ, int top_k) {
    const int points = static_cast<int>(occ.counts.size());
    const int n = points > 0 ? static_cast<int>(occ.counts[0].size()) : 0;
    const int steps = points - 1;

    std::vector<std::pair<std::int64_t, NodeId>> totals;  // (-S(x), x) for stable ordering
    for (NodeId x = 0; x < n; ++x) {
        if (occ.excluded[static_cast<std::size_t>(x)]) continue;
        std::int64_t s = 0;
        for (int t = 1; t <= steps; ++t) s += occ.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(x)];
        totals.emplace_back(-s, x);
    }
    std::sort(totals.begin(), totals.end());

    CongestionStats stats;
    stats.k_used = std::min<int>(top_k, static_cast<int>(totals.size()));
    std::int64_t top_sum = 0;
    for (int i = 0; i < stats.k_used; ++i) {
        stats.top_nodes.push_back(totals[static_cast<std::size_t>(i)].second);
        top_sum += -totals[static_cast<std::size_t>(i)].first;
    }
    if (stats.k_used > 0 && steps > 0)
        stats.mean_top_k = static_cast<double>(top_sum) /
                           (static_cast<double>(steps) * static_cast<double>(stats.k_used));
    std::int64_t peak = 0;
    for (int t = 1; t <= steps; ++t)
        for (NodeId x = 0; x < n; ++x)
            if (!occ.excluded[static_cast<std::size_t>(x)])
                peak = std::max(peak, occ.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(x)]);
    stats.peak = peak;
    return stats;
}

double capacity_violation(const RolloutBatch& batch, const DirectedGraph& graph,
                          double count_scale) {
    if (!graph.has_capacities())
        throw std::invalid_argument("capacity_violation: graph has no capacities");
    const int K = batch.grid.steps;
    double v_max = 0.0;
    std::map<std::pair<NodeId, NodeId>, EdgeId> edge_lookup;
    for (EdgeId e = 0; e < graph.edge_count(); ++e)
        edge_lookup[{graph.edge(e).src, graph.edge(e).dst}] = e;
    std::vector<std::int64_t> flow(static_cast<std::size_t>(graph.edge_count()), 0);
    for (int k = 0; k < K; ++k) {
        std::fill(flow.begin(), flow.end(), 0);
        for (int b = 0; b < batch.B; ++b) {
            const NodeId from = batch.at(b, k);
            const NodeId to = batch.at(b, k + 1);
            if (from == to) continue;
            const auto it = edge_lookup.find({from, to});
            if (it == edge_lookup.end()) continue;  // backward batches traverse reversed edges
            ++flow[static_cast<std::size_t>(it->second)];
        }
        for (EdgeId e = 0; e < graph.edge_count(); ++e) {
            if (flow[static_cast<std::size_t>(e)] == 0) continue;
            const double cap = graph.capacity(e) * count_scale;
            if (cap <= 0.0) return std::numeric_limits<double>::infinity();
            v_max = std::max(v_max, static_cast<double>(flow[static_cast<std::size_t>(e)]) / cap);
        }
    }
    return v_max;
}

double fold_rate(const RolloutBatch& batch, const std::vector<NodeId>& target_set) {
    if (target_set.empty()) return 0.0;
    std::vector<bool> in_target;
    NodeId max_node = 0;
    for (NodeId x : target_set) max_node = std::max(max_node, x);
    in_target.assign(static_cast<std::size_t>(max_node) + 1, false);
    for (NodeId x : target_set) in_target[static_cast<std::size_t>(x)] = true;
    const int K = batch.grid.steps;
    int folded = 0;
    for (int b = 0; b < batch.B; ++b) {
        const NodeId x = batch.at(b, K);
        if (x <= max_node && in_target[static_cast<std::size_t>(x)]) ++folded;
    }
    return static_cast<double>(folded) / static_cast<double>(batch.B);
}

BarrierStats energy_barrier(const RolloutBatch& batch, const std::vector<double>& energies,
                            const std::vector<NodeId>& endpoint_support,
                            const std::vector<NodeId>& target_set) {
    if (endpoint_support.empty())
        throw std::invalid_argument("energy_barrier: empty endpoint support");
    double floor = std::numeric_limits<double>::infinity();
    for (NodeId x : endpoint_support)
        floor = std::min(floor, energies[static_cast<std::size_t>(x)]);

    std::vector<bool> in_target;
    if (!target_set.empty()) {
        NodeId max_node = 0;
        for (NodeId x : target_set) max_node = std::max(max_node, x);
        in_target.assign(static_cast<std::size_t>(max_node) + 1, false);
        for (NodeId x : target_set) in_target[static_cast<std::size_t>(x)] = true;
    }

    const int K = batch.grid.steps;
    std::vector<double> barriers;
    for (int b = 0; b < batch.B; ++b) {
        if (!in_target.empty()) {
            const NodeId terminal = batch.at(b, K);
            if (terminal >= static_cast<NodeId>(in_target.size()) ||
                !in_target[static_cast<std::size_t>(terminal)])
                continue;
        }
        double peak = -std::numeric_limits<double>::infinity();
        for (int k = 0; k <= K; ++k)
            peak = std::max(peak, energies[static_cast<std::size_t>(batch.at(b, k))]);
        barriers.push_back(peak - floor);
    }

    BarrierStats stats;
    stats.trajectories = static_cast<int>(barriers.size());
    if (barriers.empty()) return stats;
    std::sort(barriers.begin(), barriers.end());
    const std::size_t mid = barriers.size() / 2;
    stats.median = barriers.size() % 2 == 1 ? barriers[mid]
                                            : 0.5 * (barriers[mid - 1] + barriers[mid]);
    double sum = 0.0;
    for (double v : barriers) sum += v;
    stats.mean = sum / static_cast<double>(barriers.size());
    stats.max = barriers.back();
    return stats;
}

namespace {

// Label-correcting shortest paths from a single source; hop metric when the
// graph has no edge costs.
std::vector<double> shortest_paths_from(const DirectedGraph& g, NodeId source) {
    std::vector<double> dist(static_cast<std::size_t>(g.node_count()),
                             std::numeric_limits<double>::infinity());
    dist[static_cast<std::size_t>(source)] = 0.0;
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.push({0.0, source});
    while (!heap.empty()) {
        const auto [d, x] = heap.top();
        heap.pop();
        if (d > dist[static_cast<std::size_t>(x)]) continue;
        for (EdgeId e : g.out_edges(x)) {
            const double w = g.has_costs() ? g.cost(e) : 1.0;
            const NodeId y = g.edge(e).dst;
            if (d + w < dist[static_cast<std::size_t>(y)]) {
                dist[static_cast<std::size_t>(y)] = d + w;
                heap.push({d + w, y});
            }
        }
    }
    return dist;
}

}  // namespace

OverheadStats path_overhead(const RolloutBatch& batch, const DirectedGraph& graph) {
    OverheadStats stats;
    const int K = batch.grid.steps;
    std::map<NodeId, std::vector<double>> dist_cache;
    for (int b = 0; b < batch.B; ++b) {
        const NodeId start = batch.at(b, 0);
        const NodeId end = batch.at(b, K);
        double realized = 0.0;
        for (int k = 0; k < K; ++k) {
            const NodeId from = batch.at(b, k);
            const NodeId to = batch.at(b, k + 1);
            if (from == to) continue;
            const auto e = graph.find_edge(from, to);
            if (!e) {
                realized = std::numeric_limits<double>::infinity();
                break;
            }
            realized += graph.has_costs() ? graph.cost(*e) : 1.0;
        }
        auto it = dist_cache.find(start);
        if (it == dist_cache.end())
            it = dist_cache.emplace(start, shortest_paths_from(graph, start)).first;
        const double sp = it->second[static_cast<std::size_t>(end)];
        if (!std::isfinite(sp) || !std::isfinite(realized) || (sp == 0.0 && realized > 0.0)) {
            ++stats.excluded;
            continue;
        }
        const double overhead = sp == 0.0 ? 0.0 : (realized - sp) / sp;
        stats.per_trajectory.push_back(overhead);
    }
    stats.counted = static_cast<int>(stats.per_trajectory.size());
    if (stats.counted > 0) {
        std::vector<double> sorted = stats.per_trajectory;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t mid = sorted.size() / 2;
        stats.median =
            sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
        double sum = 0.0;
        for (double v : sorted) sum += v;
        stats.mean = sum / static_cast<double>(sorted.size());
    }
    return stats;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["eval_B"] = eval_B;
    j["seed"] = seed;
    j["tv"] = tv;
    j["mean_congestion"] = mean_congestion;
    j["peak_occupancy"] = peak_occupancy;
    j["congestion_top_k"] = congestion_top_k;
    if (v_max) j["v_max"] = *v_max;
    if (fold) j["fold_rate"] = *fold;
    if (barrier) {
        j["barrier_median"] = barrier->median;
        j["barrier_mean"] = barrier->mean;
        j["barrier_max"] = barrier->max;
        j["barrier_trajectories"] = barrier->trajectories;
    }
    if (overhead) {
        j["overhead_mean"] = overhead->mean;
        j["overhead_median"] = overhead->median;
        j["overhead_counted"] = overhead->counted;
        j["overhead_excluded"] = overhead->excluded;
    }
    j["clamp_count"] = clamp_count;
    return j.dump(2);
}

MetricsReport evaluate_policy(const ProblemInstance& instance, const KernelPolicy& policy,
                              int eval_B, std::uint64_t seed, int workers, int top_k) {
    const Marginal& start = policy.direction() == Direction::Forward ? instance.mu : instance.nu;
    const RolloutBatch batch = rollout(policy, start, eval_B, instance.grid, seed, workers);

    MetricsReport report;
    report.eval_B = eval_B;
    report.seed = seed;
    report.tv = terminal_tv(batch, instance.nu);
    const OccupancyField occ =
        occupancy(batch, instance.graph->node_count(), instance.endpoint_nodes());
    const CongestionStats cong = congestion_stats(occ, top_k);
    report.mean_congestion = cong.mean_top_k;
    report.peak_occupancy = cong.peak;
    report.congestion_top_k = cong.k_used;
    if (instance.graph->has_capacities()) {
        const double count_scale =
            instance.mass > 0.0 ? static_cast<double>(eval_B) / instance.mass : 1.0;
        report.v_max = capacity_violation(batch, *instance.graph, count_scale);
    }
    if (!instance.basin_folded.empty()) report.fold = fold_rate(batch, instance.basin_folded);
    if (!instance.energies.empty())
        report.barrier = energy_barrier(batch, instance.energies, instance.endpoint_nodes(),
                                        instance.basin_folded);
    report.overhead = path_overhead(batch, *instance.graph);
    return report;
}

}  // namespace gsbog
