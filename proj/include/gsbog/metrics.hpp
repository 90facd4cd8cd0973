#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gsbog/ctmc.hpp"
#include "gsbog/graph.hpp"

namespace gsbog {

/// Terminal mismatch: half L1 distance between the empirical terminal
/// marginal of the batch and the target.
double terminal_tv(const RolloutBatch& batch, const Marginal& nu);

double tv_distance(const std::vector<double>& p, const std::vector<double>& q);

struct CongestionStats {
    double mean_top_k = 0.0;   // per-step mean occupancy over the top-k nodes
    std::int64_t peak = 0;     // max occupancy over (t, x), endpoints excluded
    int k_used = 0;
    std::vector<NodeId> top_nodes;
};

/// Top-k nodes by total occupancy over t = 1..K, excluding flagged nodes.
CongestionStats congestion_stats(const OccupancyField& occ, int top_k = 100);

/// Max over (t, edge) of empirical crossing count / scaled capacity, with
/// count_scale converting mass-space capacities to count space (B / M).
double capacity_violation(const RolloutBatch& batch, const DirectedGraph& graph,
                          double count_scale = 1.0);

/// Fraction of trajectories whose terminal node lies in the target set.
double fold_rate(const RolloutBatch& batch, const std::vector<NodeId>& target_set);

struct BarrierStats {
    double median = 0.0;
    double mean = 0.0;
    double max = 0.0;
    int trajectories = 0;  // number aggregated (folding ones when a target set is given)
};

/// Per-trajectory max node energy minus the floor over the endpoint supports.
/// When target_set is nonempty, aggregates over folding trajectories only.
BarrierStats energy_barrier(const RolloutBatch& batch, const std::vector<double>& energies,
                            const std::vector<NodeId>& endpoint_support,
                            const std::vector<NodeId>& target_set = {});

struct OverheadStats {
    double mean = 0.0;
    double median = 0.0;
    int counted = 0;
    int excluded = 0;  // unreachable terminal or cyclic zero-distance trajectories
    std::vector<double> per_trajectory;
};

/// Relative path-length overhead versus the shortest path from X_0 to X_K,
/// using edge costs when present and hop counts otherwise.
OverheadStats path_overhead(const RolloutBatch& batch, const DirectedGraph& graph);

/// Rollout-based evaluation report; optional fields stay unset when the
/// instance lacks the matching annotations.
struct MetricsReport {
    int eval_B = 0;
    std::uint64_t seed = 0;
    double tv = 0.0;
    double mean_congestion = 0.0;
    std::int64_t peak_occupancy = 0;
    int congestion_top_k = 0;
    std::optional<double> v_max;
    std::optional<double> fold;
    std::optional<BarrierStats> barrier;
    std::optional<OverheadStats> overhead;
    std::int64_t clamp_count = 0;

    std::string to_json() const;
};

/// Shared evaluation pipeline: fresh rollouts under the policy, full metric
/// suite against the instance annotations.
MetricsReport evaluate_policy(const ProblemInstance& instance, const KernelPolicy& policy,
                              int eval_B, std::uint64_t seed, int workers = 1, int top_k = 100);

}  // namespace gsbog
