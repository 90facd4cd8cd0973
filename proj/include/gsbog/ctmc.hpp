#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gsbog/graph.hpp"
#include "gsbog/grid.hpp"

namespace gsbog {

enum class Direction { Forward, Backward };

/// One-step transition law out of a node: probability per candidate edge of
/// the rollout graph, in edge-index order, plus the stay probability.
struct StepDistribution {
    const std::vector<EdgeId>* edges = nullptr;  // candidate edges of the rollout graph
    std::vector<double> jump_probs;              // aligned with *edges
    double stay_prob = 1.0;
};

/// A rollable per-step policy. Implementations fill `out` with the jump law at
/// (grid index k, node x). `next_node` maps a chosen candidate edge to the
/// landing node (differs between forward and backward rollouts).
class KernelPolicy {
public:
    virtual ~KernelPolicy() = default;
    virtual Direction direction() const = 0;
    virtual const DirectedGraph& rollout_graph() const = 0;
    virtual void step(int k, NodeId x, StepDistribution& out) const = 0;
    virtual NodeId next_node(EdgeId e) const = 0;
};

/// Per-step controlled rates on the edges of the rollout graph. The Euler
/// chain adapter turns these into jump probabilities.
class RatePolicy {
public:
    virtual ~RatePolicy() = default;
    virtual Direction direction() const = 0;
    virtual const DirectedGraph& rollout_graph() const = 0;
    /// Rate along candidate edge e at grid index k when standing at x.
    virtual double rate(int k, NodeId x, EdgeId e) const = 0;
    virtual NodeId next_node(EdgeId e) const = 0;
};

/// Shared counters surfaced in training logs.
struct EngineTelemetry {
    std::atomic<std::int64_t> clamp_count{0};       // oversized jump mass renormalized
    std::atomic<std::int64_t> saturation_count{0};  // potential exponent clipped
};

/// Euler chain over a rate policy: P(jump e) = rate * dt, stay = 1 - sum.
/// Negative stay mass is scaled away and counted, never fatal.
class EulerKernel : public KernelPolicy {
public:
    EulerKernel(std::shared_ptr<const RatePolicy> rates, TimeGrid grid,
                std::shared_ptr<EngineTelemetry> telemetry = nullptr);

    Direction direction() const override { return rates_->direction(); }
    const DirectedGraph& rollout_graph() const override { return rates_->rollout_graph(); }
    void step(int k, NodeId x, StepDistribution& out) const override;
    NodeId next_node(EdgeId e) const override { return rates_->next_node(e); }

private:
    std::shared_ptr<const RatePolicy> rates_;
    TimeGrid grid_;
    std::shared_ptr<EngineTelemetry> telemetry_;
};

/// The reference dynamics as a forward policy (u = r).
class ReferenceRatePolicy : public RatePolicy {
public:
    explicit ReferenceRatePolicy(std::shared_ptr<const RateGenerator> generator)
        : generator_(std::move(generator)) {}
    Direction direction() const override { return Direction::Forward; }
    const DirectedGraph& rollout_graph() const override { return generator_->graph(); }
    double rate(int k, NodeId, EdgeId e) const override { return generator_->rate(k, e); }
    NodeId next_node(EdgeId e) const override { return generator_->graph().edge(e).dst; }

private:
    std::shared_ptr<const RateGenerator> generator_;
};

/// B sampled node trajectories over a (K+1)-point grid.
struct RolloutBatch {
    int B = 0;
    TimeGrid grid;
    Direction direction = Direction::Forward;
    std::uint64_t seed = 0;
    std::vector<NodeId> nodes;  // row-major: B x (K+1), row b = trajectory b

    NodeId at(int b, int k) const {
        return nodes[static_cast<std::size_t>(b) * static_cast<std::size_t>(grid.points()) +
                     static_cast<std::size_t>(k)];
    }
};

/// Sample B trajectories. Each trajectory owns a counter-derived random
/// stream keyed by (seed, index): identical (policy, start, seed) gives a
/// bit-identical batch for any worker count.
RolloutBatch rollout(const KernelPolicy& policy, const Marginal& start, int B, TimeGrid grid,
                     std::uint64_t seed, int workers = 1);

/// Occupancy counts per (grid index, node), with flagged nodes that
/// congestion metrics skip (endpoints). Column sums equal B at every index.
struct OccupancyField {
    int B = 0;
    std::vector<std::vector<std::int64_t>> counts;  // (K+1) x N
    std::vector<bool> excluded;                     // per node

    double empirical(int k, NodeId x) const {
        return static_cast<double>(counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)]) /
               static_cast<double>(B);
    }
    std::vector<double> empirical_row(int k) const;
};

OccupancyField occupancy(const RolloutBatch& batch, int node_count,
                         const std::vector<NodeId>& exclude = {});

/// Explicit-Euler propagation of the continuity equation under per-step
/// controlled rates: p_{k+1} = p_k + dt * U_k p_k, renormalized each step.
/// Throws when an entry drops below -1e-9 (stiff step; increase K).
std::vector<std::vector<double>> propagate_marginals(const RatePolicy& policy,
                                                     const Marginal& mu, TimeGrid grid);

/// Grid quadrature of the path-space KL rate between controlled and reference
/// dynamics: sum_k dt sum_x p_k(x) sum_edges [u log(u/r) - u + r], with p_k
/// propagated under u. Convention 0 log(0/r) = 0; u > 0 where r = 0 is an
/// absolute-continuity error.
double path_kl(const RatePolicy& controlled, const RateGenerator& reference, const Marginal& mu,
               TimeGrid grid);

// --- Trace export ----------------------------------------------------------------

void write_trace_csv(const RolloutBatch& batch, std::ostream& out);
void write_trace_binary(const RolloutBatch& batch, int node_count, std::ostream& out);
RolloutBatch read_trace_binary(std::istream& in);

}  // namespace gsbog
