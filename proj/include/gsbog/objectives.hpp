#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsbog/ctmc.hpp"
#include "gsbog/graph.hpp"
#include "gsbog/potentials.hpp"

namespace gsbog {

/// Frozen sufficient statistics of a rollout batch: per-index occupancy and
/// per-step transition counts in a fixed deterministic order. Losses and
/// gradients are pure functions of these, so evaluation order never depends
/// on worker count.
struct BatchStats {
    Direction direction = Direction::Forward;
    int B = 0;
    TimeGrid grid;
    std::vector<std::vector<std::int64_t>> occ;  // (K+1) x N, simulation-time order

    struct Transition {
        NodeId from;
        NodeId to;
        std::int64_t count;
    };
    std::vector<std::vector<Transition>> trans;  // K rows, sorted by (from, to)

    /// Empirical marginal at simulation index k.
    std::vector<double> empirical(int k) const;
};

BatchStats compute_batch_stats(const RolloutBatch& batch, int node_count);

using FTable = std::vector<std::vector<double>>;  // (K+1) x N of f values, forward-indexed

/// Generator of Y along the forward controlled chain at (k, x):
/// sum over out-edges of r e^Z (Z - 1), plus f.
double generator_Y_forward(const PotentialTable& tables, const RateGenerator& r, const FTable& f,
                           int k, NodeId x);

/// Generator of Yhat along the forward controlled chain at (k, x):
/// in-edge term r e^Zhat plus out-edge coupling Zhat r e^Z, minus f.
double generator_Yhat_forward(const PotentialTable& tables, const RateGenerator& r,
                              const FTable& f, int k, NodeId x);

/// Time-reversed generator pair at mirrored forward index m. Returns
/// (A Yhat, A Y) under the backward controlled rates.
std::pair<double, double> generator_pair_backward(const PotentialTable& tables,
                                                  const RateGenerator& r, const FTable& f, int m,
                                                  NodeId x);

// --- IPF and TD losses -------------------------------------------------------
// Each loss trains exactly one table (forward losses -> Yhat, backward
// losses -> Y); the other table is a constant of the sampling policy.

double ipf_forward_loss(const BatchStats& batch, const PotentialTable& tables,
                        const RateGenerator& r);
double ipf_backward_loss(const BatchStats& batch, const PotentialTable& tables,
                         const RateGenerator& r);
double td_forward_loss(const BatchStats& batch, const PotentialTable& tables,
                       const RateGenerator& r, const FTable& f);
double td_backward_loss(const BatchStats& batch, const PotentialTable& tables,
                        const RateGenerator& r, const FTable& f);

enum class LossSelector { IpfForward, IpfBackward, TdForward, TdBackward };

/// Exact analytic gradient of the selected Monte-Carlo objective with respect
/// to every entry of its trainable table ((K+1) x N flat, row-major). The
/// sampling distribution is treated as fixed; boundary-row freezing is the
/// trainer's concern.
std::vector<double> loss_gradient(LossSelector selector, const BatchStats& batch,
                                  const PotentialTable& tables, const RateGenerator& r,
                                  const FTable& f);

/// Per-iteration training log record.
struct LossReport {
    long iteration = 0;
    double ipf_forward = 0.0;
    double ipf_backward = 0.0;
    double td_forward = 0.0;
    double td_backward = 0.0;
    double lambda_td = 0.0;
    double total = 0.0;
    double grad_norm_y = 0.0;
    double grad_norm_yhat = 0.0;
    std::int64_t clamp_count = 0;
    std::int64_t saturation_count = 0;
    double wallclock_sec = 0.0;

    /// total = ipf_f + ipf_b + lambda * (td_f + td_b), recomputed.
    void recompute_total() {
        total = ipf_forward + ipf_backward + lambda_td * (td_forward + td_backward);
    }
    std::string to_jsonl() const;
};

}  // namespace gsbog
