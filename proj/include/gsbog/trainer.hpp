#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gsbog/graph.hpp"
#include "gsbog/metrics.hpp"
#include "gsbog/objectives.hpp"
#include "gsbog/potentials.hpp"

namespace gsbog {

/// Alternating-update training configuration. The learning rate default is
/// the supply-chain setting; desk-scale fixtures override it.
struct TrainConfig {
    long iterations = 100;
    int batch_size = 1024;
    double lambda_td = 0.2;
    double learning_rate = 5e-5;
    double weight_decay = 0.0;
    int inner_steps = 10;
    std::uint64_t seed = 0;
    long checkpoint_every = 0;  // 0: only the final checkpoint
    int workers = 1;
    double boundary_eps = 1e-12;
    int eval_batch = 5000;
    bool mask_unvisited_cells = true;
    double lr_decay_floor = 0.05;  // final lr as a fraction of the initial lr
    double average_tail = 0.3;     // fraction of final iterations averaged into the result

    static TrainConfig from_json_text(const std::string& text, const std::string& origin);
    std::string to_json() const;
};

struct TrainResult {
    PotentialTable tables;
    std::vector<LossReport> log;
    std::vector<std::string> warnings;
};

/// Called once per iteration with the freshly written report and the current
/// tables (for logging and checkpoint cadence).
using IterationSink = std::function<void(const LossReport&, const PotentialTable&)>;

/// Alternating forward/backward training: forward rollouts update Yhat
/// against the forward IPF + TD objectives, backward rollouts update Y
/// against the mirrored pair. Boundary rows are pinned each half-iteration
/// and excluded from updates. Deterministic given (instance, config).
TrainResult train(const ProblemInstance& instance, const TrainConfig& config,
                  const IterationSink& sink = {}, const std::string& diagnostic_dir = "");

/// Fresh-seed rollouts of the trained forward policy through the shared
/// metric pipeline.
MetricsReport evaluate(const ProblemInstance& instance, const PotentialTable& tables, int eval_B,
                       std::uint64_t seed, int workers = 1, int top_k = 100);

}  // namespace gsbog
