#include "gsbog/trainer.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "gsbog/adamw.hpp"
#include "gsbog/costs.hpp"
#include "gsbog/ctmc.hpp"
#include "gsbog/rng.hpp"
#include "json.hpp"

namespace gsbog {

TrainConfig TrainConfig::from_json_text(const std::string& text, const std::string& origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& err) {
        throw std::invalid_argument(origin + ": " + err.what());
    }
    TrainConfig c;
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch", c.batch_size);
    c.lambda_td = j.value("lambda_td", c.lambda_td);
    c.learning_rate = j.value("lr", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.inner_steps = j.value("inner_steps", c.inner_steps);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.workers = j.value("workers", c.workers);
    c.boundary_eps = j.value("boundary_eps", c.boundary_eps);
    c.eval_batch = j.value("eval_batch", c.eval_batch);
    c.mask_unvisited_cells = j.value("mask_unvisited", c.mask_unvisited_cells);
    c.lr_decay_floor = j.value("lr_decay_floor", c.lr_decay_floor);
    c.average_tail = j.value("average_tail", c.average_tail);
    if (c.iterations < 1 || c.batch_size < 1 || c.inner_steps < 1 || c.lambda_td < 0.0 ||
        c.learning_rate <= 0.0 || c.eval_batch < 1)
        throw std::invalid_argument(origin + ": invalid training configuration values");
    return c;
}

std::string TrainConfig::to_json() const {
    nlohmann::json j;
    j["iterations"] = iterations;
    j["batch"] = batch_size;
    j["lambda_td"] = lambda_td;
    j["lr"] = learning_rate;
    j["weight_decay"] = weight_decay;
    j["inner_steps"] = inner_steps;
    j["seed"] = seed;
    j["checkpoint_every"] = checkpoint_every;
    j["workers"] = workers;
    j["boundary_eps"] = boundary_eps;
    j["eval_batch"] = eval_batch;
    j["mask_unvisited"] = mask_unvisited_cells;
    j["lr_decay_floor"] = lr_decay_floor;
    j["average_tail"] = average_tail;
    return j.dump(2);
}

namespace {

std::vector<std::string> reachability_warnings(const ProblemInstance& instance) {
    const DirectedGraph& g = *instance.graph;
    std::vector<bool> reachable(static_cast<std::size_t>(g.node_count()), false);
    std::deque<std::pair<NodeId, int>> queue;
    for (NodeId x : instance.mu.support()) {
        reachable[static_cast<std::size_t>(x)] = true;
        queue.emplace_back(x, 0);
    }
    while (!queue.empty()) {
        const auto [x, depth] = queue.front();
        queue.pop_front();
        if (depth >= instance.grid.steps) continue;
        for (EdgeId e : g.out_edges(x)) {
            const NodeId y = g.edge(e).dst;
            if (!reachable[static_cast<std::size_t>(y)]) {
                reachable[static_cast<std::size_t>(y)] = true;
                queue.emplace_back(y, depth + 1);
            }
        }
    }
    std::vector<std::string> warnings;
    for (NodeId x : instance.nu.support())
        if (!reachable[static_cast<std::size_t>(x)])
            warnings.push_back("target mass on node " + std::to_string(x) +
                               " is unreachable from the source support within " +
                               std::to_string(instance.grid.steps) + " hops");
    return warnings;
}

double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void zero_row(std::vector<double>& grad, const PotentialTable& tables, int row) {
    for (NodeId x = 0; x < tables.node_count(); ++x) grad[tables.index(row, x)] = 0.0;
}

void add_scaled(std::vector<double>& dst, const std::vector<double>& src, double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

// Cells far from the batch support have one-sided gradients (nothing anchors
// them), so they would drift until the exponent clip freezes them at toxic
// values. Updates are restricted to occupied cells plus their same-row graph
// neighbors: the frontier cells legitimately receive the suppress-jumps-into-
// dead-states signal, while deep unvisited entries keep their current values.
void mask_unvisited(std::vector<double>& grad, const PotentialTable& tables,
                    const BatchStats& stats, bool mirrored, const DirectedGraph& graph) {
    const int K = tables.grid().steps;
    std::vector<bool> live(static_cast<std::size_t>(tables.node_count()));
    for (int row = 0; row <= K; ++row) {
        const int sim_index = mirrored ? K - row : row;
        const auto& occ = stats.occ[static_cast<std::size_t>(sim_index)];
        for (NodeId x = 0; x < tables.node_count(); ++x) {
            bool keep = occ[static_cast<std::size_t>(x)] > 0;
            if (!keep)
                for (EdgeId e : graph.out_edges(x)) {
                    if (occ[static_cast<std::size_t>(graph.edge(e).dst)] > 0) {
                        keep = true;
                        break;
                    }
                }
            if (!keep)
                for (EdgeId e : graph.in_edges(x)) {
                    if (occ[static_cast<std::size_t>(graph.edge(e).src)] > 0) {
                        keep = true;
                        break;
                    }
                }
            live[static_cast<std::size_t>(x)] = keep;
        }
        for (NodeId x = 0; x < tables.node_count(); ++x)
            if (!live[static_cast<std::size_t>(x)]) grad[tables.index(row, x)] = 0.0;
    }
}

}  // namespace

TrainResult train(const ProblemInstance& instance, const TrainConfig& config,
                  const IterationSink& sink, const std::string& diagnostic_dir) {
    instance.validate();
    TrainResult result;
    result.warnings = reachability_warnings(instance);

    const TimeGrid grid = instance.grid;
    const int K = grid.steps;
    const int n = instance.graph->node_count();
    auto tables = std::make_shared<PotentialTable>(grid, n);
    auto telemetry = std::make_shared<EngineTelemetry>();
    const RateGenerator& ref = *instance.reference;

    AdamW opt_y(tables->y_data().size(), config.learning_rate, config.weight_decay);
    AdamW opt_yhat(tables->yhat_data().size(), config.learning_rate, config.weight_decay);

    std::int64_t clamp_seen = 0, sat_seen = 0;
    const auto t_start = std::chrono::steady_clock::now();

    // Polyak tail averaging: single iterates are noisy at low-occupancy
    // cells, the tail mean is the estimator that gets reported.
    const long average_from = config.average_tail > 0.0
                                  ? std::max<long>(0, config.iterations -
                                                          static_cast<long>(std::ceil(
                                                              config.average_tail *
                                                              static_cast<double>(config.iterations))))
                                  : config.iterations;
    PotentialTable averaged(grid, n);
    long averaged_count = 0;

    for (long m = 0; m < config.iterations; ++m) {
        // Linear learning-rate decay toward the configured floor.
        const double progress =
            config.iterations > 1 ? static_cast<double>(m) / static_cast<double>(config.iterations - 1)
                                  : 1.0;
        const double lr_now =
            config.learning_rate * (1.0 - (1.0 - config.lr_decay_floor) * progress);
        opt_y.set_learning_rate(lr_now);
        opt_yhat.set_learning_rate(lr_now);
        LossReport report;
        report.iteration = m;
        report.lambda_td = config.lambda_td;

        // Forward half: rollout under u = r exp(Z), update Yhat.
        auto fwd_policy =
            std::make_shared<ForwardPotentialPolicy>(tables, instance.reference, telemetry);
        EulerKernel fwd_kernel(fwd_policy, grid, telemetry);
        const RolloutBatch fwd_batch =
            rollout(fwd_kernel, instance.mu, config.batch_size, grid,
                    derive_stream_seed(config.seed, static_cast<std::uint64_t>(2 * m)),
                    config.workers);
        const BatchStats stats_f = compute_batch_stats(fwd_batch, n);
        std::vector<std::vector<double>> p_hat(static_cast<std::size_t>(grid.points()));
        for (int k = 0; k <= K; ++k) p_hat[static_cast<std::size_t>(k)] = stats_f.empirical(k);
        const FTable f = cost_table(instance.cost, p_hat);

        // Pin the forward boundary row: Yhat_0 = log(p_hat_0 + eps) - Y_0.
        for (NodeId x = 0; x < n; ++x)
            tables->yhat(0, x) =
                std::log(p_hat[0][static_cast<std::size_t>(x)] + config.boundary_eps) -
                tables->y(0, x);

        report.ipf_forward = ipf_forward_loss(stats_f, *tables, ref);
        report.td_forward = td_forward_loss(stats_f, *tables, ref, f);
        if (!std::isfinite(report.ipf_forward) || !std::isfinite(report.td_forward)) {
            if (!diagnostic_dir.empty())
                tables->save_checkpoint(diagnostic_dir + "/diverged.ckpt", m);
            throw std::runtime_error("train: non-finite forward loss at iteration " +
                                     std::to_string(m));
        }
        for (int s = 0; s < config.inner_steps; ++s) {
            std::vector<double> grad = loss_gradient(LossSelector::IpfForward, stats_f, *tables,
                                                     ref, f);
            if (config.lambda_td > 0.0)
                add_scaled(grad,
                           loss_gradient(LossSelector::TdForward, stats_f, *tables, ref, f),
                           config.lambda_td);
            zero_row(grad, *tables, 0);  // boundary row is not trainable
            if (config.mask_unvisited_cells)
                mask_unvisited(grad, *tables, stats_f, /*mirrored=*/false, *instance.graph);
            if (s == 0) report.grad_norm_yhat = l2_norm(grad);
            opt_yhat.step(tables->yhat_data(), grad);
        }

        // Backward half: rollout under u_hat = r exp(Zhat) on reverse(G), update Y.
        auto bwd_policy =
            std::make_shared<BackwardPotentialPolicy>(tables, instance.reference, telemetry);
        EulerKernel bwd_kernel(bwd_policy, grid, telemetry);
        const RolloutBatch bwd_batch =
            rollout(bwd_kernel, instance.nu, config.batch_size, grid,
                    derive_stream_seed(config.seed, static_cast<std::uint64_t>(2 * m + 1)),
                    config.workers);
        const BatchStats stats_b = compute_batch_stats(bwd_batch, n);

        // Pin the backward boundary row: Y_K = log(p_hat_1 + eps) - Yhat_K.
        const std::vector<double> p_hat_1 = stats_b.empirical(0);
        for (NodeId x = 0; x < n; ++x)
            tables->y(K, x) = std::log(p_hat_1[static_cast<std::size_t>(x)] + config.boundary_eps) -
                              tables->yhat(K, x);

        report.ipf_backward = ipf_backward_loss(stats_b, *tables, ref);
        report.td_backward = td_backward_loss(stats_b, *tables, ref, f);
        if (!std::isfinite(report.ipf_backward) || !std::isfinite(report.td_backward)) {
            if (!diagnostic_dir.empty())
                tables->save_checkpoint(diagnostic_dir + "/diverged.ckpt", m);
            throw std::runtime_error("train: non-finite backward loss at iteration " +
                                     std::to_string(m));
        }
        for (int s = 0; s < config.inner_steps; ++s) {
            std::vector<double> grad = loss_gradient(LossSelector::IpfBackward, stats_b, *tables,
                                                     ref, f);
            if (config.lambda_td > 0.0)
                add_scaled(grad,
                           loss_gradient(LossSelector::TdBackward, stats_b, *tables, ref, f),
                           config.lambda_td);
            zero_row(grad, *tables, K);
            if (config.mask_unvisited_cells)
                mask_unvisited(grad, *tables, stats_b, /*mirrored=*/true, *instance.graph);
            if (s == 0) report.grad_norm_y = l2_norm(grad);
            opt_y.step(tables->y_data(), grad);
        }

        report.recompute_total();
        report.clamp_count = telemetry->clamp_count.load() - clamp_seen;
        report.saturation_count = telemetry->saturation_count.load() - sat_seen;
        clamp_seen = telemetry->clamp_count.load();
        sat_seen = telemetry->saturation_count.load();
        report.wallclock_sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        result.log.push_back(report);
        if (m >= average_from) {
            for (std::size_t i = 0; i < averaged.y_data().size(); ++i) {
                averaged.y_data()[i] += tables->y_data()[i];
                averaged.yhat_data()[i] += tables->yhat_data()[i];
            }
            ++averaged_count;
        }
        if (sink) sink(report, *tables);
    }

    if (averaged_count > 0) {
        for (std::size_t i = 0; i < averaged.y_data().size(); ++i) {
            averaged.y_data()[i] /= static_cast<double>(averaged_count);
            averaged.yhat_data()[i] /= static_cast<double>(averaged_count);
        }
        result.tables = averaged;
    } else {
        result.tables = *tables;
    }
    return result;
}

MetricsReport evaluate(const ProblemInstance& instance, const PotentialTable& tables, int eval_B,
                       std::uint64_t seed, int workers, int top_k) {
    auto telemetry = std::make_shared<EngineTelemetry>();
    auto tables_ptr = std::make_shared<const PotentialTable>(tables);
    auto policy = std::make_shared<ForwardPotentialPolicy>(tables_ptr, instance.reference,
                                                           telemetry);
    EulerKernel kernel(policy, instance.grid, telemetry);
    MetricsReport report = evaluate_policy(instance, kernel, eval_B, seed, workers, top_k);
    report.clamp_count = telemetry->clamp_count.load();
    return report;
}

}  // namespace gsbog
