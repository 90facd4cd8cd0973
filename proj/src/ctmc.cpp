#include "gsbog/ctmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>
#include <istream>
#include <stdexcept>
#include <thread>

#include "gsbog/rng.hpp"

namespace gsbog {

EulerKernel::EulerKernel(std::shared_ptr<const RatePolicy> rates, TimeGrid grid,
                         std::shared_ptr<EngineTelemetry> telemetry)
    : rates_(std::move(rates)), grid_(grid), telemetry_(std::move(telemetry)) {}

void EulerKernel::step(int k, NodeId x, StepDistribution& out) const {
    const DirectedGraph& g = rates_->rollout_graph();
    const std::vector<EdgeId>& candidates = g.out_edges(x);
    out.edges = &candidates;
    out.jump_probs.resize(candidates.size());
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const EdgeId e = candidates[i];
        const double rate = rates_->rate(k, x, e);
        if (!std::isfinite(rate) || rate < 0.0) {
            const Edge& ed = g.edge(e);
            throw std::runtime_error("simulation error: invalid rate " + std::to_string(rate) +
                                     " at (k=" + std::to_string(k) + ", " + std::to_string(ed.src) +
                                     "->" + std::to_string(ed.dst) + ")");
        }
        const double p = rate * grid_.dt;
        out.jump_probs[i] = p;
        total += p;
    }
    if (total > 1.0) {
        // Jump mass exceeds one step; scale so the stay probability is exactly 0.
        const double scale = 1.0 / total;
        for (double& p : out.jump_probs) p *= scale;
        out.stay_prob = 0.0;
        if (telemetry_) telemetry_->clamp_count.fetch_add(1, std::memory_order_relaxed);
    } else {
        out.stay_prob = 1.0 - total;
    }
}

namespace {

NodeId sample_start(const Marginal& start, double u) {
    double cum = 0.0;
    const std::size_t n = start.p.size();
    for (std::size_t x = 0; x < n; ++x) {
        cum += start.p[x];
        if (u < cum) return static_cast<NodeId>(x);
    }
    // Guard against cumulative rounding: fall back to the last supported node.
    for (std::size_t x = n; x-- > 0;)
        if (start.p[x] > 0.0) return static_cast<NodeId>(x);
    return 0;
}

void rollout_range(const KernelPolicy& policy, const Marginal& start, TimeGrid grid,
                   std::uint64_t seed, int b_begin, int b_end, int points,
                   std::vector<NodeId>& nodes) {
    StepDistribution dist;
    for (int b = b_begin; b < b_end; ++b) {
        Rng rng(derive_stream_seed(seed, static_cast<std::uint64_t>(b)));
        NodeId x = sample_start(start, rng.next_double());
        NodeId* row = nodes.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(points);
        row[0] = x;
        for (int k = 0; k < grid.steps; ++k) {
            policy.step(k, x, dist);
            const double u = rng.next_double();
            double cum = 0.0;
            NodeId next = x;
            for (std::size_t i = 0; i < dist.jump_probs.size(); ++i) {
                cum += dist.jump_probs[i];
                if (u < cum) {
                    next = policy.next_node((*dist.edges)[i]);
                    break;
                }
            }
            // u >= cum over all jumps: stay.
            x = next;
            row[k + 1] = x;
        }
    }
}

}  // namespace

RolloutBatch rollout(const KernelPolicy& policy, const Marginal& start, int B, TimeGrid grid,
                     std::uint64_t seed, int workers) {
    if (B < 1) throw std::invalid_argument("rollout: B must be >= 1");
    if (start.size() != policy.rollout_graph().node_count())
        throw std::invalid_argument("rollout: start marginal length != node count");
    RolloutBatch batch;
    batch.B = B;
    batch.grid = grid;
    batch.direction = policy.direction();
    batch.seed = seed;
    batch.nodes.assign(static_cast<std::size_t>(B) * static_cast<std::size_t>(grid.points()), 0);

    workers = std::max(1, workers);
    if (workers == 1 || B < 2 * workers) {
        rollout_range(policy, start, grid, seed, 0, B, grid.points(), batch.nodes);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        const int chunk = (B + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int lo = w * chunk;
            const int hi = std::min(B, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back([&, lo, hi] {
                rollout_range(policy, start, grid, seed, lo, hi, grid.points(), batch.nodes);
            });
        }
        for (auto& t : pool) t.join();
    }
    return batch;
}

std::vector<double> OccupancyField::empirical_row(int k) const {
    const auto& row = counts[static_cast<std::size_t>(k)];
    std::vector<double> p(row.size());
    for (std::size_t i = 0; i < row.size(); ++i)
        p[i] = static_cast<double>(row[i]) / static_cast<double>(B);
    return p;
}

OccupancyField occupancy(const RolloutBatch& batch, int node_count,
                         const std::vector<NodeId>& exclude) {
    OccupancyField field;
    field.B = batch.B;
    field.counts.assign(static_cast<std::size_t>(batch.grid.points()),
                        std::vector<std::int64_t>(static_cast<std::size_t>(node_count), 0));
    field.excluded.assign(static_cast<std::size_t>(node_count), false);
    for (NodeId x : exclude) field.excluded[static_cast<std::size_t>(x)] = true;
    for (int b = 0; b < batch.B; ++b)
        for (int k = 0; k < batch.grid.points(); ++k)
            ++field.counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(batch.at(b, k))];
    return field;
}

std::vector<std::vector<double>> propagate_marginals(const RatePolicy& policy, const Marginal& mu,
                                                     TimeGrid grid) {
    const DirectedGraph& g = policy.rollout_graph();
    const int n = g.node_count();
    if (mu.size() != n)
        throw std::invalid_argument("propagate_marginals: marginal length != node count");
    std::vector<std::vector<double>> table(static_cast<std::size_t>(grid.points()));
    table[0] = mu.p;
    for (int k = 0; k < grid.steps; ++k) {
        const std::vector<double>& p = table[static_cast<std::size_t>(k)];
        std::vector<double> next = p;
        for (NodeId x = 0; x < n; ++x) {
            const double px = p[static_cast<std::size_t>(x)];
            if (px == 0.0) continue;
            for (EdgeId e : g.out_edges(x)) {
                const double flow = policy.rate(k, x, e) * grid.dt * px;
                next[static_cast<std::size_t>(policy.next_node(e))] += flow;
                next[static_cast<std::size_t>(x)] -= flow;
            }
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i) {
            if (next[i] < -1e-9)
                throw std::runtime_error(
                    "propagate_marginals: negative mass " + std::to_string(next[i]) + " at node " +
                    std::to_string(i) + ", step " + std::to_string(k) +
                    "; the step is too stiff, increase K");
            if (next[i] < 0.0) next[i] = 0.0;
            sum += next[i];
        }
        for (double& v : next) v /= sum;
        table[static_cast<std::size_t>(k + 1)] = std::move(next);
    }
    return table;
}

double path_kl(const RatePolicy& controlled, const RateGenerator& reference, const Marginal& mu,
               TimeGrid grid) {
    if (&controlled.rollout_graph() != &reference.graph() &&
        controlled.rollout_graph().edge_count() != reference.graph().edge_count())
        throw std::invalid_argument("path_kl: controlled and reference graphs differ");
    if (controlled.direction() != Direction::Forward)
        throw std::invalid_argument("path_kl: controlled policy must be forward");
    const auto marginals = propagate_marginals(controlled, mu, grid);
    const DirectedGraph& g = controlled.rollout_graph();
    double total = 0.0;
    for (int k = 0; k < grid.steps; ++k) {
        const auto& p = marginals[static_cast<std::size_t>(k)];
        double step_sum = 0.0;
        for (NodeId x = 0; x < g.node_count(); ++x) {
            const double px = p[static_cast<std::size_t>(x)];
            if (px == 0.0) continue;
            double local = 0.0;
            for (EdgeId e : g.out_edges(x)) {
                const double u = controlled.rate(k, x, e);
                const double r = reference.rate(k, e);
                if (u > 0.0) {
                    if (r <= 0.0) {
                        const Edge& ed = g.edge(e);
                        throw std::runtime_error(
                            "path_kl: controlled rate positive where reference is zero on edge " +
                            std::to_string(ed.src) + "->" + std::to_string(ed.dst));
                    }
                    local += u * std::log(u / r) - u + r;
                } else {
                    local += r;  // u log(u/r) -> 0 as u -> 0
                }
            }
            step_sum += px * local;
        }
        total += grid.dt * step_sum;
    }
    return total;
}

void write_trace_csv(const RolloutBatch& batch, std::ostream& out) {
    out << "traj_id,step,node\n";
    for (int b = 0; b < batch.B; ++b)
        for (int k = 0; k < batch.grid.points(); ++k)
            out << b << "," << k << "," << batch.at(b, k) << "\n";
}

namespace {
constexpr char kTraceMagic[4] = {'G', 'S', 'B', 'R'};

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
}
}  // namespace

void write_trace_binary(const RolloutBatch& batch, int node_count, std::ostream& out) {
    out.write(kTraceMagic, 4);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(batch.B));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(batch.grid.steps));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(node_count));
    out.write(reinterpret_cast<const char*>(batch.nodes.data()),
              static_cast<std::streamsize>(batch.nodes.size() * sizeof(NodeId)));
}

RolloutBatch read_trace_binary(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kTraceMagic, 4) != 0)
        throw std::invalid_argument("trace file: bad magic");
    RolloutBatch batch;
    batch.B = static_cast<int>(read_pod<std::uint32_t>(in));
    batch.grid = TimeGrid(static_cast<int>(read_pod<std::uint32_t>(in)));
    read_pod<std::uint32_t>(in);  // node count, informational
    batch.nodes.resize(static_cast<std::size_t>(batch.B) *
                       static_cast<std::size_t>(batch.grid.points()));
    in.read(reinterpret_cast<char*>(batch.nodes.data()),
            static_cast<std::streamsize>(batch.nodes.size() * sizeof(NodeId)));
    if (!in) throw std::invalid_argument("trace file: truncated body");
    return batch;
}

}  // namespace gsbog
