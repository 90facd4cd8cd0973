#include <cmath>
#include <sstream>

#include "doctest.h"
#include "gsbog/ctmc.hpp"
#include "gsbog/fixtures.hpp"
#include "gsbog/graph.hpp"

using namespace gsbog;

namespace {

std::shared_ptr<const RateGenerator> two_node_absorbing(double rate) {
    auto g = std::make_shared<const DirectedGraph>(2, std::vector<Edge>{{0, 1}});
    return std::make_shared<const RateGenerator>(g, std::vector<double>{rate});
}

}  // namespace

TEST_SUITE_BEGIN("ctmc");

TEST_CASE("step distribution: rates times dt, stay is the remainder") {
    auto g = std::make_shared<const DirectedGraph>(3, std::vector<Edge>{{0, 1}, {0, 2}});
    auto gen = std::make_shared<const RateGenerator>(g, std::vector<double>{2.0, 1.0});
    auto policy = std::make_shared<ReferenceRatePolicy>(gen);
    EulerKernel kernel(policy, TimeGrid(10));
    StepDistribution dist;
    kernel.step(0, 0, dist);
    CHECK(dist.jump_probs[0] == doctest::Approx(0.2));
    CHECK(dist.jump_probs[1] == doctest::Approx(0.1));
    CHECK(dist.stay_prob == doctest::Approx(0.7));

    kernel.step(0, 1, dist);  // no out-edges
    CHECK(dist.jump_probs.empty());
    CHECK(dist.stay_prob == 1.0);
}

TEST_CASE("step distribution clamps oversized jump mass and counts it") {
    auto gen = two_node_absorbing(20.0);
    auto policy = std::make_shared<ReferenceRatePolicy>(gen);
    auto telemetry = std::make_shared<EngineTelemetry>();
    EulerKernel kernel(policy, TimeGrid(10), telemetry);
    StepDistribution dist;
    kernel.step(0, 0, dist);
    CHECK(dist.jump_probs[0] == doctest::Approx(1.0));
    CHECK(dist.stay_prob == 0.0);
    CHECK(telemetry->clamp_count.load() == 1);
}

TEST_CASE("rollout: zero rates keep trajectories at their start node") {
    auto gen = two_node_absorbing(0.0);
    auto policy = std::make_shared<ReferenceRatePolicy>(gen);
    EulerKernel kernel(policy, TimeGrid(8));
    const RolloutBatch batch = rollout(kernel, Marginal::uniform(2), 64, TimeGrid(8), 5);
    for (int b = 0; b < batch.B; ++b)
        for (int k = 1; k <= 8; ++k) CHECK(batch.at(b, k) == batch.at(b, 0));
}

TEST_CASE("rollout respects the graph topology") {
    const ProblemInstance inst = fixtures::bottleneck(0.0, 20);
    auto policy = std::make_shared<ReferenceRatePolicy>(inst.reference);
    EulerKernel kernel(policy, inst.grid);
    const RolloutBatch batch = rollout(kernel, inst.mu, 500, inst.grid, 11);
    for (int b = 0; b < batch.B; ++b)
        for (int k = 0; k < inst.grid.steps; ++k) {
            const NodeId from = batch.at(b, k);
            const NodeId to = batch.at(b, k + 1);
            if (from != to) CHECK(inst.graph->find_edge(from, to).has_value());
        }
}

TEST_CASE("rollout determinism across worker counts") {
    const ProblemInstance inst = fixtures::bottleneck(0.0, 20);
    auto policy = std::make_shared<ReferenceRatePolicy>(inst.reference);
    EulerKernel kernel(policy, inst.grid);
    const RolloutBatch one = rollout(kernel, inst.mu, 333, inst.grid, 123, 1);
    const RolloutBatch eight = rollout(kernel, inst.mu, 333, inst.grid, 123, 8);
    CHECK(one.nodes == eight.nodes);
    const RolloutBatch rerun = rollout(kernel, inst.mu, 333, inst.grid, 123, 3);
    CHECK(one.nodes == rerun.nodes);
}

TEST_CASE("rollout start nodes are distributed by the start marginal") {
    auto g = std::make_shared<const DirectedGraph>(4, std::vector<Edge>{});
    auto gen = std::make_shared<const RateGenerator>(g, std::vector<double>{});
    auto policy = std::make_shared<ReferenceRatePolicy>(gen);
    EulerKernel kernel(policy, TimeGrid(2));
    const Marginal start({0.5, 0.25, 0.125, 0.125});
    const int B = 100000;
    const RolloutBatch batch = rollout(kernel, start, B, TimeGrid(2), 77, 4);
    std::vector<int> counts(4, 0);
    for (int b = 0; b < B; ++b) ++counts[static_cast<std::size_t>(batch.at(b, 0))];
    for (int x = 0; x < 4; ++x) {
        const double p = start[x];
        const double se = std::sqrt(p * (1 - p) / B);
        CHECK(std::abs(counts[static_cast<std::size_t>(x)] / double(B) - p) <= 4 * se + 1e-3);
    }
}

TEST_CASE("propagate_marginals: zero generator is constant") {
    auto g = std::make_shared<const DirectedGraph>(3, std::vector<Edge>{{0, 1}});
    auto gen = std::make_shared<const RateGenerator>(g, std::vector<double>{0.0});
    ReferenceRatePolicy policy(gen);
    const Marginal mu({0.2, 0.3, 0.5});
    const auto table = propagate_marginals(policy, mu, TimeGrid(6));
    for (const auto& row : table)
        for (int x = 0; x < 3; ++x) CHECK(row[static_cast<std::size_t>(x)] == doctest::Approx(mu[x]));
}

TEST_CASE("propagate_marginals: exponential decay oracle at K=4096") {
    auto gen = two_node_absorbing(1.0);
    ReferenceRatePolicy policy(gen);
    const TimeGrid grid(4096);
    const auto table = propagate_marginals(policy, Marginal::delta(2, 0), grid);
    // Closed form p_1(1) = 1 - e^{-1}; the Euler chain is within O(dt).
    CHECK(std::abs(table.back()[1] - (1.0 - std::exp(-1.0))) <= 5e-4);
}

TEST_CASE("propagate_marginals conserves mass") {
    const ProblemInstance inst = fixtures::bottleneck(0.0, 30);
    ReferenceRatePolicy policy(inst.reference);
    const auto table = propagate_marginals(policy, inst.mu, inst.grid);
    for (const auto& row : table) {
        double sum = 0.0;
        for (double v : row) sum += v;
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("marginal consistency: empirical rollout matches exact propagation") {
    // 2-node absorbing chain, rate 1, K=10.
    auto gen = two_node_absorbing(1.0);
    auto policy = std::make_shared<ReferenceRatePolicy>(gen);
    const TimeGrid grid(10);
    EulerKernel kernel(policy, grid);
    const int B = 100000;
    const RolloutBatch batch = rollout(kernel, Marginal::delta(2, 0), B, grid, 2024, 4);
    ReferenceRatePolicy exact(gen);
    const auto p = propagate_marginals(exact, Marginal::delta(2, 0), grid);
    const OccupancyField occ = occupancy(batch, 2);
    for (int k = 0; k <= grid.steps; ++k)
        for (int x = 0; x < 2; ++x) {
            const double exact_p = p[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)];
            const double se = std::sqrt(exact_p * (1 - exact_p) / B);
            CHECK(std::abs(occ.empirical(k, x) - exact_p) <= 4 * se + 1e-3);
        }
}

TEST_CASE("occupancy: counts and flags") {
    auto g = std::make_shared<const DirectedGraph>(8, std::vector<Edge>{});
    auto gen = std::make_shared<const RateGenerator>(g, std::vector<double>{});
    auto policy = std::make_shared<ReferenceRatePolicy>(gen);
    EulerKernel kernel(policy, TimeGrid(5));
    const RolloutBatch batch = rollout(kernel, Marginal::delta(8, 7), 3, TimeGrid(5), 1);
    const OccupancyField occ = occupancy(batch, 8, {7});
    for (int k = 0; k <= 5; ++k) {
        CHECK(occ.counts[static_cast<std::size_t>(k)][7] == 3);
        std::int64_t total = 0;
        for (int x = 0; x < 8; ++x) total += occ.counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)];
        CHECK(total == batch.B);
    }
    CHECK(occ.excluded[7]);
    CHECK_FALSE(occ.excluded[0]);
}

TEST_CASE("occupancy matches a manual tally on a hand-written trace") {
    RolloutBatch batch;
    batch.B = 2;
    batch.grid = TimeGrid(3);
    batch.seed = 0;
    batch.nodes = {0, 1, 1, 2,   // trajectory 0
                   0, 0, 2, 2};  // trajectory 1
    const OccupancyField occ = occupancy(batch, 3);
    CHECK(occ.counts[0][0] == 2);
    CHECK(occ.counts[1][0] == 1);
    CHECK(occ.counts[1][1] == 1);
    CHECK(occ.counts[2][1] == 1);
    CHECK(occ.counts[2][2] == 1);
    CHECK(occ.counts[3][2] == 2);
}

TEST_CASE("path_kl: identity and scaling") {
    auto g = std::make_shared<const DirectedGraph>(2, std::vector<Edge>{{0, 1}, {1, 0}});
    auto ref = std::make_shared<const RateGenerator>(g, std::vector<double>{0.8, 0.5});
    ReferenceRatePolicy same(ref);
    CHECK(path_kl(same, *ref, Marginal::delta(2, 0), TimeGrid(16)) == doctest::Approx(0.0));

    // u = c r: the integrand reduces to r_out (c log c - c + 1) pointwise.
    const double c = 3.0;
    auto scaled = std::make_shared<const RateGenerator>(g, std::vector<double>{0.8 * c, 0.5 * c});
    ReferenceRatePolicy controlled(scaled);
    const TimeGrid grid(16);
    const double value = path_kl(controlled, *ref, Marginal::delta(2, 0), grid);
    const auto p = propagate_marginals(controlled, Marginal::delta(2, 0), grid);
    double expected = 0.0;
    const double factor = c * std::log(c) - c + 1.0;
    for (int k = 0; k < grid.steps; ++k)
        expected += grid.dt * (p[static_cast<std::size_t>(k)][0] * 0.8 +
                               p[static_cast<std::size_t>(k)][1] * 0.5) *
                    factor;
    CHECK(value == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("path_kl: frozen quadrature value for the u = 2r absorbing chain") {
    auto ref = two_node_absorbing(1.0);
    auto controlled_gen = two_node_absorbing(2.0);
    ReferenceRatePolicy controlled(controlled_gen);
    const double value = path_kl(controlled, *ref, Marginal::delta(2, 0), TimeGrid(4));
    // Hand-computed: sum_k dt (1-2dt)^k (2 log 2 - 1) with dt = 1/4.
    CHECK(value == doctest::Approx(0.1810754817749487).epsilon(1e-12));
}

TEST_CASE("path_kl: absolute continuity violation is an error") {
    auto g = std::make_shared<const DirectedGraph>(2, std::vector<Edge>{{0, 1}});
    auto ref = std::make_shared<const RateGenerator>(g, std::vector<double>{0.0});
    auto ctrl = std::make_shared<const RateGenerator>(g, std::vector<double>{1.0});
    ReferenceRatePolicy controlled(ctrl);
    CHECK_THROWS_AS(path_kl(controlled, *ref, Marginal::delta(2, 0), TimeGrid(4)),
                    std::runtime_error);
}

TEST_CASE("trace export: csv header and binary round trip") {
    auto gen = two_node_absorbing(1.0);
    auto policy = std::make_shared<ReferenceRatePolicy>(gen);
    EulerKernel kernel(policy, TimeGrid(4));
    const RolloutBatch batch = rollout(kernel, Marginal::delta(2, 0), 5, TimeGrid(4), 3);
    std::ostringstream csv;
    write_trace_csv(batch, csv);
    CHECK(csv.str().substr(0, 18) == "traj_id,step,node\n");

    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    write_trace_binary(batch, 2, bin);
    const RolloutBatch back = read_trace_binary(bin);
    CHECK(back.B == batch.B);
    CHECK(back.grid.steps == batch.grid.steps);
    CHECK(back.nodes == batch.nodes);
}

TEST_SUITE_END();
