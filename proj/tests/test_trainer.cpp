#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "gsbog/fixtures.hpp"
#include "gsbog/trainer.hpp"

using namespace gsbog;

TEST_SUITE_BEGIN("trainer");

TEST_CASE("single-node instance converges at iteration zero") {
    ProblemInstance inst;
    inst.graph = std::make_shared<const DirectedGraph>(1, std::vector<Edge>{});
    inst.reference = std::make_shared<const RateGenerator>(inst.graph, std::vector<double>{});
    inst.mu = Marginal::delta(1, 0);
    inst.nu = Marginal::delta(1, 0);
    inst.grid = TimeGrid(4);
    TrainConfig config;
    config.iterations = 1;
    config.batch_size = 16;
    config.inner_steps = 2;
    config.learning_rate = 0.1;
    const TrainResult result = train(inst, config);
    const MetricsReport report = evaluate(inst, result.tables, 100, 7);
    CHECK(report.tv == doctest::Approx(0.0));
    // No edges: every rate stays zero by construction.
    CHECK(result.log.front().ipf_forward == 0.0);
}

TEST_CASE("iteration zero rollouts are the uncontrolled chain") {
    const ProblemInstance inst = fixtures::three_node_bridge(16);
    // Zero-init tables reproduce the reference policy exactly.
    PotentialTable zero(inst.grid, 3);
    auto tables = std::make_shared<const PotentialTable>(zero);
    auto controlled = std::make_shared<ForwardPotentialPolicy>(tables, inst.reference);
    auto reference = std::make_shared<ReferenceRatePolicy>(inst.reference);
    EulerKernel controlled_kernel(controlled, inst.grid);
    EulerKernel reference_kernel(reference, inst.grid);
    const RolloutBatch a = rollout(controlled_kernel, inst.mu, 200, inst.grid, 99);
    const RolloutBatch b = rollout(reference_kernel, inst.mu, 200, inst.grid, 99);
    CHECK(a.nodes == b.nodes);
}

TEST_CASE("training is deterministic and worker-count independent") {
    const ProblemInstance inst = fixtures::three_node_bridge(8);
    TrainConfig config;
    config.iterations = 3;
    config.batch_size = 64;
    config.inner_steps = 3;
    config.learning_rate = 0.05;
    config.seed = 12;
    const TrainResult a = train(inst, config);
    const TrainResult b = train(inst, config);
    CHECK(a.tables.y_data() == b.tables.y_data());
    CHECK(a.tables.yhat_data() == b.tables.yhat_data());
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i)
        CHECK(a.log[i].total == b.log[i].total);

    config.workers = 4;
    const TrainResult c = train(inst, config);
    CHECK(a.tables.y_data() == c.tables.y_data());
    CHECK(a.tables.yhat_data() == c.tables.yhat_data());
}

TEST_CASE("loss report totals satisfy the lambda identity") {
    const ProblemInstance inst = fixtures::three_node_bridge(8);
    TrainConfig config;
    config.iterations = 2;
    config.batch_size = 64;
    config.lambda_td = 0.35;
    config.learning_rate = 0.05;
    const TrainResult result = train(inst, config);
    for (const LossReport& report : result.log) {
        const double expected = report.ipf_forward + report.ipf_backward +
                                report.lambda_td * (report.td_forward + report.td_backward);
        CHECK(std::abs(report.total - expected) <= 1e-10);
    }
}

TEST_CASE("training reduces terminal TV on the 3-node bridge") {
    const ProblemInstance inst = fixtures::three_node_bridge(16);
    TrainConfig config;
    config.iterations = 40;
    config.batch_size = 256;
    config.inner_steps = 8;
    config.learning_rate = 0.08;
    config.lambda_td = 0.2;
    config.seed = 3;
    const TrainResult result = train(inst, config);
    PotentialTable zero(inst.grid, 3);
    const MetricsReport before = evaluate(inst, zero, 2000, 555);
    const MetricsReport after = evaluate(inst, result.tables, 2000, 555);
    CHECK(after.tv < before.tv);
    CHECK(after.tv < 0.12);
}

TEST_CASE("evaluate is reproducible and checkpoints preserve the policy") {
    const ProblemInstance inst = fixtures::three_node_bridge(8);
    TrainConfig config;
    config.iterations = 4;
    config.batch_size = 64;
    config.learning_rate = 0.05;
    const TrainResult result = train(inst, config);
    const MetricsReport a = evaluate(inst, result.tables, 500, 42);
    const MetricsReport b = evaluate(inst, result.tables, 500, 42);
    CHECK(a.to_json() == b.to_json());

    const std::string path = "/tmp/gsbog_trainer_ckpt.ckpt";
    result.tables.save_checkpoint(path, 4);
    const auto [loaded, iteration] = PotentialTable::load_checkpoint(path);
    CHECK(iteration == 4);
    const MetricsReport c = evaluate(inst, loaded, 500, 42);
    CHECK(a.to_json() == c.to_json());
    std::remove(path.c_str());
}

TEST_CASE("unreachable target mass produces a warning") {
    ProblemInstance inst;
    inst.graph = std::make_shared<const DirectedGraph>(3, std::vector<Edge>{{0, 1}});
    inst.reference =
        std::make_shared<const RateGenerator>(inst.graph, std::vector<double>{1.0});
    inst.mu = Marginal::delta(3, 0);
    inst.nu = Marginal({0.0, 0.5, 0.5});
    inst.grid = TimeGrid(4);
    TrainConfig config;
    config.iterations = 1;
    config.batch_size = 8;
    const TrainResult result = train(inst, config);
    REQUIRE(result.warnings.size() == 1);
    CHECK(result.warnings[0].find("node 2") != std::string::npos);
}

TEST_SUITE_END();
