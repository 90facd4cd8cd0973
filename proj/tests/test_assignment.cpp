#include <cmath>

#include "doctest.h"
#include "gsbog/assignment.hpp"

using namespace gsbog;

namespace {

RolloutBatch batch_from_rows(int B, TimeGrid grid, std::vector<NodeId> nodes) {
    RolloutBatch batch;
    batch.B = B;
    batch.grid = grid;
    batch.direction = Direction::Forward;
    batch.nodes = std::move(nodes);
    return batch;
}

}  // namespace

TEST_SUITE_BEGIN("assignment");

TEST_CASE("encode_assignment: node and edge counting for n = 2") {
    const std::vector<double> c = {0.1, 0.2, 0.3, 0.4};
    const AssignmentInstance inst =
        encode_assignment(c, Marginal({0.5, 0.5}), Marginal({0.25, 0.75}), 4);
    CHECK(inst.encoded.graph->node_count() == 8);
    CHECK(inst.encoded.graph->edge_count() == 8);
    // Running cost sits on E nodes only and scales by cost_scale.
    CHECK(inst.encoded.cost.node_table[static_cast<std::size_t>(inst.e_node(0, 1))] ==
          doctest::Approx(inst.cost_scale * 0.2));
    CHECK(inst.encoded.cost.node_table[static_cast<std::size_t>(inst.a_node(0))] == 0.0);
    CHECK(inst.encoded.cost.node_table[static_cast<std::size_t>(inst.b_node(1))] == 0.0);
    // Endpoint masses live on the A / B partitions.
    for (int i = 0; i < 2; ++i) {
        CHECK(inst.encoded.mu[inst.a_node(i)] == doctest::Approx(0.5));
        CHECK(inst.encoded.nu[inst.a_node(i)] == 0.0);
    }
    CHECK(inst.encoded.nu[inst.b_node(0)] == doctest::Approx(0.25));
    CHECK(inst.encoded.nu[inst.b_node(1)] == doctest::Approx(0.75));
}

TEST_CASE("decode_plan: diagonal traversals give the diagonal plan") {
    const std::vector<double> c = {0.0, 1.0, 1.0, 0.0};
    const AssignmentInstance inst =
        encode_assignment(c, Marginal({0.5, 0.5}), Marginal({0.5, 0.5}), 2);
    // Two trajectories: A_0 -> E_00 -> B_0 and A_1 -> E_11 -> B_1.
    const RolloutBatch batch = batch_from_rows(
        2, TimeGrid(2),
        {inst.a_node(0), inst.e_node(0, 0), inst.b_node(0),
         inst.a_node(1), inst.e_node(1, 1), inst.b_node(1)});
    const TransportPlan plan = decode_plan(batch, inst);
    CHECK(plan.at(0, 0) == doctest::Approx(0.5));
    CHECK(plan.at(1, 1) == doctest::Approx(0.5));
    CHECK(plan.at(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("decode_plan: uniform flux normalizes to the product plan") {
    const std::vector<double> c(4, 1.0);
    const Marginal p0({0.5, 0.5});
    const Marginal p1({0.25, 0.75});
    const AssignmentInstance inst = encode_assignment(c, p0, p1, 2);
    // One traversal through each E cell: flux is the all-ones matrix.
    std::vector<NodeId> rows;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            rows.push_back(inst.a_node(i));
            rows.push_back(inst.e_node(i, j));
            rows.push_back(inst.b_node(j));
        }
    const RolloutBatch batch = batch_from_rows(4, TimeGrid(2), std::move(rows));
    const TransportPlan plan = decode_plan(batch, inst);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(plan.at(i, j) == doctest::Approx(p0[i] * p1[j]).epsilon(1e-5));
}

TEST_CASE("decode_plan: hand-written six-trajectory flux count") {
    const std::vector<double> c(4, 1.0);
    const Marginal p0({0.5, 0.5});
    const Marginal p1({0.5, 0.5});
    const AssignmentInstance inst = encode_assignment(c, p0, p1, 3);
    // Flux counts: (0,0): 2, (0,1): 1, (1,0): 1, (1,1): 2; K=3 rows include a hold.
    std::vector<NodeId> rows;
    auto traj = [&](int i, int j) {
        rows.push_back(inst.a_node(i));
        rows.push_back(inst.a_node(i));  // idle one step
        rows.push_back(inst.e_node(i, j));
        rows.push_back(inst.b_node(j));
    };
    traj(0, 0);
    traj(0, 0);
    traj(0, 1);
    traj(1, 0);
    traj(1, 1);
    traj(1, 1);
    const RolloutBatch batch = batch_from_rows(6, TimeGrid(3), std::move(rows));
    const TransportPlan plan = decode_plan(batch, inst);
    // Sinkhorn limit of [[2,1],[1,2]] under uniform marginals: scaling
    // preserves the cross ratio (2*2)/(1*1) = 4, so with a + b = 1/2 and
    // a^2 = 4 b^2 the plan is [[1/3, 1/6], [1/6, 1/3]].
    CHECK(plan.at(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-5));
    CHECK(plan.at(0, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-5));
    CHECK(plan.at(1, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-5));
    CHECK(plan.at(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-5));
}

TEST_CASE("decode_plan: zero flux on a required row is an error") {
    const std::vector<double> c(4, 1.0);
    const AssignmentInstance inst =
        encode_assignment(c, Marginal({0.5, 0.5}), Marginal({0.5, 0.5}), 2);
    const RolloutBatch batch = batch_from_rows(
        1, TimeGrid(2), {inst.a_node(0), inst.e_node(0, 0), inst.b_node(0)});
    CHECK_THROWS_WITH_AS(decode_plan(batch, inst), doctest::Contains("zero flux"),
                         std::runtime_error);
}

TEST_CASE("assignment_metrics: perfect plan scores perfectly") {
    const std::vector<double> c = {1.0, 2.0, 2.0, 1.0};
    const Marginal u = Marginal::uniform(2);
    const TransportPlan oracle = solve_transport_lp(c, u, u);
    const AssignmentReport report = assignment_metrics(oracle, oracle, c, u, u);
    CHECK(report.cost_gap == doctest::Approx(0.0));
    CHECK(report.accuracy == doctest::Approx(1.0));
    CHECK(report.mass_on_optimal == doctest::Approx(1.0));
    CHECK(report.marginal_tv == doctest::Approx(0.0));
}

TEST_CASE("assignment_metrics: uniform rows have entropy log n") {
    const int n = 4;
    std::vector<double> c(16, 1.0);
    const Marginal u = Marginal::uniform(n);
    TransportPlan uniform_plan;
    uniform_plan.n = n;
    uniform_plan.pi.assign(16, 1.0 / 16.0);
    uniform_plan.cost = 1.0;
    const TransportPlan oracle = solve_transport_lp(c, u, u);
    const AssignmentReport report = assignment_metrics(uniform_plan, oracle, c, u, u);
    CHECK(report.mean_row_entropy == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("generator: Dirichlet marginals and embedding costs are well-formed") {
    const AssignmentInstance inst = generate_assignment_instance(6, 9001, 8);
    inst.p0.validate();
    inst.p1.validate();
    CHECK(inst.encoded.graph->node_count() == 6 + 36 + 6);
    CHECK(inst.encoded.graph->edge_count() == 2 * 36);
    for (double v : inst.cost) {
        CHECK(v >= 0.0);
        CHECK(v <= std::sqrt(2.0) + 1e-12);
    }
    // Deterministic for a fixed seed.
    const AssignmentInstance again = generate_assignment_instance(6, 9001, 8);
    CHECK(again.cost == inst.cost);
    CHECK(again.p0.p == inst.p0.p);
}

TEST_SUITE_END();
