#include <cmath>

#include "doctest.h"
#include "gsbog/costs.hpp"

using namespace gsbog;

TEST_SUITE_BEGIN("costs");

TEST_CASE("zero cost is identically zero") {
    RunningCostSpec spec;
    const std::vector<double> p = {0.25, 0.75};
    CHECK(eval_cost(spec, 0, 0, p) == 0.0);
    CHECK(eval_cost(spec, 3, 1, p) == 0.0);
}

TEST_CASE("node table cost is marginal-independent") {
    RunningCostSpec spec;
    spec.kind = CostKind::NodeTable;
    spec.node_table = {1.0, 3.5, 0.0};
    const std::vector<double> p1 = {0.1, 0.8, 0.1};
    const std::vector<double> p2 = {1.0, 0.0, 0.0};
    CHECK(eval_cost(spec, 0, 1, p1) == 3.5);
    CHECK(eval_cost(spec, 5, 1, p2) == 3.5);
}

TEST_CASE("congestion cost: linear in occupancy, zero on excluded nodes") {
    RunningCostSpec spec;
    spec.kind = CostKind::Congestion;
    spec.weight = 1.0;
    spec.b_scale = 1.0;
    const std::vector<double> p = {0.25, 0.5, 0.25};
    CHECK(eval_cost(spec, 0, 0, p) == doctest::Approx(0.25));

    spec.exclude = {1};
    CHECK(eval_cost(spec, 0, 1, p) == 0.0);
    CHECK(eval_cost(spec, 0, 2, p) == doctest::Approx(0.25));

    // Doubling the weight doubles the cost pointwise.
    RunningCostSpec twice = spec;
    twice.weight = 2.0;
    for (int x = 0; x < 3; ++x)
        CHECK(eval_cost(twice, 0, x, p) == doctest::Approx(2.0 * eval_cost(spec, 0, x, p)));
}

TEST_CASE("cost_table matches pointwise evaluation") {
    RunningCostSpec spec;
    spec.kind = CostKind::Congestion;
    spec.weight = 0.7;
    const std::vector<std::vector<double>> p_hat = {{0.5, 0.5}, {0.25, 0.75}, {0.0, 1.0}};
    const auto table = cost_table(spec, p_hat);
    REQUIRE(table.size() == 3);
    for (std::size_t k = 0; k < 3; ++k)
        for (int x = 0; x < 2; ++x)
            CHECK(table[k][static_cast<std::size_t>(x)] ==
                  doctest::Approx(eval_cost(spec, static_cast<int>(k), x, p_hat[k])));
}

TEST_CASE("free energy table") {
    const auto uniform = free_energy_table(Marginal::uniform(4));
    for (double f : uniform) CHECK(f == doctest::Approx(std::log(4.0)));

    const auto point = free_energy_table(Marginal::delta(3, 1));
    CHECK(point[1] == doctest::Approx(0.0));
    CHECK(point[0] == doctest::Approx(-std::log(1e-12)));

    const auto skew = free_energy_table(Marginal({0.9, 0.1}));
    CHECK(skew[0] == doctest::Approx(0.1053605156578263).epsilon(1e-9));
    CHECK(skew[1] == doctest::Approx(2.302585092994046).epsilon(1e-9));
}

TEST_SUITE_END();
