#include "gsbog/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gsbog/rng.hpp"
#include "json.hpp"

namespace gsbog {

AssignmentInstance encode_assignment(const std::vector<double>& cost_matrix, const Marginal& p0,
                                     const Marginal& p1, int K,
                                     const AssignmentEncodeParams& params) {
    const int n = p0.size();
    if (p1.size() != n ||
        cost_matrix.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
        throw std::invalid_argument("encode_assignment: shape mismatch");
    for (double c : cost_matrix)
        if (!std::isfinite(c) || c < 0.0)
            throw std::invalid_argument("encode_assignment: costs must be finite and nonnegative");

    AssignmentInstance inst;
    inst.n = n;
    inst.cost = cost_matrix;
    inst.p0 = p0;
    inst.p1 = p1;
    inst.cost_scale = params.cost_scale;

    const int total_nodes = 2 * n + n * n;
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(2 * n * n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            edges.push_back(Edge{inst.a_node(i), inst.e_node(i, j)});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            edges.push_back(Edge{inst.e_node(i, j), inst.b_node(j)});

    ProblemInstance& enc = inst.encoded;
    enc.graph = std::make_shared<const DirectedGraph>(total_nodes, std::move(edges));
    enc.reference = std::make_shared<const RateGenerator>(
        enc.graph,
        std::vector<double>(static_cast<std::size_t>(enc.graph->edge_count()), params.edge_rate));
    std::vector<double> mu(static_cast<std::size_t>(total_nodes), 0.0);
    std::vector<double> nu(static_cast<std::size_t>(total_nodes), 0.0);
    for (int i = 0; i < n; ++i) mu[static_cast<std::size_t>(inst.a_node(i))] = p0[i];
    for (int j = 0; j < n; ++j) nu[static_cast<std::size_t>(inst.b_node(j))] = p1[j];
    enc.mu = Marginal(std::move(mu));
    enc.nu = Marginal(std::move(nu));
    enc.grid = TimeGrid(K);
    enc.cost.kind = CostKind::NodeTable;
    enc.cost.node_table.assign(static_cast<std::size_t>(total_nodes), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            enc.cost.node_table[static_cast<std::size_t>(inst.e_node(i, j))] =
                params.cost_scale * inst.cost_at(i, j);
    enc.validate();
    return inst;
}

AssignmentInstance generate_assignment_instance(int n, std::uint64_t seed, int K,
                                                const AssignmentEncodeParams& params) {
    Rng rng(derive_stream_seed(seed, 0xA551ULL));
    auto dirichlet = [&rng](int size) {
        std::vector<double> p(static_cast<std::size_t>(size));
        double sum = 0.0;
        for (double& v : p) {
            v = -std::log(1.0 - rng.next_double());  // Exp(1)
            sum += v;
        }
        for (double& v : p) v /= sum;
        return Marginal(p);
    };
    const Marginal p0 = dirichlet(n);
    const Marginal p1 = dirichlet(n);
    std::vector<std::pair<double, double>> u(static_cast<std::size_t>(n)),
        v(static_cast<std::size_t>(n));
    for (auto& pt : u) pt = {rng.next_double(), rng.next_double()};
    for (auto& pt : v) pt = {rng.next_double(), rng.next_double()};
    std::vector<double> cost(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double dx = u[static_cast<std::size_t>(i)].first - v[static_cast<std::size_t>(j)].first;
            const double dy =
                u[static_cast<std::size_t>(i)].second - v[static_cast<std::size_t>(j)].second;
            cost[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                 static_cast<std::size_t>(j)] = std::sqrt(dx * dx + dy * dy);
        }
    AssignmentInstance inst = encode_assignment(cost, p0, p1, K, params);
    inst.encoded.seed = seed;
    return inst;
}

TransportPlan decode_plan(const RolloutBatch& batch, const AssignmentInstance& instance,
                          double tol, int max_iters) {
    const int n = instance.n;
    std::vector<double> flux(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int b = 0; b < batch.B; ++b) {
        for (int k = 0; k < batch.grid.steps; ++k) {
            const NodeId from = batch.at(b, k);
            const NodeId to = batch.at(b, k + 1);
            if (from >= n) continue;  // only A_i -> E_ij transitions carry plan mass
            if (to < n || to >= n + n * n) continue;
            const int cell = to - n;
            if (cell / n != from) continue;
            flux[static_cast<std::size_t>(from) * static_cast<std::size_t>(n) +
                 static_cast<std::size_t>(cell % n)] += 1.0;
        }
    }

    for (int i = 0; i < n; ++i) {
        if (instance.p0[i] <= 0.0) continue;
        double row_sum = 0.0;
        for (int j = 0; j < n; ++j)
            row_sum += flux[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                            static_cast<std::size_t>(j)];
        if (row_sum <= 0.0)
            throw std::runtime_error("decode_plan: zero flux on supply row " + std::to_string(i) +
                                     "; train longer or increase the batch");
    }

    // Sinkhorn projection onto the transportation polytope.
    std::vector<double>& pi = flux;
    double err = 0.0;
    for (int iter = 0; iter < max_iters; ++iter) {
        for (int i = 0; i < n; ++i) {
            double row_sum = 0.0;
            for (int j = 0; j < n; ++j)
                row_sum += pi[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                              static_cast<std::size_t>(j)];
            const double scale = row_sum > 0.0 ? instance.p0[i] / row_sum : 0.0;
            for (int j = 0; j < n; ++j)
                pi[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                   static_cast<std::size_t>(j)] *= scale;
        }
        err = 0.0;
        for (int j = 0; j < n; ++j) {
            double col_sum = 0.0;
            for (int i = 0; i < n; ++i)
                col_sum += pi[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                              static_cast<std::size_t>(j)];
            if (col_sum <= 0.0 && instance.p1[j] > tol)
                throw std::runtime_error("decode_plan: zero flux on demand column " +
                                         std::to_string(j) +
                                         "; train longer or increase the batch");
            const double scale = col_sum > 0.0 ? instance.p1[j] / col_sum : 0.0;
            for (int i = 0; i < n; ++i)
                pi[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                   static_cast<std::size_t>(j)] *= scale;
        }
        // Row sums drift after the column scaling; converged when both hold.
        err = 0.0;
        for (int i = 0; i < n; ++i) {
            double row_sum = 0.0;
            for (int j = 0; j < n; ++j)
                row_sum += pi[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                              static_cast<std::size_t>(j)];
            err = std::max(err, std::abs(row_sum - instance.p0[i]));
        }
        if (err < tol) break;
    }
    if (err >= tol)
        throw std::runtime_error("decode_plan: Sinkhorn projection did not reach tolerance");

    TransportPlan plan;
    plan.n = n;
    plan.pi = pi;
    plan.cost = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) plan.cost += pi[i] * instance.cost[i];
    return plan;
}

std::string AssignmentReport::to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["optimal_cost"] = optimal_cost;
    j["assigned_cost"] = assigned_cost;
    j["cost_gap"] = cost_gap;
    j["marginal_tv"] = marginal_tv;
    j["row_entropy"] = mean_row_entropy;
    j["mass_on_optimal"] = mass_on_optimal;
    j["accuracy"] = accuracy;
    return j.dump(2);
}

AssignmentReport assignment_metrics(const TransportPlan& plan, const TransportPlan& oracle,
                                    const std::vector<double>& cost_matrix, const Marginal& p0,
                                    const Marginal& p1) {
    const int n = plan.n;
    if (oracle.n != n) throw std::invalid_argument("assignment_metrics: plan shapes differ");
    AssignmentReport report;
    report.n = n;
    report.optimal_cost = oracle.cost;
    report.assigned_cost = plan.cost;
    report.cost_gap =
        oracle.cost > 0.0 ? (plan.cost - oracle.cost) / oracle.cost : plan.cost - oracle.cost;

    std::vector<double> rows(static_cast<std::size_t>(n), 0.0), cols(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            rows[static_cast<std::size_t>(i)] += plan.at(i, j);
            cols[static_cast<std::size_t>(j)] += plan.at(i, j);
        }
    double tv0 = 0.0, tv1 = 0.0;
    for (int i = 0; i < n; ++i) {
        tv0 += std::abs(rows[static_cast<std::size_t>(i)] - p0[i]);
        tv1 += std::abs(cols[static_cast<std::size_t>(i)] - p1[i]);
    }
    report.marginal_tv = 0.5 * tv0 + 0.5 * tv1;

    constexpr double kEntropyEps = 1e-12;
    double entropy_sum = 0.0;
    int entropy_rows = 0;
    for (int i = 0; i < n; ++i) {
        if (rows[static_cast<std::size_t>(i)] <= 0.0) continue;
        double h = 0.0;
        for (int j = 0; j < n; ++j) {
            const double r = plan.at(i, j) / rows[static_cast<std::size_t>(i)];
            h -= r * std::log(r + kEntropyEps);
        }
        entropy_sum += h;
        ++entropy_rows;
    }
    report.mean_row_entropy = entropy_rows > 0 ? entropy_sum / entropy_rows : 0.0;

    constexpr double kSupportTol = 1e-9;
    double mass = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (oracle.at(i, j) > kSupportTol) mass += plan.at(i, j);
    report.mass_on_optimal = mass;

    // Hard assignment: LP on -log plan scores, then per-row argmax of the
    // returned (integral at generic costs) flow.
    std::vector<double> scores(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < scores.size(); ++i)
        scores[i] = -std::log(plan.pi[i] + kEntropyEps);
    const TransportPlan hardened =
        solve_transport_lp(scores, Marginal::uniform(n), Marginal::uniform(n));
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        int best_j = 0;
        double best = -1.0;
        for (int j = 0; j < n; ++j)
            if (hardened.at(i, j) > best) {
                best = hardened.at(i, j);
                best_j = j;
            }
        if (oracle.at(i, best_j) > kSupportTol) ++hits;
    }
    report.accuracy = static_cast<double>(hits) / static_cast<double>(n);
    return report;
}

}  // namespace gsbog
