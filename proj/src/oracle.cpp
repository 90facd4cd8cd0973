#include "gsbog/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace gsbog {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& terms) {
    double m = kNegInf;
    for (double t : terms) m = std::max(m, t);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    return m + std::log(s);
}

}  // namespace

std::vector<std::vector<double>> BridgeSolution::marginals() const {
    std::vector<std::vector<double>> p(log_phi.size());
    for (std::size_t k = 0; k < log_phi.size(); ++k) {
        p[k].resize(log_phi[k].size());
        for (std::size_t x = 0; x < log_phi[k].size(); ++x) {
            const double lp = log_phi[k][x] + log_phihat[k][x];
            p[k][x] = lp == kNegInf ? 0.0 : std::exp(lp);
        }
    }
    return p;
}

BridgeSolution solve_bridge_exact(const RateGenerator& reference, const Marginal& mu,
                                  const Marginal& nu, TimeGrid grid, double tol, int max_iters) {
    const DirectedGraph& g = reference.graph();
    const int n = g.node_count();
    const int K = grid.steps;
    if (n > 64) throw std::invalid_argument("solve_bridge_exact: instance too large (N > 64)");
    for (int k = 0; k < K; ++k)
        for (NodeId x = 0; x < n; ++x)
            if (reference.out_rate_total(k, x) * grid.dt >= 1.0)
                throw std::invalid_argument(
                    "solve_bridge_exact: step too stiff at node " + std::to_string(x) +
                    "; increase K");

    // One-step Euler chain in log space: log of stay probability per (k, x).
    auto log_stay = [&](int k, NodeId x) {
        return std::log(1.0 - reference.out_rate_total(k, x) * grid.dt);
    };

    std::vector<std::vector<double>> lphi(
        static_cast<std::size_t>(K + 1), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    std::vector<std::vector<double>> lphihat(
        static_cast<std::size_t>(K + 1),
        std::vector<double>(static_cast<std::size_t>(n), kNegInf));

    std::vector<double> log_mu(static_cast<std::size_t>(n)), log_nu(static_cast<std::size_t>(n));
    for (NodeId x = 0; x < n; ++x) {
        log_mu[static_cast<std::size_t>(x)] = mu[x] > 0.0 ? std::log(mu[x]) : kNegInf;
        log_nu[static_cast<std::size_t>(x)] = nu[x] > 0.0 ? std::log(nu[x]) : kNegInf;
    }

    auto propagate_phihat_forward = [&] {
        std::vector<double> terms;
        for (int k = 0; k < K; ++k) {
            auto& next = lphihat[static_cast<std::size_t>(k + 1)];
            const auto& cur = lphihat[static_cast<std::size_t>(k)];
            for (NodeId y = 0; y < n; ++y) {
                terms.clear();
                if (cur[static_cast<std::size_t>(y)] != kNegInf)
                    terms.push_back(cur[static_cast<std::size_t>(y)] + log_stay(k, y));
                for (EdgeId e : g.in_edges(y)) {
                    const NodeId x = g.edge(e).src;
                    const double r = reference.rate(k, e);
                    if (r > 0.0 && cur[static_cast<std::size_t>(x)] != kNegInf)
                        terms.push_back(cur[static_cast<std::size_t>(x)] +
                                        std::log(r * grid.dt));
                }
                next[static_cast<std::size_t>(y)] = log_sum_exp(terms);
            }
        }
    };

    auto propagate_phi_backward = [&] {
        std::vector<double> terms;
        for (int k = K - 1; k >= 0; --k) {
            auto& cur = lphi[static_cast<std::size_t>(k)];
            const auto& next = lphi[static_cast<std::size_t>(k + 1)];
            for (NodeId x = 0; x < n; ++x) {
                terms.clear();
                if (next[static_cast<std::size_t>(x)] != kNegInf)
                    terms.push_back(next[static_cast<std::size_t>(x)] + log_stay(k, x));
                for (EdgeId e : g.out_edges(x)) {
                    const NodeId y = g.edge(e).dst;
                    const double r = reference.rate(k, e);
                    if (r > 0.0 && next[static_cast<std::size_t>(y)] != kNegInf)
                        terms.push_back(next[static_cast<std::size_t>(y)] +
                                        std::log(r * grid.dt));
                }
                cur[static_cast<std::size_t>(x)] = log_sum_exp(terms);
            }
        }
    };

    BridgeSolution sol;
    double change = std::numeric_limits<double>::infinity();
    std::vector<double> prev_lphi_K = lphi[static_cast<std::size_t>(K)];
    int iter = 0;
    for (; iter < max_iters && change > tol; ++iter) {
        propagate_phi_backward();

        // Keep magnitudes centered: shift phi by a constant (gauge move).
        double shift = kNegInf;
        for (NodeId x = 0; x < n; ++x)
            if (log_mu[static_cast<std::size_t>(x)] != kNegInf)
                shift = std::max(shift, lphi[0][static_cast<std::size_t>(x)]);
        if (shift != kNegInf && shift != 0.0)
            for (auto& row : lphi)
                for (double& v : row)
                    if (v != kNegInf) v -= shift;

        // Fit the source factor: phihat_0 = mu / phi_0.
        for (NodeId x = 0; x < n; ++x) {
            const double lm = log_mu[static_cast<std::size_t>(x)];
            lphihat[0][static_cast<std::size_t>(x)] =
                lm == kNegInf ? kNegInf : lm - lphi[0][static_cast<std::size_t>(x)];
        }
        propagate_phihat_forward();

        // Fit the target factor: phi_K = nu / phihat_K.
        for (NodeId x = 0; x < n; ++x) {
            const double ln = log_nu[static_cast<std::size_t>(x)];
            if (ln != kNegInf && lphihat[static_cast<std::size_t>(K)][static_cast<std::size_t>(x)] == kNegInf)
                throw std::runtime_error(
                    "solve_bridge_exact: target mass at node " + std::to_string(x) +
                    " is unreachable from the source support");
            lphi[static_cast<std::size_t>(K)][static_cast<std::size_t>(x)] =
                ln == kNegInf
                    ? kNegInf
                    : ln - lphihat[static_cast<std::size_t>(K)][static_cast<std::size_t>(x)];
        }

        change = 0.0;
        for (NodeId x = 0; x < n; ++x) {
            const double a = lphi[static_cast<std::size_t>(K)][static_cast<std::size_t>(x)];
            const double b = prev_lphi_K[static_cast<std::size_t>(x)];
            if (a == kNegInf && b == kNegInf) continue;
            if (a == kNegInf || b == kNegInf)
                change = std::numeric_limits<double>::infinity();
            else
                change = std::max(change, std::abs(a - b));
        }
        prev_lphi_K = lphi[static_cast<std::size_t>(K)];
    }
    // Final backward sweep so phi is consistent with the fitted phi_K.
    propagate_phi_backward();

    sol.iterations = iter;
    if (change > tol)
        throw std::runtime_error("solve_bridge_exact: no convergence in " +
                                 std::to_string(max_iters) +
                                 " iterations, residual " + std::to_string(change));

    // Endpoint residuals in L1.
    sol.residual_mu = 0.0;
    sol.residual_nu = 0.0;
    for (NodeId x = 0; x < n; ++x) {
        const double p0 = lphi[0][static_cast<std::size_t>(x)] == kNegInf ||
                                  lphihat[0][static_cast<std::size_t>(x)] == kNegInf
                              ? 0.0
                              : std::exp(lphi[0][static_cast<std::size_t>(x)] +
                                         lphihat[0][static_cast<std::size_t>(x)]);
        sol.residual_mu += std::abs(p0 - mu[x]);
        const double pK =
            lphi[static_cast<std::size_t>(K)][static_cast<std::size_t>(x)] == kNegInf ||
                    lphihat[static_cast<std::size_t>(K)][static_cast<std::size_t>(x)] == kNegInf
                ? 0.0
                : std::exp(lphi[static_cast<std::size_t>(K)][static_cast<std::size_t>(x)] +
                           lphihat[static_cast<std::size_t>(K)][static_cast<std::size_t>(x)]);
        sol.residual_nu += std::abs(pK - nu[x]);
    }

    // Exact h-transform rates of the one-step kernel: u_k = r phi_{k+1}(dst)/phi_k(src).
    sol.rates.assign(static_cast<std::size_t>(K),
                     std::vector<double>(static_cast<std::size_t>(g.edge_count()), 0.0));
    for (int k = 0; k < K; ++k)
        for (EdgeId e = 0; e < g.edge_count(); ++e) {
            const Edge& ed = g.edge(e);
            const double ls = lphi[static_cast<std::size_t>(k)][static_cast<std::size_t>(ed.src)];
            const double ld =
                lphi[static_cast<std::size_t>(k + 1)][static_cast<std::size_t>(ed.dst)];
            if (ls == kNegInf || ld == kNegInf) continue;
            sol.rates[static_cast<std::size_t>(k)][static_cast<std::size_t>(e)] =
                reference.rate(k, e) * std::exp(ld - ls);
        }
    sol.log_phi = std::move(lphi);
    sol.log_phihat = std::move(lphihat);
    return sol;
}

double brute_force_path_kl(const RatePolicy& controlled, const RateGenerator& reference,
                           const Marginal& mu, TimeGrid grid) {
    const DirectedGraph& g = controlled.rollout_graph();
    const int n = g.node_count();
    const int K = grid.steps;
    if (n > 4 || K > 8)
        throw std::invalid_argument("brute_force_path_kl: size guard violated (N <= 4, K <= 8)");

    // Per-step dense transition matrices of both Euler chains, built through
    // the same kernel adapter the engine uses.
    auto dense_kernel = [&](const RatePolicy& policy) {
        EulerKernel kernel(std::shared_ptr<const RatePolicy>(&policy, [](const RatePolicy*) {}),
                           grid);
        std::vector<std::vector<std::vector<double>>> p(
            static_cast<std::size_t>(K),
            std::vector<std::vector<double>>(static_cast<std::size_t>(n),
                                             std::vector<double>(static_cast<std::size_t>(n), 0.0)));
        StepDistribution dist;
        for (int k = 0; k < K; ++k)
            for (NodeId x = 0; x < n; ++x) {
                kernel.step(k, x, dist);
                p[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)]
                 [static_cast<std::size_t>(x)] = dist.stay_prob;
                for (std::size_t i = 0; i < dist.jump_probs.size(); ++i)
                    p[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)]
                     [static_cast<std::size_t>(kernel.next_node((*dist.edges)[i]))] +=
                        dist.jump_probs[i];
            }
        return p;
    };
    ReferenceRatePolicy ref_policy(
        std::make_shared<RateGenerator>(reference));
    const auto pu = dense_kernel(controlled);
    const auto pr = dense_kernel(ref_policy);

    double kl = 0.0;
    std::vector<NodeId> path(static_cast<std::size_t>(K + 1));
    // Depth-first enumeration over all node sequences with positive u-probability.
    auto dfs = [&](auto&& self, int k, double prob_u, double prob_r) -> void {
        if (prob_u == 0.0) return;
        if (k == K) {
            if (prob_r == 0.0)
                throw std::runtime_error(
                    "brute_force_path_kl: controlled path has zero reference probability");
            kl += prob_u * std::log(prob_u / prob_r);
            return;
        }
        const NodeId x = path[static_cast<std::size_t>(k)];
        for (NodeId y = 0; y < n; ++y) {
            const double tu =
                pu[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
            if (tu == 0.0) continue;
            path[static_cast<std::size_t>(k + 1)] = y;
            self(self, k + 1, prob_u * tu,
                 prob_r * pr[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)]
                            [static_cast<std::size_t>(y)]);
        }
    };
    for (NodeId x0 = 0; x0 < n; ++x0) {
        if (mu[x0] == 0.0) continue;
        path[0] = x0;
        dfs(dfs, 0, mu[x0], mu[x0]);
    }
    return kl;
}

TransportPlan solve_transport_lp(const std::vector<double>& cost_matrix, const Marginal& p0,
                                 const Marginal& p1, std::int64_t mass_scale,
                                 std::int64_t cost_scale) {
    const int n = p0.size();
    if (p1.size() != n || cost_matrix.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
        throw std::invalid_argument("solve_transport_lp: shape mismatch");
    if (n > 64) throw std::invalid_argument("solve_transport_lp: instance too large (n > 64)");

    FlowNetwork net;
    net.node_count = 2 * n;
    net.imbalance.assign(static_cast<std::size_t>(2 * n), 0);
    const std::vector<std::int64_t> supplies = masses_to_integers(p0.p, mass_scale);
    const std::vector<std::int64_t> demands = masses_to_integers(p1.p, mass_scale);
    for (int i = 0; i < n; ++i) {
        net.imbalance[static_cast<std::size_t>(i)] = supplies[static_cast<std::size_t>(i)];
        net.imbalance[static_cast<std::size_t>(n + i)] = -demands[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            net.arcs.push_back(FlowArc{
                i, n + j, mass_scale,
                static_cast<std::int64_t>(std::llround(
                    cost_matrix[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                                static_cast<std::size_t>(j)] *
                    static_cast<double>(cost_scale)))});
    const FlowSolution sol = min_cost_flow(net);

    TransportPlan plan;
    plan.n = n;
    plan.pi.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            plan.pi[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                    static_cast<std::size_t>(j)] =
                static_cast<double>(
                    sol.flow[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                             static_cast<std::size_t>(j)]) /
                static_cast<double>(mass_scale);
    plan.cost = 0.0;
    for (std::size_t i = 0; i < plan.pi.size(); ++i) plan.cost += plan.pi[i] * cost_matrix[i];
    return plan;
}

double hjb_residual(const std::vector<std::vector<double>>& v, const RateGenerator& reference,
                    const FTable& f, TimeGrid grid) {
    const DirectedGraph& g = reference.graph();
    double worst = 0.0;
    for (int k = 0; k < grid.steps; ++k) {
        for (NodeId x = 0; x < g.node_count(); ++x) {
            double sum = 0.0;
            for (EdgeId e : g.out_edges(x)) {
                const NodeId y = g.edge(e).dst;
                sum += reference.rate(k, e) *
                       (1.0 - std::exp(v[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)] -
                                       v[static_cast<std::size_t>(k)][static_cast<std::size_t>(y)]));
            }
            const double dvdt =
                (v[static_cast<std::size_t>(k + 1)][static_cast<std::size_t>(x)] -
                 v[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)]) /
                grid.dt;
            const double res =
                dvdt + sum + f[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)];
            worst = std::max(worst, std::abs(res));
        }
    }
    return worst;
}

std::vector<double> committor(const std::vector<std::vector<double>>& kernel,
                              const std::vector<NodeId>& unfolded,
                              const std::vector<NodeId>& folded) {
    const int n = static_cast<int>(kernel.size());
    if (unfolded.empty() || folded.empty())
        throw std::invalid_argument("committor: basins must be nonempty");
    std::vector<int> role(static_cast<std::size_t>(n), 0);  // 0 interior, 1 unfolded, 2 folded
    for (NodeId x : unfolded) role[static_cast<std::size_t>(x)] = 1;
    for (NodeId x : folded) {
        if (role[static_cast<std::size_t>(x)] == 1)
            throw std::invalid_argument("committor: basins overlap at node " + std::to_string(x));
        role[static_cast<std::size_t>(x)] = 2;
    }
    std::vector<int> interior;
    std::vector<int> index_of(static_cast<std::size_t>(n), -1);
    for (int x = 0; x < n; ++x)
        if (role[static_cast<std::size_t>(x)] == 0) {
            index_of[static_cast<std::size_t>(x)] = static_cast<int>(interior.size());
            interior.push_back(x);
        }

    std::vector<double> q(static_cast<std::size_t>(n), 0.0);
    for (NodeId x : folded) q[static_cast<std::size_t>(x)] = 1.0;
    if (interior.empty()) return q;

    const int m = static_cast<int>(interior.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < m; ++i) {
        const int x = interior[static_cast<std::size_t>(i)];
        a(i, i) = 1.0;
        for (int y = 0; y < n; ++y) {
            const double t = kernel[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
            if (t == 0.0) continue;
            if (role[static_cast<std::size_t>(y)] == 0)
                a(i, index_of[static_cast<std::size_t>(y)]) -= t;
            else if (role[static_cast<std::size_t>(y)] == 2)
                b(i) += t;
        }
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const Eigen::VectorXd sol = lu.solve(b);
    if (!((a * sol - b).norm() <= 1e-8 * (1.0 + b.norm())))
        throw std::runtime_error("committor: singular interior system (disconnected interior)");
    for (int i = 0; i < m; ++i) q[static_cast<std::size_t>(interior[static_cast<std::size_t>(i)])] =
        std::min(1.0, std::max(0.0, sol(i)));
    return q;
}

std::vector<std::vector<double>> euler_kernel(const RateGenerator& reference, int k, double dt) {
    const DirectedGraph& g = reference.graph();
    const int n = g.node_count();
    std::vector<std::vector<double>> t(static_cast<std::size_t>(n),
                                       std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (NodeId x = 0; x < n; ++x) {
        double total = 0.0;
        for (EdgeId e : g.out_edges(x)) {
            const double p = reference.rate(k, e) * dt;
            t[static_cast<std::size_t>(x)][static_cast<std::size_t>(g.edge(e).dst)] += p;
            total += p;
        }
        if (total > 1.0) {
            for (double& v : t[static_cast<std::size_t>(x)]) v /= total;
            total = 1.0;
        }
        t[static_cast<std::size_t>(x)][static_cast<std::size_t>(x)] += 1.0 - total;
    }
    return t;
}

}  // namespace gsbog
