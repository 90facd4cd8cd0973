#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "gsbog/ctmc.hpp"
#include "gsbog/graph.hpp"
#include "gsbog/grid.hpp"

namespace gsbog {

/// Tabular log-potentials over the time grid: Y (forward, log phi) and
/// Yhat (backward, log phihat), each (K+1) x N. Controlled rates depend only
/// on same-row differences, so adding a constant per row is a gauge freedom.
class PotentialTable {
public:
    PotentialTable() = default;
    PotentialTable(TimeGrid grid, int node_count);

    TimeGrid grid() const { return grid_; }
    int node_count() const { return n_; }
    int rows() const { return grid_.points(); }

    double y(int k, NodeId x) const { return y_[index(k, x)]; }
    double yhat(int k, NodeId x) const { return yhat_[index(k, x)]; }
    double& y(int k, NodeId x) { return y_[index(k, x)]; }
    double& yhat(int k, NodeId x) { return yhat_[index(k, x)]; }

    std::vector<double>& y_data() { return y_; }
    std::vector<double>& yhat_data() { return yhat_; }
    const std::vector<double>& y_data() const { return y_; }
    const std::vector<double>& yhat_data() const { return yhat_; }

    /// Edge increment Z_k(y,x) = Y_k(y) - Y_k(x).
    double z(int k, NodeId to, NodeId from) const { return y(k, to) - y(k, from); }
    /// Edge increment Zhat_k(y,x) = Yhat_k(y) - Yhat_k(x).
    double zhat(int k, NodeId to, NodeId from) const { return yhat(k, to) - yhat(k, from); }

    std::size_t index(int k, NodeId x) const {
        return static_cast<std::size_t>(k) * static_cast<std::size_t>(n_) +
               static_cast<std::size_t>(x);
    }

    void save_checkpoint(const std::string& path, long iteration) const;
    static std::pair<PotentialTable, long> load_checkpoint(const std::string& path);

private:
    TimeGrid grid_;
    int n_ = 0;
    std::vector<double> y_;     // (K+1) x N
    std::vector<double> yhat_;  // (K+1) x N
};

/// Exponent clip bound for controlled rates; clipping is counted, not fatal.
constexpr double kExponentClip = 30.0;

double clip_exponent(double z, EngineTelemetry* telemetry);

/// u_k(y,x) = r_k(y,x) exp(Y_k(y) - Y_k(x)) on the forward edge (x,y).
double forward_rate(const PotentialTable& tables, const RateGenerator& reference, int k, NodeId x,
                    NodeId y, EngineTelemetry* telemetry = nullptr);

/// Backward rate at backward grid index k on the reversed edge (x,y), i.e.
/// (y,x) in the forward graph: r and Yhat are read at the mirrored forward
/// index K - k.
double backward_rate(const PotentialTable& tables, const RateGenerator& reference, int k, NodeId x,
                     NodeId y, EngineTelemetry* telemetry = nullptr);

/// Theorem rate from a dual potential: r_k(y,x) exp(-V(y) + V(x)). Identical
/// to forward_rate with Y = -V.
double optimal_rate_from_dual(const std::vector<double>& v, const RateGenerator& reference, int k,
                              NodeId x, NodeId y);

/// Forward controlled policy u = r exp(Z) over the reference graph.
class ForwardPotentialPolicy : public RatePolicy {
public:
    ForwardPotentialPolicy(std::shared_ptr<const PotentialTable> tables,
                           std::shared_ptr<const RateGenerator> reference,
                           std::shared_ptr<EngineTelemetry> telemetry = nullptr)
        : tables_(std::move(tables)), reference_(std::move(reference)),
          telemetry_(std::move(telemetry)) {}

    Direction direction() const override { return Direction::Forward; }
    const DirectedGraph& rollout_graph() const override { return reference_->graph(); }
    double rate(int k, NodeId /*x*/, EdgeId e) const override {
        const Edge& ed = reference_->graph().edge(e);
        const double z = clip_exponent(tables_->z(k, ed.dst, ed.src), telemetry_.get());
        return reference_->rate(k, e) * std::exp(z);
    }
    NodeId next_node(EdgeId e) const override { return reference_->graph().edge(e).dst; }

private:
    std::shared_ptr<const PotentialTable> tables_;
    std::shared_ptr<const RateGenerator> reference_;
    std::shared_ptr<EngineTelemetry> telemetry_;
};

/// Backward controlled policy on reverse(G): from x, candidates are forward
/// in-edges of x; rates are time-mirrored r exp(Zhat).
class BackwardPotentialPolicy : public RatePolicy {
public:
    BackwardPotentialPolicy(std::shared_ptr<const PotentialTable> tables,
                            std::shared_ptr<const RateGenerator> reference,
                            std::shared_ptr<EngineTelemetry> telemetry = nullptr);

    Direction direction() const override { return Direction::Backward; }
    const DirectedGraph& rollout_graph() const override { return *reversed_; }
    double rate(int k, NodeId x, EdgeId e) const override;
    NodeId next_node(EdgeId e) const override { return reversed_->edge(e).dst; }

private:
    std::shared_ptr<const PotentialTable> tables_;
    std::shared_ptr<const RateGenerator> reference_;
    std::shared_ptr<const DirectedGraph> reversed_;
    std::shared_ptr<EngineTelemetry> telemetry_;
};

}  // namespace gsbog
