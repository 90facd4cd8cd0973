#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gsbog/grid.hpp"

namespace gsbog {

using NodeId = std::int32_t;
using EdgeId = std::int32_t;

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;
};

/// Immutable directed graph with adjacency and reverse-adjacency indices.
/// Node ids are dense integers in [0, node_count). Self-loops and duplicate
/// directed edges are rejected at construction.
class DirectedGraph {
public:
    DirectedGraph(int node_count, std::vector<Edge> edges,
                  std::vector<double> capacities = {}, std::vector<double> costs = {});

    int node_count() const { return node_count_; }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(EdgeId e) const { return edges_[static_cast<std::size_t>(e)]; }

    bool has_capacities() const { return !capacities_.empty(); }
    bool has_costs() const { return !costs_.empty(); }
    double capacity(EdgeId e) const { return capacities_[static_cast<std::size_t>(e)]; }
    double cost(EdgeId e) const { return costs_[static_cast<std::size_t>(e)]; }
    const std::vector<double>& capacities() const { return capacities_; }
    const std::vector<double>& costs() const { return costs_; }

    /// Edge ids leaving x (x is the source).
    const std::vector<EdgeId>& out_edges(NodeId x) const {
        return out_edges_[static_cast<std::size_t>(x)];
    }
    /// Edge ids entering x (x is the destination).
    const std::vector<EdgeId>& in_edges(NodeId x) const {
        return in_edges_[static_cast<std::size_t>(x)];
    }

    std::optional<EdgeId> find_edge(NodeId src, NodeId dst) const;

    /// Graph with every edge (x,y) replaced by (y,x); capacities/costs carried over.
    DirectedGraph reversed() const;

private:
    int node_count_;
    std::vector<Edge> edges_;
    std::vector<double> capacities_;
    std::vector<double> costs_;
    std::vector<std::vector<EdgeId>> out_edges_;
    std::vector<std::vector<EdgeId>> in_edges_;
};

/// Sparse CTMC rate generator supported on the edges of a DirectedGraph.
/// Stores only off-diagonal entries rate(e) = r(dst, src) >= 0, the jump rate
/// src -> dst. Diagonals are never stored: r(x,x) = -sum of out-rates, so
/// every column of the dense generator sums to zero by construction.
/// Time dependence is either constant or a per-grid-index table.
class RateGenerator {
public:
    RateGenerator(std::shared_ptr<const DirectedGraph> graph, std::vector<double> edge_rates);
    RateGenerator(std::shared_ptr<const DirectedGraph> graph,
                  std::vector<std::vector<double>> edge_rates_by_step);

    const DirectedGraph& graph() const { return *graph_; }
    std::shared_ptr<const DirectedGraph> graph_ptr() const { return graph_; }
    bool time_dependent() const { return !rates_by_step_.empty(); }

    double rate(int k, EdgeId e) const {
        if (rates_by_step_.empty()) return rates_[static_cast<std::size_t>(e)];
        return rates_by_step_[static_cast<std::size_t>(k)][static_cast<std::size_t>(e)];
    }

    /// Total out-rate of x at grid index k (the negated diagonal entry).
    double out_rate_total(int k, NodeId x) const;

    /// Dense generator at grid index k, column-major semantics: dense[y][x] = r(y,x).
    std::vector<std::vector<double>> dense(int k) const;

private:
    void validate(const std::vector<double>& rates) const;

    std::shared_ptr<const DirectedGraph> graph_;
    std::vector<double> rates_;
    std::vector<std::vector<double>> rates_by_step_;
};

RateGenerator build_generator(std::shared_ptr<const DirectedGraph> graph,
                              std::vector<double> edge_rates);

/// Probability vector over nodes. Entries nonnegative, summing to 1 within 1e-9.
struct Marginal {
    std::vector<double> p;

    Marginal() = default;
    explicit Marginal(std::vector<double> probs);

    int size() const { return static_cast<int>(p.size()); }
    double operator[](NodeId x) const { return p[static_cast<std::size_t>(x)]; }

    static Marginal delta(int node_count, NodeId x);
    static Marginal uniform(int node_count);

    std::vector<NodeId> support(double eps = 0.0) const;
    void validate() const;
};

enum class CostKind { Zero, NodeTable, Congestion };

/// Declarative running-cost f_t(x, p_t) specification; evaluated by the costs module.
struct RunningCostSpec {
    CostKind kind = CostKind::Zero;
    std::vector<double> node_table;        // NodeTable kind
    double weight = 0.0;                   // Congestion kind
    std::vector<NodeId> exclude;           // Congestion kind: nodes charged zero
    double b_scale = 1.0;                  // Congestion kind: count-exposure scale
};

/// A complete solvable problem: graph + reference dynamics + endpoint
/// marginals + horizon + running cost. Immutable after construction.
struct ProblemInstance {
    std::shared_ptr<const DirectedGraph> graph;
    std::shared_ptr<const RateGenerator> reference;
    Marginal mu;
    Marginal nu;
    TimeGrid grid;
    RunningCostSpec cost;
    std::uint64_t seed = 0;
    double mass = 1.0;  // physical transported mass M, used for capacity scaling

    // Optional per-node annotations for steering tasks.
    std::vector<double> energies;
    std::vector<NodeId> basin_unfolded;
    std::vector<NodeId> basin_folded;

    void validate() const;
    /// supp(mu) union supp(nu); the endpoint set excluded from congestion metrics.
    std::vector<NodeId> endpoint_nodes() const;
};

// --- DIMACS min-cost-flow ingestion ------------------------------------------

struct DimacsSummary {
    int node_count = 0;
    int arc_count = 0;
    double mean_out_degree = 0.0;
    double min_cost = 0.0, median_cost = 0.0, mean_cost = 0.0, max_cost = 0.0;
    double min_cap = 0.0, median_cap = 0.0, mean_cap = 0.0, max_cap = 0.0;
    /// (capacity value, arc count, share of arcs), sorted by capacity.
    std::vector<std::tuple<double, int, double>> capacity_histogram;
};

struct DimacsProblem {
    std::shared_ptr<const DirectedGraph> graph;  // with capacities and costs
    std::vector<double> imbalances;              // signed supply(+)/demand(-) per node
    DimacsSummary summary;
};

/// Parse a DIMACS min-cost-flow file (`p min`, `n`, `a` records). 1-based ids
/// are mapped to 0-based; nonzero lower bounds and duplicate arcs are rejected.
DimacsProblem load_dimacs_mcf(const std::string& path);
DimacsProblem parse_dimacs_mcf(std::istream& in, const std::string& origin);

void write_dimacs_mcf(const DimacsProblem& problem, std::ostream& out);

enum class EndpointMode { Uniform, VolumeWeighted };

/// Split signed imbalances into endpoint marginals: mu on supply (+) nodes,
/// nu on demand (-) nodes, uniform or proportional to |imbalance|.
std::pair<Marginal, Marginal> endpoints_from_imbalances(const std::vector<double>& imbalances,
                                                        EndpointMode mode);

// --- Reference-rate presets ---------------------------------------------------

enum class RatePreset { Uniform, CapacityProportional, InverseCost };

/// Edge rates for a preset, scaled so the mean edge rate equals base_rate.
std::vector<double> preset_edge_rates(const DirectedGraph& graph, RatePreset preset,
                                      double base_rate);

// --- JSON instance format ------------------------------------------------------

ProblemInstance load_instance_json(const std::string& path);
ProblemInstance parse_instance_json(const std::string& text, const std::string& origin);
std::string instance_to_json(const ProblemInstance& instance);

}  // namespace gsbog
