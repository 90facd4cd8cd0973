#include "gsbog/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace gsbog {

namespace {

std::uint64_t pack_edge(NodeId src, NodeId dst) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(src)) << 32) |
           static_cast<std::uint32_t>(dst);
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

DirectedGraph::DirectedGraph(int node_count, std::vector<Edge> edges,
                             std::vector<double> capacities, std::vector<double> costs)
    : node_count_(node_count),
      edges_(std::move(edges)),
      capacities_(std::move(capacities)),
      costs_(std::move(costs)) {
    if (node_count_ <= 0) throw std::invalid_argument("DirectedGraph: node_count must be positive");
    if (!capacities_.empty() && capacities_.size() != edges_.size())
        throw std::invalid_argument("DirectedGraph: capacity list length != edge count");
    if (!costs_.empty() && costs_.size() != edges_.size())
        throw std::invalid_argument("DirectedGraph: cost list length != edge count");

    out_edges_.assign(static_cast<std::size_t>(node_count_), {});
    in_edges_.assign(static_cast<std::size_t>(node_count_), {});
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(edges_.size() * 2);
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        const Edge& e = edges_[i];
        if (e.src < 0 || e.src >= node_count_ || e.dst < 0 || e.dst >= node_count_)
            throw std::invalid_argument("DirectedGraph: edge " + std::to_string(i) +
                                        " has node id out of range");
        if (e.src == e.dst)
            throw std::invalid_argument("DirectedGraph: self-loop at node " +
                                        std::to_string(e.src));
        if (!seen.insert(pack_edge(e.src, e.dst)).second)
            throw std::invalid_argument("DirectedGraph: duplicate edge " + std::to_string(e.src) +
                                        "->" + std::to_string(e.dst));
        out_edges_[static_cast<std::size_t>(e.src)].push_back(static_cast<EdgeId>(i));
        in_edges_[static_cast<std::size_t>(e.dst)].push_back(static_cast<EdgeId>(i));
    }
    for (std::size_t i = 0; i < capacities_.size(); ++i)
        if (!(capacities_[i] >= 0.0) || !std::isfinite(capacities_[i]))
            throw std::invalid_argument("DirectedGraph: capacity of edge " + std::to_string(i) +
                                        " must be finite and nonnegative");
    for (std::size_t i = 0; i < costs_.size(); ++i)
        if (!(costs_[i] >= 0.0) || !std::isfinite(costs_[i]))
            throw std::invalid_argument("DirectedGraph: cost of edge " + std::to_string(i) +
                                        " must be finite and nonnegative");
}

std::optional<EdgeId> DirectedGraph::find_edge(NodeId src, NodeId dst) const {
    for (EdgeId e : out_edges_[static_cast<std::size_t>(src)])
        if (edges_[static_cast<std::size_t>(e)].dst == dst) return e;
    return std::nullopt;
}

DirectedGraph DirectedGraph::reversed() const {
    std::vector<Edge> rev(edges_.size());
    for (std::size_t i = 0; i < edges_.size(); ++i)
        rev[i] = Edge{edges_[i].dst, edges_[i].src};
    return DirectedGraph(node_count_, std::move(rev), capacities_, costs_);
}

RateGenerator::RateGenerator(std::shared_ptr<const DirectedGraph> graph,
                             std::vector<double> edge_rates)
    : graph_(std::move(graph)), rates_(std::move(edge_rates)) {
    if (!graph_) throw std::invalid_argument("RateGenerator: null graph");
    if (rates_.size() != static_cast<std::size_t>(graph_->edge_count()))
        throw std::invalid_argument("RateGenerator: rate list length != edge count");
    validate(rates_);
}

RateGenerator::RateGenerator(std::shared_ptr<const DirectedGraph> graph,
                             std::vector<std::vector<double>> edge_rates_by_step)
    : graph_(std::move(graph)), rates_by_step_(std::move(edge_rates_by_step)) {
    if (!graph_) throw std::invalid_argument("RateGenerator: null graph");
    if (rates_by_step_.empty())
        throw std::invalid_argument("RateGenerator: empty per-step rate table");
    for (const auto& row : rates_by_step_) {
        if (row.size() != static_cast<std::size_t>(graph_->edge_count()))
            throw std::invalid_argument("RateGenerator: rate row length != edge count");
        validate(row);
    }
}

void RateGenerator::validate(const std::vector<double>& rates) const {
    for (std::size_t i = 0; i < rates.size(); ++i) {
        if (!std::isfinite(rates[i]) || rates[i] < 0.0) {
            const Edge& e = graph_->edge(static_cast<EdgeId>(i));
            throw std::invalid_argument("RateGenerator: rate on edge " + std::to_string(e.src) +
                                        "->" + std::to_string(e.dst) +
                                        " must be finite and nonnegative, got " +
                                        std::to_string(rates[i]));
        }
    }
}

double RateGenerator::out_rate_total(int k, NodeId x) const {
    double total = 0.0;
    for (EdgeId e : graph_->out_edges(x)) total += rate(k, e);
    return total;
}

std::vector<std::vector<double>> RateGenerator::dense(int k) const {
    const int n = graph_->node_count();
    std::vector<std::vector<double>> m(static_cast<std::size_t>(n),
                                       std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (EdgeId e = 0; e < graph_->edge_count(); ++e) {
        const Edge& ed = graph_->edge(e);
        const double r = rate(k, e);
        m[static_cast<std::size_t>(ed.dst)][static_cast<std::size_t>(ed.src)] += r;
        m[static_cast<std::size_t>(ed.src)][static_cast<std::size_t>(ed.src)] -= r;
    }
    return m;
}

RateGenerator build_generator(std::shared_ptr<const DirectedGraph> graph,
                              std::vector<double> edge_rates) {
    return RateGenerator(std::move(graph), std::move(edge_rates));
}

Marginal::Marginal(std::vector<double> probs) : p(std::move(probs)) { validate(); }

void Marginal::validate() const {
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(p[i]) || p[i] < 0.0)
            throw std::invalid_argument("Marginal: entry " + std::to_string(i) +
                                        " is negative or non-finite");
        sum += p[i];
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("Marginal: entries sum to " + std::to_string(sum) +
                                    ", expected 1 within 1e-9");
}

Marginal Marginal::delta(int node_count, NodeId x) {
    std::vector<double> p(static_cast<std::size_t>(node_count), 0.0);
    p[static_cast<std::size_t>(x)] = 1.0;
    return Marginal(std::move(p));
}

Marginal Marginal::uniform(int node_count) {
    std::vector<double> p(static_cast<std::size_t>(node_count),
                          1.0 / static_cast<double>(node_count));
    return Marginal(std::move(p));
}

std::vector<NodeId> Marginal::support(double eps) const {
    std::vector<NodeId> s;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > eps) s.push_back(static_cast<NodeId>(i));
    return s;
}

void ProblemInstance::validate() const {
    if (!graph || !reference) throw std::invalid_argument("ProblemInstance: missing graph or reference");
    if (mu.size() != graph->node_count() || nu.size() != graph->node_count())
        throw std::invalid_argument("ProblemInstance: marginal length != node count");
    mu.validate();
    nu.validate();
    if (cost.kind == CostKind::NodeTable &&
        cost.node_table.size() != static_cast<std::size_t>(graph->node_count()))
        throw std::invalid_argument("ProblemInstance: node_table cost length != node count");
    if (!energies.empty() && energies.size() != static_cast<std::size_t>(graph->node_count()))
        throw std::invalid_argument("ProblemInstance: energies length != node count");
}

std::vector<NodeId> ProblemInstance::endpoint_nodes() const {
    std::vector<NodeId> nodes = mu.support();
    for (NodeId x : nu.support()) nodes.push_back(x);
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    return nodes;
}

// --- DIMACS -------------------------------------------------------------------

namespace {

[[noreturn]] void parse_fail(const std::string& origin, int line, const std::string& what) {
    throw std::invalid_argument(origin + ":" + std::to_string(line) + ": " + what);
}

DimacsSummary summarize(const DirectedGraph& g) {
    DimacsSummary s;
    s.node_count = g.node_count();
    s.arc_count = g.edge_count();
    s.mean_out_degree = g.node_count() > 0
                            ? static_cast<double>(g.edge_count()) / static_cast<double>(g.node_count())
                            : 0.0;
    if (g.has_costs()) {
        std::vector<double> c = g.costs();
        std::sort(c.begin(), c.end());
        s.min_cost = c.front();
        s.max_cost = c.back();
        s.median_cost = quantile_sorted(c, 0.5);
        s.mean_cost = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
    }
    if (g.has_capacities()) {
        std::vector<double> c = g.capacities();
        std::sort(c.begin(), c.end());
        s.min_cap = c.front();
        s.max_cap = c.back();
        s.median_cap = quantile_sorted(c, 0.5);
        s.mean_cap = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
        for (std::size_t i = 0; i < c.size();) {
            std::size_t j = i;
            while (j < c.size() && c[j] == c[i]) ++j;
            s.capacity_histogram.emplace_back(c[i], static_cast<int>(j - i),
                                              static_cast<double>(j - i) /
                                                  static_cast<double>(c.size()));
            i = j;
        }
    }
    return s;
}

}  // namespace

DimacsProblem parse_dimacs_mcf(std::istream& in, const std::string& origin) {
    int node_count = -1;
    long declared_arcs = -1;
    std::vector<Edge> edges;
    std::vector<double> caps, costs;
    std::vector<double> imbalances;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;  // blank line
        if (tag == "c") continue;
        if (tag == "p") {
            if (node_count >= 0) parse_fail(origin, line_no, "duplicate problem line");
            std::string kind;
            long n = 0, m = 0;
            if (!(ls >> kind >> n >> m) || kind != "min")
                parse_fail(origin, line_no, "malformed problem line, expected 'p min N M'");
            if (n <= 0) parse_fail(origin, line_no, "node count must be positive");
            node_count = static_cast<int>(n);
            declared_arcs = m;
            imbalances.assign(static_cast<std::size_t>(node_count), 0.0);
        } else if (tag == "n") {
            if (node_count < 0) parse_fail(origin, line_no, "node record before problem line");
            long id = 0;
            double flow = 0.0;
            if (!(ls >> id >> flow)) parse_fail(origin, line_no, "malformed node record");
            if (id < 1 || id > node_count) parse_fail(origin, line_no, "node id out of range");
            imbalances[static_cast<std::size_t>(id - 1)] += flow;
        } else if (tag == "a") {
            if (node_count < 0) parse_fail(origin, line_no, "arc record before problem line");
            long src = 0, dst = 0;
            double low = 0.0, cap = 0.0, cost = 0.0;
            if (!(ls >> src >> dst >> low >> cap >> cost))
                parse_fail(origin, line_no, "malformed arc record");
            if (src < 1 || src > node_count || dst < 1 || dst > node_count)
                parse_fail(origin, line_no, "arc endpoint out of range");
            if (low != 0.0)
                parse_fail(origin, line_no, "nonzero lower bound not supported");
            edges.push_back(Edge{static_cast<NodeId>(src - 1), static_cast<NodeId>(dst - 1)});
            caps.push_back(cap);
            costs.push_back(cost);
        } else {
            parse_fail(origin, line_no, "unknown record '" + tag + "'");
        }
    }
    if (node_count < 0) parse_fail(origin, line_no, "missing problem line");
    if (declared_arcs >= 0 && declared_arcs != static_cast<long>(edges.size()))
        parse_fail(origin, line_no,
                   "arc count mismatch: declared " + std::to_string(declared_arcs) + ", found " +
                       std::to_string(edges.size()));
    const double total =
        std::accumulate(imbalances.begin(), imbalances.end(), 0.0);
    if (std::abs(total) > 1e-9)
        parse_fail(origin, line_no,
                   "imbalances do not sum to zero (total " + std::to_string(total) + ")");

    DimacsProblem problem;
    try {
        problem.graph = std::make_shared<const DirectedGraph>(node_count, std::move(edges),
                                                              std::move(caps), std::move(costs));
    } catch (const std::invalid_argument& err) {
        throw std::invalid_argument(origin + ": " + err.what());
    }
    problem.imbalances = std::move(imbalances);
    problem.summary = summarize(*problem.graph);
    return problem;
}

DimacsProblem load_dimacs_mcf(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open DIMACS file: " + path);
    return parse_dimacs_mcf(in, path);
}

void write_dimacs_mcf(const DimacsProblem& problem, std::ostream& out) {
    const DirectedGraph& g = *problem.graph;
    out << "p min " << g.node_count() << " " << g.edge_count() << "\n";
    for (std::size_t i = 0; i < problem.imbalances.size(); ++i)
        if (problem.imbalances[i] != 0.0)
            out << "n " << (i + 1) << " " << problem.imbalances[i] << "\n";
    for (EdgeId e = 0; e < g.edge_count(); ++e) {
        const Edge& ed = g.edge(e);
        out << "a " << (ed.src + 1) << " " << (ed.dst + 1) << " 0 " << g.capacity(e) << " "
            << g.cost(e) << "\n";
    }
}

std::pair<Marginal, Marginal> endpoints_from_imbalances(const std::vector<double>& imbalances,
                                                        EndpointMode mode) {
    double supply = 0.0, demand = 0.0;
    int n_supply = 0, n_demand = 0;
    for (double b : imbalances) {
        if (b > 0.0) {
            supply += b;
            ++n_supply;
        } else if (b < 0.0) {
            demand -= b;
            ++n_demand;
        }
    }
    if (n_supply == 0 || n_demand == 0)
        throw std::invalid_argument("endpoints_from_imbalances: need nonempty supply and demand");
    std::vector<double> mu(imbalances.size(), 0.0), nu(imbalances.size(), 0.0);
    for (std::size_t i = 0; i < imbalances.size(); ++i) {
        const double b = imbalances[i];
        if (b > 0.0)
            mu[i] = mode == EndpointMode::VolumeWeighted ? b / supply
                                                         : 1.0 / static_cast<double>(n_supply);
        else if (b < 0.0)
            nu[i] = mode == EndpointMode::VolumeWeighted ? -b / demand
                                                         : 1.0 / static_cast<double>(n_demand);
    }
    return {Marginal(std::move(mu)), Marginal(std::move(nu))};
}

std::vector<double> preset_edge_rates(const DirectedGraph& graph, RatePreset preset,
                                      double base_rate) {
    const int m = graph.edge_count();
    std::vector<double> raw(static_cast<std::size_t>(m), 1.0);
    switch (preset) {
        case RatePreset::Uniform:
            break;
        case RatePreset::CapacityProportional: {
            if (!graph.has_capacities())
                throw std::invalid_argument("preset_edge_rates: graph has no capacities");
            for (EdgeId e = 0; e < m; ++e) raw[static_cast<std::size_t>(e)] = graph.capacity(e);
            break;
        }
        case RatePreset::InverseCost: {
            if (!graph.has_costs())
                throw std::invalid_argument("preset_edge_rates: graph has no costs");
            for (EdgeId e = 0; e < m; ++e)
                raw[static_cast<std::size_t>(e)] = 1.0 / std::max(graph.cost(e), 1e-9);
            break;
        }
    }
    const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / std::max(1, m);
    const double scale = mean > 0.0 ? base_rate / mean : 0.0;
    for (double& r : raw) r *= scale;
    return raw;
}

// --- JSON instance format -------------------------------------------------------

namespace {

using nlohmann::json;

RunningCostSpec cost_from_json(const json& j) {
    RunningCostSpec spec;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "zero") {
        spec.kind = CostKind::Zero;
    } else if (kind == "node_table") {
        spec.kind = CostKind::NodeTable;
        spec.node_table = j.at("table").get<std::vector<double>>();
    } else if (kind == "congestion") {
        spec.kind = CostKind::Congestion;
        spec.weight = j.at("weight").get<double>();
        if (j.contains("exclude")) spec.exclude = j.at("exclude").get<std::vector<NodeId>>();
        if (j.contains("b_scale")) spec.b_scale = j.at("b_scale").get<double>();
    } else {
        throw std::invalid_argument("unknown cost kind '" + kind + "'");
    }
    return spec;
}

json cost_to_json(const RunningCostSpec& spec) {
    json j;
    switch (spec.kind) {
        case CostKind::Zero:
            j["kind"] = "zero";
            break;
        case CostKind::NodeTable:
            j["kind"] = "node_table";
            j["table"] = spec.node_table;
            break;
        case CostKind::Congestion:
            j["kind"] = "congestion";
            j["weight"] = spec.weight;
            j["exclude"] = spec.exclude;
            j["b_scale"] = spec.b_scale;
            break;
    }
    return j;
}

Marginal marginal_from_pairs(const json& j, int node_count) {
    std::vector<double> p(static_cast<std::size_t>(node_count), 0.0);
    for (const auto& pair : j) {
        const NodeId id = pair.at(0).get<NodeId>();
        if (id < 0 || id >= node_count)
            throw std::invalid_argument("marginal node id out of range: " + std::to_string(id));
        p[static_cast<std::size_t>(id)] = pair.at(1).get<double>();
    }
    return Marginal(std::move(p));
}

json marginal_to_pairs(const Marginal& m) {
    json out = json::array();
    for (NodeId x : m.support()) out.push_back(json::array({x, m[x]}));
    return out;
}

}  // namespace

ProblemInstance parse_instance_json(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& err) {
        throw std::invalid_argument(origin + ": " + err.what());
    }
    try {
        const int n = j.at("nodes").get<int>();
        std::vector<Edge> edges;
        std::vector<double> rates, caps, costs;
        bool any_cap = false, any_cost = false;
        for (const auto& je : j.at("edges")) {
            edges.push_back(Edge{je.at("src").get<NodeId>(), je.at("dst").get<NodeId>()});
            rates.push_back(je.at("rate").get<double>());
            caps.push_back(je.value("cap", 0.0));
            costs.push_back(je.value("cost", 0.0));
            any_cap = any_cap || je.contains("cap");
            any_cost = any_cost || je.contains("cost");
        }
        ProblemInstance inst;
        inst.graph = std::make_shared<const DirectedGraph>(
            n, std::move(edges), any_cap ? std::move(caps) : std::vector<double>{},
            any_cost ? std::move(costs) : std::vector<double>{});
        inst.reference = std::make_shared<const RateGenerator>(inst.graph, std::move(rates));
        inst.mu = marginal_from_pairs(j.at("mu"), n);
        inst.nu = marginal_from_pairs(j.at("nu"), n);
        inst.grid = TimeGrid(j.at("K").get<int>());
        inst.seed = j.value("seed", 0ULL);
        inst.mass = j.value("mass", 1.0);
        if (j.contains("cost")) inst.cost = cost_from_json(j.at("cost"));
        if (j.contains("energies")) inst.energies = j.at("energies").get<std::vector<double>>();
        if (j.contains("basins")) {
            inst.basin_unfolded = j.at("basins").at("unfolded").get<std::vector<NodeId>>();
            inst.basin_folded = j.at("basins").at("folded").get<std::vector<NodeId>>();
        }
        inst.validate();
        return inst;
    } catch (const json::exception& err) {
        throw std::invalid_argument(origin + ": " + err.what());
    }
}

ProblemInstance load_instance_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open instance file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_instance_json(buf.str(), path);
}

std::string instance_to_json(const ProblemInstance& instance) {
    json j;
    j["nodes"] = instance.graph->node_count();
    json edges = json::array();
    for (EdgeId e = 0; e < instance.graph->edge_count(); ++e) {
        const Edge& ed = instance.graph->edge(e);
        json je;
        je["src"] = ed.src;
        je["dst"] = ed.dst;
        je["rate"] = instance.reference->rate(0, e);
        if (instance.graph->has_capacities()) je["cap"] = instance.graph->capacity(e);
        if (instance.graph->has_costs()) je["cost"] = instance.graph->cost(e);
        edges.push_back(je);
    }
    j["edges"] = edges;
    j["mu"] = marginal_to_pairs(instance.mu);
    j["nu"] = marginal_to_pairs(instance.nu);
    j["K"] = instance.grid.steps;
    j["seed"] = instance.seed;
    j["mass"] = instance.mass;
    j["cost"] = cost_to_json(instance.cost);
    if (!instance.energies.empty()) j["energies"] = instance.energies;
    if (!instance.basin_unfolded.empty() || !instance.basin_folded.empty())
        j["basins"] = {{"unfolded", instance.basin_unfolded}, {"folded", instance.basin_folded}};
    return j.dump(2);
}

}  // namespace gsbog
