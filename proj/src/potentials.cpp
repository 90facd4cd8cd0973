#include "gsbog/potentials.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gsbog {

PotentialTable::PotentialTable(TimeGrid grid, int node_count)
    : grid_(grid), n_(node_count) {
    if (node_count <= 0) throw std::invalid_argument("PotentialTable: node_count must be positive");
    const std::size_t size =
        static_cast<std::size_t>(grid.points()) * static_cast<std::size_t>(node_count);
    y_.assign(size, 0.0);
    yhat_.assign(size, 0.0);
}

double clip_exponent(double z, EngineTelemetry* telemetry) {
    if (z > kExponentClip) {
        if (telemetry) telemetry->saturation_count.fetch_add(1, std::memory_order_relaxed);
        return kExponentClip;
    }
    if (z < -kExponentClip) {
        if (telemetry) telemetry->saturation_count.fetch_add(1, std::memory_order_relaxed);
        return -kExponentClip;
    }
    return z;
}

double forward_rate(const PotentialTable& tables, const RateGenerator& reference, int k, NodeId x,
                    NodeId y, EngineTelemetry* telemetry) {
    const auto e = reference.graph().find_edge(x, y);
    if (!e)
        throw std::invalid_argument("forward_rate: (" + std::to_string(x) + "," +
                                    std::to_string(y) + ") is not an edge");
    const double z = clip_exponent(tables.z(k, y, x), telemetry);
    return reference.rate(k, *e) * std::exp(z);
}

double backward_rate(const PotentialTable& tables, const RateGenerator& reference, int k, NodeId x,
                     NodeId y, EngineTelemetry* telemetry) {
    // Backward jump x -> y traverses the forward edge (y, x) at mirrored time.
    const auto e = reference.graph().find_edge(y, x);
    if (!e)
        throw std::invalid_argument("backward_rate: (" + std::to_string(x) + "," +
                                    std::to_string(y) + ") is not a reversed edge");
    const int m = tables.grid().steps - k;
    const double zhat = clip_exponent(tables.zhat(m, y, x), telemetry);
    return reference.rate(m, *e) * std::exp(zhat);
}

double optimal_rate_from_dual(const std::vector<double>& v, const RateGenerator& reference, int k,
                              NodeId x, NodeId y) {
    const auto e = reference.graph().find_edge(x, y);
    if (!e)
        throw std::invalid_argument("optimal_rate_from_dual: (" + std::to_string(x) + "," +
                                    std::to_string(y) + ") is not an edge");
    return reference.rate(k, *e) *
           std::exp(-v[static_cast<std::size_t>(y)] + v[static_cast<std::size_t>(x)]);
}

BackwardPotentialPolicy::BackwardPotentialPolicy(std::shared_ptr<const PotentialTable> tables,
                                                 std::shared_ptr<const RateGenerator> reference,
                                                 std::shared_ptr<EngineTelemetry> telemetry)
    : tables_(std::move(tables)),
      reference_(std::move(reference)),
      reversed_(std::make_shared<const DirectedGraph>(reference_->graph().reversed())),
      telemetry_(std::move(telemetry)) {}

double BackwardPotentialPolicy::rate(int k, NodeId x, EdgeId e) const {
    // Edge ids are shared between the graph and its reversal; e is (x -> y)
    // in reverse(G) and (y -> x) in G.
    const NodeId y = reversed_->edge(e).dst;
    const int m = tables_->grid().steps - k;
    const double zhat = clip_exponent(tables_->yhat(m, y) - tables_->yhat(m, x), telemetry_.get());
    return reference_->rate(m, e) * std::exp(zhat);
}

void PotentialTable::save_checkpoint(const std::string& path, long iteration) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    nlohmann::json header;
    header["K"] = grid_.steps;
    header["N"] = n_;
    header["dt"] = grid_.dt;
    header["iteration"] = iteration;
    const std::string head = header.dump();
    out << head << "\n";
    out.write(reinterpret_cast<const char*>(y_.data()),
              static_cast<std::streamsize>(y_.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(yhat_.data()),
              static_cast<std::streamsize>(yhat_.size() * sizeof(double)));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

std::pair<PotentialTable, long> PotentialTable::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string head;
    std::getline(in, head);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(head);
    } catch (const nlohmann::json::parse_error& err) {
        throw std::runtime_error("checkpoint header parse error in " + path + ": " + err.what());
    }
    PotentialTable tables(TimeGrid(header.at("K").get<int>()), header.at("N").get<int>());
    const long iteration = header.at("iteration").get<long>();
    in.read(reinterpret_cast<char*>(tables.y_.data()),
            static_cast<std::streamsize>(tables.y_.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(tables.yhat_.data()),
            static_cast<std::streamsize>(tables.yhat_.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint truncated: " + path);
    return {std::move(tables), iteration};
}

}  // namespace gsbog
