#pragma once

#include <stdexcept>

namespace gsbog {

/// Uniform time grid on [0,1]: K steps, K+1 grid points, dt = 1/K.
struct TimeGrid {
    int steps = 1;
    double dt = 1.0;

    TimeGrid() = default;
    explicit TimeGrid(int K) : steps(K), dt(1.0 / static_cast<double>(K)) {
        if (K < 1) throw std::invalid_argument("TimeGrid: K must be >= 1");
    }

    int points() const { return steps + 1; }

    bool operator==(const TimeGrid& other) const { return steps == other.steps; }
};

}  // namespace gsbog
