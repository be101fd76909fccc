#pragma once

#include "sdf3d/sdfcore.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sdf3d {

struct SimConfig {
    std::int64_t batch = 1;
    // Overrides the mode the blocks were built with.
    std::optional<GapMode> gap_mode;
    std::int64_t max_cycles = 100'000'000;
    // Attach integer payloads to input tokens and record GAP outputs.
    bool payloads = false;
    // Per-cycle CSV rows (cycle,node,fired,stalled,occupancy); small runs only.
    std::ostream* trace = nullptr;
};

struct NodeStats {
    std::string name;
    std::int64_t busy_cycles = 0;
    std::int64_t stall_cycles = 0;
    std::int64_t first_cycle = -1;
    std::int64_t last_cycle = -1;
    std::int64_t items_done = 0;
    double observed_ii = 0.0; // mean spacing of item starts (span if B = 1)
};

struct FifoStats {
    std::size_t arc = 0;
    std::size_t consumer = 0;
    std::int64_t capacity = 0;
    std::int64_t max_occupancy = 0;
    std::int64_t produced = 0;
    std::int64_t consumed = 0;
    std::int64_t final_occupancy = 0;
    bool overflow = false;
};

struct SimResult {
    std::int64_t total_cycles = 0;
    bool deadlock = false;
    bool truncated = false;
    std::vector<NodeStats> nodes; // indexed like SdfGraph::nodes
    std::vector<FifoStats> fifos; // one per (arc, consumer)
    // With payloads: per GAP layer, the C values emitted for each item, and
    // the exact per-channel averages of each item it consumed.
    std::map<std::string, std::vector<std::vector<double>>> gap_emitted;
    std::map<std::string, std::vector<std::vector<double>>> gap_exact;

    bool completed() const { return !deadlock && !truncated; }
};

// Payload of token `k` in item `item` at the partition input.
double input_payload(std::int64_t item, std::int64_t k);

SimResult simulate(const SdfGraph& g, const SimConfig& cfg);

// depth_total + ii_max * (B - 1), in cycles.
double predicted_cycles(const SdfGraph& g, const Rational& ii_max, std::int64_t batch);

// Mean of |analytic - sim| / sim over the runs, in percent.
double mape(const std::vector<std::pair<double, double>>& analytic_vs_sim);

} // namespace sdf3d
