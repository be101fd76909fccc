#pragma once

#include "sdf3d/calibration.hpp"
#include "sdf3d/model_ir.hpp"
#include "sdf3d/rational.hpp"

#include <compare>
#include <cstdint>
#include <utility>
#include <vector>

namespace sdf3d {

// How global average pooling feeds its consumers: after a full reduction of
// the current item, or immediately from the previous item's stored result.
enum class GapMode { Exact, PriorBatch };

std::string_view to_string(GapMode m);
GapMode parse_gap_mode(std::string_view s);

struct ParallelismConfig {
    std::int64_t s_in = 1;
    std::int64_t s_out = 1;
    std::int64_t p_mac = 1;

    friend auto operator<=>(const ParallelismConfig&, const ParallelismConfig&) = default;
};

struct ResourceEstimate {
    std::int64_t dsp = 0;
    std::int64_t bram18k = 0;
    std::int64_t lut = 0;
    std::int64_t ff = 0;

    ResourceEstimate& operator+=(const ResourceEstimate& o)
    {
        dsp += o.dsp;
        bram18k += o.bram18k;
        lut += o.lut;
        ff += o.ff;
        return *this;
    }
    friend ResourceEstimate operator+(ResourceEstimate a, const ResourceEstimate& b) { return a += b; }
    friend ResourceEstimate operator-(ResourceEstimate a, const ResourceEstimate& b)
    {
        a.dsp -= b.dsp;
        a.bram18k -= b.bram18k;
        a.lut -= b.lut;
        a.ff -= b.ff;
        return a;
    }
    // Component-wise a <= b.
    bool fits_within(const ResourceEstimate& cap) const
    {
        return dsp <= cap.dsp && bram18k <= cap.bram18k && lut <= cap.lut && ff <= cap.ff;
    }
    friend bool operator==(const ResourceEstimate&, const ResourceEstimate&) = default;
};

// A layer bound to a parallelism configuration. `node` is borrowed: the
// ModelGraph owning it must outlive the block.
struct HardwareBlock {
    const LayerNode* node = nullptr;
    ParallelismConfig cfg;
    GapMode gap_mode = GapMode::Exact;

    std::vector<std::int64_t> workload_in; // elements per batch item, per input
    std::int64_t workload_out = 0;
    std::vector<Rational> r_in; // elements per cycle per stream, per input
    Rational r_out;
    std::int64_t cycles = 0;
    std::int64_t depth = 0;
    ResourceEstimate rsc;
};

// Validates `cfg` against the node's divisibility rules; throws ConfigError
// naming the offending parameter.
void check_config(const LayerNode& node, const ParallelismConfig& cfg);

HardwareBlock build_block(const LayerNode& node, const ParallelismConfig& cfg, const Calibration& calib = {},
                          GapMode gap_mode = GapMode::Exact);

// Per-parameter candidate values for one layer. For depthwise and non-conv
// layers s_out is tied to s_in and `s_out` is left empty.
struct TunableSpace {
    std::vector<std::int64_t> s_in;
    std::vector<std::int64_t> s_out;
    std::vector<std::int64_t> p_mac;
    bool ties_s_out() const { return s_out.empty(); }
    std::size_t size() const;
};

TunableSpace tunable_space(const LayerNode& node);

// Every divisibility-feasible configuration, in lexicographic order.
std::vector<ParallelismConfig> feasible_configs(const LayerNode& node);

std::pair<Rational, Rational> equalize_elementwise(const Rational& r_in1, const Rational& r_in2);

std::vector<std::int64_t> divisors(std::int64_t n);

} // namespace sdf3d
