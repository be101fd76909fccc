#pragma once

#include "sdf3d/hwblocks.hpp"
#include "sdf3d/rational.hpp"

#include <string>
#include <string_view>

namespace sdf3d {

struct DeviceSpec {
    std::string name;
    std::int64_t dsp = 0;
    std::int64_t bram18k = 0;
    std::int64_t lut = 0;
    std::int64_t ff = 0;
    // Off-chip bandwidth in 16-bit words per design clock cycle.
    Rational bandwidth{8};
    double clock_hz = 0.0;
    double t_reconfig = 0.0;

    ResourceEstimate capacity() const { return {dsp, bram18k, lut, ff}; }
    // Words per cycle granted to each of the partition's memory streams.
    Rational memory_rate() const { return bandwidth / Rational(2); }
};

DeviceSpec parse_device(std::string_view document);
DeviceSpec load_device(const std::string& path);
std::string serialize_device(const DeviceSpec& d);

} // namespace sdf3d
