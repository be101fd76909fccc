#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace sdf3d {

// Resource and pipeline-depth constants of the block model. The defaults are
// the bundled values; a calibration file may override any subset by name.
struct Calibration {
    std::int64_t lut_per_stream = 300;
    std::int64_t lut_per_dsp = 50;
    std::int64_t ff_per_stream = 400;
    std::int64_t ff_per_dsp = 60;
    std::int64_t bram_words = 1024;
    std::int64_t word_bits = 16;

    std::int64_t dsp_per_stream_relu = 0;
    std::int64_t dsp_per_stream_sigmoid = 2;
    std::int64_t dsp_per_stream_swish = 2;
    std::int64_t dsp_per_stream_add = 0;
    std::int64_t dsp_per_stream_mul = 2;
    std::int64_t dsp_per_stream_gap = 1;

    std::int64_t depth_activation = 2;
    std::int64_t depth_eltwise = 2;
    std::int64_t depth_gap_prior = 2;

    // Handshake FIFO words per stream on every arc.
    std::int64_t fifo_words_per_stream = 2;

    friend bool operator==(const Calibration&, const Calibration&) = default;
};

Calibration parse_calibration(std::string_view document);
Calibration load_calibration(const std::string& path);
std::string serialize_calibration(const Calibration& c);

} // namespace sdf3d
