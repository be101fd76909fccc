#include "sdf3d/hwblocks.hpp"

#include "sdf3d/error.hpp"

#include <algorithm>

namespace sdf3d {
namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t ceil_log2(std::int64_t v)
{
    std::int64_t bits = 0;
    while ((std::int64_t{1} << bits) < v)
        ++bits;
    return bits;
}

void require_divides(std::int64_t part, std::int64_t whole, const LayerNode& node, const char* param, const char* what)
{
    if (part < 1 || whole % part != 0)
        throw ConfigError("layer '" + node.id + "': " + param + "=" + std::to_string(part) + " does not divide " +
                          what + " " + std::to_string(whole));
}

std::int64_t activation_dsp(ActivationType t, const Calibration& c)
{
    switch (t) {
    case ActivationType::Relu:
        return c.dsp_per_stream_relu;
    case ActivationType::Sigmoid:
        return c.dsp_per_stream_sigmoid;
    case ActivationType::Swish:
        return c.dsp_per_stream_swish;
    }
    return 0;
}

ResourceEstimate stream_logic(std::int64_t streams, std::int64_t dsp, std::int64_t bram, const Calibration& c)
{
    return {dsp, bram, c.lut_per_stream * streams + c.lut_per_dsp * dsp, c.ff_per_stream * streams + c.ff_per_dsp * dsp};
}

} // namespace

std::string_view to_string(GapMode m) { return m == GapMode::Exact ? "exact" : "prior"; }

GapMode parse_gap_mode(std::string_view s)
{
    if (s == "exact" || s == "Exact")
        return GapMode::Exact;
    if (s == "prior" || s == "PriorBatch" || s == "prior-batch")
        return GapMode::PriorBatch;
    throw ArgumentError("unknown GAP mode '" + std::string(s) + "' (expected exact|prior)");
}

std::vector<std::int64_t> divisors(std::int64_t n)
{
    std::vector<std::int64_t> lo, hi;
    for (std::int64_t d = 1; d * d <= n; ++d) {
        if (n % d == 0) {
            lo.push_back(d);
            if (d != n / d)
                hi.push_back(n / d);
        }
    }
    lo.insert(lo.end(), hi.rbegin(), hi.rend());
    return lo;
}

void check_config(const LayerNode& node, const ParallelismConfig& cfg)
{
    const std::int64_t c_in = node.sp_in.at(0).channels;
    const std::int64_t c_out = node.sp_out.channels;
    require_divides(cfg.s_in, c_in, node, "s_in", "input channels");
    if (node.kind == LayerKind::Conv3D) {
        require_divides(cfg.s_out, c_out, node, "s_out", "output channels");
        require_divides(cfg.p_mac, node.conv().kernel_volume(), node, "p_mac", "kernel volume");
        if (node.is_depthwise() && cfg.s_out != cfg.s_in)
            throw ConfigError("layer '" + node.id + "': depthwise convolution requires s_out = s_in");
    } else {
        if (cfg.s_out != cfg.s_in)
            throw ConfigError("layer '" + node.id + "': s_out must equal s_in for " + std::string(to_string(node.kind)));
        if (cfg.p_mac != 1)
            throw ConfigError("layer '" + node.id + "': p_mac applies to Conv3D only");
    }
}

HardwareBlock build_block(const LayerNode& node, const ParallelismConfig& cfg, const Calibration& calib,
                          GapMode gap_mode)
{
    check_config(node, cfg);
    HardwareBlock b;
    b.node = &node;
    b.cfg = cfg;
    b.gap_mode = gap_mode;
    for (const auto& s : node.sp_in)
        b.workload_in.push_back(s.elements());
    b.workload_out = node.sp_out.elements();

    const auto& in = node.sp_in.front();
    const std::int64_t c_in = in.channels;
    const std::int64_t s_in = cfg.s_in;
    const std::int64_t s_out = cfg.s_out;

    switch (node.kind) {
    case LayerKind::Conv3D: {
        const auto& p = node.conv();
        const std::int64_t kvol = p.kernel_volume();
        const std::int64_t c_out = node.sp_out.channels;
        const std::int64_t spatial_out = node.sp_out.spatial();
        Rational compute;
        if (p.gp == 1)
            compute = Rational(spatial_out * (c_in / s_in) * (c_out / s_out) * (kvol / cfg.p_mac));
        else if (node.is_depthwise())
            compute = Rational(spatial_out * (c_in / s_in) * (kvol / cfg.p_mac));
        else
            compute = Rational(spatial_out * (kvol / cfg.p_mac) * p.gp) * Rational(c_in, p.gp * s_in) * Rational(c_out, s_out);
        // A stream moves at most one word per cycle, so reading the input or
        // writing the output can bound the block below its MAC schedule.
        b.cycles = std::max({compute.ceil(), ceil_div(b.workload_in[0], s_in), ceil_div(b.workload_out, s_out)});

        const std::int64_t line = (p.ks[0] - 1) * in.height * in.width + (p.ks[1] - 1) * in.width + (p.ks[2] - 1);
        b.depth = (c_in / s_in) * line + ceil_log2(std::max<std::int64_t>(cfg.p_mac, 2)) + kvol / cfg.p_mac;

        const std::int64_t dsp = node.is_depthwise() ? s_in * cfg.p_mac : s_in * s_out * cfg.p_mac;
        const std::int64_t window_words = c_in * (line + 1);
        b.rsc = stream_logic(s_in + s_out, dsp, ceil_div(window_words, calib.bram_words), calib);
        break;
    }
    case LayerKind::Activation: {
        b.cycles = ceil_div(b.workload_out, s_in);
        b.depth = calib.depth_activation;
        b.rsc = stream_logic(s_in + s_out, s_in * activation_dsp(node.activation().t, calib), 0, calib);
        break;
    }
    case LayerKind::ElementWise: {
        b.cycles = ceil_div(b.workload_out, s_in);
        b.depth = calib.depth_eltwise;
        const auto k = node.eltwise().t == EltwiseOp::Add ? calib.dsp_per_stream_add : calib.dsp_per_stream_mul;
        const auto n_in = static_cast<std::int64_t>(node.sp_in.size());
        b.rsc = stream_logic(n_in * s_in + s_out, s_in * k, 0, calib);
        break;
    }
    case LayerKind::GlobalAvgPool: {
        b.cycles = ceil_div(b.workload_in[0], s_in);
        b.depth = gap_mode == GapMode::Exact ? in.spatial() * (c_in / s_in) : calib.depth_gap_prior;
        b.rsc = stream_logic(s_in + s_out, s_in * calib.dsp_per_stream_gap, ceil_div(c_in, calib.bram_words), calib);
        break;
    }
    }

    for (std::int64_t w : b.workload_in)
        b.r_in.push_back(Rational(w, s_in * b.cycles));
    b.r_out = Rational(b.workload_out, s_out * b.cycles);
    return b;
}

std::size_t TunableSpace::size() const
{
    return s_in.size() * std::max<std::size_t>(s_out.size(), 1) * std::max<std::size_t>(p_mac.size(), 1);
}

TunableSpace tunable_space(const LayerNode& node)
{
    TunableSpace t;
    t.s_in = divisors(node.sp_in.at(0).channels);
    if (node.kind == LayerKind::Conv3D) {
        if (node.is_depthwise()) {
            std::vector<std::int64_t> common;
            for (std::int64_t d : t.s_in)
                if (node.sp_out.channels % d == 0)
                    common.push_back(d);
            t.s_in = std::move(common);
        } else {
            t.s_out = divisors(node.sp_out.channels);
        }
        t.p_mac = divisors(node.conv().kernel_volume());
    } else {
        t.p_mac = {1};
    }
    return t;
}

std::vector<ParallelismConfig> feasible_configs(const LayerNode& node)
{
    const auto t = tunable_space(node);
    std::vector<ParallelismConfig> out;
    out.reserve(t.size());
    for (std::int64_t si : t.s_in) {
        if (t.ties_s_out()) {
            for (std::int64_t p : t.p_mac)
                out.push_back({si, si, p});
        } else {
            for (std::int64_t so : t.s_out)
                for (std::int64_t p : t.p_mac)
                    out.push_back({si, so, p});
        }
    }
    return out;
}

std::pair<Rational, Rational> equalize_elementwise(const Rational& r_in1, const Rational& r_in2)
{
    const Rational lo = min(r_in1, r_in2);
    return {lo, lo};
}

} // namespace sdf3d
