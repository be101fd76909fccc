#include "sdf3d/sdfcore.hpp"

#include "sdf3d/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

namespace sdf3d {
namespace {

Rational output_ii(const SdfGraph& g, const std::vector<const HardwareBlock*>& blocks, std::size_t n,
                   const std::vector<Rational>& r_out)
{
    if (n == g.mem_in())
        return Rational(g.W(0, 0)) / g.memory_rate;
    const auto& b = *blocks[g.nodes[n].block];
    return Rational(b.workload_out) / (Rational(b.cfg.s_out) * r_out[n]);
}

template <typename T, typename F> void write_csv(std::ostream& os, const SdfGraph& g, const Matrix<T>& m, F cell)
{
    if (m.rows() != g.arcs.size() || m.cols() != g.nodes.size())
        throw StructureError("matrix does not match the graph");
    os << "arc";
    for (const auto& n : g.nodes)
        os << ',' << n.name;
    os << '\n';
    for (std::size_t a = 0; a < m.rows(); ++a) {
        os << g.arcs[a].name;
        for (std::size_t n = 0; n < m.cols(); ++n)
            os << ',' << cell(m(a, n));
        os << '\n';
    }
}

} // namespace

std::string format_number(double v)
{
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc())
        return "nan";
    return std::string(buf.data(), end);
}

std::size_t SdfGraph::input_arc(std::size_t n, std::size_t port) const
{
    if (n >= port_arc.size() || port >= port_arc[n].size())
        return kNoBlock;
    return port_arc[n][port];
}

std::size_t SdfGraph::output_arc(std::size_t n) const
{
    for (std::size_t a = 0; a < arcs.size(); ++a)
        if (arcs[a].producer == n)
            return a;
    return kNoBlock;
}

const ArcBuffer* SdfGraph::buffer(std::size_t arc, std::size_t consumer) const
{
    for (const auto& b : buffers)
        if (b.arc == arc && b.consumer == consumer)
            return &b;
    return nullptr;
}

SdfGraph sdf_topology(std::vector<HardwareBlock> blocks)
{
    if (blocks.empty())
        throw StructureError("partition has no layers");
    SdfGraph g;
    std::map<std::string, std::size_t, std::less<>> node_of; // layer id -> node index
    std::set<std::string> external;

    g.nodes.push_back({"MemIn", SdfNode::Role::MemIn, kNoBlock});
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto* layer = blocks[i].node;
        if (layer == nullptr)
            throw StructureError("hardware block without a layer");
        if (node_of.count(layer->id))
            throw StructureError("layer '" + layer->id + "' appears twice");
        for (const auto& in : layer->inputs)
            if (!node_of.count(in)) {
                bool later = std::any_of(blocks.begin() + static_cast<std::ptrdiff_t>(i), blocks.end(),
                                         [&](const HardwareBlock& b) { return b.node->id == in; });
                if (later)
                    throw StructureError("layer '" + layer->id + "' precedes its input '" + in + "'");
                external.insert(in);
            }
        node_of[layer->id] = g.nodes.size();
        g.nodes.push_back({layer->id, SdfNode::Role::Block, i});
    }
    if (external.size() != 1) {
        std::string names;
        for (const auto& e : external)
            names += (names.empty() ? "" : ", ") + e;
        throw StructureError("partition must have exactly one external input, found " +
                             std::to_string(external.size()) + (names.empty() ? "" : " (" + names + ")"));
    }
    g.nodes.push_back({"MemOut", SdfNode::Role::MemOut, kNoBlock});

    // One arc per produced tensor, in producer order.
    std::vector<std::string> tensor{*external.begin()};
    std::vector<std::size_t> producer{0};
    for (const auto& b : blocks) {
        tensor.push_back(b.node->id);
        producer.push_back(node_of[b.node->id]);
    }
    std::size_t outputs = 0;
    for (std::size_t a = 0; a < tensor.size(); ++a) {
        SdfArc arc;
        arc.name = tensor[a];
        arc.producer = producer[a];
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& ins = blocks[i].node->inputs;
            for (std::size_t k = 0; k < ins.size(); ++k)
                if (ins[k] == tensor[a]) {
                    arc.consumers.push_back(i + 1);
                    arc.consumer_ports.push_back(k);
                }
        }
        if (arc.consumers.empty()) {
            if (a == 0)
                throw StructureError("external input '" + tensor[a] + "' is never consumed");
            arc.consumers.push_back(g.mem_out());
            arc.consumer_ports.push_back(0);
            ++outputs;
        }
        g.arcs.push_back(std::move(arc));
    }
    if (outputs != 1)
        throw StructureError("partition must have exactly one external output, found " + std::to_string(outputs));
    g.port_arc.assign(g.nodes.size(), {});
    for (std::size_t a = 0; a < g.arcs.size(); ++a)
        for (std::size_t i = 0; i < g.arcs[a].consumers.size(); ++i) {
            auto& ports = g.port_arc[g.arcs[a].consumers[i]];
            const std::size_t k = g.arcs[a].consumer_ports[i];
            if (ports.size() <= k)
                ports.resize(k + 1, kNoBlock);
            ports[k] = a;
        }
    g.blocks = std::move(blocks);
    return g;
}

Matrix<std::int64_t> workload_matrix(const SdfGraph& g)
{
    Matrix<std::int64_t> W(g.arcs.size(), g.nodes.size(), 0);
    for (std::size_t a = 0; a < g.arcs.size(); ++a) {
        const auto& arc = g.arcs[a];
        std::optional<TensorShape> shape;
        if (arc.producer != g.mem_in())
            shape = g.blocks[g.nodes[arc.producer].block].node->sp_out;
        for (std::size_t i = 0; i < arc.consumers.size(); ++i) {
            const std::size_t c = arc.consumers[i];
            if (c == g.mem_out())
                continue;
            const auto& layer = *g.blocks[g.nodes[c].block].node;
            const auto& want = layer.sp_in.at(arc.consumer_ports[i]);
            if (!shape)
                shape = want;
            else if (!(*shape == want))
                throw ShapeError("arc '" + arc.name + "': " + to_string(*shape) + " produced, layer '" + layer.id +
                                 "' expects " + to_string(want));
        }
        const std::int64_t w = shape->elements();
        W(a, arc.producer) = w;
        for (std::size_t c : arc.consumers)
            W(a, c) = -w;
    }
    return W;
}

IIResult initiation_intervals(const Matrix<std::int64_t>& W, const Matrix<Rational>& gamma)
{
    if (W.rows() != gamma.rows() || W.cols() != gamma.cols())
        throw ModelError("workload and topology matrices differ in size");
    IIResult res;
    res.ii = Matrix<std::optional<Rational>>(W.rows(), W.cols());
    bool any = false;
    for (std::size_t a = 0; a < W.rows(); ++a)
        for (std::size_t n = 0; n < W.cols(); ++n) {
            const std::int64_t w = W(a, n);
            const Rational& r = gamma(a, n);
            if (w == 0 && r.is_zero())
                continue;
            if (w == 0 || r.is_zero())
                throw ModelError("workload and rate disagree at arc " + std::to_string(a) + ", node " +
                                 std::to_string(n));
            Rational ii = Rational(w) / r;
            if (ii.sign() <= 0)
                throw ModelError("sign mismatch between workload and rate at arc " + std::to_string(a) +
                                 ", node " + std::to_string(n));
            res.ii(a, n) = ii;
            res.ii_max = any ? max(res.ii_max, ii) : ii;
            any = true;
        }
    return res;
}

std::vector<std::int64_t> arrival_times(const SdfGraph& g, std::span<const std::int64_t> depths)
{
    if (depths.size() != g.nodes.size())
        throw StructureError("depth vector does not match the graph");
    std::vector<std::int64_t> arrival(g.nodes.size(), 0);
    for (std::size_t n = 1; n < g.nodes.size(); ++n) {
        std::int64_t latest = 0;
        for (std::size_t a : g.port_arc[n])
            latest = std::max(latest, arrival[g.arcs[a].producer]);
        arrival[n] = latest + depths[n];
    }
    return arrival;
}

std::int64_t merge_slack(const SdfGraph& g, std::span<const std::int64_t> arrival, std::size_t n, std::size_t port)
{
    const auto& ports = g.port_arc[n];
    if (ports.size() < 2)
        return 0;
    std::int64_t latest = 0;
    for (std::size_t a : ports)
        latest = std::max(latest, arrival[g.arcs[a].producer]);
    return latest - arrival[g.arcs[ports[port]].producer];
}

std::vector<ArcBuffer> branch_buffers(const SdfGraph& g, std::span<const std::int64_t> depths, const Calibration& calib)
{
    const auto arrival = arrival_times(g, depths);
    const std::size_t n_nodes = g.nodes.size();
    // Exact GAP nodes upstream of (and including) each node.
    std::vector<std::vector<bool>> gaps_above(n_nodes, std::vector<bool>(n_nodes, false));
    for (std::size_t n = 1; n < n_nodes; ++n) {
        for (std::size_t a : g.port_arc[n]) {
            const auto& up = gaps_above[g.arcs[a].producer];
            for (std::size_t m = 0; m < n_nodes; ++m)
                if (up[m])
                    gaps_above[n][m] = true;
        }
        if (g.nodes[n].role == SdfNode::Role::Block) {
            const auto& b = g.blocks[g.nodes[n].block];
            if (b.node->kind == LayerKind::GlobalAvgPool && b.gap_mode == GapMode::Exact)
                gaps_above[n][n] = true;
        }
    }
    // True when a sibling input of `n` passes an Exact GAP that `port` does not.
    auto waits_on_gap = [&](std::size_t n, std::size_t port) {
        const auto& ports = g.port_arc[n];
        const auto& mine = gaps_above[g.arcs[ports[port]].producer];
        for (std::size_t k = 0; k < ports.size(); ++k) {
            if (k == port)
                continue;
            const auto& other = gaps_above[g.arcs[ports[k]].producer];
            for (std::size_t m = 0; m < n_nodes; ++m)
                if (other[m] && !mine[m])
                    return true;
        }
        return false;
    };

    std::vector<ArcBuffer> out;
    for (std::size_t a = 0; a < g.arcs.size(); ++a) {
        const auto& arc = g.arcs[a];
        std::int64_t widest = 0;
        Rational peak;
        for (std::size_t n = 0; n < n_nodes; ++n) {
            widest = std::max(widest, g.S(a, n));
            peak = max(peak, g.gamma(a, n).abs());
        }
        for (std::size_t i = 0; i < arc.consumers.size(); ++i) {
            ArcBuffer buf;
            buf.arc = a;
            buf.consumer = arc.consumers[i];
            const std::size_t port = arc.consumer_ports[i];
            buf.extra_cycles = merge_slack(g, arrival, buf.consumer, port);
            if (buf.extra_cycles > 0)
                buf.extra_words = (Rational(buf.extra_cycles) * peak).ceil();
            // The sibling path only emits after a full reduction, so this
            // side has to hold the whole item.
            if (g.port_arc[buf.consumer].size() >= 2 && waits_on_gap(buf.consumer, port))
                buf.extra_words = std::max(buf.extra_words, std::abs(g.W(a, buf.consumer)));
            buf.capacity_words = calib.fifo_words_per_stream * widest + buf.extra_words;
            out.push_back(buf);
        }
    }
    return out;
}

RateSolution solve_rates(const SdfGraph& g, const std::vector<const HardwareBlock*>& blocks)
{
    const std::size_t n_nodes = g.nodes.size();
    RateSolution rs;
    auto& r_in = rs.r_in;
    auto& r_out = rs.r_out;
    r_in.assign(n_nodes, {});
    r_out.assign(n_nodes, Rational());
    for (std::size_t n = 1; n + 1 < n_nodes; ++n) {
        const auto& b = *blocks[g.nodes[n].block];
        r_in[n] = b.r_in;
        r_out[n] = b.r_out;
    }

    // Merge inputs cannot run ahead of whatever feeds them, and the inputs of
    // a normal element-wise node advance in lockstep.
    for (std::size_t n = 1; n + 1 < n_nodes; ++n) {
        const auto& b = *blocks[g.nodes[n].block];
        if (b.node->kind != LayerKind::ElementWise)
            continue;
        const Rational s(b.cfg.s_in);
        std::vector<Rational> limited;
        for (std::size_t k = 0; k < r_in[n].size(); ++k) {
            const std::size_t a = g.port_arc[n][k];
            const Rational cap = Rational(b.workload_in[k]) / (s * output_ii(g, blocks, g.arcs[a].producer, r_out));
            limited.push_back(min(r_in[n][k], cap));
        }
        if (!b.node->is_broadcast()) {
            Rational lo = limited[0];
            for (std::size_t k = 1; k < limited.size(); ++k)
                lo = equalize_elementwise(lo, limited[k]).first;
            const Rational f = lo / r_in[n][0];
            std::fill(r_in[n].begin(), r_in[n].end(), lo);
            r_out[n] *= f;
        } else {
            const Rational f = limited[0] / r_in[n][0];
            r_in[n][0] = limited[0];
            r_out[n] *= f;
            const Rational ii = output_ii(g, blocks, n, r_out);
            for (std::size_t k = 1; k < r_in[n].size(); ++k)
                r_in[n][k] = Rational(b.workload_in[k]) / (s * ii);
        }
    }

    // Nothing completes an item faster than memory can stream it in and out.
    const std::size_t out_arc = g.port_arc[g.mem_out()][0];
    const std::int64_t w_in = g.W(0, 0);
    const std::int64_t w_out = g.W(out_arc, g.arcs[out_arc].producer);
    const Rational ii_mem = Rational(std::max(w_in, w_out)) / g.memory_rate;
    rs.node_ii.assign(n_nodes, Rational());
    rs.node_ii[g.mem_in()] = Rational(w_in) / g.memory_rate;
    rs.node_ii[g.mem_out()] = Rational(w_out) / g.memory_rate;
    for (std::size_t n = 1; n + 1 < n_nodes; ++n) {
        const Rational ii = output_ii(g, blocks, n, r_out);
        if (ii < ii_mem) {
            const Rational f = ii / ii_mem;
            for (auto& r : r_in[n])
                r *= f;
            r_out[n] *= f;
            rs.node_ii[n] = ii_mem;
        } else {
            rs.node_ii[n] = ii;
        }
    }
    return rs;
}

SdfGraph build_sdfg(std::vector<HardwareBlock> blocks, const DeviceSpec& device, const Calibration& calib)
{
    SdfGraph g = sdf_topology(std::move(blocks));
    g.W = workload_matrix(g);
    g.memory_rate = device.memory_rate();
    if (g.memory_rate.sign() <= 0)
        throw ConfigError("device bandwidth must be positive");
    g.gap_mode = g.blocks.front().gap_mode;

    const std::size_t n_nodes = g.nodes.size();
    const std::int64_t mem_streams = g.memory_rate.ceil();
    const Rational mem_r = g.memory_rate / Rational(mem_streams);

    std::vector<const HardwareBlock*> ptrs;
    for (const auto& b : g.blocks)
        ptrs.push_back(&b);
    auto rs = solve_rates(g, ptrs);
    const auto& r_in = rs.r_in;
    const auto& r_out = rs.r_out;
    g.node_ii = rs.node_ii;

    g.S = Matrix<std::int64_t>(g.arcs.size(), n_nodes, 0);
    g.R = Matrix<Rational>(g.arcs.size(), n_nodes);
    g.gamma = Matrix<Rational>(g.arcs.size(), n_nodes);
    for (std::size_t a = 0; a < g.arcs.size(); ++a) {
        const auto& arc = g.arcs[a];
        const std::size_t p = arc.producer;
        if (p == g.mem_in()) {
            g.S(a, p) = mem_streams;
            g.R(a, p) = mem_r;
        } else {
            g.S(a, p) = g.blocks[g.nodes[p].block].cfg.s_out;
            g.R(a, p) = r_out[p];
        }
        for (std::size_t i = 0; i < arc.consumers.size(); ++i) {
            const std::size_t c = arc.consumers[i];
            if (c == g.mem_out()) {
                g.S(a, c) = mem_streams;
                g.R(a, c) = -mem_r;
            } else {
                g.S(a, c) = g.blocks[g.nodes[c].block].cfg.s_in;
                g.R(a, c) = -r_in[c][arc.consumer_ports[i]];
            }
        }
        for (std::size_t n = 0; n < n_nodes; ++n)
            g.gamma(a, n) = Rational(g.S(a, n)) * g.R(a, n);
    }

    g.node_depth.assign(n_nodes, 0);
    for (std::size_t n = 1; n + 1 < n_nodes; ++n)
        g.node_depth[n] = g.blocks[g.nodes[n].block].depth;
    g.buffers = branch_buffers(g, g.node_depth, calib);
    g.depth_total = 0;
    for (std::int64_t d : g.node_depth)
        g.depth_total += d;
    for (const auto& b : g.buffers)
        g.depth_total += b.extra_cycles;
    return g;
}

void write_matrix_csv(std::ostream& os, const SdfGraph& g, const Matrix<std::int64_t>& m)
{
    write_csv(os, g, m, [](std::int64_t v) { return std::to_string(v); });
}

void write_matrix_csv(std::ostream& os, const SdfGraph& g, const Matrix<Rational>& m)
{
    write_csv(os, g, m, [](const Rational& v) { return format_number(v.to_double()); });
}

void write_matrix_csv(std::ostream& os, const SdfGraph& g, const Matrix<std::optional<Rational>>& m)
{
    write_csv(os, g, m, [](const std::optional<Rational>& v) { return v ? format_number(v->to_double()) : ""; });
}

void dump_matrices(const SdfGraph& g, const IIResult& ii, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name);
        if (!f)
            throw ConfigError("cannot write '" + (dir / name).string() + "'");
        return f;
    };
    {
        auto f = open("S.csv");
        write_matrix_csv(f, g, g.S);
    }
    {
        auto f = open("R.csv");
        write_matrix_csv(f, g, g.R);
    }
    {
        auto f = open("Gamma.csv");
        write_matrix_csv(f, g, g.gamma);
    }
    {
        auto f = open("W.csv");
        write_matrix_csv(f, g, g.W);
    }
    {
        auto f = open("II.csv");
        write_matrix_csv(f, g, ii.ii);
    }
    auto f = open("buffers.csv");
    f << "arc,consumer,capacity_words,extra_words,extra_cycles\n";
    for (const auto& b : g.buffers)
        f << g.arcs[b.arc].name << ',' << g.nodes[b.consumer].name << ',' << b.capacity_words << ',' << b.extra_words
          << ',' << b.extra_cycles << '\n';
}

} // namespace sdf3d
