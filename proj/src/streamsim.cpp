#include "sdf3d/streamsim.hpp"

#include "sdf3d/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>

namespace sdf3d {
namespace {

struct Fifo {
    std::int64_t cap = 0;
    std::int64_t count = 0;
    std::deque<double> vals;
    FifoStats stats;

    std::int64_t space() const { return cap - count; }
};

struct Packet {
    std::int64_t ready = 0;
    std::int64_t count = 0;
    std::vector<double> vals;
};

enum class Behaviour { Stream, GapExact, GapPrior, BroadcastMul, MemIn, MemOut };

struct Runtime {
    Behaviour kind = Behaviour::Stream;
    std::vector<std::size_t> in; // fifo index per input port
    std::vector<std::size_t> out; // fifo indices fed by this node
    std::vector<std::int64_t> w_in;
    std::int64_t w_out = 0;
    std::int64_t firings = 1; // per item
    std::int64_t delay = 1;
    std::int64_t s_out = 1;
    std::int64_t pipe_cap = 0;
    std::int64_t channels = 1;

    std::int64_t item = 0;
    std::int64_t j = 0;
    std::deque<Packet> pipe;
    std::int64_t pending = 0;
    std::vector<std::int64_t> item_start;

    // broadcast multiply
    std::int64_t latched = 0;
    // GAP state
    std::vector<double> sums;
    std::int64_t seen = 0;
    std::vector<double> stored;
    double carry = 0.0;

    // memory credit in 1/den units
    std::int64_t credit = 0;
    std::int64_t moved = 0;
};

std::int64_t share(std::int64_t w, std::int64_t f, std::int64_t j) { return (j + 1) * w / f - j * w / f; }

} // namespace

double input_payload(std::int64_t item, std::int64_t k) { return static_cast<double>((item * 31 + k * 7) % 17 - 8); }

double predicted_cycles(const SdfGraph& g, const Rational& ii_max, std::int64_t batch)
{
    if (batch < 1)
        throw ArgumentError("batch size must be at least 1");
    return (Rational(g.depth_total) + ii_max * Rational(batch - 1)).to_double();
}

double mape(const std::vector<std::pair<double, double>>& runs)
{
    if (runs.empty())
        throw ArgumentError("no runs to compare");
    double sum = 0.0;
    for (const auto& [a, s] : runs) {
        if (s == 0.0)
            throw ArgumentError("simulated cycle count is zero");
        sum += std::abs(a - s) / s;
    }
    return 100.0 * sum / static_cast<double>(runs.size());
}

SimResult simulate(const SdfGraph& g, const SimConfig& cfg)
{
    if (cfg.batch < 1)
        throw ArgumentError("batch size must be at least 1");
    if (cfg.max_cycles < 1)
        throw ArgumentError("max_cycles must be positive");
    const std::size_t n_nodes = g.nodes.size();
    const std::int64_t B = cfg.batch;
    const bool pay = cfg.payloads;

    std::vector<Fifo> fifos;
    std::vector<Runtime> rt(n_nodes);
    for (const auto& buf : g.buffers) {
        Fifo f;
        f.cap = buf.capacity_words;
        f.stats.arc = buf.arc;
        f.stats.consumer = buf.consumer;
        f.stats.capacity = buf.capacity_words;
        fifos.push_back(f);
    }
    auto fifo_index = [&](std::size_t arc, std::size_t consumer) {
        for (std::size_t i = 0; i < g.buffers.size(); ++i)
            if (g.buffers[i].arc == arc && g.buffers[i].consumer == consumer)
                return i;
        throw StructureError("no buffer on arc '" + g.arcs[arc].name + "' for node '" + g.nodes[consumer].name + "'");
    };

    for (std::size_t n = 0; n < n_nodes; ++n) {
        auto& r = rt[n];
        for (std::size_t k = 0; k < g.port_arc[n].size(); ++k) {
            const std::size_t a = g.port_arc[n][k];
            r.in.push_back(fifo_index(a, n));
            r.w_in.push_back(std::abs(g.W(a, n)));
        }
        const std::size_t oa = g.output_arc(n);
        if (oa != kNoBlock) {
            for (std::size_t c : g.arcs[oa].consumers)
                r.out.push_back(fifo_index(oa, c));
            r.w_out = g.W(oa, n);
        }
        if (n == g.mem_in()) {
            r.kind = Behaviour::MemIn;
            continue;
        }
        if (n == g.mem_out()) {
            r.kind = Behaviour::MemOut;
            continue;
        }
        const auto& b = g.blocks[g.nodes[n].block];
        const auto& layer = *b.node;
        r.firings = b.cycles;
        r.s_out = b.cfg.s_out;
        r.delay = std::max<std::int64_t>(b.depth, 1);
        r.channels = layer.sp_out.channels;
        std::int64_t max_p = 0;
        if (layer.kind == LayerKind::GlobalAvgPool) {
            const GapMode mode = cfg.gap_mode.value_or(b.gap_mode);
            r.kind = mode == GapMode::Exact ? Behaviour::GapExact : Behaviour::GapPrior;
            // The reduction itself is the firing schedule; only the write-out
            // register stage remains.
            r.delay = 2;
            r.sums.assign(static_cast<std::size_t>(r.channels), 0.0);
            r.stored.assign(static_cast<std::size_t>(r.channels), 0.0);
            max_p = r.channels;
        } else {
            r.kind = layer.is_broadcast() ? Behaviour::BroadcastMul : Behaviour::Stream;
            max_p = (r.w_out + r.firings - 1) / r.firings;
        }
        r.pipe_cap = r.delay * r.s_out + max_p;
    }

    SimResult res;
    res.nodes.resize(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n)
        res.nodes[n].name = g.nodes[n].name;

    const std::int64_t mem_num = g.memory_rate.num();
    const std::int64_t mem_den = g.memory_rate.den();
    const std::int64_t credit_cap = g.memory_rate.ceil() * mem_den;
    const std::int64_t out_total = B * rt[g.mem_out()].w_in.at(0);

    auto note_fire = [&](std::size_t n, std::int64_t t) {
        auto& s = res.nodes[n];
        ++s.busy_cycles;
        if (s.first_cycle < 0)
            s.first_cycle = t;
        s.last_cycle = t;
    };
    auto pop = [&](Fifo& f, std::int64_t k, std::vector<double>* vals) {
        f.count -= k;
        f.stats.consumed += k;
        if (pay)
            for (std::int64_t i = 0; i < k; ++i) {
                if (vals)
                    vals->push_back(f.vals.front());
                f.vals.pop_front();
            }
    };
    auto push_all = [&](Runtime& r, std::int64_t k, const double* vals) {
        for (std::size_t fi : r.out) {
            auto& f = fifos[fi];
            f.count += k;
            f.stats.produced += k;
            f.stats.max_occupancy = std::max(f.stats.max_occupancy, f.count);
            f.stats.overflow = f.stats.overflow || f.count > f.cap;
            if (pay)
                f.vals.insert(f.vals.end(), vals, vals + k);
        }
    };
    auto room = [&](const Runtime& r) {
        std::int64_t m = std::numeric_limits<std::int64_t>::max();
        for (std::size_t fi : r.out)
            m = std::min(m, fifos[fi].space());
        return m;
    };

    std::vector<bool> fired(n_nodes);
    std::vector<double> consumed_vals;
    auto trace_row = [&](std::int64_t t) {
        if (!cfg.trace)
            return;
        for (std::size_t n = 0; n < n_nodes; ++n) {
            const auto& r = rt[n];
            std::int64_t occ = 0;
            for (std::size_t fi : r.in)
                occ += fifos[fi].count;
            const bool work = n == g.mem_in() ? r.moved < B * r.w_out
                              : n == g.mem_out() ? r.moved < out_total
                                                 : r.item < B;
            *cfg.trace << t << ',' << g.nodes[n].name << ',' << (fired[n] ? 1 : 0) << ','
                       << ((work && !fired[n]) ? 1 : 0) << ',' << occ << '\n';
        }
    };

    std::int64_t t = 0;
    for (;; ++t) {
        if (t >= cfg.max_cycles) {
            res.truncated = true;
            break;
        }
        bool active = false;
        std::fill(fired.begin(), fired.end(), false);

        // MemOut drains its FIFO at the memory rate.
        {
            auto& r = rt[g.mem_out()];
            r.credit = std::min(credit_cap, r.credit + mem_num);
            auto& f = fifos[r.in[0]];
            const std::int64_t k = std::min(r.credit / mem_den, f.count);
            if (k > 0) {
                pop(f, k, nullptr);
                r.credit -= k * mem_den;
                r.moved += k;
                note_fire(g.mem_out(), t);
                fired[g.mem_out()] = true;
                active = true;
            }
        }
        if (rt[g.mem_out()].moved >= out_total) {
            trace_row(t);
            res.total_cycles = t + 1;
            break;
        }

        // Firings, consumers first so freed space is reused within the cycle.
        for (std::size_t n = n_nodes - 1; n-- > 1;) {
            auto& r = rt[n];
            if (r.item >= B)
                continue;
            const bool gap = r.kind == Behaviour::GapExact || r.kind == Behaviour::GapPrior;
            if (r.kind == Behaviour::BroadcastMul && r.latched < r.w_in[1]) {
                auto& vf = fifos[r.in[1]];
                const std::int64_t k = std::min(vf.count, r.w_in[1] - r.latched);
                if (k > 0) {
                    pop(vf, k, nullptr);
                    r.latched += k;
                    active = true;
                }
                if (r.latched < r.w_in[1])
                    continue;
            }
            const std::size_t main_ports = r.kind == Behaviour::BroadcastMul ? 1 : r.in.size();
            bool ready = true;
            for (std::size_t k = 0; k < main_ports && ready; ++k)
                ready = fifos[r.in[k]].count >= share(r.w_in[k], r.firings, r.j);
            if (!ready)
                continue;
            std::int64_t produce = 0;
            if (r.kind == Behaviour::GapExact)
                produce = r.j + 1 == r.firings ? r.channels : 0;
            else if (r.kind == Behaviour::GapPrior)
                produce = r.j == 0 ? r.channels : 0;
            else
                produce = share(r.w_out, r.firings, r.j);
            if (r.pending + produce > r.pipe_cap)
                continue;

            consumed_vals.clear();
            for (std::size_t k = 0; k < main_ports; ++k)
                pop(fifos[r.in[k]], share(r.w_in[k], r.firings, r.j), pay ? &consumed_vals : nullptr);

            Packet pk;
            pk.ready = t + r.delay - 1;
            pk.count = produce;
            if (gap && pay) {
                if (r.kind == Behaviour::GapPrior && r.j == 0) {
                    pk.vals = r.stored;
                    res.gap_emitted[g.nodes[n].name].push_back(r.stored);
                }
                for (double v : consumed_vals)
                    r.sums[static_cast<std::size_t>(r.seen++ % r.channels)] += v;
                if (r.j + 1 == r.firings) {
                    const double spatial = static_cast<double>(r.w_in[0] / r.channels);
                    std::vector<double> avg(r.sums.size());
                    for (std::size_t c = 0; c < avg.size(); ++c)
                        avg[c] = r.sums[c] / spatial;
                    res.gap_exact[g.nodes[n].name].push_back(avg);
                    if (r.kind == Behaviour::GapExact) {
                        pk.vals = avg;
                        res.gap_emitted[g.nodes[n].name].push_back(avg);
                    }
                    r.stored = avg;
                    std::fill(r.sums.begin(), r.sums.end(), 0.0);
                    r.seen = 0;
                }
            } else if (pay && produce > 0) {
                double v = r.carry;
                if (!consumed_vals.empty()) {
                    v = 0.0;
                    for (double x : consumed_vals)
                        v += x;
                }
                r.carry = v;
                pk.vals.assign(static_cast<std::size_t>(produce), v);
            } else if (pay && !consumed_vals.empty()) {
                double v = 0.0;
                for (double x : consumed_vals)
                    v += x;
                r.carry = v;
            }
            if (produce > 0) {
                r.pending += produce;
                r.pipe.push_back(std::move(pk));
            }

            if (r.j == 0)
                r.item_start.push_back(t);
            note_fire(n, t);
            fired[n] = true;
            active = true;
            if (++r.j == r.firings) {
                r.j = 0;
                ++r.item;
                ++res.nodes[n].items_done;
                r.latched = 0;
            }
        }

        // Pipeline outputs move into the consumer FIFOs, s_out words a cycle.
        for (std::size_t n = n_nodes - 1; n-- > 1;) {
            auto& r = rt[n];
            std::int64_t budget = std::min(r.s_out, room(r));
            while (budget > 0 && !r.pipe.empty() && r.pipe.front().ready <= t) {
                auto& pk = r.pipe.front();
                const std::int64_t k = std::min(budget, pk.count);
                push_all(r, k, pay ? pk.vals.data() : nullptr);
                if (pay)
                    pk.vals.erase(pk.vals.begin(), pk.vals.begin() + k);
                pk.count -= k;
                r.pending -= k;
                budget -= k;
                active = true;
                if (pk.count == 0)
                    r.pipe.pop_front();
            }
        }

        // MemIn streams the batch in at the memory rate.
        {
            auto& r = rt[g.mem_in()];
            const std::int64_t total = B * r.w_out;
            if (r.moved < total) {
                r.credit = std::min(credit_cap, r.credit + mem_num);
                const std::int64_t k = std::min({r.credit / mem_den, total - r.moved, room(r)});
                if (k > 0) {
                    std::vector<double> vals;
                    if (pay)
                        for (std::int64_t i = 0; i < k; ++i) {
                            const std::int64_t idx = r.moved + i;
                            vals.push_back(input_payload(idx / r.w_out, idx % r.w_out));
                        }
                    for (std::int64_t i = (r.moved + r.w_out - 1) / r.w_out; i * r.w_out < r.moved + k; ++i)
                        r.item_start.push_back(t);
                    push_all(r, k, vals.data());
                    r.credit -= k * mem_den;
                    r.moved += k;
                    res.nodes[g.mem_in()].items_done = r.moved / r.w_out;
                    note_fire(g.mem_in(), t);
                    fired[g.mem_in()] = true;
                    active = true;
                }
            }
        }

        trace_row(t);

        const bool credit_pending =
            (rt[g.mem_in()].moved < B * rt[g.mem_in()].w_out && rt[g.mem_in()].credit < mem_den) ||
            rt[g.mem_out()].credit < mem_den;
        if (!active && !credit_pending) {
            // Skip ahead to the next pipeline output, or give up.
            std::int64_t next = std::numeric_limits<std::int64_t>::max();
            // Outputs already due but blocked by full FIFOs cannot move.
            for (std::size_t n = 1; n + 1 < n_nodes; ++n)
                if (!rt[n].pipe.empty() && rt[n].pipe.front().ready > t)
                    next = std::min(next, rt[n].pipe.front().ready);
            if (next == std::numeric_limits<std::int64_t>::max()) {
                res.deadlock = true;
                res.total_cycles = t + 1;
                break;
            }
            if (next > t + 1 && cfg.trace == nullptr)
                t = std::min(next, cfg.max_cycles) - 1;
        }
    }
    if (res.truncated)
        res.total_cycles = cfg.max_cycles;

    for (std::size_t n = 0; n < n_nodes; ++n) {
        auto& s = res.nodes[n];
        const auto& r = rt[n];
        if (s.first_cycle >= 0)
            s.stall_cycles = (s.last_cycle - s.first_cycle + 1) - s.busy_cycles;
        if (r.item_start.size() >= 2)
            s.observed_ii = static_cast<double>(r.item_start.back() - r.item_start.front()) /
                            static_cast<double>(r.item_start.size() - 1);
        else if (s.first_cycle >= 0)
            s.observed_ii = static_cast<double>(s.last_cycle - s.first_cycle + 1);
    }
    for (auto& f : fifos) {
        f.stats.final_occupancy = f.count;
        res.fifos.push_back(f.stats);
    }
    return res;
}

} // namespace sdf3d
