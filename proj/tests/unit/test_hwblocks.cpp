#include <doctest.h>

#include "gen.hpp"
#include "sdf3d/error.hpp"
#include "sdf3d/hwblocks.hpp"

#include <algorithm>
#include <set>

using namespace sdf3d;
using testgen::ModelBuilder;

namespace {

// Oracle divisor list by trial division.
std::vector<std::int64_t> slow_divisors(std::int64_t n)
{
    std::vector<std::int64_t> d;
    for (std::int64_t i = 1; i <= n; ++i)
        if (n % i == 0)
            d.push_back(i);
    return d;
}

// Same-padded kernels so shapes stay fixed.
std::array<std::int64_t, 3> same_pad(const std::array<std::int64_t, 3>& ks)
{
    return {ks[0] / 2, ks[1] / 2, ks[2] / 2};
}

} // namespace

TEST_CASE("GAP output rate is one over the map volume")
{
    ModelBuilder b({8, 16, 16, 16});
    b.gap("g", "input");
    const auto g = b.build();
    for (const auto& cfg : feasible_configs(g.nodes[0])) {
        const auto blk = build_block(g.nodes[0], cfg);
        // C outputs per C*4096 cycles of work spread over s streams
        CHECK(blk.r_out * Rational(cfg.s_out) * Rational(blk.cycles) == Rational(8));
        CHECK(blk.r_out == Rational(8, cfg.s_out * (8 * 4096 / cfg.s_in)));
        if (cfg.s_in == 1)
            CHECK(blk.r_out == Rational(1, 4096));
    }
}

TEST_CASE("Relu with four streams runs at rate one")
{
    ModelBuilder b({8, 2, 2, 2});
    b.act("r", "input");
    const auto g = b.build();
    const auto blk = build_block(g.nodes[0], {4, 4, 1});
    CHECK(blk.r_in.at(0) == Rational(1));
    CHECK(blk.r_out == Rational(1));
    CHECK(blk.cycles == 64 / 4);
}

TEST_CASE("pointwise 24x24 conversion cycles")
{
    ModelBuilder b({24, 4, 6, 6});
    b.conv("c", "input", 24);
    const auto g = b.build();
    const auto blk = build_block(g.nodes[0], {1, 1, 1});
    CHECK(blk.cycles == 4 * 6 * 6 * 24 * 24);
    CHECK(blk.depth == 0 + 1 + 1); // no window, log2(2) adder stage, 1 accumulation step
    CHECK(blk.rsc.dsp == 1);
}

TEST_CASE("cycle formulas by convolution kind")
{
    SUBCASE("standard")
    {
        ModelBuilder b({6, 4, 8, 8});
        b.conv("c", "input", 9, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
        const auto g = b.build();
        const auto& n = g.nodes[0];
        for (ParallelismConfig cfg : {ParallelismConfig{1, 1, 1}, {2, 3, 9}, {6, 9, 27}, {3, 1, 3}}) {
            const auto blk = build_block(n, cfg);
            const std::int64_t mac = 4 * 8 * 8 * (6 / cfg.s_in) * (9 / cfg.s_out) * (27 / cfg.p_mac);
            const std::int64_t io = std::max(6 * 256 / cfg.s_in, 9 * 256 / cfg.s_out);
            CHECK(blk.cycles == std::max(mac, io));
            const std::int64_t line = 2 * 8 * 8 + 2 * 8 + 2;
            std::int64_t lg = 0;
            while ((std::int64_t{1} << lg) < std::max<std::int64_t>(cfg.p_mac, 2))
                ++lg;
            CHECK(blk.depth == (6 / cfg.s_in) * line + lg + 27 / cfg.p_mac);
            CHECK(blk.rsc.dsp == cfg.s_in * cfg.s_out * cfg.p_mac);
        }
    }
    SUBCASE("depthwise")
    {
        ModelBuilder b({8, 4, 4, 4});
        b.dw("d", "input");
        const auto g = b.build();
        for (std::int64_t s : {1, 2, 4, 8})
            for (std::int64_t p : {1, 3, 9, 27}) {
                const auto blk = build_block(g.nodes[0], {s, s, p});
                CHECK(blk.cycles == std::max<std::int64_t>(64 * (8 / s) * (27 / p), 8 * 64 / s));
                CHECK(blk.rsc.dsp == s * p);
            }
        CHECK_THROWS_AS(build_block(g.nodes[0], {2, 4, 1}), ConfigError);
    }
    SUBCASE("grouped")
    {
        ModelBuilder b({8, 2, 4, 4});
        b.conv("g", "input", 4, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 2);
        const auto g = b.build();
        for (const auto& cfg : feasible_configs(g.nodes[0])) {
            const auto blk = build_block(g.nodes[0], cfg);
            // spatial * (C_in/(gp s_in)) * (C_out/s_out) * gp * (K/p), ceiling
            const Rational mac = Rational(32) * Rational(8, 2 * cfg.s_in) * Rational(4, cfg.s_out) * Rational(2);
            const std::int64_t io = std::max<std::int64_t>((8 * 32 + cfg.s_in - 1) / cfg.s_in,
                                                           (4 * 32 + cfg.s_out - 1) / cfg.s_out);
            CHECK(blk.cycles == std::max(mac.ceil(), io));
        }
    }
}

TEST_CASE("feasible configuration sets")
{
    ModelBuilder b({6, 2, 2, 2});
    b.act("r", "input");
    auto g = b.build();
    const auto relu = feasible_configs(g.nodes[0]);
    CHECK(relu.size() == 4);
    std::set<std::int64_t> s;
    for (const auto& c : relu) {
        s.insert(c.s_in);
        CHECK(c.s_out == c.s_in);
        CHECK(c.p_mac == 1);
    }
    CHECK(s == std::set<std::int64_t>{1, 2, 3, 6});

    ModelBuilder pw({4, 2, 2, 2});
    pw.conv("c", "input", 4);
    CHECK(feasible_configs(pw.build().nodes[0]).size() == 9);

    ModelBuilder dw({8, 4, 4, 4});
    dw.dw("d", "input");
    const auto dcfg = feasible_configs(dw.build().nodes[0]);
    CHECK(dcfg.size() == 16);
    for (const auto& c : dcfg)
        CHECK(c.s_out == c.s_in);

    // exact set for a standard conv
    ModelBuilder st({6, 4, 4, 4});
    st.conv("c", "input", 4, {3, 1, 1}, {1, 1, 1}, {1, 0, 0});
    const auto sg = st.build();
    std::set<ParallelismConfig> want;
    for (auto i : slow_divisors(6))
        for (auto o : slow_divisors(4))
            for (auto p : slow_divisors(3))
                want.insert({i, o, p});
    const auto got = feasible_configs(sg.nodes[0]);
    CHECK(std::set<ParallelismConfig>(got.begin(), got.end()) == want);
    CHECK(got.size() == want.size());
    CHECK(std::is_sorted(got.begin(), got.end()));
}

TEST_CASE("divisibility violations name the parameter")
{
    ModelBuilder b({6, 2, 2, 2});
    b.conv("c", "input", 4, {3, 1, 1}, {1, 1, 1}, {1, 0, 0});
    b.act("r", "c");
    const auto g = b.build();
    auto msg = [&](const LayerNode& n, ParallelismConfig c) {
        try {
            build_block(n, c);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(msg(g.nodes[0], {4, 1, 1}).find("s_in") != std::string::npos);
    CHECK(msg(g.nodes[0], {1, 3, 1}).find("s_out") != std::string::npos);
    CHECK(msg(g.nodes[0], {1, 1, 2}).find("p_mac") != std::string::npos);
    CHECK(msg(g.nodes[1], {2, 2, 2}).find("p_mac") != std::string::npos);
    CHECK(msg(g.nodes[1], {2, 1, 1}).find("s_out") != std::string::npos);
}

TEST_CASE("element-wise equalization")
{
    CHECK(equalize_elementwise(Rational(1), Rational(1)) == std::pair{Rational(1), Rational(1)});
    CHECK(equalize_elementwise(Rational(1), Rational(1, 4)) == std::pair{Rational(1, 4), Rational(1, 4)});
    CHECK(equalize_elementwise(Rational(1, 2), Rational(1, 2)) == std::pair{Rational(1, 2), Rational(1, 2)});
    CHECK(equalize_elementwise(Rational(1, 3), Rational(2, 3)).second == Rational(1, 3));
}

TEST_CASE("divisors")
{
    for (std::int64_t n = 1; n <= 200; ++n)
        CHECK(divisors(n) == slow_divisors(n));
}

TEST_CASE("monotonicity of cycles and resources, rates in (0,1]")
{
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const auto g = trial % 2 == 0 ? testgen::random_chain(rng, 4) : testgen::random_block(rng, PartitionKind::Type2);
        for (const auto& n : g.nodes) {
            const auto all = feasible_configs(n);
            std::set<ParallelismConfig> ok(all.begin(), all.end());
            for (const auto& c : all) {
                const auto blk = build_block(n, c);
                for (const auto& r : blk.r_in) {
                    CHECK(r.sign() > 0);
                    CHECK(r <= Rational(1));
                }
                CHECK(blk.r_out.sign() > 0);
                CHECK(blk.r_out <= Rational(1));
                CHECK(blk.cycles >= 1);
                // stepping any one parameter up to a larger feasible value
                for (const auto& d : all) {
                    int diff = (d.s_in != c.s_in) + (d.s_out != c.s_out) + (d.p_mac != c.p_mac);
                    const bool tied = n.kind != LayerKind::Conv3D || n.is_depthwise();
                    if (!(d.s_in >= c.s_in && d.s_out >= c.s_out && d.p_mac >= c.p_mac))
                        continue;
                    if (diff != 1 && !(tied && diff == 2 && d.p_mac == c.p_mac))
                        continue;
                    const auto hi = build_block(n, d);
                    CHECK(hi.cycles <= blk.cycles);
                    CHECK(hi.rsc.dsp >= blk.rsc.dsp);
                    CHECK(hi.rsc.bram18k >= blk.rsc.bram18k);
                    CHECK(hi.rsc.lut >= blk.rsc.lut);
                    CHECK(hi.rsc.ff >= blk.rsc.ff);
                }
            }
        }
    }
}

TEST_CASE("fully parallel convolutions take one cycle per output position")
{
    Rng rng(3);
    for (int i = 0; i < 30; ++i) {
        const auto in = testgen::random_shape(rng);
        const std::array<std::int64_t, 3> ks{1 + 2 * static_cast<std::int64_t>(rng.index(2)),
                                             1 + 2 * static_cast<std::int64_t>(rng.index(2)),
                                             1 + 2 * static_cast<std::int64_t>(rng.index(2))};
        const std::int64_t f = std::int64_t{2} << rng.index(3);
        ModelBuilder b(in);
        b.conv("c", "input", f, ks, {1, 1, 1}, same_pad(ks));
        const auto g = b.build();
        const auto& n = g.nodes[0];
        const auto blk = build_block(n, {in.channels, f, n.conv().kernel_volume()});
        CHECK(blk.cycles == n.sp_out.spatial());
    }
}

TEST_CASE("resource estimates add component-wise")
{
    ResourceEstimate a{1, 2, 3, 4}, b{10, 20, 30, 40};
    CHECK(a + b == ResourceEstimate{11, 22, 33, 44});
    CHECK((a + b) - b == a);
    CHECK(a.fits_within(b));
    CHECK_FALSE(b.fits_within(a));
}
