#include <doctest.h>

#include "gen.hpp"
#include "sdf3d/error.hpp"
#include "sdf3d/sdfcore.hpp"

#include <filesystem>
#include <fstream>

using namespace sdf3d;
using testgen::ModelBuilder;

namespace {

std::vector<HardwareBlock> unit_blocks(const ModelGraph& g, GapMode mode = GapMode::Exact)
{
    std::vector<HardwareBlock> out;
    for (std::size_t i : g.topological_order())
        out.push_back(build_block(g.nodes[i], {}, {}, mode));
    return out;
}

std::vector<HardwareBlock> blocks_with(const ModelGraph& g, const std::vector<ParallelismConfig>& cfg)
{
    std::vector<HardwareBlock> out;
    const auto order = g.topological_order();
    for (std::size_t k = 0; k < order.size(); ++k)
        out.push_back(build_block(g.nodes[order[k]], cfg[k]));
    return out;
}

std::size_t column(const SdfGraph& g, const std::string& name)
{
    for (std::size_t n = 0; n < g.nodes.size(); ++n)
        if (g.nodes[n].name == name)
            return n;
    throw std::runtime_error("no node " + name);
}

std::size_t row(const SdfGraph& g, const std::string& name)
{
    for (std::size_t a = 0; a < g.arcs.size(); ++a)
        if (g.arcs[a].name == name)
            return a;
    throw std::runtime_error("no arc " + name);
}

} // namespace

TEST_CASE("memory to Relu to memory at four words per cycle")
{
    ModelBuilder b({1, 2, 2, 2});
    b.act("r", "input");
    const auto m = b.build();
    const auto g = build_sdfg(unit_blocks(m), testgen::test_device(Rational(4)));
    REQUIRE(g.gamma.rows() == 2);
    REQUIRE(g.gamma.cols() == 3);
    const Rational want[2][3] = {{Rational(2), Rational(-1), Rational(0)}, {Rational(0), Rational(1), Rational(-2)}};
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t n = 0; n < 3; ++n)
            CHECK(g.gamma(a, n) == want[a][n]);
}

TEST_CASE("branch arc has one producer and two consumers")
{
    ModelBuilder b({4, 4, 4, 4});
    b.act("relu", "input");
    b.conv("conv1", "relu", 4, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    b.act("swish", "conv1", ActivationType::Swish);
    b.conv("conv2", "swish", 4);
    b.add("add", "conv2", "relu");
    const auto m = b.build();
    const auto g = build_sdfg(unit_blocks(m), testgen::test_device());
    const std::size_t a = row(g, "relu");
    int pos = 0, neg = 0;
    for (std::size_t n = 0; n < g.nodes.size(); ++n) {
        pos += g.gamma(a, n).sign() > 0;
        neg += g.gamma(a, n).sign() < 0;
    }
    CHECK(pos == 1);
    CHECK(neg == 2);
    CHECK(g.gamma(a, column(g, "relu")).sign() > 0);
    CHECK(g.gamma(a, column(g, "conv1")).sign() < 0);
    CHECK(g.gamma(a, column(g, "add")).sign() < 0);
}

TEST_CASE("single rate-one node has unit magnitudes")
{
    ModelBuilder b({2, 2, 2, 2});
    b.act("r", "input");
    const auto m = b.build();
    const auto g = build_sdfg(unit_blocks(m), testgen::test_device(Rational(64)));
    for (std::size_t a = 0; a < g.arcs.size(); ++a)
        CHECK(g.gamma(a, 1).abs() == Rational(1));
}

TEST_CASE("workload matrix entries")
{
    ModelBuilder b({4, 2, 2, 2});
    b.act("r", "input");
    auto g = build_sdfg(unit_blocks(b.build()), testgen::test_device());
    CHECK(g.W(row(g, "input"), column(g, "r")) == -32);
    CHECK(g.W(row(g, "r"), column(g, "r")) == 32);

    ModelBuilder p({3, 16, 16, 16});
    p.gap("gap", "input");
    const auto pm = p.build();
    auto gp = build_sdfg(unit_blocks(pm), testgen::test_device());
    CHECK(gp.W(row(gp, "input"), column(gp, "gap")) == -3 * 4096);
    CHECK(gp.W(row(gp, "gap"), column(gp, "gap")) == 3);

    ModelBuilder mb({8, 4, 4, 4});
    auto v = mb.gap("pool", "input");
    mb.mul("mul", "input", v);
    const auto mm = mb.build();
    auto gm = build_sdfg(unit_blocks(mm), testgen::test_device());
    const auto mul = column(gm, "mul");
    CHECK(gm.W(row(gm, "input"), mul) == -512);
    CHECK(gm.W(row(gm, "pool"), mul) == -8);
    CHECK(gm.W(row(gm, "mul"), mul) == 512);
}

TEST_CASE("workload shape mismatch names the arc")
{
    ModelBuilder b({4, 2, 2, 2});
    b.act("first", "input");
    b.act("second", "first");
    auto m = b.build();
    m.nodes[1].sp_in[0] = {4, 2, 2, 1};
    auto topo = sdf_topology(unit_blocks(m));
    try {
        workload_matrix(topo);
        FAIL("expected shape error");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("first") != std::string::npos);
    }
}

TEST_CASE("multiple external inputs or outputs are rejected")
{
    ModelBuilder b({4, 2, 2, 2});
    b.act("r0", "input");
    b.act("r1", "input");
    b.add("add", "r0", "r1");
    const auto m = b.build();
    CHECK_THROWS_AS(sdf_topology({build_block(m.nodes[2], {})}), StructureError);
    CHECK_THROWS_AS(sdf_topology({build_block(m.nodes[0], {}), build_block(m.nodes[1], {})}), StructureError);
    CHECK_NOTHROW(sdf_topology(unit_blocks(m)));
}

TEST_CASE("initiation interval matrix")
{
    Matrix<std::int64_t> W(1, 2);
    Matrix<Rational> G(1, 2);
    W(0, 0) = 32;
    G(0, 0) = Rational(1, 2);
    W(0, 1) = -32;
    G(0, 1) = Rational(-1);
    const auto r = initiation_intervals(W, G);
    CHECK(r.ii(0, 0) == Rational(64));
    CHECK(r.ii(0, 1) == Rational(32));
    CHECK(r.ii_max == Rational(64));

    G(0, 1) = Rational(0);
    CHECK_THROWS_AS(initiation_intervals(W, G), ModelError);
    G(0, 1) = Rational(1);
    CHECK_THROWS_AS(initiation_intervals(W, G), ModelError);

    ModelBuilder b({4, 4, 4, 4});
    b.act("a", "input");
    b.act("b", "a");
    b.act("c", "b");
    const auto m = b.build();
    const auto g = build_sdfg(unit_blocks(m), testgen::test_device(Rational(64)));
    CHECK(initiation_intervals(g.W, g.gamma).ii_max == Rational(256));
}

TEST_CASE("branch buffers from path depths")
{
    SUBCASE("symmetric branches need no extra words")
    {
        ModelBuilder b({4, 4, 4, 4});
        b.act("fork", "input");
        b.act("left", "fork");
        b.act("right", "fork");
        b.add("add", "left", "right");
        const auto m = b.build();
        const auto g = build_sdfg(unit_blocks(m), testgen::test_device(Rational(64)));
        for (const auto& buf : g.buffers) {
            CHECK(buf.extra_words == 0);
            CHECK(buf.extra_cycles == 0);
        }
    }
    SUBCASE("shallow path absorbs the depth difference")
    {
        ModelBuilder b({4, 4, 4, 4});
        b.act("fork", "input");
        b.act("ident", "fork");
        b.conv("conv", "fork", 4);
        b.add("add", "ident", "conv");
        const auto m = b.build();
        auto g = build_sdfg(unit_blocks(m), testgen::test_device(Rational(64)));
        std::vector<std::int64_t> depths(g.nodes.size(), 0);
        depths[column(g, "fork")] = 2;
        depths[column(g, "ident")] = 2;
        depths[column(g, "conv")] = 1000;
        depths[column(g, "add")] = 2;
        const auto bufs = branch_buffers(g, depths);
        for (const auto& buf : bufs) {
            if (buf.arc == row(g, "ident") && buf.consumer == column(g, "add")) {
                CHECK(buf.extra_cycles == 998);
                CHECK(buf.extra_words == 998); // rate-one stream
            } else {
                CHECK(buf.extra_words == 0);
            }
        }
    }
    SUBCASE("linear chain keeps default FIFOs")
    {
        Rng rng(2);
        const auto m = testgen::random_chain(rng, 5);
        const auto g = build_sdfg(unit_blocks(m), testgen::test_device());
        for (const auto& buf : g.buffers) {
            std::int64_t widest = 0;
            for (std::size_t n = 0; n < g.nodes.size(); ++n)
                widest = std::max(widest, g.S(buf.arc, n));
            CHECK(buf.extra_words == 0);
            CHECK(buf.capacity_words == 2 * widest);
        }
    }
}

TEST_CASE("an exact GAP on one side makes the other side hold a whole item")
{
    const auto m = testgen::type1_block({4, 2, 2, 2}, 8, 2, 8);
    const auto g = build_sdfg(unit_blocks(m), testgen::test_device());
    const auto* skip = g.buffer(row(g, "proj"), column(g, "add"));
    REQUIRE(skip != nullptr);
    CHECK(skip->extra_words >= 8 * 8);
    const auto* main = g.buffer(row(g, "conv_b"), column(g, "se.mul"));
    REQUIRE(main != nullptr);
    CHECK(main->extra_words >= 8 * 8);

    const auto prior = build_sdfg(unit_blocks(m, GapMode::PriorBatch), testgen::test_device());
    CHECK(prior.buffer(row(prior, "proj"), column(prior, "add"))->extra_words < skip->extra_words);
}

TEST_CASE("memory bound scales every node to the boundary rate")
{
    ModelBuilder b({8, 4, 4, 4});
    b.act("a", "input");
    b.act("b", "a");
    const auto m = b.build();
    // 8 streams would need 8 words per cycle; memory gives BW/2 = 2
    const auto g = build_sdfg(blocks_with(m, {{8, 8, 1}, {8, 8, 1}}), testgen::test_device(Rational(4)));
    const auto ii = initiation_intervals(g.W, g.gamma);
    CHECK(ii.ii_max == Rational(512, 2));
    for (std::size_t n = 1; n + 1 < g.nodes.size(); ++n)
        CHECK(g.node_ii[n] == Rational(256));
    // unchanged when memory is fast enough
    const auto fast = build_sdfg(blocks_with(m, {{8, 8, 1}, {8, 8, 1}}), testgen::test_device(Rational(32)));
    CHECK(initiation_intervals(fast.W, fast.gamma).ii_max == Rational(64));
}

TEST_CASE("matrix invariants on random partitions")
{
    Rng rng(77);
    for (int i = 0; i < 60; ++i) {
        const bool chain = i % 4 == 3;
        const auto m = chain ? testgen::random_chain(rng, 1 + rng.index(5))
                             : testgen::random_block(rng, static_cast<PartitionKind>(i % 3));
        std::vector<const LayerNode*> layers;
        for (std::size_t k : m.topological_order())
            layers.push_back(&m.nodes[k]);
        const auto cfg = testgen::random_configs(layers, rng);
        auto blocks = blocks_with(m, cfg);
        std::int64_t max_cycles = 0;
        for (const auto& blk : blocks)
            max_cycles = std::max(max_cycles, blk.cycles);
        // wide enough that memory never binds
        const auto g = build_sdfg(std::move(blocks), testgen::test_device(Rational(1 << 16)));
        for (std::size_t a = 0; a < g.arcs.size(); ++a) {
            int producers = 0;
            for (std::size_t n = 0; n < g.nodes.size(); ++n) {
                CHECK(g.gamma(a, n) == Rational(g.S(a, n)) * g.R(a, n));
                producers += g.gamma(a, n).sign() > 0;
            }
            CHECK(producers == 1);
        }
        for (std::size_t n = 0; n < g.nodes.size(); ++n) {
            bool any = false;
            for (std::size_t a = 0; a < g.arcs.size(); ++a)
                any = any || !g.gamma(a, n).is_zero();
            CHECK(any);
            if (n == g.mem_in())
                for (std::size_t a = 0; a < g.arcs.size(); ++a)
                    CHECK(g.gamma(a, n).sign() >= 0);
            if (n == g.mem_out())
                for (std::size_t a = 0; a < g.arcs.size(); ++a)
                    CHECK(g.gamma(a, n).sign() <= 0);
        }
        if (chain)
            for (std::size_t a = 0; a < g.arcs.size(); ++a)
                for (std::size_t n = 0; n < g.nodes.size(); ++n)
                    CHECK((n == a || n == a + 1) != g.gamma(a, n).is_zero());
        const auto ii = initiation_intervals(g.W, g.gamma);
        for (std::size_t a = 0; a < g.arcs.size(); ++a)
            for (std::size_t n = 0; n < g.nodes.size(); ++n)
                if (ii.ii(a, n))
                    CHECK(ii.ii(a, n)->sign() > 0);
        CHECK(ii.ii_max == Rational(max_cycles));
    }
}

TEST_CASE("matrix dump files carry labels")
{
    ModelBuilder b({2, 2, 2, 2});
    b.act("r", "input");
    const auto m = b.build();
    const auto g = build_sdfg(unit_blocks(m), testgen::test_device(Rational(4)));
    const auto dir = std::filesystem::temp_directory_path() / "sdf3d_dump_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    dump_matrices(g, initiation_intervals(g.W, g.gamma), dir);
    for (const char* f : {"S.csv", "R.csv", "Gamma.csv", "W.csv", "II.csv", "buffers.csv"})
        CHECK(std::filesystem::exists(dir / f));
    std::ifstream in(dir / "Gamma.csv");
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header == "arc,MemIn,r,MemOut");
    CHECK(first == "input,2,-1,0");
    std::filesystem::remove_all(dir);
}
