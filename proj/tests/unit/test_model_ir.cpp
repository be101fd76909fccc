#include <doctest.h>

#include "gen.hpp"
#include "paths.hpp"
#include "sdf3d/error.hpp"
#include "sdf3d/model_ir.hpp"

#include <json.hpp>

using namespace sdf3d;
using json = nlohmann::json;

namespace {

json relu_layer(const std::string& id, const std::string& in, std::vector<int> shape)
{
    return {{"id", id}, {"kind", "Activation"}, {"inputs", {in}}, {"sp_in", {shape}}, {"sp_out", shape},
            {"params", {{"t", "Relu"}}}};
}

std::string doc(std::vector<int> input, json layers)
{
    return json{{"name", "t"}, {"input_shape", input}, {"layers", layers}}.dump();
}

bool has_violation(const std::vector<Violation>& v, const std::string& node, const std::string& needle)
{
    for (const auto& x : v)
        if (x.node_id == node && x.message.find(needle) != std::string::npos)
            return true;
    return false;
}

} // namespace

TEST_CASE("bundled X3D-M description has 244 layers")
{
    const auto g = load_model(testpaths::data("x3d_m.json"));
    CHECK(g.nodes.size() == 244);
    CHECK(validate_graph(g).empty());
    CHECK(g.workload_gop.at("table") == doctest::Approx(6.4));
    CHECK(g.workload_gop.at("reported") == doctest::Approx(6.2));
    // shape-derived MACs agree with the reported complexity
    CHECK(static_cast<double>(g.total_macs()) / 1e9 == doctest::Approx(6.2).epsilon(0.01));
}

TEST_CASE("single Relu node model")
{
    const auto g = parse_model(doc({1, 1, 1, 1}, json::array({relu_layer("r", "input", {1, 1, 1, 1})})));
    REQUIRE(g.nodes.size() == 1);
    CHECK(g.nodes[0].kind == LayerKind::Activation);
    CHECK(g.topological_order() == std::vector<std::size_t>{0});
}

TEST_CASE("ElementWise with one input is rejected")
{
    json add = {{"id", "a"},
                {"kind", "ElementWise"},
                {"inputs", {"r"}},
                {"sp_in", {{2, 2, 2, 2}}},
                {"sp_out", {2, 2, 2, 2}},
                {"params", {{"t", "Add"}, {"m", "Normal"}}}};
    const auto d = doc({2, 2, 2, 2}, json::array({relu_layer("r", "input", {2, 2, 2, 2}), add}));
    try {
        parse_model(d);
        FAIL("expected rejection");
    } catch (const ModelError& e) {
        CHECK(std::string(e.what()).find("ElementWise requires >= 2 inputs") != std::string::npos);
        CHECK(std::string(e.what()).find("a") != std::string::npos);
    }
    const auto g = parse_model(d, {.validate = false});
    CHECK(has_violation(validate_graph(g), "a", "ElementWise requires >= 2 inputs"));
}

TEST_CASE("schema errors name node and field")
{
    json bad = relu_layer("r", "input", {2, 2, 2, 2});
    bad.erase("sp_out");
    try {
        parse_model(doc({2, 2, 2, 2}, json::array({bad})));
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        const std::string m = e.what();
        CHECK(m.find("'r'") != std::string::npos);
        CHECK(m.find("sp_out") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_model("{not json"), ParseError);
}

TEST_CASE("dangling edge and cycle are graph errors")
{
    CHECK_THROWS_AS(parse_model(doc({2, 2, 2, 2}, json::array({relu_layer("r", "nowhere", {2, 2, 2, 2})}))),
                    GraphError);
    const auto cyc = doc({2, 2, 2, 2}, json::array({relu_layer("a", "b", {2, 2, 2, 2}), relu_layer("b", "a", {2, 2, 2, 2})}));
    try {
        parse_model(cyc);
        FAIL("expected cycle error");
    } catch (const GraphError& e) {
        CHECK(std::string(e.what()).find("cycle") != std::string::npos);
    }
}

TEST_CASE("conv output shape")
{
    ConvParams p;
    p.filters = 12;
    CHECK(conv_output_shape({8, 16, 16, 16}, p) == TensorShape{12, 16, 16, 16});

    ConvParams q;
    q.ks = {3, 3, 3};
    q.sr = {1, 2, 2};
    q.pad = {1, 1, 1};
    q.filters = 7;
    // floor((in + 2 pad - k) / s) + 1 per axis
    const TensorShape in{5, 16, 32, 32};
    const auto out = conv_output_shape(in, q);
    CHECK(out.channels == 7);
    CHECK(out.depth == (16 + 2 - 3) / 1 + 1);
    CHECK(out.height == (32 + 2 - 3) / 2 + 1);
    CHECK(out.width == 16);

    ConvParams r;
    r.ks = {3, 3, 3};
    CHECK_THROWS_AS(conv_output_shape({4, 1, 1, 1}, r), ShapeError);
}

TEST_CASE("validation reports shape mismatches per node")
{
    testgen::ModelBuilder b({4, 4, 4, 4});
    b.conv("c", "input", 8);
    auto g = b.build();
    CHECK(validate_graph(g).empty());
    g.nodes[0].sp_out.height = 3;
    const auto v = validate_graph(g);
    CHECK(has_violation(v, "c", "differs from computed"));

    testgen::ModelBuilder m({4, 2, 2, 2});
    auto v1 = m.gap("g", "input");
    m.mul("m", "input", v1);
    auto mg = m.build();
    CHECK(validate_graph(mg).empty());
    mg.nodes[1].sp_in[1] = {4, 2, 1, 1};
    CHECK(has_violation(validate_graph(mg), "m", "broadcast input"));
}

TEST_CASE("parse, serialize, parse round trip")
{
    const auto g = load_model(testpaths::data("x3d_m.json"));
    const auto again = parse_model(serialize_model(g));
    CHECK(again == g);
    CHECK(serialize_model(again) == serialize_model(g));

    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const auto blk = testgen::random_block(rng, static_cast<PartitionKind>(i % 3));
        CHECK(parse_model(serialize_model(blk)) == blk);
    }
}

TEST_CASE("accepted convolutions match the shape formula and order is topological")
{
    const auto g = load_model(testpaths::data("x3d_m.json"));
    for (const auto& n : g.nodes)
        if (n.kind == LayerKind::Conv3D)
            CHECK(conv_output_shape(n.sp_in[0], n.conv()) == n.sp_out);
    const auto order = g.topological_order();
    std::vector<std::size_t> pos(g.nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        pos[order[i]] = i;
    for (const auto& e : g.edges) {
        if (e.producer == kGraphInput)
            continue;
        CHECK(pos[*g.index_of(e.producer)] < pos[*g.index_of(e.consumer)]);
    }
}
