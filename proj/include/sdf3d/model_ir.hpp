#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sdf3d {

// Reserved producer id naming the model's external input tensor.
inline constexpr std::string_view kGraphInput = "input";

struct TensorShape {
    std::int64_t channels = 1;
    std::int64_t depth = 1;
    std::int64_t height = 1;
    std::int64_t width = 1;

    std::int64_t elements() const { return channels * depth * height * width; }
    std::int64_t spatial() const { return depth * height * width; }
    bool is_vector() const { return depth == 1 && height == 1 && width == 1; }

    friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

std::string to_string(const TensorShape& s);

enum class LayerKind { Conv3D, Activation, ElementWise, GlobalAvgPool };
enum class ActivationType { Relu, Sigmoid, Swish };
enum class EltwiseOp { Add, Mul };
enum class EltwiseMode { Normal, Broadcast };

struct ConvParams {
    std::array<std::int64_t, 3> ks{1, 1, 1};
    std::array<std::int64_t, 3> sr{1, 1, 1};
    std::array<std::int64_t, 3> pad{0, 0, 0};
    std::int64_t gp = 1;
    // Output channel count; taken from the weight shape when one is given.
    std::int64_t filters = 1;

    std::int64_t kernel_volume() const { return ks[0] * ks[1] * ks[2]; }
    bool is_pointwise() const { return ks == std::array<std::int64_t, 3>{1, 1, 1}; }

    friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

struct ActivationParams {
    ActivationType t = ActivationType::Relu;
    friend bool operator==(const ActivationParams&, const ActivationParams&) = default;
};

struct ElementWiseParams {
    EltwiseOp t = EltwiseOp::Add;
    EltwiseMode m = EltwiseMode::Normal;
    friend bool operator==(const ElementWiseParams&, const ElementWiseParams&) = default;
};

struct GapParams {
    friend bool operator==(const GapParams&, const GapParams&) = default;
};

using LayerParams = std::variant<ConvParams, ActivationParams, ElementWiseParams, GapParams>;

struct LayerNode {
    std::string id;
    LayerKind kind = LayerKind::Activation;
    std::vector<std::string> inputs;
    std::vector<TensorShape> sp_in;
    TensorShape sp_out;
    LayerParams params = ActivationParams{};
    // Weight tensor shape, metadata only; no values are stored.
    std::optional<std::vector<std::int64_t>> weights;

    const ConvParams& conv() const { return std::get<ConvParams>(params); }
    const ActivationParams& activation() const { return std::get<ActivationParams>(params); }
    const ElementWiseParams& eltwise() const { return std::get<ElementWiseParams>(params); }

    bool is_depthwise() const
    {
        return kind == LayerKind::Conv3D && conv().gp > 1 && conv().gp == sp_in.at(0).channels;
    }
    bool is_broadcast() const
    {
        return kind == LayerKind::ElementWise && eltwise().m == EltwiseMode::Broadcast;
    }

    // Multiply-accumulates for one batch item (Conv3D only, zero otherwise).
    std::int64_t macs() const;

    friend bool operator==(const LayerNode&, const LayerNode&) = default;
};

struct Edge {
    std::string producer;
    std::string consumer;
    std::size_t input_index = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
};

struct ModelGraph {
    std::string name;
    TensorShape input_shape;
    std::vector<LayerNode> nodes;
    std::vector<Edge> edges;
    // Named workload figures in GOp (e.g. "reported", "table").
    std::map<std::string, double> workload_gop;

    const LayerNode* find(std::string_view id) const;
    std::optional<std::size_t> index_of(std::string_view id) const;

    // Deterministic topological order as node indices; ties resolve by
    // position in `nodes`. Throws GraphError naming a node on a cycle.
    std::vector<std::size_t> topological_order() const;

    // Indices of nodes consuming the output of `id` (kGraphInput allowed).
    std::vector<std::size_t> consumers_of(std::string_view id) const;

    std::int64_t total_macs() const;

    friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

struct Violation {
    std::string node_id;
    std::string message;
};

struct ParseOptions {
    bool validate = true;
};

// Parses the JSON model description. Schema errors raise ParseError naming the
// node and field; unresolved or cyclic connectivity raises GraphError; any
// other invariant violation raises ModelError listing every violation.
ModelGraph parse_model(std::string_view document, ParseOptions options = {});
ModelGraph load_model(const std::string& path, ParseOptions options = {});

std::string serialize_model(const ModelGraph& g);

TensorShape conv_output_shape(const TensorShape& sp_in, const ConvParams& p);

// Every invariant violation, one entry each. Empty iff well-formed.
std::vector<Violation> validate_graph(const ModelGraph& g);

std::string_view to_string(LayerKind k);
std::string_view to_string(ActivationType t);
std::string_view to_string(EltwiseOp t);
std::string_view to_string(EltwiseMode m);

} // namespace sdf3d
