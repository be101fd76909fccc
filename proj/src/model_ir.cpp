#include "sdf3d/model_ir.hpp"

#include "sdf3d/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

namespace sdf3d {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void schema_error(const std::string& node, const std::string& field, const std::string& what)
{
    std::string where = node.empty() ? "model" : "layer '" + node + "'";
    throw ParseError(where + ": field '" + field + "': " + what);
}

const json& require(const json& obj, const char* key, const std::string& node)
{
    auto it = obj.find(key);
    if (it == obj.end())
        schema_error(node, key, "missing");
    return *it;
}

std::int64_t positive_int(const json& v, const std::string& node, const std::string& field, bool allow_zero = false)
{
    if (!v.is_number_integer())
        schema_error(node, field, "expected an integer");
    auto x = v.get<std::int64_t>();
    if (x < (allow_zero ? 0 : 1))
        schema_error(node, field, allow_zero ? "expected a non-negative integer" : "expected a positive integer");
    return x;
}

std::array<std::int64_t, 3> triple(const json& v, const std::string& node, const std::string& field, bool allow_zero)
{
    if (!v.is_array() || v.size() != 3)
        schema_error(node, field, "expected a 3-value array");
    return {positive_int(v[0], node, field, allow_zero), positive_int(v[1], node, field, allow_zero),
            positive_int(v[2], node, field, allow_zero)};
}

TensorShape parse_shape(const json& v, const std::string& node, const std::string& field)
{
    if (!v.is_array() || v.size() != 4)
        schema_error(node, field, "expected a shape [C,D,H,W]");
    return {positive_int(v[0], node, field), positive_int(v[1], node, field), positive_int(v[2], node, field),
            positive_int(v[3], node, field)};
}

json shape_json(const TensorShape& s) { return json::array({s.channels, s.depth, s.height, s.width}); }

template <typename Enum, std::size_t N>
Enum parse_enum(const json& v, const std::array<std::pair<std::string_view, Enum>, N>& table, const std::string& node,
                const std::string& field)
{
    if (!v.is_string())
        schema_error(node, field, "expected a string");
    auto s = v.get<std::string>();
    for (const auto& [name, value] : table)
        if (name == s)
            return value;
    std::string allowed;
    for (const auto& [name, value] : table)
        allowed += (allowed.empty() ? "" : "|") + std::string(name);
    schema_error(node, field, "unknown value '" + s + "' (expected " + allowed + ")");
}

constexpr std::array<std::pair<std::string_view, LayerKind>, 4> kKinds{{
    {"Conv3D", LayerKind::Conv3D},
    {"Activation", LayerKind::Activation},
    {"ElementWise", LayerKind::ElementWise},
    {"GlobalAvgPool", LayerKind::GlobalAvgPool},
}};
constexpr std::array<std::pair<std::string_view, ActivationType>, 3> kActs{{
    {"Relu", ActivationType::Relu},
    {"Sigmoid", ActivationType::Sigmoid},
    {"Swish", ActivationType::Swish},
}};
constexpr std::array<std::pair<std::string_view, EltwiseOp>, 2> kOps{{
    {"Add", EltwiseOp::Add},
    {"Mul", EltwiseOp::Mul},
}};
constexpr std::array<std::pair<std::string_view, EltwiseMode>, 2> kModes{{
    {"Normal", EltwiseMode::Normal},
    {"Broadcast", EltwiseMode::Broadcast},
}};

LayerNode parse_layer(const json& j, std::size_t index)
{
    if (!j.is_object())
        schema_error("#" + std::to_string(index), "layers", "expected an object");
    LayerNode n;
    const auto& id = require(j, "id", "#" + std::to_string(index));
    if (!id.is_string() || id.get<std::string>().empty())
        schema_error("#" + std::to_string(index), "id", "expected a non-empty string");
    n.id = id.get<std::string>();
    n.kind = parse_enum(require(j, "kind", n.id), kKinds, n.id, "kind");

    const auto& inputs = require(j, "inputs", n.id);
    if (!inputs.is_array())
        schema_error(n.id, "inputs", "expected an array of layer ids");
    for (const auto& in : inputs) {
        if (!in.is_string())
            schema_error(n.id, "inputs", "expected an array of layer ids");
        n.inputs.push_back(in.get<std::string>());
    }
    if (n.inputs.empty())
        n.inputs.emplace_back(kGraphInput);

    const auto& sp_in = require(j, "sp_in", n.id);
    if (sp_in.is_array() && !sp_in.empty() && sp_in[0].is_number())
        n.sp_in.push_back(parse_shape(sp_in, n.id, "sp_in"));
    else if (sp_in.is_array() && !sp_in.empty()) {
        for (const auto& s : sp_in)
            n.sp_in.push_back(parse_shape(s, n.id, "sp_in"));
    } else
        schema_error(n.id, "sp_in", "expected one shape or a list of shapes");
    n.sp_out = parse_shape(require(j, "sp_out", n.id), n.id, "sp_out");

    if (auto w = j.find("weights"); w != j.end()) {
        if (!w->is_array() || w->empty())
            schema_error(n.id, "weights", "expected a shape array");
        std::vector<std::int64_t> ws;
        for (const auto& d : *w)
            ws.push_back(positive_int(d, n.id, "weights"));
        n.weights = std::move(ws);
    }

    static const json kEmpty = json::object();
    const json& params = j.contains("params") ? j["params"] : kEmpty;
    if (!params.is_object())
        schema_error(n.id, "params", "expected an object");
    switch (n.kind) {
    case LayerKind::Conv3D: {
        ConvParams p;
        p.ks = triple(require(params, "ks", n.id), n.id, "params.ks", false);
        p.sr = params.contains("sr") ? triple(params["sr"], n.id, "params.sr", false) : p.sr;
        p.pad = params.contains("pad") ? triple(params["pad"], n.id, "params.pad", true) : p.pad;
        p.gp = params.contains("gp") ? positive_int(params["gp"], n.id, "params.gp") : 1;
        p.filters = n.weights ? n.weights->front() : n.sp_out.channels;
        n.params = p;
        break;
    }
    case LayerKind::Activation:
        n.params = ActivationParams{parse_enum(require(params, "t", n.id), kActs, n.id, "params.t")};
        break;
    case LayerKind::ElementWise: {
        ElementWiseParams p;
        p.t = parse_enum(require(params, "t", n.id), kOps, n.id, "params.t");
        p.m = parse_enum(require(params, "m", n.id), kModes, n.id, "params.m");
        n.params = p;
        break;
    }
    case LayerKind::GlobalAvgPool:
        n.params = GapParams{};
        break;
    }
    return n;
}

std::string join_cycle(const ModelGraph& g, const std::vector<std::size_t>& remaining)
{
    std::string out;
    for (std::size_t i : remaining) {
        if (!out.empty())
            out += ", ";
        out += g.nodes[i].id;
        if (out.size() > 200) {
            out += ", ...";
            break;
        }
    }
    return out;
}

} // namespace

std::string to_string(const TensorShape& s)
{
    std::ostringstream os;
    os << "(" << s.channels << "," << s.depth << "," << s.height << "," << s.width << ")";
    return os.str();
}

std::string_view to_string(LayerKind k)
{
    for (const auto& [name, v] : kKinds)
        if (v == k)
            return name;
    return "?";
}
std::string_view to_string(ActivationType t)
{
    for (const auto& [name, v] : kActs)
        if (v == t)
            return name;
    return "?";
}
std::string_view to_string(EltwiseOp t)
{
    for (const auto& [name, v] : kOps)
        if (v == t)
            return name;
    return "?";
}
std::string_view to_string(EltwiseMode m)
{
    for (const auto& [name, v] : kModes)
        if (v == m)
            return name;
    return "?";
}

std::int64_t LayerNode::macs() const
{
    if (kind != LayerKind::Conv3D)
        return 0;
    const auto& p = conv();
    return sp_out.spatial() * sp_out.channels * (sp_in.at(0).channels / p.gp) * p.kernel_volume();
}

const LayerNode* ModelGraph::find(std::string_view id) const
{
    auto i = index_of(id);
    return i ? &nodes[*i] : nullptr;
}

std::optional<std::size_t> ModelGraph::index_of(std::string_view id) const
{
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == id)
            return i;
    return std::nullopt;
}

std::vector<std::size_t> ModelGraph::consumers_of(std::string_view id) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (std::find(nodes[i].inputs.begin(), nodes[i].inputs.end(), id) != nodes[i].inputs.end())
            out.push_back(i);
    return out;
}

std::vector<std::size_t> ModelGraph::topological_order() const
{
    std::map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        index.emplace(nodes[i].id, i);

    std::vector<std::size_t> indegree(nodes.size(), 0);
    std::vector<std::vector<std::size_t>> succ(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (const auto& in : nodes[i].inputs) {
            auto it = index.find(in);
            if (it == index.end())
                continue;
            ++indegree[i];
            succ[it->second].push_back(i);
        }
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (indegree[i] == 0)
            ready.push(i);
    std::vector<std::size_t> order;
    order.reserve(nodes.size());
    while (!ready.empty()) {
        std::size_t n = ready.top();
        ready.pop();
        order.push_back(n);
        for (std::size_t s : succ[n])
            if (--indegree[s] == 0)
                ready.push(s);
    }
    if (order.size() != nodes.size()) {
        std::vector<std::size_t> stuck;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (indegree[i] != 0)
                stuck.push_back(i);
        throw GraphError("cycle detected through layers: " + join_cycle(*this, stuck));
    }
    return order;
}

std::int64_t ModelGraph::total_macs() const
{
    std::int64_t m = 0;
    for (const auto& n : nodes)
        m += n.macs();
    return m;
}

TensorShape conv_output_shape(const TensorShape& sp_in, const ConvParams& p)
{
    const std::array<std::int64_t, 3> dims{sp_in.depth, sp_in.height, sp_in.width};
    std::array<std::int64_t, 3> out{};
    static constexpr std::array<const char*, 3> kNames{"depth", "height", "width"};
    for (int i = 0; i < 3; ++i) {
        std::int64_t span = dims[i] + 2 * p.pad[i] - p.ks[i];
        if (span < 0 || p.sr[i] < 1)
            throw ShapeError(std::string("kernel exceeds padded input along ") + kNames[i] + " (input " +
                             std::to_string(dims[i]) + ", kernel " + std::to_string(p.ks[i]) + ", pad " +
                             std::to_string(p.pad[i]) + ")");
        out[i] = span / p.sr[i] + 1;
    }
    return {p.filters, out[0], out[1], out[2]};
}

std::vector<Violation> validate_graph(const ModelGraph& g)
{
    std::vector<Violation> v;
    auto add = [&v](const std::string& id, std::string msg) { v.push_back({id, std::move(msg)}); };

    std::map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& n = g.nodes[i];
        if (n.id == kGraphInput)
            add(n.id, "layer id '" + std::string(kGraphInput) + "' is reserved for the graph input");
        if (!index.emplace(n.id, i).second)
            add(n.id, "duplicate layer id");
    }
    if (g.nodes.empty())
        add("", "model has no layers");

    auto producer_shape = [&](const std::string& id) -> std::optional<TensorShape> {
        if (id == kGraphInput)
            return g.input_shape;
        auto it = index.find(id);
        if (it == index.end())
            return std::nullopt;
        return g.nodes[it->second].sp_out;
    };

    for (const auto& n : g.nodes) {
        const std::size_t arity = n.inputs.size();
        if (n.kind == LayerKind::ElementWise) {
            if (arity < 2)
                add(n.id, "ElementWise requires >= 2 inputs");
        } else if (arity != 1) {
            add(n.id, std::string(to_string(n.kind)) + " requires exactly 1 input, got " + std::to_string(arity));
        }
        if (n.sp_in.size() != arity)
            add(n.id, "sp_in lists " + std::to_string(n.sp_in.size()) + " shapes for " + std::to_string(arity) +
                          " inputs");
        for (std::size_t k = 0; k < arity; ++k) {
            auto ps = producer_shape(n.inputs[k]);
            if (!ps) {
                add(n.id, "input '" + n.inputs[k] + "' does not name a layer");
                continue;
            }
            if (k < n.sp_in.size() && !(*ps == n.sp_in[k]))
                add(n.id, "sp_in[" + std::to_string(k) + "] " + to_string(n.sp_in[k]) + " differs from producer '" +
                              n.inputs[k] + "' output " + to_string(*ps));
        }
        if (n.sp_in.empty())
            continue;

        switch (n.kind) {
        case LayerKind::Conv3D: {
            const auto& p = n.conv();
            const auto& in = n.sp_in[0];
            if (in.channels % p.gp != 0)
                add(n.id, "groups " + std::to_string(p.gp) + " do not divide input channels " +
                              std::to_string(in.channels));
            if (n.sp_out.channels % p.gp != 0)
                add(n.id, "groups " + std::to_string(p.gp) + " do not divide output channels " +
                              std::to_string(n.sp_out.channels));
            if (p.filters != n.sp_out.channels)
                add(n.id, "weight shape gives " + std::to_string(p.filters) + " filters but sp_out has " +
                              std::to_string(n.sp_out.channels) + " channels");
            if (n.weights) {
                std::vector<std::int64_t> expect{n.sp_out.channels, in.channels / std::max<std::int64_t>(p.gp, 1),
                                                 p.ks[0], p.ks[1], p.ks[2]};
                if (*n.weights != expect)
                    add(n.id, "weight shape inconsistent with [C_out, C_in/gp, K_d, K_h, K_w]");
            }
            try {
                auto expect = conv_output_shape(in, p);
                if (!(expect == n.sp_out))
                    add(n.id, "declared sp_out " + to_string(n.sp_out) + " differs from computed " + to_string(expect));
            } catch (const ShapeError& e) {
                add(n.id, e.what());
            }
            break;
        }
        case LayerKind::Activation:
            if (!(n.sp_in[0] == n.sp_out))
                add(n.id, "activation must preserve shape");
            break;
        case LayerKind::ElementWise: {
            if (n.sp_in.size() < 2)
                break;
            if (n.eltwise().m == EltwiseMode::Normal) {
                for (std::size_t k = 1; k < n.sp_in.size(); ++k)
                    if (!(n.sp_in[k] == n.sp_in[0]))
                        add(n.id, "normal element-wise inputs must have identical shapes");
            } else {
                const auto& vec = n.sp_in[1];
                if (!vec.is_vector() || vec.channels != n.sp_in[0].channels)
                    add(n.id, "broadcast input " + to_string(vec) + " must be (" +
                                  std::to_string(n.sp_in[0].channels) + ",1,1,1)");
                if (n.sp_in.size() != 2)
                    add(n.id, "broadcast element-wise takes exactly 2 inputs");
            }
            if (!(n.sp_out == n.sp_in[0]))
                add(n.id, "element-wise output shape must equal its first input");
            break;
        }
        case LayerKind::GlobalAvgPool: {
            TensorShape expect{n.sp_in[0].channels, 1, 1, 1};
            if (!(n.sp_out == expect))
                add(n.id, "global average pool output must be " + to_string(expect));
            break;
        }
        }
    }

    // Whole-graph structure.
    try {
        (void)g.topological_order();
    } catch (const GraphError& e) {
        add("", e.what());
    }

    std::vector<std::size_t> parent(g.nodes.size() + 1);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&parent](std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    const std::size_t input_slot = g.nodes.size();
    std::vector<bool> consumed(g.nodes.size(), false);
    bool input_used = false;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        for (const auto& in : g.nodes[i].inputs) {
            std::size_t p;
            if (in == kGraphInput) {
                p = input_slot;
                input_used = true;
            } else if (auto it = index.find(in); it != index.end()) {
                p = it->second;
                consumed[p] = true;
            } else {
                continue;
            }
            parent[find(p)] = find(i);
        }
    }
    if (!g.nodes.empty()) {
        if (!input_used)
            add("", "no layer reads the graph input");
        std::set<std::size_t> roots;
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
            roots.insert(find(i));
        if (roots.size() > 1)
            add("", "graph has " + std::to_string(roots.size()) + " disconnected components");
        std::vector<std::string> outputs;
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
            if (!consumed[i])
                outputs.push_back(g.nodes[i].id);
        if (outputs.size() != 1) {
            std::string names;
            for (const auto& o : outputs)
                names += (names.empty() ? "" : ", ") + o;
            add("", "expected exactly one graph output, found " + std::to_string(outputs.size()) +
                        (names.empty() ? "" : " (" + names + ")"));
        }
    }
    return v;
}

ModelGraph parse_model(std::string_view document, ParseOptions options)
{
    json j;
    try {
        j = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed model description: ") + e.what());
    }
    if (!j.is_object())
        schema_error("", "(root)", "expected an object");

    ModelGraph g;
    const auto& name = require(j, "name", "");
    if (!name.is_string())
        schema_error("", "name", "expected a string");
    g.name = name.get<std::string>();

    const auto& layers = require(j, "layers", "");
    if (!layers.is_array())
        schema_error("", "layers", "expected an array");
    for (std::size_t i = 0; i < layers.size(); ++i)
        g.nodes.push_back(parse_layer(layers[i], i));

    if (auto w = j.find("workload_gop"); w != j.end()) {
        if (!w->is_object())
            schema_error("", "workload_gop", "expected an object of numbers");
        for (const auto& [k, val] : w->items()) {
            if (!val.is_number())
                schema_error("", "workload_gop." + k, "expected a number");
            g.workload_gop[k] = val.get<double>();
        }
    }

    if (auto s = j.find("input_shape"); s != j.end()) {
        g.input_shape = parse_shape(*s, "", "input_shape");
    } else {
        bool found = false;
        for (const auto& n : g.nodes) {
            for (std::size_t k = 0; k < n.inputs.size() && k < n.sp_in.size(); ++k) {
                if (n.inputs[k] == kGraphInput) {
                    g.input_shape = n.sp_in[k];
                    found = true;
                    break;
                }
            }
            if (found)
                break;
        }
    }

    std::set<std::string_view> ids;
    for (const auto& n : g.nodes)
        ids.insert(n.id);
    for (const auto& n : g.nodes) {
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const auto& in = n.inputs[k];
            if (in != kGraphInput && !ids.count(in))
                throw GraphError("layer '" + n.id + "': input '" + in + "' does not name a layer (dangling edge)");
            g.edges.push_back({in, n.id, k});
        }
    }
    (void)g.topological_order();

    if (options.validate) {
        auto violations = validate_graph(g);
        if (!violations.empty()) {
            std::string msg = "invalid model '" + g.name + "':";
            for (const auto& viol : violations)
                msg += "\n  " + (viol.node_id.empty() ? std::string("(graph)") : viol.node_id) + ": " + viol.message;
            throw ModelError(msg);
        }
    }
    return g;
}

ModelGraph load_model(const std::string& path, ParseOptions options)
{
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open model description '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str(), options);
}

std::string serialize_model(const ModelGraph& g)
{
    json j;
    j["name"] = g.name;
    j["input_shape"] = shape_json(g.input_shape);
    if (!g.workload_gop.empty()) {
        json w = json::object();
        for (const auto& [k, val] : g.workload_gop)
            w[k] = val;
        j["workload_gop"] = w;
    }
    json layers = json::array();
    for (const auto& n : g.nodes) {
        json l;
        l["id"] = n.id;
        l["kind"] = std::string(to_string(n.kind));
        l["inputs"] = n.inputs;
        json sp_in = json::array();
        for (const auto& s : n.sp_in)
            sp_in.push_back(shape_json(s));
        l["sp_in"] = sp_in;
        l["sp_out"] = shape_json(n.sp_out);
        json params = json::object();
        switch (n.kind) {
        case LayerKind::Conv3D: {
            const auto& p = n.conv();
            params["ks"] = p.ks;
            params["sr"] = p.sr;
            params["pad"] = p.pad;
            params["gp"] = p.gp;
            break;
        }
        case LayerKind::Activation:
            params["t"] = std::string(to_string(n.activation().t));
            break;
        case LayerKind::ElementWise:
            params["t"] = std::string(to_string(n.eltwise().t));
            params["m"] = std::string(to_string(n.eltwise().m));
            break;
        case LayerKind::GlobalAvgPool:
            break;
        }
        l["params"] = params;
        if (n.weights)
            l["weights"] = *n.weights;
        layers.push_back(l);
    }
    j["layers"] = layers;
    return j.dump(1) + "\n";
}

} // namespace sdf3d
