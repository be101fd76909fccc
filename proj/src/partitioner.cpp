#include "sdf3d/partitioner.hpp"

#include "sdf3d/error.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace sdf3d {
namespace {

using Ancestors = std::set<std::string>;

// Ancestors of tensor `id` restricted to the layers in `by_id`, `id` included.
Ancestors ancestors(const std::map<std::string, const LayerNode*>& by_id, const std::string& id)
{
    Ancestors seen;
    std::vector<std::string> stack{id};
    while (!stack.empty()) {
        auto cur = stack.back();
        stack.pop_back();
        auto it = by_id.find(cur);
        if (it == by_id.end() || !seen.insert(cur).second)
            continue;
        for (const auto& in : it->second->inputs)
            stack.push_back(in);
    }
    return seen;
}

// Layers reachable from input `k` of `merge` that no other input reaches.
std::vector<const LayerNode*> branch_of(const std::map<std::string, const LayerNode*>& by_id, const LayerNode& merge,
                                        std::size_t k)
{
    Ancestors mine = ancestors(by_id, merge.inputs[k]);
    for (std::size_t j = 0; j < merge.inputs.size(); ++j) {
        if (j == k)
            continue;
        for (const auto& a : ancestors(by_id, merge.inputs[j]))
            mine.erase(a);
    }
    std::vector<const LayerNode*> out;
    for (const auto& id : mine)
        out.push_back(by_id.at(id));
    return out;
}

bool has_kind(const std::vector<const LayerNode*>& layers, LayerKind k)
{
    return std::any_of(layers.begin(), layers.end(), [k](const LayerNode* n) { return n->kind == k; });
}

} // namespace

std::string_view to_string(PartitionKind k)
{
    switch (k) {
    case PartitionKind::Type1:
        return "Type1";
    case PartitionKind::Type2:
        return "Type2";
    case PartitionKind::Type3:
        return "Type3";
    case PartitionKind::Residual:
        return "Residual";
    }
    return "?";
}

PartitionKind classify_block(const std::vector<const LayerNode*>& layers)
{
    std::map<std::string, const LayerNode*> by_id;
    std::vector<const LayerNode*> merges;
    for (const auto* n : layers) {
        by_id[n->id] = n;
        if (n->kind == LayerKind::ElementWise)
            merges.push_back(n);
    }
    if (merges.size() == 1)
        return PartitionKind::Type3;
    if (merges.size() != 2)
        return PartitionKind::Residual;

    // Inner merge: one of its branches holds a GAP and no other merge.
    const LayerNode* inner = nullptr;
    for (const auto* m : merges)
        for (std::size_t k = 0; k < m->inputs.size(); ++k) {
            const auto br = branch_of(by_id, *m, k);
            if (has_kind(br, LayerKind::GlobalAvgPool) && !has_kind(br, LayerKind::ElementWise))
                inner = m;
        }
    if (inner == nullptr)
        return PartitionKind::Residual;
    const LayerNode* outer = merges[0] == inner ? merges[1] : merges[0];

    // The inner merge must sit on one of the outer merge's branches.
    std::size_t main = outer->inputs.size();
    for (std::size_t k = 0; k < outer->inputs.size(); ++k)
        if (ancestors(by_id, outer->inputs[k]).count(inner->id))
            main = k;
    if (main == outer->inputs.size())
        return PartitionKind::Residual;
    for (std::size_t k = 0; k < outer->inputs.size(); ++k)
        if (k != main && has_kind(branch_of(by_id, *outer, k), LayerKind::Conv3D))
            return PartitionKind::Type1;
    return PartitionKind::Type2;
}

std::vector<const LayerNode*> partition_layers(const ModelGraph& g, const Partition& p)
{
    std::vector<const LayerNode*> out;
    for (std::size_t i : p.nodes)
        out.push_back(&g.nodes.at(i));
    return out;
}

std::vector<Partition> partition_model(const ModelGraph& g)
{
    const auto order = g.topological_order();
    const std::size_t n = order.size();
    std::vector<std::size_t> pos(g.nodes.size());
    for (std::size_t i = 0; i < n; ++i)
        pos[order[i]] = i;

    // last_use[i]: latest position consuming the tensor produced at position i.
    std::vector<std::size_t> last_use(n, 0);
    std::size_t input_last = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& in : g.nodes[order[i]].inputs) {
            if (in == kGraphInput) {
                input_last = std::max(input_last, i);
                continue;
            }
            auto idx = g.index_of(in);
            last_use[pos[*idx]] = std::max(last_use[pos[*idx]], i);
        }
    }

    // A cut after position i is legal when every stream alive across it comes
    // from node i itself.
    std::vector<std::pair<std::size_t, std::size_t>> segments; // [begin, end)
    std::size_t begin = 0;
    std::size_t earlier = input_last; // furthest use of tensors produced before i
    for (std::size_t i = 0; i < n; ++i) {
        if (earlier <= i || i + 1 == n) {
            segments.emplace_back(begin, i + 1);
            begin = i + 1;
        }
        earlier = std::max(earlier, last_use[i]);
    }

    auto seg_layers = [&](std::size_t b, std::size_t e) {
        std::vector<const LayerNode*> v;
        for (std::size_t i = b; i < e; ++i)
            v.push_back(&g.nodes[order[i]]);
        return v;
    };
    auto has_merge = [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i)
            if (g.nodes[order[i]].kind == LayerKind::ElementWise)
                return true;
        return false;
    };

    // Branching segments become blocks; an activation right after a block
    // joins it. Everything else is gathered into residual runs.
    struct Group {
        std::size_t b, e;
        bool block;
    };
    std::vector<Group> groups;
    for (const auto& [b, e] : segments) {
        const bool merge = has_merge(b, e);
        const bool seam = !merge && e - b == 1 && g.nodes[order[b]].kind == LayerKind::Activation && !groups.empty() &&
                          groups.back().block;
        if (seam)
            groups.back().e = e;
        else if (!merge && !groups.empty() && !groups.back().block)
            groups.back().e = e;
        else
            groups.push_back({b, e, merge});
    }

    std::vector<Partition> parts;
    for (const auto& grp : groups) {
        Partition p;
        p.id = parts.size();
        for (std::size_t i = grp.b; i < grp.e; ++i)
            p.nodes.push_back(order[i]);
        p.kind = grp.block ? classify_block(seg_layers(grp.b, grp.e)) : PartitionKind::Residual;
        p.output = g.nodes[order[grp.e - 1]].id;
        std::set<std::size_t> inside(p.nodes.begin(), p.nodes.end());
        for (std::size_t i : p.nodes)
            for (const auto& in : g.nodes[i].inputs) {
                auto idx = g.index_of(in);
                if (!idx || !inside.count(*idx))
                    p.input = in;
            }
        parts.push_back(std::move(p));
    }
    check_partitions(g, parts);
    return parts;
}

void check_partitions(const ModelGraph& g, const std::vector<Partition>& parts)
{
    const auto order = g.topological_order();
    std::vector<std::size_t> concat;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& p = parts[k];
        if (p.id != k)
            throw PartitionError("partition ids must be consecutive from 0");
        if (p.nodes.empty())
            throw PartitionError("partition " + std::to_string(k) + " is empty");
        concat.insert(concat.end(), p.nodes.begin(), p.nodes.end());
    }
    if (concat != order)
        throw PartitionError("partitions do not cover the model in topological order");

    std::vector<std::size_t> owner(g.nodes.size());
    for (const auto& p : parts)
        for (std::size_t i : p.nodes)
            owner[i] = p.id;

    for (const auto& p : parts) {
        std::set<std::string> external;
        std::vector<std::string> leaving;
        for (std::size_t i : p.nodes) {
            const auto& node = g.nodes[i];
            for (const auto& in : node.inputs) {
                auto idx = g.index_of(in);
                if (!idx || owner[*idx] != p.id)
                    external.insert(in);
            }
            auto cons = g.consumers_of(node.id);
            const bool escapes =
                cons.empty() || std::any_of(cons.begin(), cons.end(), [&](std::size_t c) { return owner[c] != p.id; });
            if (escapes)
                leaving.push_back(node.id);
        }
        const std::string where = "partition " + std::to_string(p.id);
        if (external.size() != 1)
            throw PartitionError(where + ": " + std::to_string(external.size()) +
                                 " external inputs (a branch crosses its boundary)");
        if (leaving.size() != 1)
            throw PartitionError(where + ": " + std::to_string(leaving.size()) +
                                 " outputs leave it (a branch crosses its boundary)");
        if (*external.begin() != p.input || leaving.front() != p.output)
            throw PartitionError(where + ": recorded boundary does not match its layers");
    }
}

Census census(const std::vector<Partition>& parts)
{
    Census c;
    for (const auto& p : parts)
        ++c.count[static_cast<std::size_t>(p.kind)];
    c.total = parts.size();
    return c;
}

std::string format_census(const Census& c)
{
    std::ostringstream os;
    os << c.typed() << " partitions (" << c.of(PartitionKind::Type1) << '/' << c.of(PartitionKind::Type2) << '/'
       << c.of(PartitionKind::Type3) << ") + " << c.of(PartitionKind::Residual) << " residual";
    return os.str();
}

} // namespace sdf3d
