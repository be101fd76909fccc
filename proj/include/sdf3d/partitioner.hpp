#pragma once

#include "sdf3d/model_ir.hpp"

#include <array>
#include <string>
#include <vector>

namespace sdf3d {

enum class PartitionKind { Type1, Type2, Type3, Residual };

std::string_view to_string(PartitionKind k);

struct Partition {
    std::size_t id = 0;
    PartitionKind kind = PartitionKind::Residual;
    std::vector<std::size_t> nodes; // indices into ModelGraph::nodes, topological
    std::string input;              // external input tensor id
    std::string output;             // id of the layer whose tensor leaves the partition
};

struct Census {
    std::array<std::size_t, 4> count{}; // indexed by PartitionKind
    std::size_t total = 0;
    std::size_t typed() const { return count[0] + count[1] + count[2]; }
    std::size_t of(PartitionKind k) const { return count[static_cast<std::size_t>(k)]; }
};

// Splits a validated model into partitions, each with one external input and
// one output and no stream crossing a partition boundary except those two.
std::vector<Partition> partition_model(const ModelGraph& g);

// Classifies a candidate block given as layers in topological order.
PartitionKind classify_block(const std::vector<const LayerNode*>& layers);

// Throws PartitionError unless the partitions cover g disjointly, follow its
// topological order and have a single input and output each.
void check_partitions(const ModelGraph& g, const std::vector<Partition>& parts);

std::vector<const LayerNode*> partition_layers(const ModelGraph& g, const Partition& p);

Census census(const std::vector<Partition>& parts);
std::string format_census(const Census& c);

} // namespace sdf3d
