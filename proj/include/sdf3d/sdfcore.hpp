#pragma once

#include "sdf3d/calibration.hpp"
#include "sdf3d/device.hpp"
#include "sdf3d/format.hpp"
#include "sdf3d/hwblocks.hpp"
#include "sdf3d/rational.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sdf3d {

// Dense arcs x nodes matrix.
template <typename T> class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

inline constexpr std::size_t kNoBlock = std::numeric_limits<std::size_t>::max();

struct SdfNode {
    enum class Role { MemIn, Block, MemOut };
    std::string name;
    Role role = Role::Block;
    std::size_t block = kNoBlock; // index into SdfGraph::blocks for Role::Block
};

struct SdfArc {
    std::string name;
    std::size_t producer = 0;
    std::vector<std::size_t> consumers;      // node indices
    std::vector<std::size_t> consumer_ports; // input index at each consumer
};

// Storage on one (arc, consumer) edge. Capacity is what the simulator's FIFO
// holds; extra_* is the merge-point balancing share of it.
struct ArcBuffer {
    std::size_t arc = 0;
    std::size_t consumer = 0;
    std::int64_t capacity_words = 0;
    std::int64_t extra_words = 0;
    std::int64_t extra_cycles = 0;
};

struct IIResult {
    Matrix<std::optional<Rational>> ii;
    Rational ii_max;
};

// Branch-aware SDF graph of one partition. Node 0 is MemIn, the last node is
// MemOut, blocks sit in between in topological order. Rates are signed:
// positive production, negative consumption. Borrows the LayerNodes its
// blocks reference.
struct SdfGraph {
    std::vector<SdfNode> nodes;
    std::vector<SdfArc> arcs;
    std::vector<HardwareBlock> blocks;
    std::vector<std::vector<std::size_t>> port_arc; // node -> input port -> arc

    Matrix<std::int64_t> S;
    Matrix<Rational> R;
    Matrix<Rational> gamma;
    Matrix<std::int64_t> W;

    std::vector<ArcBuffer> buffers;
    // Cycles per batch item of every node once merge equalization and the
    // memory bound are applied.
    std::vector<Rational> node_ii;
    std::vector<std::int64_t> node_depth;
    Rational memory_rate;           // BW/2 words per cycle
    std::int64_t depth_total = 0;   // sum of block depths + balancing cycles
    GapMode gap_mode = GapMode::Exact;

    std::size_t mem_in() const { return 0; }
    std::size_t mem_out() const { return nodes.size() - 1; }
    // Arc feeding input `port` of node `n`, or kNoBlock.
    std::size_t input_arc(std::size_t n, std::size_t port) const;
    std::size_t output_arc(std::size_t n) const;
    const ArcBuffer* buffer(std::size_t arc, std::size_t consumer) const;
};

// Connectivity only (nodes and arcs with MemIn/MemOut attached). Throws
// StructureError unless the blocks have exactly one external input tensor and
// exactly one output.
SdfGraph sdf_topology(std::vector<HardwareBlock> blocks);

// Rates after merge equalization and the memory bound, per node (memory
// nodes have empty r_in and zero r_out). `blocks` is indexed like g.blocks
// and may differ from it; g must carry W and memory_rate.
struct RateSolution {
    std::vector<std::vector<Rational>> r_in;
    std::vector<Rational> r_out;
    std::vector<Rational> node_ii;
};
RateSolution solve_rates(const SdfGraph& g, const std::vector<const HardwareBlock*>& blocks);

// Cycle at which each node emits its first output, from per-node depths.
std::vector<std::int64_t> arrival_times(const SdfGraph& g, std::span<const std::int64_t> depths);

// Balancing cycles added at merge input `port` of node `n`.
std::int64_t merge_slack(const SdfGraph& g, std::span<const std::int64_t> arrival, std::size_t n, std::size_t port);

// Element counts on every (arc, node) entry, producer positive. Throws
// ShapeError naming the arc when the producer and consumer disagree.
Matrix<std::int64_t> workload_matrix(const SdfGraph& topology);

IIResult initiation_intervals(const Matrix<std::int64_t>& W, const Matrix<Rational>& gamma);

// Merge-point balancing buffers from per-node pipeline depths (indexed like
// g.nodes). Needs g.gamma for word conversion.
std::vector<ArcBuffer> branch_buffers(const SdfGraph& g, std::span<const std::int64_t> depths,
                                      const Calibration& calib = {});

SdfGraph build_sdfg(std::vector<HardwareBlock> blocks, const DeviceSpec& device, const Calibration& calib = {});

// CSV with an "arc" label column and one column per node.
void write_matrix_csv(std::ostream& os, const SdfGraph& g, const Matrix<std::int64_t>& m);
void write_matrix_csv(std::ostream& os, const SdfGraph& g, const Matrix<Rational>& m);
void write_matrix_csv(std::ostream& os, const SdfGraph& g, const Matrix<std::optional<Rational>>& m);

// Writes S.csv, R.csv, Gamma.csv, W.csv, II.csv and buffers.csv into `dir`.
void dump_matrices(const SdfGraph& g, const IIResult& ii, const std::filesystem::path& dir);

} // namespace sdf3d
