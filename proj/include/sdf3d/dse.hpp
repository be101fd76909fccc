#pragma once

#include "sdf3d/calibration.hpp"
#include "sdf3d/device.hpp"
#include "sdf3d/hwblocks.hpp"
#include "sdf3d/partitioner.hpp"
#include "sdf3d/perfmodel.hpp"
#include "sdf3d/rng.hpp"
#include "sdf3d/sdfcore.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace sdf3d {

// What one partition search works on. Layers are borrowed from the model.
struct PartitionProblem {
    std::size_t id = 0;
    PartitionKind kind = PartitionKind::Residual;
    std::vector<const LayerNode*> layers;
    DeviceSpec device;
    Calibration calib;
    GapMode gap_mode = GapMode::Exact;
    std::int64_t batch = 1;
};

PartitionProblem make_problem(const ModelGraph& g, const Partition& p, const DeviceSpec& device,
                              const Calibration& calib, std::int64_t batch, GapMode gap_mode = GapMode::Exact);

struct Evaluation {
    Rational ii_max;
    std::int64_t depth_total = 0;
    Rational cycles; // depth_total + ii_max * (B - 1)
    ResourceEstimate rsc;
    bool feasible = false; // resources within the device
    double latency_s = 0.0;
};

// Latency and resources of a configuration without materializing the
// matrices. Agrees exactly with build_sdfg followed by initiation_intervals.
class PartitionEvaluator {
public:
    explicit PartitionEvaluator(const PartitionProblem& problem);
    Evaluation evaluate(const std::vector<ParallelismConfig>& cfgs);
    const PartitionProblem& problem() const { return *problem_; }

private:
    const HardwareBlock& block(std::size_t layer, const ParallelismConfig& cfg);

    const PartitionProblem* problem_;
    SdfGraph skeleton_;
    std::vector<std::map<ParallelismConfig, HardwareBlock>> cache_;
};

struct DesignPoint {
    std::size_t partition = 0;
    PartitionKind kind = PartitionKind::Residual;
    std::vector<ParallelismConfig> cfg;
    SdfGraph graph;
    IIResult ii;
    ResourceEstimate rsc;
    std::int64_t depth_total = 0;
    double latency_s = 0.0;
};

// Full route: blocks, SDF graph, II matrix, resources.
DesignPoint evaluate_design(const PartitionProblem& problem, const std::vector<ParallelismConfig>& cfgs);

PartitionMetrics metrics_of(const DesignPoint& d);

struct AnnealSchedule {
    std::optional<double> t_init;              // calibrated when absent
    double alpha = 0.95;
    std::optional<std::int64_t> iters_per_temp; // 100 x tunables when absent
    double t_min_ratio = 1e-4;                  // t_min = t_init * ratio
    std::uint64_t seed = 1;
    double time_budget_s = 0.0;                 // 0: no limit
    int probe_moves = 100;
    double target_acceptance = 0.8;
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct Move {
    std::size_t layer = 0;
    char param = 's'; // 'i' s_in, 'o' s_out, 'p' p_mac
};

// Reassigns one tunable of one layer to a different feasible value. Returns
// false when no layer has any alternative.
bool neighbor(const std::vector<const LayerNode*>& layers, std::vector<ParallelismConfig>& cfgs, Rng& rng,
              Move* move = nullptr);

bool accept(double delta_cost, double temperature, Rng& rng);

// Number of tunable parameters with more than one value.
std::size_t tunable_count(const std::vector<const LayerNode*>& layers);

DesignPoint optimize_partition(const PartitionProblem& problem, const AnnealSchedule& sched);

// Size of the full configuration space, saturating at `cap + 1`.
std::uint64_t config_space_size(const std::vector<const LayerNode*>& layers, std::uint64_t cap);

// Exhaustive search; throws ArgumentError when the space exceeds `cap`.
DesignPoint brute_force_optimum(const PartitionProblem& problem, std::uint64_t cap = 10'000);

// Optimizes every problem with up to `jobs` threads; results in input order.
// Each partition's seed is derived from sched.seed and its id.
std::vector<DesignPoint> optimize_all(const std::vector<PartitionProblem>& problems, const AnnealSchedule& sched,
                                      unsigned jobs = 1);

} // namespace sdf3d
