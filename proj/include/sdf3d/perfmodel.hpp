#pragma once

#include "sdf3d/device.hpp"
#include "sdf3d/hwblocks.hpp"
#include "sdf3d/partitioner.hpp"
#include "sdf3d/rational.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sdf3d {

// Seconds to stream B items through a pipeline of fill depth `depth_total`
// and initiation interval `ii_max` cycles. Throws ArgumentError for B < 1.
double partition_latency(const Rational& ii_max, std::int64_t depth_total, std::int64_t batch, double clock_hz);
double partition_latency(double ii_max, double depth_total, std::int64_t batch, double clock_hz);

double total_latency(const std::vector<double>& parts, double t_reconfig);

double throughput(double workload_gop, std::int64_t batch, double t_total);

// Per-partition input to the report.
struct PartitionMetrics {
    std::size_t id = 0;
    PartitionKind kind = PartitionKind::Residual;
    std::size_t layers = 0;
    Rational ii_max;
    std::int64_t depth_total = 0;
    ResourceEstimate rsc;
};

struct PartitionRow {
    PartitionMetrics m;
    double cycles = 0.0; // depth + ii_max * (B - 1)
    double latency_s = 0.0;
};

struct PerfReport {
    std::string model;
    std::string device;
    std::int64_t batch = 1;
    double clock_hz = 0.0;
    double workload_gop = 0.0;
    double t_reconfig = 0.0;
    std::vector<PartitionRow> rows;

    double t_total_s = 0.0;
    double throughput_gops = 0.0;
    double clips_per_s = 0.0;
    double gops_per_dsp = 0.0;
    double mean_dsp = 0.0;
    double dsp_frac_max = 0.0;
    double dsp_frac_mean = 0.0;
    double bram_frac_max = 0.0;
    double lut_frac_max = 0.0;
    double ff_frac_max = 0.0;
    std::string precision = "16-bit fixed";
};

PerfReport build_report(const std::vector<PartitionMetrics>& parts, const DeviceSpec& device, std::int64_t batch,
                        double workload_gop, const std::string& model_name = "");

// One header row and one data row with the summary columns.
void write_report_csv(std::ostream& os, const PerfReport& r);
std::string report_json(const PerfReport& r, const std::string& manifest_json = "");

} // namespace sdf3d
