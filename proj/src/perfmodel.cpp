#include "sdf3d/perfmodel.hpp"

#include "sdf3d/error.hpp"
#include "sdf3d/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace sdf3d {

double partition_latency(const Rational& ii_max, std::int64_t depth_total, std::int64_t batch, double clock_hz)
{
    if (batch < 1)
        throw ArgumentError("batch size must be at least 1, got " + std::to_string(batch));
    if (!(clock_hz > 0.0))
        throw ArgumentError("clock must be positive");
    if (ii_max.sign() <= 0)
        throw ArgumentError("initiation interval must be positive");
    const Rational cycles = Rational(depth_total) + ii_max * Rational(batch - 1);
    // one rounding to double instead of two
    if (cycles.den() == 1 && std::abs(cycles.num()) <= (std::int64_t{1} << 53))
        return static_cast<double>(cycles.num()) / clock_hz;
    return static_cast<double>(static_cast<long double>(cycles.num()) /
                               (static_cast<long double>(cycles.den()) * static_cast<long double>(clock_hz)));
}

double partition_latency(double ii_max, double depth_total, std::int64_t batch, double clock_hz)
{
    if (batch < 1)
        throw ArgumentError("batch size must be at least 1, got " + std::to_string(batch));
    if (!(clock_hz > 0.0))
        throw ArgumentError("clock must be positive");
    if (!(ii_max > 0.0))
        throw ArgumentError("initiation interval must be positive");
    return (depth_total + ii_max * static_cast<double>(batch - 1)) / clock_hz;
}

double total_latency(const std::vector<double>& parts, double t_reconfig)
{
    if (parts.empty())
        throw ArgumentError("no partitions to sum");
    double t = 0.0;
    for (double p : parts)
        t += p;
    return t + static_cast<double>(parts.size() - 1) * t_reconfig;
}

double throughput(double workload_gop, std::int64_t batch, double t_total)
{
    if (!(t_total > 0.0))
        throw ArgumentError("total latency must be positive");
    return workload_gop * static_cast<double>(batch) / t_total;
}

PerfReport build_report(const std::vector<PartitionMetrics>& parts, const DeviceSpec& device, std::int64_t batch,
                        double workload_gop, const std::string& model_name)
{
    if (parts.empty())
        throw ArgumentError("design has no partitions");
    PerfReport r;
    r.model = model_name;
    r.device = device.name;
    r.batch = batch;
    r.clock_hz = device.clock_hz;
    r.workload_gop = workload_gop;
    r.t_reconfig = device.t_reconfig;

    std::vector<double> lat;
    double dsp_sum = 0.0;
    for (const auto& m : parts) {
        PartitionRow row;
        row.m = m;
        row.latency_s = partition_latency(m.ii_max, m.depth_total, batch, device.clock_hz);
        row.cycles = (Rational(m.depth_total) + m.ii_max * Rational(batch - 1)).to_double();
        lat.push_back(row.latency_s);
        dsp_sum += static_cast<double>(m.rsc.dsp);
        r.dsp_frac_max = std::max(r.dsp_frac_max, static_cast<double>(m.rsc.dsp) / static_cast<double>(device.dsp));
        r.bram_frac_max =
            std::max(r.bram_frac_max, static_cast<double>(m.rsc.bram18k) / static_cast<double>(device.bram18k));
        r.lut_frac_max = std::max(r.lut_frac_max, static_cast<double>(m.rsc.lut) / static_cast<double>(device.lut));
        r.ff_frac_max = std::max(r.ff_frac_max, static_cast<double>(m.rsc.ff) / static_cast<double>(device.ff));
        r.rows.push_back(row);
    }
    r.mean_dsp = dsp_sum / static_cast<double>(parts.size());
    r.dsp_frac_mean = r.mean_dsp / static_cast<double>(device.dsp);
    r.t_total_s = total_latency(lat, device.t_reconfig);
    r.throughput_gops = throughput(workload_gop, batch, r.t_total_s);
    r.clips_per_s = static_cast<double>(batch) / r.t_total_s;
    r.gops_per_dsp = r.mean_dsp > 0.0 ? r.throughput_gops / r.mean_dsp : 0.0;
    return r;
}

void write_report_csv(std::ostream& os, const PerfReport& r)
{
    os << "Clips/s,GOp/s,GOp/s/DSP,Clock (MHz),Precision,DSP % (max),DSP % (mean),Batch,Partitions,Latency (s)\n";
    os << format_number(r.clips_per_s) << ',' << format_number(r.throughput_gops) << ','
       << format_number(r.gops_per_dsp) << ',' << format_number(r.clock_hz / 1e6) << ',' << r.precision << ','
       << format_number(100.0 * r.dsp_frac_max) << ',' << format_number(100.0 * r.dsp_frac_mean) << ',' << r.batch
       << ',' << r.rows.size() << ',' << format_number(r.t_total_s) << '\n';
}

std::string report_json(const PerfReport& r, const std::string& manifest_json)
{
    using json = nlohmann::ordered_json;
    json j;
    if (!manifest_json.empty())
        j["manifest"] = json::parse(manifest_json);
    j["model"] = r.model;
    j["device"] = r.device;
    j["batch"] = r.batch;
    j["clock_hz"] = r.clock_hz;
    j["workload_gop"] = r.workload_gop;
    j["t_reconfig_s"] = r.t_reconfig;
    json rows = json::array();
    for (const auto& row : r.rows) {
        json p;
        p["id"] = row.m.id;
        p["kind"] = std::string(to_string(row.m.kind));
        p["layers"] = row.m.layers;
        p["ii_max"] = row.m.ii_max.to_double();
        p["depth"] = row.m.depth_total;
        p["cycles"] = row.cycles;
        p["latency_s"] = row.latency_s;
        p["resources"] = {{"dsp", row.m.rsc.dsp}, {"bram18k", row.m.rsc.bram18k}, {"lut", row.m.rsc.lut},
                          {"ff", row.m.rsc.ff}};
        rows.push_back(p);
    }
    j["partitions"] = rows;
    j["totals"] = {{"t_total_s", r.t_total_s},
                   {"throughput_gops", r.throughput_gops},
                   {"clips_per_s", r.clips_per_s},
                   {"gops_per_dsp", r.gops_per_dsp},
                   {"mean_dsp", r.mean_dsp},
                   {"dsp_fraction_max", r.dsp_frac_max},
                   {"dsp_fraction_mean", r.dsp_frac_mean},
                   {"bram_fraction_max", r.bram_frac_max},
                   {"lut_fraction_max", r.lut_frac_max},
                   {"ff_fraction_max", r.ff_frac_max},
                   {"precision", r.precision}};
    return j.dump(2) + "\n";
}

} // namespace sdf3d
