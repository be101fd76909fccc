#include <doctest.h>

#include "gen.hpp"
#include "sdf3d/error.hpp"
#include "sdf3d/perfmodel.hpp"

#include <json.hpp>

#include <sstream>

using namespace sdf3d;

namespace {

PartitionMetrics metrics(std::size_t id, Rational ii, std::int64_t depth, std::int64_t dsp)
{
    PartitionMetrics m;
    m.id = id;
    m.ii_max = ii;
    m.depth_total = depth;
    m.rsc = {dsp, 10, 1000, 2000};
    m.layers = 3;
    return m;
}

DeviceSpec device(double t_reconfig = 0.05)
{
    auto d = testgen::test_device();
    d.t_reconfig = t_reconfig;
    return d;
}

} // namespace

TEST_CASE("partition latency")
{
    CHECK(partition_latency(Rational(10000), 1000, 1, 142e6) == 1000 / 142e6);
    CHECK(partition_latency(Rational(10000), 1000, 100, 142e6) == doctest::Approx(991000 / 142e6));
    CHECK(partition_latency(Rational(10000), 1000, 100, 142e6) == doctest::Approx(6.979e-3).epsilon(1e-3));
    CHECK(partition_latency(10000.0, 1000.0, 100, 142e6) == doctest::Approx(6.979e-3).epsilon(1e-3));
    CHECK_THROWS_AS(partition_latency(Rational(10), 5, 0, 1e8), ArgumentError);
    CHECK_THROWS_AS(partition_latency(Rational(0), 5, 2, 1e8), ArgumentError);
    CHECK_THROWS_AS(partition_latency(Rational(10), 5, 2, 0.0), ArgumentError);
    CHECK_THROWS_AS(partition_latency(0.0, 5.0, 2, 1e8), ArgumentError);
}

TEST_CASE("latency is linear in batch")
{
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const Rational ii(1 + static_cast<std::int64_t>(rng.index(100000)), 1 + static_cast<std::int64_t>(rng.index(7)));
        const std::int64_t depth = 1 + static_cast<std::int64_t>(rng.index(100000));
        const std::int64_t b = 1 + static_cast<std::int64_t>(rng.index(500));
        const double clk = 1e8;
        const double lhs = partition_latency(ii, depth, b, clk) - partition_latency(ii, depth, 1, clk);
        const double rhs = (ii * Rational(b - 1)).to_double() / clk;
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("total latency and reconfiguration")
{
    CHECK(total_latency({0.25}, 0.05) == 0.25);
    std::vector<double> parts(26, 0.01);
    CHECK(total_latency(parts, 0.05) == doctest::Approx(26 * 0.01 + 25 * 0.05));
    CHECK_THROWS_AS(total_latency({}, 0.05), ArgumentError);

    // amortization: t_total(B)/B decreases with B
    std::vector<PartitionMetrics> d{metrics(0, Rational(5000), 800, 10), metrics(1, Rational(7000), 300, 20)};
    double prev = 1e300;
    double prev_tp = 0.0;
    for (std::int64_t b : {1, 2, 4, 8, 16, 64, 256, 1024, 1 << 14, 1 << 20}) {
        const auto r = build_report(d, device(), b, 6.4);
        CHECK(r.t_total_s / static_cast<double>(b) < prev);
        CHECK(r.throughput_gops >= prev_tp);
        prev = r.t_total_s / static_cast<double>(b);
        prev_tp = r.throughput_gops;
    }
    // asymptote workload * clock / sum of ii
    const auto big = build_report(d, device(), std::int64_t{1} << 40, 6.4);
    CHECK(big.throughput_gops == doctest::Approx(6.4 * 142e6 / 12000.0).epsilon(1e-6));
}

TEST_CASE("throughput figures from clips per second")
{
    // t_total chosen to give the stated clip rates with B = 1
    const double t1 = 1.0 / 17.58;
    const double t2 = 1.0 / 18.72;
    CHECK(throughput(6.4, 1, t1) == doctest::Approx(112.512));
    CHECK(throughput(6.4, 1, t2) == doctest::Approx(119.808));
    CHECK(std::abs(throughput(6.4, 1, t1) - 112.41) / 112.41 < 0.001);
    CHECK(std::abs(throughput(6.4, 1, t2) - 119.83) / 119.83 < 0.001);
    CHECK(throughput(6.4, 20, 2.0) == throughput(6.4, 10, 1.0));
    CHECK_THROWS_AS(throughput(6.4, 1, 0.0), ArgumentError);
}

TEST_CASE("report of one partition equals its metrics")
{
    const auto m = metrics(0, Rational(1000), 200, 50);
    const auto r = build_report({m}, device(), 10, 1.0);
    REQUIRE(r.rows.size() == 1);
    const double t = (200.0 + 1000.0 * 9) / 142e6;
    CHECK(r.rows[0].latency_s == doctest::Approx(t));
    CHECK(r.t_total_s == doctest::Approx(t));
    CHECK(r.mean_dsp == 50);
    CHECK(r.dsp_frac_max == doctest::Approx(50.0 / 2520));
    CHECK(r.dsp_frac_mean == r.dsp_frac_max);
}

TEST_CASE("two-partition report matches hand computation")
{
    const std::vector<PartitionMetrics> d{metrics(0, Rational(2000), 100, 30), metrics(1, Rational(1000), 400, 90)};
    const auto r = build_report(d, device(0.01), 5, 2.0);
    const double t0 = (100 + 2000 * 4) / 142e6;
    const double t1 = (400 + 1000 * 4) / 142e6;
    const double total = t0 + t1 + 0.01;
    CHECK(r.t_total_s == doctest::Approx(total));
    CHECK(r.throughput_gops == doctest::Approx(2.0 * 5 / total));
    CHECK(r.clips_per_s == doctest::Approx(5 / total));
    CHECK(r.mean_dsp == 60);
    CHECK(r.gops_per_dsp == doctest::Approx(r.throughput_gops / 60));
    CHECK(r.dsp_frac_max == doctest::Approx(90.0 / 2520));
    CHECK(r.dsp_frac_mean == doctest::Approx(60.0 / 2520));
    CHECK(r.clips_per_s * r.workload_gop == doctest::Approx(r.throughput_gops).epsilon(1e-15));

    // totals recomputed from the rows
    std::vector<double> lat;
    for (const auto& row : r.rows)
        lat.push_back(partition_latency(row.m.ii_max, row.m.depth_total, r.batch, r.clock_hz));
    CHECK(total_latency(lat, r.t_reconfig) == r.t_total_s);
    CHECK(throughput(r.workload_gop, r.batch, total_latency(lat, r.t_reconfig)) == r.throughput_gops);
    CHECK_THROWS_AS(build_report({}, device(), 1, 1.0), ArgumentError);
}

TEST_CASE("report serializations")
{
    const std::vector<PartitionMetrics> d{metrics(0, Rational(2000), 100, 30), metrics(1, Rational(1000), 400, 90)};
    const auto r = build_report(d, device(), 5, 6.4, "toy");
    std::ostringstream csv;
    write_report_csv(csv, r);
    std::istringstream in(csv.str());
    std::string header, data, extra;
    std::getline(in, header);
    std::getline(in, data);
    CHECK_FALSE(std::getline(in, extra));
    CHECK(header == "Clips/s,GOp/s,GOp/s/DSP,Clock (MHz),Precision,DSP % (max),DSP % (mean),Batch,Partitions,"
                    "Latency (s)");
    CHECK(data.find(",142,16-bit fixed,") != std::string::npos);

    const auto j = nlohmann::json::parse(report_json(r, R"({"tool":"x"})"));
    CHECK(j["manifest"]["tool"] == "x");
    CHECK(j["partitions"].size() == 2);
    CHECK(j["totals"]["clips_per_s"].get<double>() == r.clips_per_s);
    CHECK(j["model"] == "toy");
}
