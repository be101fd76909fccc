#include "sdf3d/cli.hpp"

#include "sdf3d/calibration.hpp"
#include "sdf3d/device.hpp"
#include "sdf3d/dse.hpp"
#include "sdf3d/error.hpp"
#include "sdf3d/format.hpp"
#include "sdf3d/log.hpp"
#include "sdf3d/model_ir.hpp"
#include "sdf3d/partitioner.hpp"
#include "sdf3d/perfmodel.hpp"
#include "sdf3d/quant.hpp"
#include "sdf3d/sdfcore.hpp"
#include "sdf3d/streamsim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace sdf3d {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Options {
    std::string model;
    std::string device;
    std::string calib;
    std::string design;
    std::string out_dir = ".";
    std::string out;
    std::string input;
    std::string trace;
    std::string gap_mode = "exact";
    std::string workload = "table";
    std::int64_t batch = 1;
    std::uint64_t seed = 1;
    double sa_alpha = 0.95;
    std::int64_t sa_iters = 0;
    double time_budget = 0.0;
    unsigned jobs = 1;
    std::int64_t partition = -1;
    std::int64_t max_cycles = 0; // 0: twice the cycles of D + II * B
    bool payloads = false;
    std::vector<int> wl_weights{16};
    std::vector<int> wl_fm{16};
    std::uint64_t synthetic_seed = 1;
};

std::string timestamp()
{
    const char* v = std::getenv("SOURCE_DATE_EPOCH");
    return v != nullptr && *v != '\0' ? std::string(v) : std::string("unset");
}

json manifest(const std::string& command, const Options& o)
{
    json m;
    m["tool"] = "sdf3d";
    m["version"] = kToolVersion;
    m["command"] = command;
    m["model"] = o.model;
    m["device"] = o.device;
    m["batch"] = o.batch;
    m["seed"] = o.seed;
    m["timestamp"] = timestamp();
    return m;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text))
        throw ConfigError("cannot write '" + path.string() + "'");
}

double workload_of(const ModelGraph& g, const std::string& which)
{
    if (which == "macs")
        return static_cast<double>(g.total_macs()) / 1e9;
    const auto it = g.workload_gop.find(which);
    if (it != g.workload_gop.end())
        return it->second;
    if (which == "table" || which == "reported")
        return static_cast<double>(g.total_macs()) / 1e9;
    throw ArgumentError("model has no workload figure named '" + which + "'");
}

Calibration calibration_from(const std::string& path)
{
    return path.empty() ? Calibration{} : load_calibration(path);
}

// Everything needed to rebuild design points from a design file.
struct Session {
    ModelGraph model;
    DeviceSpec device;
    Calibration calib;
    std::vector<Partition> parts;
    std::int64_t batch = 1;
    GapMode gap_mode = GapMode::Exact;
    double workload_gop = 0.0;
    json manifest;
    std::map<std::size_t, std::vector<ParallelismConfig>> cfgs;
};

std::vector<ParallelismConfig> unit_configs(const std::vector<const LayerNode*>& layers)
{
    return std::vector<ParallelismConfig>(layers.size());
}

Session load_session(const Options& o, bool need_design)
{
    Session s;
    if (!o.design.empty()) {
        const json d = json::parse(read_file(o.design));
        s.manifest = d.at("manifest");
        const std::string model_path = o.model.empty() ? d.at("model").at("path").get<std::string>() : o.model;
        s.model = load_model(model_path);
        s.device = o.device.empty() ? parse_device(d.at("device").dump()) : load_device(o.device);
        s.calib = o.calib.empty() ? parse_calibration(d.at("calibration").dump()) : load_calibration(o.calib);
        s.batch = d.at("batch").get<std::int64_t>();
        s.gap_mode = parse_gap_mode(d.at("gap_mode").get<std::string>());
        s.workload_gop = d.at("workload_gop").get<double>();
        s.parts = partition_model(s.model);
        for (const auto& p : d.at("partitions")) {
            const auto id = p.at("id").get<std::size_t>();
            if (id >= s.parts.size())
                throw ConfigError("design names partition " + std::to_string(id) + " but the model has " +
                                  std::to_string(s.parts.size()));
            const auto layers = partition_layers(s.model, s.parts[id]);
            const auto& cj = p.at("configs");
            if (cj.size() != layers.size())
                throw ConfigError("design partition " + std::to_string(id) + " lists " + std::to_string(cj.size()) +
                                  " layers, the model partition has " + std::to_string(layers.size()));
            std::vector<ParallelismConfig> cfg;
            for (std::size_t i = 0; i < cj.size(); ++i) {
                if (cj[i].at("layer").get<std::string>() != layers[i]->id)
                    throw ConfigError("design partition " + std::to_string(id) + " layer " + std::to_string(i) +
                                      " is '" + cj[i].at("layer").get<std::string>() + "', model has '" +
                                      layers[i]->id + "'");
                cfg.push_back({cj[i].at("s_in").get<std::int64_t>(), cj[i].at("s_out").get<std::int64_t>(),
                               cj[i].at("p_mac").get<std::int64_t>()});
            }
            s.cfgs[id] = std::move(cfg);
        }
        return s;
    }
    if (need_design && (o.model.empty() || o.device.empty()))
        throw ArgumentError("give --design, or both --model and --device");
    s.model = load_model(o.model);
    s.device = load_device(o.device);
    s.calib = calibration_from(o.calib);
    s.batch = o.batch;
    s.gap_mode = parse_gap_mode(o.gap_mode);
    s.workload_gop = workload_of(s.model, o.workload);
    s.parts = partition_model(s.model);
    s.manifest = manifest("unoptimized", o);
    return s;
}

DesignPoint design_point(const Session& s, std::size_t id, std::int64_t batch, GapMode mode)
{
    if (id >= s.parts.size())
        throw ArgumentError("partition " + std::to_string(id) + " out of range (model has " +
                            std::to_string(s.parts.size()) + ")");
    const auto pr = make_problem(s.model, s.parts[id], s.device, s.calib, batch, mode);
    const auto it = s.cfgs.find(id);
    return evaluate_design(pr, it != s.cfgs.end() ? it->second : unit_configs(pr.layers));
}

json census_json(const ModelGraph& g, const std::vector<Partition>& parts)
{
    const auto c = census(parts);
    json j;
    j["summary"] = format_census(c);
    j["counts"] = {{"Type1", c.of(PartitionKind::Type1)},
                   {"Type2", c.of(PartitionKind::Type2)},
                   {"Type3", c.of(PartitionKind::Type3)},
                   {"Residual", c.of(PartitionKind::Residual)}};
    json list = json::array();
    for (const auto& p : parts) {
        json e;
        e["id"] = p.id;
        e["kind"] = std::string(to_string(p.kind));
        json ids = json::array();
        for (std::size_t n : p.nodes)
            ids.push_back(g.nodes[n].id);
        e["layers"] = ids;
        list.push_back(e);
    }
    j["partitions"] = list;
    return j;
}

PerfReport report_of(const Session& s, const std::vector<DesignPoint>& points)
{
    std::vector<PartitionMetrics> m;
    for (const auto& d : points)
        m.push_back(metrics_of(d));
    return build_report(m, s.device, s.batch, s.workload_gop, s.model.name);
}

void write_reports(const fs::path& dir, const Session& s, const PerfReport& r, const json& man)
{
    std::ostringstream csv;
    write_report_csv(csv, r);
    write_file(dir / "report.csv", csv.str());
    json rj = json::parse(report_json(r, man.dump()));
    rj["census"] = census_json(s.model, s.parts);
    write_file(dir / "report.json", rj.dump(2) + "\n");
}

void print_summary(const PerfReport& r)
{
    std::cout << r.rows.size() << " partitions, batch " << r.batch << ": t_total " << format_number(r.t_total_s)
              << " s, " << format_number(r.clips_per_s) << " clips/s, " << format_number(r.throughput_gops)
              << " GOp/s, " << format_number(r.gops_per_dsp) << " GOp/s/DSP\n";
}

int cmd_parse(const Options& o)
{
    const auto g = load_model(o.model);
    std::cout << g.name << ": " << g.nodes.size() << " layers, input " << to_string(g.input_shape) << ", "
              << format_number(static_cast<double>(g.total_macs()) / 1e9) << " GMAC\n";
    return 0;
}

int cmd_partition(const Options& o)
{
    const auto g = load_model(o.model);
    const auto parts = partition_model(g);
    check_partitions(g, parts);
    std::cout << format_census(census(parts)) << '\n';
    for (const auto& p : parts)
        std::cout << "  " << p.id << ' ' << to_string(p.kind) << ' ' << p.nodes.size() << " layers: "
                  << g.nodes[p.nodes.front()].id << " .. " << p.output << '\n';
    if (!o.out.empty()) {
        json j;
        j["manifest"] = manifest("partition", o);
        j.update(census_json(g, parts));
        write_file(o.out, j.dump(2) + "\n");
    }
    return 0;
}

int cmd_optimize(const Options& o)
{
    if (o.model.empty() || o.device.empty())
        throw ArgumentError("optimize needs --model and --device");
    Session s;
    s.model = load_model(o.model);
    s.device = load_device(o.device);
    s.calib = calibration_from(o.calib);
    s.batch = o.batch;
    s.gap_mode = parse_gap_mode(o.gap_mode);
    s.workload_gop = workload_of(s.model, o.workload);
    s.parts = partition_model(s.model);
    log::info(s.model.name, ": ", format_census(census(s.parts)));

    std::vector<PartitionProblem> problems;
    for (const auto& p : s.parts)
        problems.push_back(make_problem(s.model, p, s.device, s.calib, s.batch, s.gap_mode));
    AnnealSchedule sched;
    sched.alpha = o.sa_alpha;
    sched.seed = o.seed;
    sched.time_budget_s = o.time_budget;
    if (o.sa_iters > 0)
        sched.iters_per_temp = o.sa_iters;
    const auto points = optimize_all(problems, sched, o.jobs);

    json man = manifest("optimize", o);
    man["gap_mode"] = std::string(to_string(s.gap_mode));
    man["sa_alpha"] = o.sa_alpha;
    man["sa_iters"] = o.sa_iters > 0 ? json(o.sa_iters) : json("auto");
    man["time_budget_s"] = o.time_budget;

    json d;
    d["manifest"] = man;
    d["model"] = {{"path", o.model}, {"name", s.model.name}};
    d["device"] = json::parse(serialize_device(s.device));
    d["calibration"] = json::parse(serialize_calibration(s.calib));
    d["batch"] = s.batch;
    d["gap_mode"] = std::string(to_string(s.gap_mode));
    d["workload_gop"] = s.workload_gop;
    json parts = json::array();
    for (const auto& pt : points) {
        json p;
        p["id"] = pt.partition;
        p["kind"] = std::string(to_string(pt.kind));
        json cfgs = json::array();
        for (std::size_t i = 0; i < pt.cfg.size(); ++i)
            cfgs.push_back({{"layer", problems[pt.partition].layers[i]->id},
                            {"s_in", pt.cfg[i].s_in},
                            {"s_out", pt.cfg[i].s_out},
                            {"p_mac", pt.cfg[i].p_mac}});
        p["configs"] = cfgs;
        p["ii_max"] = pt.ii.ii_max.str();
        p["depth_total"] = pt.depth_total;
        p["latency_s"] = pt.latency_s;
        p["resources"] = {{"dsp", pt.rsc.dsp}, {"bram18k", pt.rsc.bram18k}, {"lut", pt.rsc.lut}, {"ff", pt.rsc.ff}};
        parts.push_back(p);
    }
    d["partitions"] = parts;

    const fs::path dir(o.out_dir);
    write_file(dir / "design.json", d.dump(2) + "\n");
    const auto r = report_of(s, points);
    write_reports(dir, s, r, man);
    print_summary(r);
    return 0;
}

int cmd_report(const Options& o)
{
    const auto s = load_session(o, true);
    std::vector<DesignPoint> points;
    for (const auto& p : s.parts)
        points.push_back(design_point(s, p.id, s.batch, s.gap_mode));
    json man = s.manifest;
    man["command"] = "report";
    const auto r = report_of(s, points);
    write_reports(fs::path(o.out_dir), s, r, man);
    print_summary(r);
    return 0;
}

int cmd_simulate(const Options& o, bool batch_given, bool mode_given)
{
    const auto s = load_session(o, true);
    if (o.partition < 0)
        throw ArgumentError("simulate needs --partition");
    const std::int64_t batch = batch_given ? o.batch : s.batch;
    const GapMode mode = mode_given ? parse_gap_mode(o.gap_mode) : s.gap_mode;
    const auto d = design_point(s, static_cast<std::size_t>(o.partition), batch, mode);

    SimConfig cfg;
    cfg.batch = batch;
    cfg.max_cycles = o.max_cycles;
    if (cfg.max_cycles == 0)
        cfg.max_cycles = std::max<std::int64_t>(
            1'000'000, 2 * (Rational(d.depth_total) + d.ii.ii_max * Rational(batch)).ceil());
    cfg.payloads = o.payloads;
    std::ofstream trace;
    if (!o.trace.empty()) {
        trace.open(o.trace);
        if (!trace)
            throw ConfigError("cannot write trace '" + o.trace + "'");
        trace << "cycle,node,fired,stalled,occupancy\n";
        cfg.trace = &trace;
    }
    const auto res = simulate(d.graph, cfg);
    const double predicted = predicted_cycles(d.graph, d.ii.ii_max, batch);

    json j;
    j["manifest"] = s.manifest;
    j["manifest"]["command"] = "simulate";
    j["manifest"]["batch"] = batch;
    j["partition"] = d.partition;
    j["kind"] = std::string(to_string(d.kind));
    j["batch"] = batch;
    j["gap_mode"] = std::string(to_string(mode));
    j["simulated_cycles"] = res.total_cycles;
    j["predicted_cycles"] = predicted;
    j["error_pct"] = res.total_cycles > 0 ? 100.0 * (predicted - static_cast<double>(res.total_cycles)) /
                                                static_cast<double>(res.total_cycles)
                                          : 0.0;
    j["deadlock"] = res.deadlock;
    j["truncated"] = res.truncated;
    json nodes = json::array();
    for (const auto& n : res.nodes)
        nodes.push_back({{"name", n.name},
                         {"busy", n.busy_cycles},
                         {"stall", n.stall_cycles},
                         {"items", n.items_done},
                         {"observed_ii", n.observed_ii}});
    j["nodes"] = nodes;
    json fifos = json::array();
    for (const auto& f : res.fifos)
        fifos.push_back({{"arc", d.graph.arcs[f.arc].name},
                         {"consumer", d.graph.nodes[f.consumer].name},
                         {"capacity", f.capacity},
                         {"max_occupancy", f.max_occupancy},
                         {"overflow", f.overflow}});
    j["fifos"] = fifos;
    const std::string text = j.dump(2) + "\n";
    if (!o.out.empty())
        write_file(o.out, text);
    std::cout << "partition " << d.partition << " (" << to_string(d.kind) << "), batch " << batch << ", "
              << to_string(mode) << ": simulated " << res.total_cycles << " cycles, predicted "
              << format_number(predicted) << (res.deadlock ? ", DEADLOCK" : "") << (res.truncated ? ", TRUNCATED" : "")
              << '\n';
    return res.completed() ? 0 : 1;
}

int cmd_dump(const Options& o)
{
    const auto s = load_session(o, true);
    if (o.partition < 0)
        throw ArgumentError("dump-matrices needs --partition");
    const auto d = design_point(s, static_cast<std::size_t>(o.partition), s.batch, s.gap_mode);
    fs::create_directories(o.out_dir);
    dump_matrices(d.graph, d.ii, o.out_dir);
    json man = s.manifest;
    man["command"] = "dump-matrices";
    man["partition"] = d.partition;
    write_file((fs::path(o.out_dir) / "manifest.json").string(), man.dump(2) + "\n");
    std::cout << "wrote S, R, Gamma, W, II and buffer tables for partition " << d.partition << " to " << o.out_dir
              << '\n';
    return 0;
}

int cmd_quantize(const Options& o)
{
    const auto tensors = o.input.empty() ? synthetic_tensors(o.synthetic_seed) : read_tensors(o.input);
    const auto rows = wordlength_sweep(tensors, o.wl_weights, o.wl_fm);
    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    if (o.out.empty())
        std::cout << csv.str();
    else
        write_file(o.out, csv.str());
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args)
{
    CLI::App app{"Streaming 3D-CNN accelerator modelling toolflow", "sdf3d"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    Options o;

    auto add_model = [&](CLI::App* c, bool required) {
        auto* opt = c->add_option("--model", o.model, "Model description (JSON)");
        if (required)
            opt->required();
    };
    auto add_design = [&](CLI::App* c) {
        c->add_option("--design", o.design, "design.json from optimize");
        add_model(c, false);
        c->add_option("--device", o.device, "Device description (JSON)");
        c->add_option("--calibration", o.calib, "Calibration constants (JSON)");
        c->add_option("--batch", o.batch, "Batch size")->check(CLI::PositiveNumber);
        c->add_option("--gap-mode", o.gap_mode, "exact|prior")->check(CLI::IsMember({"exact", "prior"}));
        c->add_option("--workload", o.workload, "Workload figure: table|reported|macs");
    };

    auto* parse = app.add_subcommand("parse", "Parse and validate a model description");
    add_model(parse, true);

    auto* part = app.add_subcommand("partition", "Split a model into streaming partitions");
    add_model(part, true);
    part->add_option("--out", o.out, "Write the census as JSON");

    auto* opt = app.add_subcommand("optimize", "Search parallelism per partition");
    add_model(opt, true);
    opt->add_option("--device", o.device, "Device description (JSON)")->required();
    opt->add_option("--calibration", o.calib, "Calibration constants (JSON)");
    opt->add_option("--batch", o.batch, "Batch size")->check(CLI::PositiveNumber);
    opt->add_option("--seed", o.seed, "Random seed");
    opt->add_option("--sa-alpha", o.sa_alpha, "Cooling factor")->check(CLI::Range(0.0, 1.0));
    opt->add_option("--sa-iters", o.sa_iters, "Moves per temperature (default 100 x tunables)")
        ->check(CLI::PositiveNumber);
    opt->add_option("--time-budget", o.time_budget, "Seconds per partition, 0 for none")->check(CLI::NonNegativeNumber);
    opt->add_option("--jobs", o.jobs, "Concurrent partition searches")->check(CLI::PositiveNumber);
    opt->add_option("--gap-mode", o.gap_mode, "exact|prior")->check(CLI::IsMember({"exact", "prior"}));
    opt->add_option("--workload", o.workload, "Workload figure: table|reported|macs");
    opt->add_option("--out-dir", o.out_dir, "Output directory");

    auto* rep = app.add_subcommand("report", "Recompute the performance report from a design");
    add_design(rep);
    rep->add_option("--out-dir", o.out_dir, "Output directory");

    auto* sim = app.add_subcommand("simulate", "Cycle-level simulation of one partition");
    add_design(sim);
    sim->add_option("--partition", o.partition, "Partition id")->required()->check(CLI::NonNegativeNumber);
    sim->add_option("--max-cycles", o.max_cycles, "Give up after this many cycles (default scales with the design)")->check(CLI::PositiveNumber);
    sim->add_option("--trace", o.trace, "Per-cycle CSV trace file");
    sim->add_flag("--payloads", o.payloads, "Carry integer payloads through the simulation");
    sim->add_option("--out", o.out, "Write the result as JSON");

    auto* dump = app.add_subcommand("dump-matrices", "Write the SDF matrices of one partition as CSV");
    add_design(dump);
    dump->add_option("--partition", o.partition, "Partition id")->required()->check(CLI::NonNegativeNumber);
    dump->add_option("--out-dir", o.out_dir, "Output directory");

    auto* quant = app.add_subcommand("quantize", "Fixed-point word-length sweep");
    quant->add_option("--wl-weights", o.wl_weights, "Weight word lengths")->check(CLI::Range(2, 32));
    quant->add_option("--wl-fm", o.wl_fm, "Feature-map word lengths")->check(CLI::Range(2, 32));
    quant->add_option("--input", o.input, "Tensor file (QTS1)");
    quant->add_option("--synthetic-seed", o.synthetic_seed, "Seed for synthetic tensors when no input is given");
    quant->add_option("--out", o.out, "Sweep CSV (stdout when absent)");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (parse->parsed())
            return cmd_parse(o);
        if (part->parsed())
            return cmd_partition(o);
        if (opt->parsed())
            return cmd_optimize(o);
        if (rep->parsed())
            return cmd_report(o);
        if (sim->parsed())
            return cmd_simulate(o, sim->count("--batch") > 0, sim->count("--gap-mode") > 0);
        if (dump->parsed())
            return cmd_dump(o);
        if (quant->parsed())
            return cmd_quantize(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed design file: " << e.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

int run_cli(int argc, const char* const* argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i)
        args.emplace_back(argv[i]);
    return run_cli(args);
}

} // namespace sdf3d
