#include "sdf3d/dse.hpp"

#include "sdf3d/error.hpp"
#include "sdf3d/log.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

namespace sdf3d {
namespace {

std::vector<TunableSpace> spaces_of(const std::vector<const LayerNode*>& layers)
{
    std::vector<TunableSpace> out;
    out.reserve(layers.size());
    for (const auto* l : layers)
        out.push_back(tunable_space(*l));
    return out;
}

std::vector<ParallelismConfig> all_ones(std::size_t n) { return std::vector<ParallelismConfig>(n); }

std::int64_t pick_other(const std::vector<std::int64_t>& values, std::int64_t current, Rng& rng)
{
    auto it = std::find(values.begin(), values.end(), current);
    if (it == values.end())
        return values[rng.index(values.size())];
    const auto cur = static_cast<std::size_t>(it - values.begin());
    std::size_t k = rng.index(values.size() - 1);
    if (k >= cur)
        ++k;
    return values[k];
}

bool neighbor_in(const std::vector<TunableSpace>& spaces, std::vector<ParallelismConfig>& cfgs, Rng& rng, Move* move)
{
    std::vector<std::size_t> movable;
    for (std::size_t i = 0; i < spaces.size(); ++i) {
        const auto& t = spaces[i];
        if (t.s_in.size() > 1 || t.s_out.size() > 1 || t.p_mac.size() > 1)
            movable.push_back(i);
    }
    if (movable.empty())
        return false;
    const std::size_t layer = movable[rng.index(movable.size())];
    const auto& t = spaces[layer];
    std::vector<char> params;
    if (t.s_in.size() > 1)
        params.push_back('i');
    if (t.s_out.size() > 1)
        params.push_back('o');
    if (t.p_mac.size() > 1)
        params.push_back('p');
    const char param = params[rng.index(params.size())];
    auto& c = cfgs[layer];
    switch (param) {
    case 'i':
        c.s_in = pick_other(t.s_in, c.s_in, rng);
        if (t.ties_s_out())
            c.s_out = c.s_in;
        break;
    case 'o':
        c.s_out = pick_other(t.s_out, c.s_out, rng);
        break;
    default:
        c.p_mac = pick_other(t.p_mac, c.p_mac, rng);
        break;
    }
    if (move != nullptr)
        *move = {layer, param};
    return true;
}

double relative(const Rational& cycles, const Rational& base) { return (cycles / base).to_double(); }

} // namespace

PartitionProblem make_problem(const ModelGraph& g, const Partition& p, const DeviceSpec& device,
                              const Calibration& calib, std::int64_t batch, GapMode gap_mode)
{
    PartitionProblem pr;
    pr.id = p.id;
    pr.kind = p.kind;
    pr.layers = partition_layers(g, p);
    pr.device = device;
    pr.calib = calib;
    pr.batch = batch;
    pr.gap_mode = gap_mode;
    return pr;
}

PartitionEvaluator::PartitionEvaluator(const PartitionProblem& problem) : problem_(&problem)
{
    if (problem.batch < 1)
        throw ArgumentError("batch size must be at least 1");
    std::vector<HardwareBlock> blocks;
    for (const auto* l : problem.layers)
        blocks.push_back(build_block(*l, {}, problem.calib, problem.gap_mode));
    skeleton_ = sdf_topology(std::move(blocks));
    skeleton_.W = workload_matrix(skeleton_);
    skeleton_.memory_rate = problem.device.memory_rate();
    cache_.resize(problem.layers.size());
}

const HardwareBlock& PartitionEvaluator::block(std::size_t layer, const ParallelismConfig& cfg)
{
    auto& m = cache_[layer];
    auto it = m.find(cfg);
    if (it == m.end())
        it = m.emplace(cfg, build_block(*problem_->layers[layer], cfg, problem_->calib, problem_->gap_mode)).first;
    return it->second;
}

Evaluation PartitionEvaluator::evaluate(const std::vector<ParallelismConfig>& cfgs)
{
    if (cfgs.size() != problem_->layers.size())
        throw ArgumentError("configuration count does not match the partition");
    std::vector<const HardwareBlock*> ptrs(cfgs.size());
    Evaluation e;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        ptrs[i] = &block(i, cfgs[i]);
        e.rsc += ptrs[i]->rsc;
    }
    const auto rs = solve_rates(skeleton_, ptrs);
    e.ii_max = rs.node_ii.front();
    for (const auto& ii : rs.node_ii)
        e.ii_max = max(e.ii_max, ii);

    std::vector<std::int64_t> depths(skeleton_.nodes.size(), 0);
    for (std::size_t n = 1; n + 1 < depths.size(); ++n)
        depths[n] = ptrs[skeleton_.nodes[n].block]->depth;
    const auto arrival = arrival_times(skeleton_, depths);
    e.depth_total = 0;
    for (std::size_t n = 0; n < depths.size(); ++n) {
        e.depth_total += depths[n];
        for (std::size_t k = 0; k < skeleton_.port_arc[n].size(); ++k)
            e.depth_total += merge_slack(skeleton_, arrival, n, k);
    }
    e.cycles = Rational(e.depth_total) + e.ii_max * Rational(problem_->batch - 1);
    e.feasible = e.rsc.fits_within(problem_->device.capacity());
    e.latency_s = partition_latency(e.ii_max, e.depth_total, problem_->batch, problem_->device.clock_hz);
    return e;
}

DesignPoint evaluate_design(const PartitionProblem& problem, const std::vector<ParallelismConfig>& cfgs)
{
    if (cfgs.size() != problem.layers.size())
        throw ArgumentError("configuration count does not match the partition");
    std::vector<HardwareBlock> blocks;
    DesignPoint d;
    d.partition = problem.id;
    d.kind = problem.kind;
    d.cfg = cfgs;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        blocks.push_back(build_block(*problem.layers[i], cfgs[i], problem.calib, problem.gap_mode));
        d.rsc += blocks.back().rsc;
    }
    d.graph = build_sdfg(std::move(blocks), problem.device, problem.calib);
    d.ii = initiation_intervals(d.graph.W, d.graph.gamma);
    d.depth_total = d.graph.depth_total;
    d.latency_s = partition_latency(d.ii.ii_max, d.depth_total, problem.batch, problem.device.clock_hz);
    return d;
}

PartitionMetrics metrics_of(const DesignPoint& d)
{
    PartitionMetrics m;
    m.id = d.partition;
    m.kind = d.kind;
    m.layers = d.cfg.size();
    m.ii_max = d.ii.ii_max;
    m.depth_total = d.depth_total;
    m.rsc = d.rsc;
    return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

bool neighbor(const std::vector<const LayerNode*>& layers, std::vector<ParallelismConfig>& cfgs, Rng& rng, Move* move)
{
    return neighbor_in(spaces_of(layers), cfgs, rng, move);
}

bool accept(double delta_cost, double temperature, Rng& rng)
{
    if (!(temperature > 0.0))
        throw ArgumentError("temperature must be positive");
    if (delta_cost <= 0.0)
        return true;
    return rng.uniform01() < std::exp(-delta_cost / temperature);
}

std::size_t tunable_count(const std::vector<const LayerNode*>& layers)
{
    std::size_t n = 0;
    for (const auto& t : spaces_of(layers))
        n += (t.s_in.size() > 1) + (t.s_out.size() > 1) + (t.p_mac.size() > 1);
    return n;
}

DesignPoint optimize_partition(const PartitionProblem& problem, const AnnealSchedule& sched)
{
    if (!(sched.alpha > 0.0 && sched.alpha < 1.0))
        throw ArgumentError("cooling factor must lie in (0,1)");
    if (!(sched.t_min_ratio > 0.0 && sched.t_min_ratio < 1.0))
        throw ArgumentError("t_min ratio must lie in (0,1)");
    PartitionEvaluator eval(problem);
    const auto spaces = spaces_of(problem.layers);
    auto cur = all_ones(problem.layers.size());
    const Evaluation e0 = eval.evaluate(cur);
    if (!e0.feasible)
        throw InfeasibleError("partition " + std::to_string(problem.id) + ": even the all-1 configuration needs " +
                              std::to_string(e0.rsc.dsp) + " DSP, " + std::to_string(e0.rsc.bram18k) + " BRAM18K, " +
                              std::to_string(e0.rsc.lut) + " LUT, " + std::to_string(e0.rsc.ff) +
                              " FF, more than the device offers");
    const std::size_t tunables = tunable_count(problem.layers);
    if (tunables == 0)
        return evaluate_design(problem, cur);

    Rng rng(sched.seed);
    const Rational base = e0.cycles;
    double cur_cost = 1.0;
    Rational cur_cycles = e0.cycles;
    auto best = cur;
    Rational best_cycles = e0.cycles;

    auto consider = [&](const std::vector<ParallelismConfig>& cand, const Rational& cycles) {
        if (cycles < best_cycles) {
            best_cycles = cycles;
            best = cand;
        }
    };

    double t0 = sched.t_init.value_or(0.0);
    if (!sched.t_init) {
        // Random walk from the start point; scale T so that a typical uphill
        // step is accepted with the target probability.
        double sum = 0.0;
        int ups = 0;
        auto walk = cur;
        double walk_cost = cur_cost;
        for (int i = 0; i < sched.probe_moves; ++i) {
            auto cand = walk;
            neighbor_in(spaces, cand, rng, nullptr);
            const auto e = eval.evaluate(cand);
            if (!e.feasible)
                continue;
            const double c = relative(e.cycles, base);
            if (c > walk_cost) {
                sum += c - walk_cost;
                ++ups;
            }
            walk = cand;
            walk_cost = c;
        }
        t0 = ups > 0 ? -(sum / ups) / std::log(sched.target_acceptance) : 1e-3;
    }
    if (!(t0 > 0.0))
        throw ArgumentError("initial temperature must be positive");
    const double t_min = t0 * sched.t_min_ratio;
    const std::int64_t iters = sched.iters_per_temp.value_or(100 * static_cast<std::int64_t>(tunables));
    if (iters < 1)
        throw ArgumentError("iterations per temperature must be at least 1");

    const auto start = std::chrono::steady_clock::now();
    std::int64_t evaluated = 0;
    std::int64_t step = 0;
    for (double t = t0; t > t_min; t *= sched.alpha, ++step) {
        for (std::int64_t i = 0; i < iters; ++i) {
            auto cand = cur;
            neighbor_in(spaces, cand, rng, nullptr);
            const auto e = eval.evaluate(cand);
            ++evaluated;
            if (!e.feasible)
                continue;
            const double c = relative(e.cycles, base);
            if (accept(c - cur_cost, t, rng)) {
                cur = std::move(cand);
                cur_cost = c;
                cur_cycles = e.cycles;
                consider(cur, cur_cycles);
            }
        }
        log::emit(step % 20 == 0 ? log::Level::Info : log::Level::Debug, "partition ", problem.id, " T=", t,
                  " best=", relative(best_cycles, base));
        if (sched.time_budget_s > 0.0) {
            const std::chrono::duration<double> spent = std::chrono::steady_clock::now() - start;
            if (spent.count() > sched.time_budget_s) {
                log::info("partition ", problem.id, ": time budget reached at T=", t);
                break;
            }
        }
    }
    log::info("partition ", problem.id, " (", to_string(problem.kind), "): ", evaluated, " moves, latency x",
              relative(best_cycles, base), " of start");
    return evaluate_design(problem, best);
}

std::uint64_t config_space_size(const std::vector<const LayerNode*>& layers, std::uint64_t cap)
{
    std::uint64_t total = 1;
    for (const auto* l : layers) {
        const std::uint64_t n = tunable_space(*l).size();
        if (total > cap / n)
            return cap + 1;
        total *= n;
    }
    return total;
}

DesignPoint brute_force_optimum(const PartitionProblem& problem, std::uint64_t cap)
{
    std::vector<std::vector<ParallelismConfig>> options;
    long double total = 1;
    for (const auto* l : problem.layers) {
        options.push_back(feasible_configs(*l));
        total *= static_cast<long double>(options.back().size());
    }
    if (total > static_cast<long double>(cap)) {
        std::ostringstream os;
        os << "partition " << problem.id << " has " << static_cast<double>(total)
           << " configurations, above the cap of " << cap;
        throw ArgumentError(os.str());
    }

    PartitionEvaluator eval(problem);
    std::vector<std::size_t> idx(options.size(), 0);
    std::vector<ParallelismConfig> cfgs(options.size());
    std::optional<std::vector<ParallelismConfig>> best;
    Rational best_cycles;
    while (true) {
        for (std::size_t i = 0; i < idx.size(); ++i)
            cfgs[i] = options[i][idx[i]];
        const auto e = eval.evaluate(cfgs);
        if (e.feasible && (!best || e.cycles < best_cycles)) {
            best = cfgs;
            best_cycles = e.cycles;
        }
        bool done = true;
        for (std::size_t k = idx.size(); k-- > 0;) {
            if (++idx[k] < options[k].size()) {
                done = false;
                break;
            }
            idx[k] = 0;
        }
        if (done)
            break;
    }
    if (!best)
        throw InfeasibleError("partition " + std::to_string(problem.id) + ": no configuration fits the device");
    return evaluate_design(problem, *best);
}

std::vector<DesignPoint> optimize_all(const std::vector<PartitionProblem>& problems, const AnnealSchedule& sched,
                                      unsigned jobs)
{
    std::vector<DesignPoint> out(problems.size());
    std::vector<std::exception_ptr> errors(problems.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < problems.size(); i = next++) {
            try {
                AnnealSchedule s = sched;
                s.seed = derive_seed(sched.seed, problems[i].id);
                out[i] = optimize_partition(problems[i], s);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(problems.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

} // namespace sdf3d
