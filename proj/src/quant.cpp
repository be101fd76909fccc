#include "sdf3d/quant.hpp"

#include "sdf3d/error.hpp"
#include "sdf3d/format.hpp"
#include "sdf3d/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

namespace sdf3d {
namespace {

void put_u32(std::ostream& os, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::ostream& os, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::istream& is, int bytes, const std::string& path)
{
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        const int c = is.get();
        if (c == EOF)
            throw ParseError("tensor file '" + path + "' is truncated");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

} // namespace

double QFormat::scale() const { return std::ldexp(1.0, frac_bits); }

std::string QFormat::str() const { return "Q" + std::to_string(int_bits) + "." + std::to_string(frac_bits); }

void check_format(const QFormat& q)
{
    if (q.int_bits < 1 || q.frac_bits < 0 || q.word_length() > 32)
        throw ArgumentError("invalid fixed-point format " + q.str() + " (need int_bits >= 1, frac_bits >= 0, "
                            "at most 32 bits)");
}

Fixed quantize(double x, const QFormat& q)
{
    check_format(q);
    if (std::isnan(x))
        throw ArgumentError("cannot quantize NaN");
    Fixed f;
    const double scaled = std::nearbyint(x * q.scale());
    const auto lo = static_cast<double>(q.raw_min());
    const auto hi = static_cast<double>(q.raw_max());
    if (scaled < lo) {
        f.raw = q.raw_min();
        f.saturated = true;
    } else if (scaled > hi) {
        f.raw = q.raw_max();
        f.saturated = true;
    } else {
        f.raw = static_cast<std::int64_t>(scaled);
    }
    f.value = static_cast<double>(f.raw) / q.scale();
    return f;
}

QuantStats quant_stats(std::span<const double> xs, const QFormat& q)
{
    QuantStats s;
    if (xs.empty())
        return s;
    double sq = 0.0;
    for (double x : xs) {
        const auto f = quantize(x, q);
        const double e = std::abs(x - f.value);
        s.max_abs_err = std::max(s.max_abs_err, e);
        sq += e * e;
        s.saturation_count += f.saturated ? 1 : 0;
    }
    s.mean_sq_err = sq / static_cast<double>(xs.size());
    return s;
}

FormatChoice best_format_search(std::span<const double> xs, int word_length)
{
    if (word_length < 2 || word_length > 32)
        throw ArgumentError("word length must be between 2 and 32, got " + std::to_string(word_length));
    if (xs.empty())
        throw ArgumentError("cannot search a format for an empty tensor");
    FormatChoice best;
    bool have = false;
    for (int i = 1; i <= word_length; ++i) {
        const QFormat q{i, word_length - i};
        const auto s = quant_stats(xs, q);
        if (!have || s.mean_sq_err < best.stats.mean_sq_err) {
            best = {q, s};
            have = true;
        }
    }
    return best;
}

bool is_feature_map(const std::string& name) { return name.rfind("fm", 0) == 0; }

std::vector<SweepRow> wordlength_sweep(const std::vector<NamedTensor>& tensors, const std::vector<int>& wl_weights,
                                       const std::vector<int>& wl_fm)
{
    std::vector<SweepRow> rows;
    for (int ww : wl_weights)
        for (int wf : wl_fm)
            for (const auto& t : tensors) {
                SweepRow r;
                r.wl_weights = ww;
                r.wl_fm = wf;
                r.tensor = t.name;
                r.feature_map = is_feature_map(t.name);
                r.choice = best_format_search(t.values, r.feature_map ? wf : ww);
                rows.push_back(std::move(r));
            }
    return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows)
{
    os << "wl_weights,wl_fm,tensor,group,format,int_bits,frac_bits,max_abs_err,mean_sq_err,saturation_count\n";
    for (const auto& r : rows)
        os << r.wl_weights << ',' << r.wl_fm << ',' << r.tensor << ',' << (r.feature_map ? "fm" : "weights") << ','
           << r.choice.format.str() << ',' << r.choice.format.int_bits << ',' << r.choice.format.frac_bits << ','
           << format_number(r.choice.stats.max_abs_err) << ',' << format_number(r.choice.stats.mean_sq_err) << ','
           << r.choice.stats.saturation_count << '\n';
}

std::vector<NamedTensor> read_tensors(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open tensor file '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "QTS1", 4) != 0)
        throw ParseError("tensor file '" + path + "' does not start with QTS1");
    const auto count = get_le(in, 4, path);
    std::vector<NamedTensor> out;
    for (std::uint64_t t = 0; t < count; ++t) {
        NamedTensor nt;
        const auto len = get_le(in, 4, path);
        nt.name.resize(len);
        if (len > 0 && !in.read(nt.name.data(), static_cast<std::streamsize>(len)))
            throw ParseError("tensor file '" + path + "' is truncated");
        const auto n = get_le(in, 8, path);
        nt.values.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto bits = static_cast<std::uint32_t>(get_le(in, 4, path));
            nt.values.push_back(static_cast<double>(std::bit_cast<float>(bits)));
        }
        out.push_back(std::move(nt));
    }
    return out;
}

void write_tensors(const std::string& path, const std::vector<NamedTensor>& tensors)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw ConfigError("cannot write tensor file '" + path + "'");
    os.write("QTS1", 4);
    put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put_u32(os, static_cast<std::uint32_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u64(os, t.values.size());
        for (double v : t.values)
            put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
}

std::vector<NamedTensor> synthetic_tensors(std::uint64_t seed, std::size_t count, std::size_t size)
{
    Rng rng(seed);
    std::vector<NamedTensor> out;
    for (std::size_t t = 0; t < count; ++t) {
        NamedTensor nt;
        const bool fm = t % 2 == 1;
        nt.name = (fm ? "fm" : "w") + std::to_string(t / 2);
        // weights: narrow zero-mean; feature maps: rectified with a wide tail
        const double sd = fm ? 4.0 : 0.05 * static_cast<double>(t / 2 + 1);
        for (std::size_t i = 0; i < size; ++i) {
            const double v = rng.normal(0.0, sd);
            nt.values.push_back(fm ? std::max(0.0, v) : v);
        }
        out.push_back(std::move(nt));
    }
    return out;
}

} // namespace sdf3d
