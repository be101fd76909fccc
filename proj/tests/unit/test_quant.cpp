#include <doctest.h>

#include "sdf3d/error.hpp"
#include "sdf3d/quant.hpp"
#include "sdf3d/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sdf3d;

namespace {

const QFormat kQ6_10{6, 10};

std::filesystem::path temp_file(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / "sdf3d_quant_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("Q6.10 quantization examples")
{
    const auto one = quantize(1.0, kQ6_10);
    CHECK(one.raw == 1024);
    CHECK(one.value == 1.0);
    CHECK_FALSE(one.saturated);

    const auto p3 = quantize(0.3, kQ6_10);
    CHECK(p3.raw == 307);
    CHECK(p3.value == 0.2998046875);

    const auto big = quantize(100.0, kQ6_10);
    CHECK(big.saturated);
    CHECK(big.value == 32.0 - std::ldexp(1.0, -10));
    CHECK(quantize(-100.0, kQ6_10).value == -32.0);

    // half to even
    CHECK(quantize(2.5 / 1024, kQ6_10).raw == 2);
    CHECK(quantize(3.5 / 1024, kQ6_10).raw == 4);
    CHECK(quantize(-2.5 / 1024, kQ6_10).raw == -2);
    CHECK_THROWS_AS(quantize(std::nan(""), kQ6_10), ArgumentError);
}

TEST_CASE("Q6.10 range endpoints")
{
    CHECK(kQ6_10.min_value() == -32.0);
    CHECK(kQ6_10.max_value() == 32.0 - std::ldexp(1.0, -10));
    CHECK(kQ6_10.str() == "Q6.10");
    CHECK(kQ6_10.word_length() == 16);
    const auto lo = quantize(-32.0, kQ6_10);
    CHECK(lo.raw == -32768);
    CHECK_FALSE(lo.saturated);
    const auto hi = quantize(kQ6_10.max_value(), kQ6_10);
    CHECK(hi.raw == 32767);
    CHECK_FALSE(hi.saturated);
    CHECK(quantize(32.0, kQ6_10).saturated);
    CHECK(QFormat{7, 9}.max_value() == 64.0 - std::ldexp(1.0, -9));
}

TEST_CASE("format validation")
{
    CHECK_NOTHROW(check_format({1, 0}));
    CHECK_NOTHROW(check_format({16, 16}));
    CHECK_THROWS_AS(check_format({0, 8}), ArgumentError);
    CHECK_THROWS_AS(check_format({4, -1}), ArgumentError);
    CHECK_THROWS_AS(check_format({20, 13}), ArgumentError);
    CHECK_THROWS_AS(quantize(1.0, {0, 4}), ArgumentError);
}

TEST_CASE("rounding error bound and idempotence")
{
    Rng rng(17);
    for (const QFormat q : {QFormat{6, 10}, QFormat{7, 9}, QFormat{1, 7}, QFormat{4, 4}, QFormat{12, 12}}) {
        const double bound = std::ldexp(1.0, -(q.frac_bits + 1));
        for (int i = 0; i < 20'000; ++i) {
            const double x = q.min_value() + rng.uniform01() * (q.max_value() - q.min_value());
            const auto f = quantize(x, q);
            CHECK_FALSE(f.saturated);
            if (std::abs(x - f.value) > bound)
                FAIL_CHECK("error bound at " << x);
            const auto g = quantize(f.value, q);
            if (g.raw != f.raw || g.value != f.value)
                FAIL_CHECK("not idempotent at " << x);
        }
    }
}

TEST_CASE("best integer/fraction split")
{
    const std::vector<double> halves{0.5, -0.25};
    const auto a = best_format_search(halves, 16);
    CHECK(a.format.int_bits == 1);
    CHECK(a.stats.mean_sq_err == 0.0);

    std::vector<double> ints;
    for (int v = -16; v <= 15; ++v)
        ints.push_back(v);
    const auto b = best_format_search(ints, 16);
    CHECK(b.format.int_bits == 5);
    CHECK(b.format.frac_bits == 11);
    CHECK(b.stats.saturation_count == 0);

    const std::vector<double> zeros(10, 0.0);
    CHECK(best_format_search(zeros, 8).format.int_bits == 1);

    // one value beyond the range of every format but the widest integer one
    const std::vector<double> wide{1000.0, -3.0};
    const auto c = best_format_search(wide, 12);
    CHECK(c.format.int_bits == 11);

    CHECK_THROWS_AS(best_format_search(halves, 1), ArgumentError);
    CHECK_THROWS_AS(best_format_search(halves, 33), ArgumentError);
    CHECK_THROWS_AS(best_format_search(std::vector<double>{}, 8), ArgumentError);
}

TEST_CASE("best split is the minimum over all splits")
{
    Rng rng(5);
    for (int i = 0; i < 30; ++i) {
        std::vector<double> xs(200);
        const double spread = std::ldexp(1.0, static_cast<int>(rng.index(10)) - 3);
        for (auto& x : xs)
            x = rng.normal(0.0, spread);
        const int wl = 4 + static_cast<int>(rng.index(13));
        const auto best = best_format_search(xs, wl);
        for (int ib = 1; ib <= wl; ++ib) {
            const auto s = quant_stats(xs, {ib, wl - ib});
            CHECK(best.stats.mean_sq_err <= s.mean_sq_err);
            if (s.mean_sq_err == best.stats.mean_sq_err)
                CHECK(best.format.int_bits <= ib);
        }
    }
}

TEST_CASE("word-length sweep")
{
    const auto tensors = synthetic_tensors(3);
    REQUIRE(tensors.size() == 4);
    int fm = 0;
    for (const auto& t : tensors) {
        CHECK(t.values.size() == 4096);
        fm += is_feature_map(t.name);
    }
    CHECK(fm > 0);
    CHECK(fm < 4);
    const auto again = synthetic_tensors(3);
    CHECK(again[0].values == tensors[0].values);

    const std::vector<int> wl{8, 10, 12, 14, 16};
    const auto rows = wordlength_sweep(tensors, wl, wl);
    CHECK(rows.size() == wl.size() * wl.size() * tensors.size());
    for (const auto& r : rows) {
        const int used = r.feature_map ? r.wl_fm : r.wl_weights;
        const auto want = best_format_search(tensors[0].name == r.tensor   ? tensors[0].values
                                             : tensors[1].name == r.tensor ? tensors[1].values
                                             : tensors[2].name == r.tensor ? tensors[2].values
                                                                           : tensors[3].values,
                                             used);
        CHECK(r.choice.format == want.format);
        CHECK(r.choice.stats.mean_sq_err == want.stats.mean_sq_err);
    }

    // error never grows with word length
    for (const auto& t : tensors) {
        double prev_mse = 1e300;
        double wl14_max = 0.0;
        for (int w = 4; w <= 20; ++w) {
            const auto c = best_format_search(t.values, w);
            CHECK(c.stats.mean_sq_err <= prev_mse);
            prev_mse = c.stats.mean_sq_err;
            if (w == 14)
                wl14_max = c.stats.max_abs_err;
            if (w == 16)
                CHECK(c.stats.max_abs_err < wl14_max);
        }
    }

    std::ostringstream os;
    write_sweep_csv(os, rows);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "wl_weights,wl_fm,tensor,group,format,int_bits,frac_bits,max_abs_err,mean_sq_err,saturation_count");
    std::size_t n = 0;
    while (std::getline(in, line))
        ++n;
    CHECK(n == rows.size());
}

TEST_CASE("tensor file round trip and errors")
{
    std::vector<NamedTensor> ts{{"conv1.w", {1.5, -0.25, 3.0}}, {"fm_a", {}}, {"fm_b", {0.1}}};
    const auto p = temp_file("round.qts").string();
    write_tensors(p, ts);
    const auto back = read_tensors(p);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].name == ts[i].name);
        REQUIRE(back[i].values.size() == ts[i].values.size());
        for (std::size_t k = 0; k < ts[i].values.size(); ++k)
            CHECK(back[i].values[k] == static_cast<double>(static_cast<float>(ts[i].values[k])));
    }

    const auto bad = temp_file("bad.qts").string();
    {
        std::ofstream f(bad, std::ios::binary);
        f << "QTS2\x01\x00\x00\x00";
    }
    CHECK_THROWS_AS(read_tensors(bad), ParseError);

    std::ifstream src(p, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(src)), std::istreambuf_iterator<char>());
    const auto cut = temp_file("cut.qts").string();
    {
        std::ofstream f(cut, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
    }
    CHECK_THROWS_AS(read_tensors(cut), ParseError);
    CHECK_THROWS_AS(read_tensors(temp_file("missing.qts").string()), ParseError);
}
