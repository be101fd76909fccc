#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace sdf3d {

// Signed fixed point; int_bits counts the sign bit, so Q6.10 spans [-32, 32).
struct QFormat {
    int int_bits = 1;
    int frac_bits = 0;

    int word_length() const { return int_bits + frac_bits; }
    std::int64_t raw_min() const { return -(std::int64_t{1} << (word_length() - 1)); }
    std::int64_t raw_max() const { return (std::int64_t{1} << (word_length() - 1)) - 1; }
    double scale() const;
    double min_value() const { return static_cast<double>(raw_min()) / scale(); }
    double max_value() const { return static_cast<double>(raw_max()) / scale(); }
    std::string str() const;

    friend bool operator==(const QFormat&, const QFormat&) = default;
};

// Throws ArgumentError unless 1 <= int_bits, 0 <= frac_bits, length <= 32.
void check_format(const QFormat& q);

struct Fixed {
    std::int64_t raw = 0;
    double value = 0.0;
    bool saturated = false;
};

// Round half to even, then saturate.
Fixed quantize(double x, const QFormat& q);

struct QuantStats {
    double max_abs_err = 0.0;
    double mean_sq_err = 0.0;
    std::int64_t saturation_count = 0;
};

QuantStats quant_stats(std::span<const double> xs, const QFormat& q);

struct FormatChoice {
    QFormat format;
    QuantStats stats;
};

// Minimum-MSE split of `word_length` bits; ties go to more fractional bits.
FormatChoice best_format_search(std::span<const double> xs, int word_length);

struct NamedTensor {
    std::string name;
    std::vector<double> values;
};

// Tensors whose name starts with "fm" are feature maps, the rest weights.
bool is_feature_map(const std::string& name);

struct SweepRow {
    int wl_weights = 0;
    int wl_fm = 0;
    std::string tensor;
    bool feature_map = false;
    FormatChoice choice;
};

std::vector<SweepRow> wordlength_sweep(const std::vector<NamedTensor>& tensors, const std::vector<int>& wl_weights,
                                       const std::vector<int>& wl_fm);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

// Binary container: "QTS1", u32 tensor count, then per tensor u32 name length,
// name bytes, u64 value count and little-endian f32 values.
std::vector<NamedTensor> read_tensors(const std::string& path);
void write_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);

// Seeded Gaussian weights and rectified feature maps for demonstration runs.
std::vector<NamedTensor> synthetic_tensors(std::uint64_t seed, std::size_t count = 4, std::size_t size = 4096);

} // namespace sdf3d
