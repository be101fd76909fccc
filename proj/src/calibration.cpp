#include "sdf3d/calibration.hpp"

#include "sdf3d/error.hpp"

#include <json.hpp>

#include <array>
#include <fstream>
#include <sstream>

namespace sdf3d {
namespace {

using json = nlohmann::ordered_json;

struct Field {
    const char* name;
    std::int64_t Calibration::*member;
    std::int64_t min;
};

constexpr std::array<Field, 16> kFields{{
    {"lut_per_stream", &Calibration::lut_per_stream, 0},
    {"lut_per_dsp", &Calibration::lut_per_dsp, 0},
    {"ff_per_stream", &Calibration::ff_per_stream, 0},
    {"ff_per_dsp", &Calibration::ff_per_dsp, 0},
    {"bram_words", &Calibration::bram_words, 1},
    {"word_bits", &Calibration::word_bits, 1},
    {"dsp_per_stream_relu", &Calibration::dsp_per_stream_relu, 0},
    {"dsp_per_stream_sigmoid", &Calibration::dsp_per_stream_sigmoid, 0},
    {"dsp_per_stream_swish", &Calibration::dsp_per_stream_swish, 0},
    {"dsp_per_stream_add", &Calibration::dsp_per_stream_add, 0},
    {"dsp_per_stream_mul", &Calibration::dsp_per_stream_mul, 0},
    {"dsp_per_stream_gap", &Calibration::dsp_per_stream_gap, 0},
    {"depth_activation", &Calibration::depth_activation, 1},
    {"depth_eltwise", &Calibration::depth_eltwise, 1},
    {"depth_gap_prior", &Calibration::depth_gap_prior, 1},
    {"fifo_words_per_stream", &Calibration::fifo_words_per_stream, 1},
}};

} // namespace

Calibration parse_calibration(std::string_view document)
{
    json j;
    try {
        j = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed calibration file: ") + e.what());
    }
    if (!j.is_object())
        throw ConfigError("calibration file must be an object");
    Calibration c;
    for (const auto& [key, value] : j.items()) {
        const Field* field = nullptr;
        for (const auto& f : kFields)
            if (key == f.name)
                field = &f;
        if (!field)
            throw ConfigError("calibration: unknown constant '" + key + "'");
        if (!value.is_number_integer() || value.get<std::int64_t>() < field->min)
            throw ConfigError("calibration: '" + key + "' must be an integer >= " + std::to_string(field->min));
        c.*(field->member) = value.get<std::int64_t>();
    }
    return c;
}

Calibration load_calibration(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open calibration file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_calibration(ss.str());
}

std::string serialize_calibration(const Calibration& c)
{
    json j;
    for (const auto& f : kFields)
        j[f.name] = c.*(f.member);
    return j.dump(2) + "\n";
}

} // namespace sdf3d
