#include "sdf3d/device.hpp"

#include "sdf3d/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace sdf3d {
namespace {

using json = nlohmann::ordered_json;

const json& field(const json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end())
        throw ConfigError(std::string("device: missing '") + key + "'");
    return *it;
}

std::int64_t positive_count(const json& j, const char* key)
{
    const auto& v = field(j, key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1)
        throw ConfigError(std::string("device: '") + key + "' must be a positive integer");
    return v.get<std::int64_t>();
}

double positive_real(const json& j, const char* key)
{
    const auto& v = field(j, key);
    if (!v.is_number() || !(v.get<double>() > 0.0))
        throw ConfigError(std::string("device: '") + key + "' must be a positive number");
    return v.get<double>();
}

} // namespace

DeviceSpec parse_device(std::string_view document)
{
    json j;
    try {
        j = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed device file: ") + e.what());
    }
    if (!j.is_object())
        throw ConfigError("device file must be an object");
    DeviceSpec d;
    const auto& name = field(j, "name");
    if (!name.is_string())
        throw ConfigError("device: 'name' must be a string");
    d.name = name.get<std::string>();
    d.dsp = positive_count(j, "dsp");
    d.bram18k = positive_count(j, "bram18k");
    d.lut = positive_count(j, "lut");
    d.ff = positive_count(j, "ff");
    d.bandwidth = Rational::from_double(positive_real(j, "bandwidth"));
    d.clock_hz = positive_real(j, "clock");
    d.t_reconfig = positive_real(j, "t_reconfig");
    return d;
}

DeviceSpec load_device(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open device file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_device(ss.str());
}

std::string serialize_device(const DeviceSpec& d)
{
    json j;
    j["name"] = d.name;
    j["dsp"] = d.dsp;
    j["bram18k"] = d.bram18k;
    j["lut"] = d.lut;
    j["ff"] = d.ff;
    j["bandwidth"] = d.bandwidth.to_double();
    j["clock"] = d.clock_hz;
    j["t_reconfig"] = d.t_reconfig;
    return j.dump(2) + "\n";
}

} // namespace sdf3d
