#include "sdf3d/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace sdf3d::log {
namespace {

Level from_env()
{
    const char* v = std::getenv("SDF3D_LOG");
    if (v == nullptr)
        return Level::Info;
    const std::string_view s(v);
    if (s == "error")
        return Level::Error;
    if (s == "info")
        return Level::Info;
    if (s == "debug")
        return Level::Debug;
    return Level::Warn;
}

std::atomic<int>& level_store()
{
    static std::atomic<int> l{static_cast<int>(from_env())};
    return l;
}

std::mutex& sink_mutex()
{
    static std::mutex m;
    return m;
}

const char* tag(Level l)
{
    switch (l) {
    case Level::Error:
        return "error";
    case Level::Warn:
        return "warn";
    case Level::Info:
        return "info";
    case Level::Debug:
        return "debug";
    }
    return "";
}

} // namespace

Level threshold() { return static_cast<Level>(level_store().load()); }
void set_threshold(Level l) { level_store().store(static_cast<int>(l)); }
bool enabled(Level l) { return static_cast<int>(l) <= level_store().load(); }

void write(Level l, const std::string& msg)
{
    std::lock_guard<std::mutex> lock(sink_mutex());
    std::cerr << "[" << tag(l) << "] " << msg << '\n';
}

} // namespace sdf3d::log
