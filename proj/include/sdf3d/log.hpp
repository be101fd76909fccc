#pragma once

#include <sstream>
#include <string>

namespace sdf3d::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Read once from SDF3D_LOG (error|warn|info|debug), default info.
Level threshold();
void set_threshold(Level l);
bool enabled(Level l);
// Writes one line to stderr; serialized across threads.
void write(Level l, const std::string& msg);

template <typename... Args> void emit(Level l, const Args&... args)
{
    if (!enabled(l))
        return;
    std::ostringstream os;
    (os << ... << args);
    write(l, os.str());
}

template <typename... Args> void info(const Args&... args) { emit(Level::Info, args...); }
template <typename... Args> void debug(const Args&... args) { emit(Level::Debug, args...); }
template <typename... Args> void warn(const Args&... args) { emit(Level::Warn, args...); }

} // namespace sdf3d::log
