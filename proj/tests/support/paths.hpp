#pragma once

#include <string>

namespace testpaths {

inline std::string data(const std::string& file) { return std::string(SDF3D_DATA_DIR) + "/" + file; }

} // namespace testpaths
