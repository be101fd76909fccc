#pragma once

#include <string>

namespace sdf3d {

// Shortest decimal text that reads back to exactly `v`.
std::string format_number(double v);

} // namespace sdf3d
