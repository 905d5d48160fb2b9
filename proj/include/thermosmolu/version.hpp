#pragma once

#include <string_view>

namespace thermosmolu {

inline constexpr std::string_view version = "0.1.0";

} // namespace thermosmolu
