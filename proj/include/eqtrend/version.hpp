#pragma once

namespace eqtrend {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace eqtrend
