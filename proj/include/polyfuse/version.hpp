#pragma once

namespace polyfuse {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace polyfuse
