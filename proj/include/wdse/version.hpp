#pragma once

namespace wdse {

inline constexpr const char* kToolName = "waferdse";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace wdse
