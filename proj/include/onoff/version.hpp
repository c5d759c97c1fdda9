#pragma once

namespace onoff {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace onoff
