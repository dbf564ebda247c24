#pragma once

namespace epictrl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace epictrl
