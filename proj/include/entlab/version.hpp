#pragma once

namespace entlab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace entlab
