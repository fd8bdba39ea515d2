#pragma once

namespace fkmc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fkmc
