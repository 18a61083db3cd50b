#pragma once

namespace xcorr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace xcorr
