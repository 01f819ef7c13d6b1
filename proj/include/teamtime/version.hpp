#pragma once

namespace teamtime {

inline constexpr const char* kToolVersion = "0.3.0";
// Bumped when any machine-readable output changes shape.
inline constexpr int kSchemaVersion = 1;

}  // namespace teamtime
