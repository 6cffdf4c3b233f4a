#pragma once

namespace detadv {
inline constexpr const char* kToolVersion = "0.1.0";
}
