#pragma once

namespace exocast {
inline constexpr const char* kVersion = "0.1.0";
}
