#pragma once

#define RESFORGE_VERSION_MAJOR 0
#define RESFORGE_VERSION_MINOR 1
#define RESFORGE_VERSION_PATCH 0

namespace resforge {
inline constexpr const char* version_string = "0.1.0";
}
