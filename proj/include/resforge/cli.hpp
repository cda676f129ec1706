#pragma once
namespace resforge::cli {
inline int dispatch(int, char**) { return 2; }
}
