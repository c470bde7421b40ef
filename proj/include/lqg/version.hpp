#pragma once

namespace lqg {

inline constexpr const char* version_string = "0.1.0";

}
