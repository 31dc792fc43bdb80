#pragma once

namespace branchsim {
inline constexpr const char* kVersion = "0.1.0";
}
