#pragma once
#include <stdexcept>

namespace branchsim {

// bad or inconsistent configuration (exit code 3 at the CLI)
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// population cap hit mid-estimate (exit code 2 at the CLI)
struct explosion_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace branchsim
