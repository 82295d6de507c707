#include "vvp/common.hpp"

#include <cstdlib>

namespace vvp {

bool deterministic_mode() {
    const char* v = std::getenv("VVP_DETERMINISTIC");
    return v != nullptr && v[0] == '1';
}

void apply_determinism_from_env() {
    if (!deterministic_mode()) return;
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/true);
}

}  // namespace vvp
