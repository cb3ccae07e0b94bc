#pragma once

#include <cstddef>
#include <cstdint>

namespace caselink {

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::size_t nodes = 0;
    std::size_t parameters = 0;
    double loss = 0.0;
};

/// Central-difference check of the full training loss (2-layer GAT, InfoNCE
/// plus DegReg with lambda 1e-3) on a random 12-node graph: 8 cases, 4 charges.
GradcheckResult run_gradcheck(std::uint64_t seed);

}  // namespace caselink
