#pragma once

#include "octseg/loss.hpp"
#include "octseg/netexec.hpp"

namespace octseg {

// Compares analytic loss gradients against central finite differences
// (h = 1e-5) on `samples` weights drawn uniformly over all parameter scalars.
// Returns the max relative error |a - fd| / max(|a|, |fd|, 1e-6); meant for
// tiny double-precision specs.
double gradient_check(const NetworkSpec &spec, const Parameters &params, const Tensor &input,
                      const LabelBatch &target, int samples = 120, std::uint64_t seed = 0);

}  // namespace octseg
