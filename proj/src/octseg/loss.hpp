#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "octseg/tensor.hpp"
#include "octseg/volume.hpp"

namespace octseg {

// Per-voxel class labels for a batch, matching a Tensor's (n, spatial) layout.
struct LabelBatch {
    int n = 0;
    Dims3 sp{0, 0, 0};
    std::vector<std::uint8_t> labels;

    std::int64_t spatial() const { return voxel_count(sp); }
    std::uint8_t at(int ni, std::int64_t voxel) const {
        return labels[std::size_t(std::int64_t(ni) * spatial() + voxel)];
    }
};

struct LossResult {
    double total = 0.0;
    double cross_entropy = 0.0;
    std::array<double, kNumClasses> soft_dice{};  // loss uses the mean of classes 1..3
};

// loss = CE + (1 - mean over foreground classes of soft-Dice), with
//   CE      = mean over batch*voxels of -log p[target]
//   Dice_c  = (2*sum(p_c * t_c) + eps) / (sum(p_c) + sum(t_c) + eps), eps 1e-5,
// sums pooled over batch and spatial dims. probs must be normalized per voxel.
// When grad_probs is given it receives dLoss/dprobs.
LossResult dice_ce_loss(const Tensor &probs, const LabelBatch &target,
                        Tensor *grad_probs = nullptr);

}  // namespace octseg
