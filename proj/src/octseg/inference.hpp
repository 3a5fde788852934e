#pragma once

#include <functional>

#include "octseg/train.hpp"

namespace octseg {

// Per-voxel class probabilities on the native grid, channel-major
// (c * spatial + voxel_index).
struct ProbabilityMap {
    Dims3 dims{0, 0, 0};
    Spacing3 spacing{1, 1, 1};
    Spacing3 origin{0, 0, 0};
    std::vector<float> data;

    std::int64_t spatial() const { return voxel_count(dims); }
    float at(int c, int x, int y, int z) const {
        return data[std::size_t(c * spatial() + voxel_index(dims, x, y, z))];
    }
};

// Window start offsets covering [0, dim) with steps of patch*(1-overlap);
// the last window is clamped to dim - patch. dim must be >= patch.
std::vector<int> window_origins(int dim, int patch, double overlap = 0.5);

// Gaussian importance weights over a patch, sigma = extent/8, centre value 1.
std::vector<double> gaussian_window(const Dims3 &patch);

using ForwardFn = std::function<Tensor(const Tensor &)>;  // 1x1xpatch -> 1x4xpatch

// Whole-volume prediction: resample to the plan spacing, normalize, pad
// symmetrically up to the patch, run patch windows at 50% overlap, blend with
// Gaussian importance weights, crop, resample back to the native grid and
// renormalize per voxel. A volume exactly one window in size reproduces the
// single forward pass bit-for-bit.
ProbabilityMap predict_probs(const Volume &v, const PlanConfig &plan, const ForwardFn &net);

ProbabilityMap predict_volume(const Checkpoint &ck, const Volume &v);

LabelMask argmax_mask(const ProbabilityMap &probs);

}  // namespace octseg
