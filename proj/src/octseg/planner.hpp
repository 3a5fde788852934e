#pragma once

#include <string>

#include "octseg/dataset.hpp"

namespace octseg {

struct MemoryBudget {
    double bytes_available = 0;
    // empirical constant of the activation cost model (bytes per voxel-feature
    // unit, forward + backward workspace folded in)
    double bytes_per_voxel_feature = 24.0;
};

struct PlanOptions {
    int dimensionality = 3;  // 2 plans per B-scan (patch depth 1)
    int base_features = 32;
    int max_features = 320;
};

struct PlanConfig {
    Spacing3 target_spacing{1, 1, 1};
    Dims3 patch_size{16, 16, 16};
    int batch_size = 2;
    Dims3 pools_per_axis{0, 0, 0};
    int base_features = 32;
    int max_features = 320;
    int dimensionality = 3;
    IntensityStats normalization;  // copied from the fingerprint so inference
                                   // is self-contained
};

// Activation-memory estimate in bytes: batch * bytes_per_voxel_feature *
// sum over resolution levels of (voxels at level * feature width at level),
// encoder and decoder each counted once. Monotone nondecreasing in every
// argument.
double estimate_cost(const Dims3 &patch, int base_features, const Dims3 &pools, int batch,
                     const MemoryBudget &budget, int max_features = 320);

// Deterministic plan resolution:
//   1. target spacing = per-axis median of the fingerprint spacings;
//   2. cap = per-axis median of the volume shapes rescaled to target spacing;
//   3. patch starts at min(16, cap) per axis and repeatedly grows by 16 voxels
//      on the axis with the largest cap/patch ratio (ties: lowest axis index)
//      while the estimated cost at batch 2 stays within budget;
//   4. pools per axis = halvings until the axis is <= 8 voxels, at most 5;
//      the patch is then rounded down to divisibility by 2^pools;
//   5. batch = the largest size fitting the budget, floored at 2.
// Throws ConfigError when even the minimal patch exceeds the budget.
PlanConfig make_plan(const Fingerprint &fingerprint, const MemoryBudget &budget,
                     const PlanOptions &options = {});

// Derives pools from a patch (halve-to-8, max 5) and rounds the patch down to
// divisibility. Used when a config file pins the patch size directly.
void repin_patch(PlanConfig &plan, const Dims3 &patch);

void validate_plan(const PlanConfig &plan);

PlanConfig load_plan(const std::string &path);
void save_plan(const PlanConfig &plan, const std::string &path);

}  // namespace octseg
