#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "octseg/rng.hpp"
#include "octseg/volume.hpp"

namespace octseg {

// On-the-fly training augmentation. Geometric transforms apply to volume and
// mask alike (mask nearest-neighbour); intensity transforms touch the volume
// only. Everything is driven by the caller's rng, so a fixed rng state fixes
// the output.
struct AugmentationConfig {
    bool mirror = true;
    std::array<bool, 3> mirror_axes{true, true, true};
    double mirror_prob = 0.5;  // per axis

    bool rotate = true;
    double rotate_max_deg = 15.0;  // in-plane (x-y) rotation

    bool scale = true;
    double scale_min = 0.85, scale_max = 1.25;  // isotropic

    bool noise = true;
    double noise_sigma_max = 0.1;  // additive Gaussian, sigma ~ U(0, max)

    bool gamma = true;
    double gamma_min = 0.7, gamma_max = 1.5;  // range-preserving gamma

    std::uint64_t seed = 0;
};

inline AugmentationConfig no_augmentation() {
    AugmentationConfig c;
    c.mirror = c.rotate = c.scale = c.noise = c.gamma = false;
    return c;
}

// A paired (volume, mask) patch in tensor layout (x fastest).
struct Patch {
    Dims3 dims{0, 0, 0};
    std::vector<float> volume;
    std::vector<std::uint8_t> mask;
};

void augment(Patch &patch, const AugmentationConfig &cfg, Rng &rng);

}  // namespace octseg
