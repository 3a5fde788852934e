#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "octseg/volume.hpp"

namespace octseg {

// Synthetic retina-like test volumes: horizontal intensity bands with mild
// curvature plus 0-3 ellipsoidal fluid blobs per class. Deterministic in
// (seed, profile).
//
// Profiles (width, height, B-scans):
//   Cirrus     512 x 1024 x 128
//   Spectralis 512 x  496 x  49
//   Topcon     512 x  885 x 128   (T-2000 geometry)
//   Tiny        32 x   32 x  16   (desk-scale tests)
struct PhantomPair {
    Volume volume;
    LabelMask mask;
};

PhantomPair generate_phantom(std::uint64_t seed, const std::string &profile);

Dims3 phantom_profile_dims(const std::string &profile);
Spacing3 phantom_profile_spacing(const std::string &profile);

}  // namespace octseg
