#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "octseg/common.hpp"

namespace octseg {

// On-disk element types supported by the MetaImage reader/writer.
enum class ElementType { U8, I16, U16, F32 };

inline int element_size(ElementType t) {
    switch (t) {
        case ElementType::U8: return 1;
        case ElementType::I16:
        case ElementType::U16: return 2;
        case ElementType::F32: return 4;
    }
    return 0;
}

// Scalar intensity grid. Values are held as float regardless of the on-disk
// element type (all supported types embed exactly); element_type is kept so a
// round-trip writes the same payload back.
struct Volume {
    Dims3 dims{0, 0, 0};
    Spacing3 spacing{1.0, 1.0, 1.0};
    Spacing3 origin{0.0, 0.0, 0.0};
    std::map<std::string, std::string> meta;
    ElementType element_type = ElementType::F32;
    std::vector<float> voxels;

    float &at(int x, int y, int z) { return voxels[voxel_index(dims, x, y, z)]; }
    float at(int x, int y, int z) const { return voxels[voxel_index(dims, x, y, z)]; }
    std::int64_t size() const { return voxel_count(dims); }
};

// Per-voxel class labels: 0 background, 1 IRF, 2 SRF, 3 PED.
inline constexpr int kNumClasses = 4;

struct LabelMask {
    Dims3 dims{0, 0, 0};
    Spacing3 spacing{1.0, 1.0, 1.0};
    Spacing3 origin{0.0, 0.0, 0.0};
    std::map<std::string, std::string> meta;
    std::vector<std::uint8_t> labels;

    std::uint8_t &at(int x, int y, int z) { return labels[voxel_index(dims, x, y, z)]; }
    std::uint8_t at(int x, int y, int z) const { return labels[voxel_index(dims, x, y, z)]; }
    std::int64_t size() const { return voxel_count(dims); }
};

inline Volume make_volume(Dims3 dims, Spacing3 spacing = {1.0, 1.0, 1.0}, float fill = 0.0f) {
    Volume v;
    v.dims = dims;
    v.spacing = spacing;
    v.voxels.assign(std::size_t(voxel_count(dims)), fill);
    return v;
}

inline LabelMask make_mask(Dims3 dims, Spacing3 spacing = {1.0, 1.0, 1.0}, std::uint8_t fill = 0) {
    LabelMask m;
    m.dims = dims;
    m.spacing = spacing;
    m.labels.assign(std::size_t(voxel_count(dims)), fill);
    return m;
}

}  // namespace octseg
