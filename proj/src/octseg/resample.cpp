#include "octseg/resample.hpp"

#include <algorithm>
#include <cmath>

namespace octseg {
namespace {

void check_target(const Spacing3 &t) {
    if (t[0] <= 0 || t[1] <= 0 || t[2] <= 0)
        throw ConfigError("resample: target spacing must be positive");
}

Dims3 target_dims(const Dims3 &dims, const Spacing3 &src, const Spacing3 &dst) {
    Dims3 out;
    for (int a = 0; a < 3; ++a)
        out[a] = std::max<std::int64_t>(1, std::llround(double(dims[a]) * src[a] / dst[a]));
    return out;
}

// voxel-centre aligned source coordinate for output index i
inline double src_coord(int i, double dst_sp, double src_sp) {
    return (double(i) + 0.5) * dst_sp / src_sp - 0.5;
}

}  // namespace

Volume resample(const Volume &v, Spacing3 target_spacing) {
    check_target(target_spacing);
    if (v.spacing == target_spacing) return v;

    Volume out;
    out.dims = target_dims(v.dims, v.spacing, target_spacing);
    out.spacing = target_spacing;
    out.origin = v.origin;
    out.meta = v.meta;
    out.element_type = ElementType::F32;
    out.voxels.resize(std::size_t(out.size()));

    const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
    std::size_t o = 0;
    for (int z = 0; z < out.dims[2]; ++z) {
        double fz = src_coord(z, target_spacing[2], v.spacing[2]);
        int z0 = std::clamp(int(std::floor(fz)), 0, nz - 1);
        int z1 = std::min(z0 + 1, nz - 1);
        double wz = std::clamp(fz - z0, 0.0, 1.0);
        for (int y = 0; y < out.dims[1]; ++y) {
            double fy = src_coord(y, target_spacing[1], v.spacing[1]);
            int y0 = std::clamp(int(std::floor(fy)), 0, ny - 1);
            int y1 = std::min(y0 + 1, ny - 1);
            double wy = std::clamp(fy - y0, 0.0, 1.0);
            for (int x = 0; x < out.dims[0]; ++x, ++o) {
                double fx = src_coord(x, target_spacing[0], v.spacing[0]);
                int x0 = std::clamp(int(std::floor(fx)), 0, nx - 1);
                int x1 = std::min(x0 + 1, nx - 1);
                double wx = std::clamp(fx - x0, 0.0, 1.0);
                double c00 = v.at(x0, y0, z0) * (1 - wx) + v.at(x1, y0, z0) * wx;
                double c10 = v.at(x0, y1, z0) * (1 - wx) + v.at(x1, y1, z0) * wx;
                double c01 = v.at(x0, y0, z1) * (1 - wx) + v.at(x1, y0, z1) * wx;
                double c11 = v.at(x0, y1, z1) * (1 - wx) + v.at(x1, y1, z1) * wx;
                double c0 = c00 * (1 - wy) + c10 * wy;
                double c1 = c01 * (1 - wy) + c11 * wy;
                out.voxels[o] = float(c0 * (1 - wz) + c1 * wz);
            }
        }
    }
    return out;
}

LabelMask resample(const LabelMask &m, Spacing3 target_spacing) {
    check_target(target_spacing);
    if (m.spacing == target_spacing) return m;

    LabelMask out;
    out.dims = target_dims(m.dims, m.spacing, target_spacing);
    out.spacing = target_spacing;
    out.origin = m.origin;
    out.meta = m.meta;
    out.labels.resize(std::size_t(out.size()));

    std::size_t o = 0;
    for (int z = 0; z < out.dims[2]; ++z) {
        int sz = std::clamp(int(std::lround(src_coord(z, target_spacing[2], m.spacing[2]))), 0,
                            m.dims[2] - 1);
        for (int y = 0; y < out.dims[1]; ++y) {
            int sy = std::clamp(int(std::lround(src_coord(y, target_spacing[1], m.spacing[1]))), 0,
                                m.dims[1] - 1);
            for (int x = 0; x < out.dims[0]; ++x, ++o) {
                int sx = std::clamp(int(std::lround(src_coord(x, target_spacing[0], m.spacing[0]))),
                                    0, m.dims[0] - 1);
                out.labels[o] = m.at(sx, sy, sz);
            }
        }
    }
    return out;
}

Volume normalize(const Volume &v, const IntensityStats &stats) {
    if (stats.stddev < 0) throw ConfigError("normalize: negative stddev");
    Volume out = v;
    out.element_type = ElementType::F32;
    const double lo = stats.p005, hi = stats.p995;
    const double inv = stats.stddev > 0 ? 1.0 / stats.stddev : 1.0;
    for (auto &f : out.voxels) {
        double x = std::clamp(double(f), lo, hi);
        f = float((x - stats.mean) * inv);
    }
    return out;
}

}  // namespace octseg
