#include "octseg/augment.hpp"

#include <algorithm>
#include <cmath>

namespace octseg {
namespace {

void flip_axis(Patch &p, int axis) {
    const Dims3 d = p.dims;
    auto idx = [&](int x, int y, int z) { return voxel_index(d, x, y, z); };
    int half[3] = {d[0] / 2, d[1] / 2, d[2] / 2};
    for (int z = 0; z < (axis == 2 ? half[2] : d[2]); ++z)
        for (int y = 0; y < (axis == 1 ? half[1] : d[1]); ++y)
            for (int x = 0; x < (axis == 0 ? half[0] : d[0]); ++x) {
                int mx = axis == 0 ? d[0] - 1 - x : x;
                int my = axis == 1 ? d[1] - 1 - y : y;
                int mz = axis == 2 ? d[2] - 1 - z : z;
                std::swap(p.volume[idx(x, y, z)], p.volume[idx(mx, my, mz)]);
                std::swap(p.mask[idx(x, y, z)], p.mask[idx(mx, my, mz)]);
            }
}

// in-plane rotation + isotropic scale about the patch centre
void affine_resample(Patch &p, double angle_rad, double scale) {
    const Dims3 d = p.dims;
    const double cx = (d[0] - 1) / 2.0, cy = (d[1] - 1) / 2.0, cz = (d[2] - 1) / 2.0;
    const double ca = std::cos(-angle_rad), sa = std::sin(-angle_rad);
    const double inv = 1.0 / scale;

    std::vector<float> vol(p.volume.size());
    std::vector<std::uint8_t> mask(p.mask.size());
    std::size_t o = 0;
    for (int z = 0; z < d[2]; ++z) {
        const double sz = (z - cz) * inv + cz;
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x, ++o) {
                const double dx = (x - cx) * inv, dy = (y - cy) * inv;
                const double sx = ca * dx - sa * dy + cx;
                const double sy = sa * dx + ca * dy + cy;

                // trilinear with edge clamp for the volume
                int x0 = std::clamp(int(std::floor(sx)), 0, d[0] - 1);
                int y0 = std::clamp(int(std::floor(sy)), 0, d[1] - 1);
                int z0 = std::clamp(int(std::floor(sz)), 0, d[2] - 1);
                int x1 = std::min(x0 + 1, d[0] - 1);
                int y1 = std::min(y0 + 1, d[1] - 1);
                int z1 = std::min(z0 + 1, d[2] - 1);
                double wx = std::clamp(sx - x0, 0.0, 1.0);
                double wy = std::clamp(sy - y0, 0.0, 1.0);
                double wz = std::clamp(sz - z0, 0.0, 1.0);
                auto at = [&](int xx, int yy, int zz) {
                    return double(p.volume[voxel_index(d, xx, yy, zz)]);
                };
                double c00 = at(x0, y0, z0) * (1 - wx) + at(x1, y0, z0) * wx;
                double c10 = at(x0, y1, z0) * (1 - wx) + at(x1, y1, z0) * wx;
                double c01 = at(x0, y0, z1) * (1 - wx) + at(x1, y0, z1) * wx;
                double c11 = at(x0, y1, z1) * (1 - wx) + at(x1, y1, z1) * wx;
                vol[o] = float((c00 * (1 - wy) + c10 * wy) * (1 - wz) +
                               (c01 * (1 - wy) + c11 * wy) * wz);

                int nx = std::clamp(int(std::lround(sx)), 0, d[0] - 1);
                int ny = std::clamp(int(std::lround(sy)), 0, d[1] - 1);
                int nz = std::clamp(int(std::lround(sz)), 0, d[2] - 1);
                mask[o] = p.mask[voxel_index(d, nx, ny, nz)];
            }
    }
    p.volume = std::move(vol);
    p.mask = std::move(mask);
}

}  // namespace

void augment(Patch &patch, const AugmentationConfig &cfg, Rng &rng) {
    if (patch.volume.size() != patch.mask.size())
        throw RuntimeError("augment: volume/mask patch size mismatch");

    if (cfg.rotate || cfg.scale) {
        double angle = cfg.rotate ? rng.uniform(-cfg.rotate_max_deg, cfg.rotate_max_deg) *
                                        (3.14159265358979324 / 180.0)
                                  : 0.0;
        double scale = cfg.scale ? rng.uniform(cfg.scale_min, cfg.scale_max) : 1.0;
        if (angle != 0.0 || scale != 1.0) affine_resample(patch, angle, scale);
    }

    if (cfg.mirror) {
        for (int a = 0; a < 3; ++a)
            if (cfg.mirror_axes[std::size_t(a)] && rng.chance(cfg.mirror_prob))
                flip_axis(patch, a);
    }

    if (cfg.gamma) {
        double g = rng.uniform(cfg.gamma_min, cfg.gamma_max);
        auto [lo_it, hi_it] = std::minmax_element(patch.volume.begin(), patch.volume.end());
        double lo = *lo_it, hi = *hi_it;
        if (hi > lo) {
            double range = hi - lo;
            for (auto &v : patch.volume)
                v = float(lo + range * std::pow((double(v) - lo) / range, g));
        }
    }

    if (cfg.noise) {
        double sigma = rng.uniform(0.0, cfg.noise_sigma_max);
        for (auto &v : patch.volume) v += float(rng.normal(0.0, sigma));
    }
}

}  // namespace octseg
