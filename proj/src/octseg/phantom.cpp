#include "octseg/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "octseg/rng.hpp"

namespace octseg {
namespace {

struct Profile {
    Dims3 dims;
    Spacing3 spacing;
    const char *vendor;
};

Profile lookup_profile(const std::string &name) {
    // Vendor geometries follow the RETOUCH acquisition table; spacings are
    // representative scan extents divided by the grid size.
    if (name == "Cirrus") return {{512, 1024, 128}, {0.0117, 0.0020, 0.0469}, "Cirrus"};
    if (name == "Spectralis") return {{512, 496, 49}, {0.0117, 0.0039, 0.1224}, "Spectralis"};
    if (name == "Topcon") return {{512, 885, 128}, {0.0117, 0.0026, 0.0469}, "Topcon"};
    if (name == "Tiny") return {{32, 32, 16}, {0.05, 0.05, 0.1}, "Phantom"};
    throw ConfigError("phantom: unknown profile '" + name + "'");
}

struct Blob {
    double cx, cy, cz;
    double rx, ry, rz;
    std::uint8_t label;
    float intensity;
};

}  // namespace

Dims3 phantom_profile_dims(const std::string &profile) { return lookup_profile(profile).dims; }

Spacing3 phantom_profile_spacing(const std::string &profile) {
    return lookup_profile(profile).spacing;
}

PhantomPair generate_phantom(std::uint64_t seed, const std::string &profile) {
    Profile p = lookup_profile(profile);
    Rng rng(seed ^ hash_str(p.vendor) ^ hash_str(profile.c_str()));

    const int nx = p.dims[0], ny = p.dims[1], nz = p.dims[2];
    Volume vol = make_volume(p.dims, p.spacing);
    LabelMask mask = make_mask(p.dims, p.spacing);
    vol.meta["vendor"] = p.vendor;
    vol.meta["profile"] = profile;
    vol.meta["seed"] = std::to_string(seed);
    mask.meta = vol.meta;

    // Retina: a curved slab of horizontal bands between vitreous and choroid.
    const double band_palette[5] = {0.55, 0.30, 0.65, 0.40, 0.25};
    double band_intensity[5];
    for (int b = 0; b < 5; ++b) band_intensity[b] = band_palette[b] + rng.uniform(-0.03, 0.03);
    const double top_base = 0.22 * ny;
    const double thickness = 0.50 * ny;
    const double amp_x = 0.03 * ny * rng.uniform(0.5, 1.0);
    const double amp_z = 0.03 * ny * rng.uniform(0.5, 1.0);
    const double phase_x = rng.uniform(0.0, 6.28318530717958647);
    const double phase_z = rng.uniform(0.0, 6.28318530717958647);

    // 0-3 ellipsoidal fluid blobs per class, drawn before rasterisation so the
    // rng sequence does not depend on voxel order.
    const float class_intensity[kNumClasses] = {0.0f, 0.04f, 0.92f, 1.15f};
    std::vector<Blob> blobs;
    for (std::uint8_t c = 1; c < kNumClasses; ++c) {
        int count = int(rng.below(4));
        for (int i = 0; i < count; ++i) {
            Blob b;
            b.rx = std::max(1.5, rng.uniform(0.08, 0.16) * nx);
            b.ry = std::max(1.5, rng.uniform(0.08, 0.16) * ny);
            b.rz = std::max(1.5, rng.uniform(0.08, 0.16) * nz);
            b.rx = std::min(b.rx, nx / 2.0);
            b.ry = std::min(b.ry, ny / 2.0);
            b.rz = std::min(b.rz, nz / 2.0);
            b.cx = rng.uniform(b.rx, nx - 1 - b.rx);
            b.cz = rng.uniform(b.rz, nz - 1 - b.rz);
            // y inside the retina slab at the blob's column
            double top = top_base + amp_x * std::sin(6.28318530717958647 * b.cx / nx + phase_x) +
                         amp_z * std::sin(6.28318530717958647 * b.cz / nz + phase_z);
            double y_lo = top + b.ry;
            double y_hi = std::min(double(ny - 1) - b.ry, top + thickness - b.ry);
            b.cy = y_hi > y_lo ? rng.uniform(y_lo, y_hi) : 0.5 * (y_lo + y_hi);
            b.label = c;
            b.intensity = class_intensity[c] + float(rng.uniform(-0.02, 0.02));
            blobs.push_back(b);
        }
    }

    for (int z = 0; z < nz; ++z) {
        for (int x = 0; x < nx; ++x) {
            double top = top_base + amp_x * std::sin(6.28318530717958647 * double(x) / nx + phase_x) +
                         amp_z * std::sin(6.28318530717958647 * double(z) / nz + phase_z);
            double bot = top + thickness;
            for (int y = 0; y < ny; ++y) {
                double v;
                if (y < top) {
                    v = 0.08;  // vitreous
                } else if (y >= bot) {
                    v = 0.15;  // choroid/sclera
                } else {
                    int band = int((y - top) / thickness * 5.0);
                    band = std::clamp(band, 0, 4);
                    v = band_intensity[band];
                }
                vol.at(x, y, z) = float(v);
            }
        }
    }

    for (const Blob &b : blobs) {
        int x0 = std::max(0, int(std::floor(b.cx - b.rx)));
        int x1 = std::min(nx - 1, int(std::ceil(b.cx + b.rx)));
        int y0 = std::max(0, int(std::floor(b.cy - b.ry)));
        int y1 = std::min(ny - 1, int(std::ceil(b.cy + b.ry)));
        int z0 = std::max(0, int(std::floor(b.cz - b.rz)));
        int z1 = std::min(nz - 1, int(std::ceil(b.cz + b.rz)));
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    double dx = (x - b.cx) / b.rx;
                    double dy = (y - b.cy) / b.ry;
                    double dz = (z - b.cz) / b.rz;
                    if (dx * dx + dy * dy + dz * dz <= 1.0) {
                        vol.at(x, y, z) = b.intensity;
                        mask.at(x, y, z) = b.label;
                    }
                }
    }

    // speckle-like acquisition noise
    for (auto &v : vol.voxels) v += float(rng.normal(0.0, 0.02));

    return {std::move(vol), std::move(mask)};
}

}  // namespace octseg
