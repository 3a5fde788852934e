#include "octseg/inference.hpp"

#include <algorithm>
#include <cmath>

#include "octseg/resample.hpp"

namespace octseg {

std::vector<int> window_origins(int dim, int patch, double overlap) {
    if (patch < 1 || dim < patch) throw RuntimeError("inference: window does not fit volume");
    if (dim == patch) return {0};
    const double target_step = double(patch) * (1.0 - overlap);
    const int steps = std::max(1, int(std::ceil(double(dim - patch) / target_step)) + 1);
    const double actual = double(dim - patch) / double(steps - 1);
    std::vector<int> origins;
    for (int i = 0; i < steps; ++i) {
        int o = std::min(dim - patch, int(std::lround(i * actual)));
        if (origins.empty() || origins.back() != o) origins.push_back(o);
    }
    return origins;
}

std::vector<double> gaussian_window(const Dims3 &patch) {
    std::vector<double> w(std::size_t(voxel_count(patch)));
    Spacing3 center, inv_sigma;
    for (int a = 0; a < 3; ++a) {
        center[a] = (patch[a] - 1) / 2.0;
        inv_sigma[a] = 1.0 / std::max(patch[a] / 8.0, 1e-9);
    }
    std::size_t o = 0;
    for (int z = 0; z < patch[2]; ++z) {
        const double dz = (z - center[2]) * inv_sigma[2];
        for (int y = 0; y < patch[1]; ++y) {
            const double dy = (y - center[1]) * inv_sigma[1];
            for (int x = 0; x < patch[0]; ++x, ++o) {
                const double dx = (x - center[0]) * inv_sigma[0];
                w[o] = std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
            }
        }
    }
    return w;
}

ProbabilityMap predict_probs(const Volume &v, const PlanConfig &plan, const ForwardFn &net) {
    const Dims3 patch = plan.patch_size;
    Volume work = normalize(resample(v, plan.target_spacing), plan.normalization);
    const Dims3 rdims = work.dims;

    // symmetric zero padding up to the patch
    Dims3 pdims, lo;
    for (int a = 0; a < 3; ++a) {
        pdims[a] = std::max(rdims[a], patch[a]);
        lo[a] = (pdims[a] - rdims[a]) / 2;
    }
    std::vector<float> padded(std::size_t(voxel_count(pdims)), 0.0f);
    for (int z = 0; z < rdims[2]; ++z)
        for (int y = 0; y < rdims[1]; ++y)
            for (int x = 0; x < rdims[0]; ++x)
                padded[std::size_t(voxel_index(pdims, x + lo[0], y + lo[1], z + lo[2]))] =
                    work.at(x, y, z);

    const auto ox = window_origins(pdims[0], patch[0]);
    const auto oy = window_origins(pdims[1], patch[1]);
    const auto oz = window_origins(pdims[2], patch[2]);
    const bool single_window = ox.size() == 1 && oy.size() == 1 && oz.size() == 1;
    const std::vector<double> weight = gaussian_window(patch);

    const std::int64_t pvox = voxel_count(pdims);
    std::vector<double> accum(std::size_t(pvox) * kNumClasses, 0.0);
    std::vector<double> wsum(std::size_t(pvox), 0.0);

    Tensor in(1, 1, patch);
    for (int wz : oz)
        for (int wy : oy)
            for (int wx : ox) {
                std::size_t k = 0;
                for (int z = 0; z < patch[2]; ++z)
                    for (int y = 0; y < patch[1]; ++y)
                        for (int x = 0; x < patch[0]; ++x, ++k)
                            in.data[k] = double(padded[std::size_t(
                                voxel_index(pdims, x + wx, y + wy, z + wz))]);
                Tensor probs = net(in);
                if (probs.c != kNumClasses || probs.sp != patch)
                    throw RuntimeError("inference: network output shape mismatch");
                k = 0;
                for (int z = 0; z < patch[2]; ++z)
                    for (int y = 0; y < patch[1]; ++y)
                        for (int x = 0; x < patch[0]; ++x, ++k) {
                            const std::int64_t dst =
                                voxel_index(pdims, x + wx, y + wy, z + wz);
                            const double w = single_window ? 1.0 : weight[k];
                            for (int c = 0; c < kNumClasses; ++c)
                                accum[std::size_t(c * pvox + dst)] +=
                                    w * probs.plane(0, c)[k];
                            wsum[std::size_t(dst)] += w;
                        }
            }

    // normalize by accumulated weight, crop the padding
    const bool grid_changed = rdims != v.dims || work.spacing != v.spacing;
    Volume channel = make_volume(rdims, plan.target_spacing);
    channel.origin = v.origin;
    ProbabilityMap out;
    out.dims = v.dims;
    out.spacing = v.spacing;
    out.origin = v.origin;
    out.data.assign(std::size_t(voxel_count(v.dims)) * kNumClasses, 0.0f);
    for (int c = 0; c < kNumClasses; ++c) {
        for (int z = 0; z < rdims[2]; ++z)
            for (int y = 0; y < rdims[1]; ++y)
                for (int x = 0; x < rdims[0]; ++x) {
                    const std::int64_t src =
                        voxel_index(pdims, x + lo[0], y + lo[1], z + lo[2]);
                    channel.at(x, y, z) =
                        float(accum[std::size_t(c * pvox + src)] / wsum[std::size_t(src)]);
                }
        if (grid_changed) {
            Volume native = resample_to(channel, v.dims, v.spacing);
            std::copy(native.voxels.begin(), native.voxels.end(),
                      out.data.begin() + std::int64_t(c) * out.spatial());
        } else {
            std::copy(channel.voxels.begin(), channel.voxels.end(),
                      out.data.begin() + std::int64_t(c) * out.spatial());
        }
    }

    // interpolation denormalizes; fix the per-voxel sums back up
    if (grid_changed) {
        for (std::int64_t i = 0; i < out.spatial(); ++i) {
            double sum = 0.0;
            for (int c = 0; c < kNumClasses; ++c) {
                float &p = out.data[std::size_t(c * out.spatial() + i)];
                if (p < 0.0f) p = 0.0f;
                sum += p;
            }
            if (sum > 0.0) {
                for (int c = 0; c < kNumClasses; ++c)
                    out.data[std::size_t(c * out.spatial() + i)] =
                        float(out.data[std::size_t(c * out.spatial() + i)] / sum);
            } else {
                out.data[std::size_t(i)] = 1.0f;  // background
            }
        }
    }
    return out;
}

ProbabilityMap predict_volume(const Checkpoint &ck, const Volume &v) {
    const Program prog = lower(ck.spec);
    const Parameters &params = ck.params;
    return predict_probs(v, ck.plan,
                         [&](const Tensor &in) { return forward(prog, params, in); });
}

LabelMask argmax_mask(const ProbabilityMap &probs) {
    LabelMask m;
    m.dims = probs.dims;
    m.spacing = probs.spacing;
    m.origin = probs.origin;
    m.labels.resize(std::size_t(probs.spatial()));
    for (std::int64_t i = 0; i < probs.spatial(); ++i) {
        int best = 0;
        float best_p = probs.data[std::size_t(i)];
        for (int c = 1; c < kNumClasses; ++c) {
            float p = probs.data[std::size_t(c * probs.spatial() + i)];
            if (p > best_p) {
                best_p = p;
                best = c;
            }
        }
        m.labels[std::size_t(i)] = std::uint8_t(best);
    }
    return m;
}

}  // namespace octseg
