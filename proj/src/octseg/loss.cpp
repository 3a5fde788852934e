#include "octseg/loss.hpp"

#include <cmath>

namespace octseg {

LossResult dice_ce_loss(const Tensor &probs, const LabelBatch &target, Tensor *grad_probs) {
    constexpr double kEps = 1e-5;
    constexpr double kLogFloor = 1e-12;
    if (probs.c != kNumClasses) throw RuntimeError("loss: probs must have 4 channels");
    if (probs.n != target.n || probs.sp != target.sp)
        throw RuntimeError("loss: probs/target shape mismatch");

    const std::int64_t vox = probs.spatial();
    const double denom = double(probs.n) * double(vox);

    double ce = 0.0;
    std::array<double, kNumClasses> inter{}, psum{}, tsum{};
    for (int n = 0; n < probs.n; ++n) {
        for (std::int64_t i = 0; i < vox; ++i) {
            const int t = target.at(n, i);
            ce += -std::log(std::max(probs.plane(n, t)[i], kLogFloor));
            ++tsum[t];
            for (int c = 0; c < kNumClasses; ++c) {
                const double p = probs.plane(n, c)[i];
                psum[c] += p;
                if (c == t) inter[c] += p;
            }
        }
    }
    ce /= denom;

    LossResult out;
    out.cross_entropy = ce;
    double fg = 0.0;
    std::array<double, kNumClasses> S;
    for (int c = 0; c < kNumClasses; ++c) {
        S[c] = psum[c] + tsum[c] + kEps;
        out.soft_dice[c] = (2.0 * inter[c] + kEps) / S[c];
        if (c > 0) fg += out.soft_dice[c];
    }
    out.total = ce + (1.0 - fg / 3.0);

    if (grad_probs) {
        *grad_probs = Tensor(probs.n, probs.c, probs.sp);
        for (int n = 0; n < probs.n; ++n) {
            for (std::int64_t i = 0; i < vox; ++i) {
                const int t = target.at(n, i);
                // cross-entropy term
                const double p = std::max(probs.plane(n, t)[i], kLogFloor);
                grad_probs->plane(n, t)[i] -= 1.0 / (denom * p);
                // dice term: d(-D_c/3)/dp_c = -(2*t_c*S_c - (2*I_c + eps)) / (3*S_c^2)
                for (int c = 1; c < kNumClasses; ++c) {
                    const double tc = (c == t) ? 1.0 : 0.0;
                    grad_probs->plane(n, c)[i] -=
                        (2.0 * tc * S[c] - (2.0 * inter[c] + kEps)) / (3.0 * S[c] * S[c]);
                }
            }
        }
    }
    return out;
}

}  // namespace octseg
