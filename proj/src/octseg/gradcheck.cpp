#include "octseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "octseg/rng.hpp"

namespace octseg {

double gradient_check(const NetworkSpec &spec, const Parameters &params, const Tensor &input,
                      const LabelBatch &target, int samples, std::uint64_t seed) {
    const Program prog = lower(spec);

    Trace trace;
    Tensor probs = forward(prog, params, input, &trace);
    Tensor grad_probs;
    dice_ce_loss(probs, target, &grad_probs);
    Gradients analytic = backward(prog, params, trace, grad_probs);

    Parameters work = params;
    auto loss_at = [&]() {
        Tensor p = forward(prog, work, input);
        return dice_ce_loss(p, target).total;
    };

    // uniform over all parameter scalars
    std::vector<std::pair<std::string, std::int64_t>> layout;
    std::int64_t total = 0;
    for (const auto &[name, t] : work.tensors) {
        layout.emplace_back(name, total);
        total += t.size();
    }

    const double h = 1e-5;
    Rng rng(seed ^ 0x67e2a4c1u);
    double max_err = 0.0;
    for (int s = 0; s < samples; ++s) {
        std::int64_t flat = rng.below(total);
        std::size_t which = 0;
        while (which + 1 < layout.size() && layout[which + 1].second <= flat) ++which;
        const std::string &name = layout[which].first;
        std::size_t idx = std::size_t(flat - layout[which].second);

        double &w = work.tensors.at(name).v[idx];
        const double saved = w;
        w = saved + h;
        const double up = loss_at();
        w = saved - h;
        const double down = loss_at();
        w = saved;

        const double fd = (up - down) / (2.0 * h);
        const double an = analytic.tensors.at(name).v[idx];
        const double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace octseg
