#include "octseg/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace octseg {
namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Dims3 pools_from_patch(const Dims3 &patch) {
    Dims3 pools{0, 0, 0};
    for (int a = 0; a < 3; ++a) {
        int x = patch[a];
        while (x > 8 && pools[a] < 5) {
            x /= 2;
            ++pools[a];
        }
    }
    return pools;
}

Dims3 round_down_divisible(const Dims3 &patch, const Dims3 &pools) {
    Dims3 out;
    for (int a = 0; a < 3; ++a) out[a] = (patch[a] >> pools[a]) << pools[a];
    return out;
}

int feature_width(int base, int level, int max_features) {
    long long w = (long long)base << level;
    return int(std::min<long long>(w, max_features));
}

}  // namespace

double estimate_cost(const Dims3 &patch, int base_features, const Dims3 &pools, int batch,
                     const MemoryBudget &budget, int max_features) {
    // voxels at level l = prod_a max(1, patch[a] / 2^l); pools sets the level
    // count only, which keeps the estimate monotone in each pools component
    int levels = std::max({pools[0], pools[1], pools[2]}) + 1;
    double units = 0.0;
    for (int l = 0; l < levels; ++l) {
        double vox = 1.0;
        for (int a = 0; a < 3; ++a) vox *= std::max(1, patch[a] >> std::min(l, 30));
        units += vox * feature_width(base_features, l, max_features);
    }
    return double(batch) * budget.bytes_per_voxel_feature * units * 2.0;  // encoder + decoder
}

PlanConfig make_plan(const Fingerprint &fingerprint, const MemoryBudget &budget,
                     const PlanOptions &options) {
    if (fingerprint.shapes.empty()) throw ConfigError("plan: fingerprint has no shapes");
    if (fingerprint.shapes.size() != fingerprint.spacings.size())
        throw ConfigError("plan: fingerprint shapes/spacings length mismatch");
    if (budget.bytes_available <= 0 || budget.bytes_per_voxel_feature <= 0)
        throw ConfigError("plan: budget must be positive");
    if (options.dimensionality != 2 && options.dimensionality != 3)
        throw ConfigError("plan: dimensionality must be 2 or 3");

    PlanConfig plan;
    plan.base_features = options.base_features;
    plan.max_features = options.max_features;
    plan.dimensionality = options.dimensionality;
    plan.normalization = fingerprint.intensity;

    for (int a = 0; a < 3; ++a) {
        std::vector<double> sp;
        for (const auto &s : fingerprint.spacings) sp.push_back(s[a]);
        plan.target_spacing[a] = median_of(sp);
    }

    // per-axis median of the shapes each volume would have at target spacing
    Dims3 cap;
    for (int a = 0; a < 3; ++a) {
        std::vector<double> rescaled;
        for (std::size_t i = 0; i < fingerprint.shapes.size(); ++i) {
            double d = double(fingerprint.shapes[i][a]) * fingerprint.spacings[i][a] /
                       plan.target_spacing[a];
            rescaled.push_back(std::max(1.0, std::round(d)));
        }
        cap[a] = int(std::llround(median_of(rescaled)));
    }
    if (plan.dimensionality == 2) cap[2] = 1;

    Dims3 patch;
    for (int a = 0; a < 3; ++a) patch[a] = std::min(16, cap[a]);

    auto cost_at = [&](const Dims3 &p, int batch) {
        return estimate_cost(p, plan.base_features, pools_from_patch(p), batch, budget,
                             plan.max_features);
    };
    if (cost_at(patch, 2) > budget.bytes_available)
        throw ConfigError("plan: budget infeasible for the minimal patch");

    // greedy growth toward the median shape
    while (true) {
        int best = -1;
        double best_ratio = 0.0;
        for (int a = 0; a < 3; ++a) {
            if (patch[a] >= cap[a]) continue;
            double ratio = double(cap[a]) / double(patch[a]);
            if (ratio > best_ratio) {
                best_ratio = ratio;
                best = a;
            }
        }
        if (best < 0) break;
        Dims3 cand = patch;
        cand[best] = std::min(cap[best], patch[best] + 16);
        if (cost_at(cand, 2) > budget.bytes_available) break;
        patch = cand;
    }

    plan.pools_per_axis = pools_from_patch(patch);
    plan.patch_size = round_down_divisible(patch, plan.pools_per_axis);

    double per_sample = cost_at(plan.patch_size, 1);
    plan.batch_size = std::max(2, int(budget.bytes_available / per_sample));

    validate_plan(plan);
    return plan;
}

void repin_patch(PlanConfig &plan, const Dims3 &patch) {
    for (int a = 0; a < 3; ++a)
        if (patch[a] < 1) throw ConfigError("plan: patch axes must be >= 1");
    plan.pools_per_axis = pools_from_patch(patch);
    plan.patch_size = round_down_divisible(patch, plan.pools_per_axis);
}

void validate_plan(const PlanConfig &plan) {
    for (int a = 0; a < 3; ++a) {
        if (plan.target_spacing[a] <= 0) throw ConfigError("plan: target spacing must be positive");
        if (plan.patch_size[a] < 1) throw ConfigError("plan: patch axes must be >= 1");
        if (plan.pools_per_axis[a] < 0 || plan.pools_per_axis[a] > 5)
            throw ConfigError("plan: pools per axis must be in [0, 5]");
        if (plan.patch_size[a] % (1 << plan.pools_per_axis[a]) != 0)
            throw ConfigError("plan: patch axis " + std::to_string(a) +
                              " not divisible by 2^pools");
    }
    if (plan.batch_size < 2) throw ConfigError("plan: batch size must be >= 2");
    if (plan.base_features < 1 || plan.max_features < plan.base_features)
        throw ConfigError("plan: bad feature widths");
    if (plan.dimensionality != 2 && plan.dimensionality != 3)
        throw ConfigError("plan: dimensionality must be 2 or 3");
}

PlanConfig load_plan(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("plan: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        throw RuntimeError("plan: malformed JSON in '" + path + "': " + e.what());
    }
    PlanConfig p;
    try {
        for (int a = 0; a < 3; ++a) {
            p.target_spacing[a] = j.at("target_spacing").at(a).get<double>();
            p.patch_size[a] = j.at("patch_size").at(a).get<int>();
            p.pools_per_axis[a] = j.at("pools_per_axis").at(a).get<int>();
        }
        p.batch_size = j.at("batch_size").get<int>();
        p.base_features = j.at("base_features").get<int>();
        p.max_features = j.at("max_features").get<int>();
        p.dimensionality = j.at("dimensionality").get<int>();
        p.normalization.mean = j.at("normalization").at("mean").get<double>();
        p.normalization.stddev = j.at("normalization").at("stddev").get<double>();
        p.normalization.p005 = j.at("normalization").at("p005").get<double>();
        p.normalization.p995 = j.at("normalization").at("p995").get<double>();
    } catch (const json::exception &e) {
        throw RuntimeError("plan: bad field in '" + path + "': " + e.what());
    }
    validate_plan(p);
    return p;
}

void save_plan(const PlanConfig &plan, const std::string &path) {
    json j;
    j["target_spacing"] = plan.target_spacing;
    j["patch_size"] = plan.patch_size;
    j["batch_size"] = plan.batch_size;
    j["pools_per_axis"] = plan.pools_per_axis;
    j["base_features"] = plan.base_features;
    j["max_features"] = plan.max_features;
    j["dimensionality"] = plan.dimensionality;
    j["normalization"] = {{"mean", plan.normalization.mean},
                          {"stddev", plan.normalization.stddev},
                          {"p005", plan.normalization.p005},
                          {"p995", plan.normalization.p995}};
    std::ofstream out(path);
    if (!out) throw RuntimeError("plan: cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

}  // namespace octseg
