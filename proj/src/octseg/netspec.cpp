#include "octseg/netspec.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

using nlohmann::json;

namespace octseg {
namespace {

int width_at(int base, int depth, int max_features) {
    long long w = (long long)base << depth;
    return int(std::min<long long>(w, max_features));
}

Dims3 kernel_for(const PlanConfig &plan) {
    Dims3 k;
    for (int a = 0; a < 3; ++a) k[a] = plan.patch_size[a] == 1 ? 1 : 3;
    return k;
}

Dims3 stride_entering(const PlanConfig &plan, int depth) {
    Dims3 s;
    for (int a = 0; a < 3; ++a) s[a] = plan.pools_per_axis[a] >= depth ? 2 : 1;
    return s;
}

ConvBlockSpec conv_block(int in, int out, Dims3 kernel, Dims3 stride) {
    ConvBlockSpec b;
    b.in_channels = in;
    b.out_channels = out;
    b.kernel = kernel;
    b.stride = stride;
    return b;
}

StageBlock make_stage(int in, int out, Dims3 kernel, Dims3 stride, bool residual) {
    ConvBlockSpec c1 = conv_block(in, out, kernel, stride);
    ConvBlockSpec c2 = conv_block(out, out, kernel, {1, 1, 1});
    if (!residual) return PlainBlockSpec{c1, c2};
    ResidualBlockSpec r;
    r.body1 = c1;
    r.body2 = c2;
    r.projection = in != out || stride != Dims3{1, 1, 1};
    return r;
}

NetworkSpec build_topology(const PlanConfig &plan, bool residual) {
    validate_plan(plan);
    NetworkSpec spec;
    spec.pools = plan.pools_per_axis;
    spec.base_features = plan.base_features;
    spec.max_features = plan.max_features;
    Dims3 kernel = kernel_for(plan);
    int stages = std::max({plan.pools_per_axis[0], plan.pools_per_axis[1],
                           plan.pools_per_axis[2]}) +
                 1;

    spec.stem = conv_block(1, plan.base_features, kernel, {1, 1, 1});

    auto w = [&](int depth) { return width_at(plan.base_features, depth, plan.max_features); };
    for (int s = 0; s + 1 < stages; ++s) {
        int in = s == 0 ? w(0) : w(s - 1);
        Dims3 stride = s == 0 ? Dims3{1, 1, 1} : stride_entering(plan, s);
        spec.encoder.push_back(make_stage(in, w(s), kernel, stride, residual));
    }
    int deepest = stages - 1;
    spec.bottleneck = make_stage(deepest == 0 ? w(0) : w(deepest - 1), w(deepest), kernel,
                                 deepest == 0 ? Dims3{1, 1, 1} : stride_entering(plan, deepest),
                                 residual);
    for (int s = stages - 2; s >= 0; --s) {
        DecoderStageSpec d;
        d.upsample = TransposedConvSpec{w(s + 1), w(s), stride_entering(plan, s + 1)};
        d.block = make_stage(2 * w(s), w(s), kernel, {1, 1, 1}, residual);
        spec.decoder.push_back(d);
    }
    spec.head_in = w(0);
    return spec;
}

}  // namespace

NetworkSpec build_unet(const PlanConfig &plan) { return build_topology(plan, false); }

NetworkSpec build_raspp(const PlanConfig &plan, std::vector<int> rates) {
    NetworkSpec spec = build_topology(plan, true);

    // clamp rates so the dilated 3-kernel span fits the patch on every
    // non-degenerate axis
    int min_extent = 1 << 30;
    for (int a = 0; a < 3; ++a)
        if (plan.patch_size[a] > 1) min_extent = std::min(min_extent, plan.patch_size[a]);
    int max_rate = std::max(1, (min_extent - 1) / 2);
    std::set<int> clamped;
    for (int r : rates) {
        if (r < 1) throw ConfigError("raspp: dilation rates must be positive");
        clamped.insert(std::min(r, max_rate));
    }
    std::vector<int> use(clamped.begin(), clamped.end());
    if (use.size() < 2) use = {1, 2};

    ASPPSpec aspp;
    aspp.rates = use;
    aspp.in_channels = plan.base_features;
    aspp.branch_channels = plan.base_features;
    aspp.fuse_channels = plan.base_features;
    spec.aspp = aspp;
    return spec;
}

std::int64_t param_count(const ConvBlockSpec &b) {
    std::int64_t w = std::int64_t(b.kernel[0]) * b.kernel[1] * b.kernel[2] * b.in_channels *
                     b.out_channels;
    std::int64_t norm = b.instance_norm ? 2 * std::int64_t(b.out_channels) : 0;
    return w + b.out_channels + norm;
}

namespace {

std::int64_t stage_params(const StageBlock &s) {
    if (const auto *p = std::get_if<PlainBlockSpec>(&s))
        return param_count(p->conv1) + param_count(p->conv2);
    const auto &r = std::get<ResidualBlockSpec>(s);
    std::int64_t total = param_count(r.body1) + param_count(r.body2);
    if (r.projection) {
        // 1x1x1 projection conv with bias, no norm
        total += std::int64_t(r.body1.in_channels) * r.body2.out_channels +
                 r.body2.out_channels;
    }
    return total;
}

}  // namespace

std::int64_t param_count(const NetworkSpec &spec) {
    std::int64_t total = param_count(spec.stem);  // zero-channel blocks count zero
    if (spec.aspp) {
        ConvBlockSpec branch;
        branch.in_channels = spec.aspp->in_channels;
        branch.out_channels = spec.aspp->branch_channels;
        for (std::size_t i = 0; i < spec.aspp->rates.size(); ++i) total += param_count(branch);
        ConvBlockSpec fuse;
        fuse.in_channels = spec.aspp->branch_channels * int(spec.aspp->rates.size());
        fuse.out_channels = spec.aspp->fuse_channels;
        fuse.kernel = {1, 1, 1};
        total += param_count(fuse);
    }
    for (const auto &s : spec.encoder) total += stage_params(s);
    total += stage_params(spec.bottleneck);  // zero for a default-constructed spec
    for (const auto &d : spec.decoder) {
        total += std::int64_t(d.upsample.in_channels) * d.upsample.out_channels *
                     d.upsample.stride[0] * d.upsample.stride[1] * d.upsample.stride[2] +
                 d.upsample.out_channels;
        total += stage_params(d.block);
    }
    if (spec.head_in > 0)
        total += std::int64_t(spec.head_in) * spec.num_classes + spec.num_classes;
    return total;
}

int residual_block_count(const NetworkSpec &spec) {
    int count = 0;
    auto tally = [&](const StageBlock &b) {
        if (std::holds_alternative<ResidualBlockSpec>(b)) ++count;
    };
    for (const auto &s : spec.encoder) tally(s);
    tally(spec.bottleneck);
    for (const auto &d : spec.decoder) tally(d.block);
    return count;
}

int stage_block_count(const NetworkSpec &spec) {
    return int(spec.encoder.size()) + 1 + int(spec.decoder.size());
}

namespace {

json conv_to_json(const ConvBlockSpec &b) {
    return json{{"in", b.in_channels},         {"out", b.out_channels},
                {"kernel", b.kernel},          {"stride", b.stride},
                {"dilation", b.dilation},      {"instance_norm", b.instance_norm},
                {"negative_slope", b.negative_slope}};
}

ConvBlockSpec conv_from_json(const json &j) {
    ConvBlockSpec b;
    b.in_channels = j.at("in").get<int>();
    b.out_channels = j.at("out").get<int>();
    for (int a = 0; a < 3; ++a) {
        b.kernel[a] = j.at("kernel").at(a).get<int>();
        b.stride[a] = j.at("stride").at(a).get<int>();
        b.dilation[a] = j.at("dilation").at(a).get<int>();
    }
    b.instance_norm = j.at("instance_norm").get<bool>();
    b.negative_slope = j.at("negative_slope").get<double>();
    return b;
}

json stage_to_json(const StageBlock &s) {
    if (const auto *p = std::get_if<PlainBlockSpec>(&s))
        return json{{"residual", false},
                    {"conv1", conv_to_json(p->conv1)},
                    {"conv2", conv_to_json(p->conv2)}};
    const auto &r = std::get<ResidualBlockSpec>(s);
    return json{{"residual", true},
                {"conv1", conv_to_json(r.body1)},
                {"conv2", conv_to_json(r.body2)},
                {"projection", r.projection}};
}

StageBlock stage_from_json(const json &j) {
    if (!j.at("residual").get<bool>())
        return PlainBlockSpec{conv_from_json(j.at("conv1")), conv_from_json(j.at("conv2"))};
    ResidualBlockSpec r;
    r.body1 = conv_from_json(j.at("conv1"));
    r.body2 = conv_from_json(j.at("conv2"));
    r.projection = j.at("projection").get<bool>();
    return r;
}

}  // namespace

void save_spec(const NetworkSpec &spec, const std::string &path) {
    json j;
    j["pools"] = spec.pools;
    j["num_classes"] = spec.num_classes;
    j["base_features"] = spec.base_features;
    j["max_features"] = spec.max_features;
    j["stem"] = conv_to_json(spec.stem);
    if (spec.aspp) {
        j["aspp"] = {{"rates", spec.aspp->rates},
                     {"in", spec.aspp->in_channels},
                     {"branch", spec.aspp->branch_channels},
                     {"fuse", spec.aspp->fuse_channels}};
    }
    j["encoder"] = json::array();
    for (const auto &s : spec.encoder) j["encoder"].push_back(stage_to_json(s));
    j["bottleneck"] = stage_to_json(spec.bottleneck);
    j["decoder"] = json::array();
    for (const auto &d : spec.decoder) {
        j["decoder"].push_back(json{{"up_in", d.upsample.in_channels},
                                    {"up_out", d.upsample.out_channels},
                                    {"up_stride", d.upsample.stride},
                                    {"block", stage_to_json(d.block)}});
    }
    j["head_in"] = spec.head_in;
    std::ofstream out(path);
    if (!out) throw RuntimeError("spec: cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

NetworkSpec load_spec(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("spec: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        throw RuntimeError("spec: malformed JSON in '" + path + "': " + e.what());
    }
    NetworkSpec spec;
    try {
        for (int a = 0; a < 3; ++a) spec.pools[a] = j.at("pools").at(a).get<int>();
        spec.num_classes = j.at("num_classes").get<int>();
        spec.base_features = j.at("base_features").get<int>();
        spec.max_features = j.at("max_features").get<int>();
        spec.stem = conv_from_json(j.at("stem"));
        if (j.contains("aspp")) {
            ASPPSpec a;
            a.rates = j["aspp"].at("rates").get<std::vector<int>>();
            a.in_channels = j["aspp"].at("in").get<int>();
            a.branch_channels = j["aspp"].at("branch").get<int>();
            a.fuse_channels = j["aspp"].at("fuse").get<int>();
            spec.aspp = a;
        }
        for (const auto &s : j.at("encoder")) spec.encoder.push_back(stage_from_json(s));
        spec.bottleneck = stage_from_json(j.at("bottleneck"));
        for (const auto &d : j.at("decoder")) {
            DecoderStageSpec ds;
            ds.upsample.in_channels = d.at("up_in").get<int>();
            ds.upsample.out_channels = d.at("up_out").get<int>();
            for (int a = 0; a < 3; ++a) ds.upsample.stride[a] = d.at("up_stride").at(a).get<int>();
            ds.block = stage_from_json(d.at("block"));
            spec.decoder.push_back(ds);
        }
        spec.head_in = j.at("head_in").get<int>();
    } catch (const json::exception &e) {
        throw RuntimeError("spec: bad field in '" + path + "': " + e.what());
    }
    return spec;
}

}  // namespace octseg
