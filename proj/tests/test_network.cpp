#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "octseg/netexec.hpp"
#include "octseg/netspec.hpp"
#include "octseg/rng.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

using namespace octseg;

namespace {

PlanConfig toy_plan(Dims3 patch, Dims3 pools, int base, int max_features = 320) {
    PlanConfig p;
    p.patch_size = patch;
    p.pools_per_axis = pools;
    p.base_features = base;
    p.max_features = max_features;
    p.batch_size = 2;
    p.target_spacing = {1, 1, 1};
    p.normalization = {0, 1, -3, 3};
    return p;
}

Tensor random_input(int n, Dims3 sp, std::uint64_t seed) {
    Tensor t(n, 1, sp);
    Rng rng(seed);
    for (auto &v : t.data) v = rng.normal();
    return t;
}

int out_width(const StageBlock &b) {
    if (const auto *p = std::get_if<PlainBlockSpec>(&b)) return p->conv2.out_channels;
    return std::get<ResidualBlockSpec>(b).body2.out_channels;
}

// Recomputes one lowered program step-by-step with the definition-level
// kernels from oracles.hpp plus scalar loops, entirely independent of the
// library's executor.
Tensor interpret_with_oracle(const Program &prog, const Parameters &params, const Tensor &input) {
    std::vector<Tensor> slot(std::size_t(prog.slot_count));
    slot[std::size_t(prog.input_slot)] = input;
    for (const Op &op : prog.ops) {
        const Tensor &in = slot[std::size_t(op.in0)];
        Tensor &out = slot[std::size_t(op.out)];
        switch (op.kind) {
            case OpKind::Conv: {
                oracle::ConvGeom g;
                g.n = in.n;
                g.ci = op.in_ch;
                g.co = op.out_ch;
                g.in_sp = {in.sp[0], in.sp[1], in.sp[2]};
                g.kernel = {op.kernel[0], op.kernel[1], op.kernel[2]};
                g.stride = {op.stride[0], op.stride[1], op.stride[2]};
                g.dilation = {op.dilation[0], op.dilation[1], op.dilation[2]};
                for (int a = 0; a < 3; ++a) g.pad[a] = op.dilation[a] * (op.kernel[a] - 1) / 2;
                auto osp = oracle::conv_out_shape(g);
                out = Tensor(in.n, op.out_ch, {osp[0], osp[1], osp[2]});
                out.data = oracle::conv_by_loops(g, in.data, params.tensors.at(op.weights).v,
                                                 params.tensors.at(op.bias).v);
                break;
            }
            case OpKind::ConvTranspose: {
                // direct definition: out[o] = b + sum_ci w[ci][co][o%s] * in[o/s]
                Dims3 osp{in.sp[0] * op.stride[0], in.sp[1] * op.stride[1],
                          in.sp[2] * op.stride[2]};
                out = Tensor(in.n, op.out_ch, osp);
                const auto &W = params.tensors.at(op.weights).v;
                const auto &B = params.tensors.at(op.bias).v;
                for (int n = 0; n < in.n; ++n)
                    for (int co = 0; co < op.out_ch; ++co)
                        for (int z = 0; z < osp[2]; ++z)
                            for (int y = 0; y < osp[1]; ++y)
                                for (int x = 0; x < osp[0]; ++x) {
                                    double acc = B[co];
                                    int kz = z % op.stride[2], ky = y % op.stride[1],
                                        kx = x % op.stride[0];
                                    for (int ci = 0; ci < op.in_ch; ++ci) {
                                        double w =
                                            W[(((std::int64_t(ci) * op.out_ch + co) *
                                                    op.kernel[2] +
                                                kz) *
                                                   op.kernel[1] +
                                               ky) *
                                                  op.kernel[0] +
                                              kx];
                                        acc += w * in.at(n, ci, x / op.stride[0],
                                                         y / op.stride[1], z / op.stride[2]);
                                    }
                                    out.at(n, co, x, y, z) = acc;
                                }
                break;
            }
            case OpKind::InstanceNorm: {
                out = Tensor(in.n, in.c, in.sp);
                const auto &G = params.tensors.at(op.weights).v;
                const auto &Bt = params.tensors.at(op.bias).v;
                for (int n = 0; n < in.n; ++n)
                    for (int c = 0; c < in.c; ++c) {
                        double mean = 0, var = 0;
                        for (std::int64_t i = 0; i < in.spatial(); ++i)
                            mean += in.plane(n, c)[i];
                        mean /= double(in.spatial());
                        for (std::int64_t i = 0; i < in.spatial(); ++i)
                            var += (in.plane(n, c)[i] - mean) * (in.plane(n, c)[i] - mean);
                        var /= double(in.spatial());
                        for (std::int64_t i = 0; i < in.spatial(); ++i)
                            out.plane(n, c)[i] =
                                G[c] * (in.plane(n, c)[i] - mean) / std::sqrt(var + 1e-5) + Bt[c];
                    }
                break;
            }
            case OpKind::LeakyReLU:
                out = in;
                for (auto &v : out.data)
                    if (v < 0) v *= op.negative_slope;
                break;
            case OpKind::Add: {
                out = in;
                const Tensor &rhs = slot[std::size_t(op.in1)];
                for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += rhs.data[i];
                break;
            }
            case OpKind::Concat: {
                const Tensor &rhs = slot[std::size_t(op.in1)];
                out = Tensor(in.n, in.c + rhs.c, in.sp);
                for (int n = 0; n < in.n; ++n) {
                    for (int c = 0; c < in.c; ++c)
                        for (std::int64_t i = 0; i < in.spatial(); ++i)
                            out.plane(n, c)[i] = in.plane(n, c)[i];
                    for (int c = 0; c < rhs.c; ++c)
                        for (std::int64_t i = 0; i < rhs.spatial(); ++i)
                            out.plane(n, in.c + c)[i] = rhs.plane(n, c)[i];
                }
                break;
            }
            case OpKind::Softmax: {
                out = Tensor(in.n, in.c, in.sp);
                for (int n = 0; n < in.n; ++n)
                    for (std::int64_t i = 0; i < in.spatial(); ++i) {
                        double m = -1e300, sum = 0;
                        for (int c = 0; c < in.c; ++c) m = std::max(m, in.plane(n, c)[i]);
                        for (int c = 0; c < in.c; ++c) sum += std::exp(in.plane(n, c)[i] - m);
                        for (int c = 0; c < in.c; ++c)
                            out.plane(n, c)[i] = std::exp(in.plane(n, c)[i] - m) / sum;
                    }
                break;
            }
        }
    }
    return slot[std::size_t(prog.output_slot)];
}

}  // namespace

TEST_CASE("build_unet: doubling widths for pools (3,3,3)") {
    NetworkSpec s = build_unet(toy_plan({64, 64, 64}, {3, 3, 3}, 32));
    REQUIRE(s.encoder.size() == 3);
    CHECK(out_width(s.encoder[0]) == 32);
    CHECK(out_width(s.encoder[1]) == 64);
    CHECK(out_width(s.encoder[2]) == 128);
    CHECK(out_width(s.bottleneck) == 256);
    CHECK(s.decoder.size() == 3);
    CHECK(s.head_in == 32);
    CHECK(residual_block_count(s) == 0);
    // stage count = max(pools) + 1
    CHECK(stage_block_count(s) - int(s.decoder.size()) == 4);
}

TEST_CASE("build_unet: width capped at max_features") {
    NetworkSpec s = build_unet(toy_plan({64, 64, 64}, {5, 5, 5}, 32, 320));
    CHECK(out_width(s.bottleneck) == 320);
}

TEST_CASE("build_unet: degenerate single-stage plan") {
    NetworkSpec s = build_unet(toy_plan({8, 8, 8}, {0, 0, 0}, 4));
    CHECK(s.encoder.empty());
    CHECK(s.decoder.empty());
    CHECK(out_width(s.bottleneck) == 4);
}

TEST_CASE("param_count: closed forms") {
    ConvBlockSpec single;
    single.in_channels = 1;
    single.out_channels = 1;
    single.instance_norm = false;
    CHECK(param_count(single) == 28);  // 27 weights + 1 bias

    CHECK(param_count(NetworkSpec{}) == 0);

    // 1-stage base-2 kernel-3 2-class toy:
    //   stem conv 1->2 (54+2) + norm (4)            = 60
    //   bottleneck: two convs 2->2 (108+2+4 each)   = 228
    //   head 2->2 1x1x1 (4+2)                       = 6
    NetworkSpec s = build_unet(toy_plan({8, 8, 8}, {0, 0, 0}, 2));
    s.num_classes = 2;
    CHECK(param_count(s) == 294);
}

TEST_CASE("param_count: matches instantiated parameter shapes") {
    for (bool raspp : {false, true}) {
        PlanConfig plan = toy_plan({16, 16, 8}, {1, 1, 0}, 4);
        NetworkSpec s = raspp ? build_raspp(plan) : build_unet(plan);
        Parameters p = init_parameters(s, 1);
        std::int64_t total = 0;
        for (const auto &[name, t] : p.tensors) total += t.size();
        CHECK(param_count(s) == total);
    }
}

TEST_CASE("build_raspp: one ASPP stem before encoder stage 0, residual everywhere") {
    PlanConfig plan = toy_plan({32, 32, 16}, {2, 2, 1}, 8);
    NetworkSpec s = build_raspp(plan);
    REQUIRE(s.aspp.has_value());
    CHECK(s.aspp->rates == std::vector<int>{1, 2, 4, 7});  // 8 clamped to (16-1)/2
    CHECK(residual_block_count(s) == stage_block_count(s));

    // lowered op order: all aspp ops sit after the stem and before any stage
    Program prog = lower(s);
    int stem_end = -1, aspp_first = -1, aspp_last = -1, stage_first = -1;
    for (int i = 0; i < int(prog.ops.size()); ++i) {
        const std::string &w = prog.ops[i].weights;
        if (w.rfind("stem.", 0) == 0) stem_end = i;
        if (w.rfind("aspp.", 0) == 0) {
            if (aspp_first < 0) aspp_first = i;
            aspp_last = i;
        }
        if (stage_first < 0 && (w.rfind("enc0.", 0) == 0 || w.rfind("bottleneck.", 0) == 0))
            stage_first = i;
    }
    REQUIRE(aspp_first >= 0);
    CHECK(stem_end < aspp_first);
    CHECK(aspp_last < stage_first);

    CHECK(param_count(s) > param_count(build_unet(plan)));
}

TEST_CASE("build_raspp: rates stay distinct on small patches") {
    NetworkSpec s = build_raspp(toy_plan({8, 8, 8}, {0, 0, 0}, 2));
    REQUIRE(s.aspp.has_value());
    CHECK(s.aspp->rates.size() >= 2);
    std::set<int> uniq(s.aspp->rates.begin(), s.aspp->rates.end());
    CHECK(uniq.size() == s.aspp->rates.size());
}

TEST_CASE("init_parameters: deterministic, norm identity, He variance") {
    PlanConfig plan = toy_plan({16, 16, 16}, {1, 1, 1}, 16);
    NetworkSpec s = build_unet(plan);
    Parameters a = init_parameters(s, 99);
    Parameters b = init_parameters(s, 99);
    REQUIRE(a.tensors.size() == b.tensors.size());
    for (const auto &[name, t] : a.tensors) {
        CHECK(t.v == b.tensors.at(name).v);
    }
    Parameters c = init_parameters(s, 100);
    CHECK(a.tensors.at("stem.conv.w").v != c.tensors.at("stem.conv.w").v);

    for (const auto &[name, t] : a.tensors) {
        if (name.find(".norm") != std::string::npos || name.find("norm1") != std::string::npos ||
            name.find("norm2") != std::string::npos) {
            for (double v : t.v) {
                if (name.back() == 'g')
                    CHECK(v == 1.0);
                else
                    CHECK(v == 0.0);
            }
        }
        if (name.size() > 2 && name.substr(name.size() - 2) == ".b" &&
            name.find("norm") == std::string::npos) {
            for (double v : t.v) CHECK(v == 0.0);
        }
    }

    // bottleneck.conv1: 16 -> 32, 3^3 kernel => 13824 weights, fan_in 432
    const auto &w = a.tensors.at("bottleneck.conv1.w");
    REQUIRE(w.size() >= 10000);
    double mean = 0;
    for (double v : w.v) mean += v;
    mean /= double(w.size());
    double var = 0;
    for (double v : w.v) var += (v - mean) * (v - mean);
    var /= double(w.size());
    const double expected = 2.0 / 432.0;
    CHECK(var > expected * 0.8);
    CHECK(var < expected * 1.2);
}

TEST_CASE("forward: softmax normalized, shape preserved, 4 channels") {
    PlanConfig plan = toy_plan({16, 8, 8}, {1, 1, 1}, 4);
    NetworkSpec s = build_unet(plan);
    Parameters p = init_parameters(s, 7);
    Tensor in = random_input(2, {16, 8, 8}, 3);
    Tensor out = forward(s, p, in);
    CHECK(out.n == 2);
    CHECK(out.c == 4);
    CHECK(out.sp == in.sp);
    for (int n = 0; n < out.n; ++n)
        for (std::int64_t i = 0; i < out.spatial(); ++i) {
            double sum = 0;
            for (int c = 0; c < 4; ++c) {
                double v = out.plane(n, c)[i];
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
}

TEST_CASE("forward: randomized plans preserve shape") {
    Rng rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        Dims3 pools{int(rng.below(3)), int(rng.below(3)), int(rng.below(2))};
        Dims3 patch;
        for (int a = 0; a < 3; ++a) {
            int unit = 1 << pools[a];
            patch[a] = unit * int(1 + rng.below(2 == a ? 4 : 4));
            patch[a] = std::max(patch[a], unit);
        }
        bool raspp = rng.below(2) == 0;
        PlanConfig plan = toy_plan(patch, pools, 2 + int(rng.below(3)));
        NetworkSpec s = raspp ? build_raspp(plan) : build_unet(plan);
        Parameters p = init_parameters(s, trial);
        Tensor in = random_input(1, patch, trial + 100);
        Tensor out = forward(s, p, in);
        CHECK(out.sp == patch);
        CHECK(out.c == 4);
        for (std::int64_t i = 0; i < out.spatial(); ++i) {
            double sum = 0;
            for (int c = 0; c < 4; ++c) sum += out.plane(0, c)[i];
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("forward: indivisible input names the offending axis") {
    NetworkSpec s = build_unet(toy_plan({16, 16, 16}, {1, 1, 1}, 2));
    Parameters p = init_parameters(s, 1);
    Tensor in = random_input(1, {16, 15, 16}, 4);
    CHECK_THROWS_WITH_AS(forward(s, p, in), doctest::Contains("axis y"), RuntimeError);
}

TEST_CASE("forward: zero body reduces residual block to its skip path bit-exactly") {
    PlanConfig plan = toy_plan({16, 16, 8}, {1, 1, 0}, 4);
    NetworkSpec s = build_raspp(plan);
    Parameters p = init_parameters(s, 5);
    // zero every enc0 body parameter (conv + norm); enc0 skip is the identity
    for (auto &[name, t] : p.tensors)
        if (name.rfind("enc0.", 0) == 0) std::fill(t.v.begin(), t.v.end(), 0.0);

    Program prog = lower(s);
    int block_in = -1, block_out = -1;
    for (std::size_t i = 0; i < prog.ops.size(); ++i) {
        if (prog.ops[i].weights == "enc0.conv1.w") block_in = prog.ops[i].in0;
        if (block_in >= 0 && prog.ops[i].kind == OpKind::Add) {
            block_out = prog.ops[i].out;
            break;
        }
    }
    REQUIRE(block_in >= 0);
    REQUIRE(block_out >= 0);

    Trace trace;
    forward(prog, p, random_input(1, {16, 16, 8}, 9), &trace);
    const Tensor &x = trace.slots[std::size_t(block_in)];
    const Tensor &y = trace.slots[std::size_t(block_out)];
    REQUIRE(x.size() == y.size());
    CHECK(x.data == y.data);
}

TEST_CASE("forward: ASPP branches preserve spatial shape") {
    PlanConfig plan = toy_plan({16, 16, 8}, {1, 1, 0}, 4);
    NetworkSpec s = build_raspp(plan);
    Parameters p = init_parameters(s, 2);
    Program prog = lower(s);
    Trace trace;
    forward(prog, p, random_input(1, {16, 16, 8}, 2), &trace);
    for (const Op &op : prog.ops) {
        if (op.kind == OpKind::Conv && op.weights.rfind("aspp.b", 0) == 0) {
            CHECK(trace.slots[std::size_t(op.out)].sp ==
                  trace.slots[std::size_t(op.in0)].sp);
        }
    }
}

TEST_CASE("forward: matches definition-level reimplementation within 1e-10") {
    for (bool raspp : {false, true}) {
        PlanConfig plan = toy_plan({8, 8, 4}, {1, 1, 1}, 2);
        // depth axis pools once: patch z = 4 -> 2
        plan.pools_per_axis = {1, 1, 1};
        NetworkSpec s = raspp ? build_raspp(plan) : build_unet(plan);
        Parameters p = init_parameters(s, 31);
        Program prog = lower(s);
        Tensor in = random_input(2, {8, 8, 4}, 77);

        Tensor got = forward(prog, p, in);
        Tensor want = interpret_with_oracle(prog, p, in);
        REQUIRE(got.size() == want.size());
        double max_err = 0;
        for (std::int64_t i = 0; i < got.size(); ++i)
            max_err = std::max(max_err,
                               std::abs(got.data[std::size_t(i)] - want.data[std::size_t(i)]));
        CHECK(max_err < 1e-10);
    }
}

TEST_CASE("forward: deterministic") {
    PlanConfig plan = toy_plan({16, 16, 8}, {2, 2, 1}, 4);
    NetworkSpec s = build_raspp(plan);
    Parameters p = init_parameters(s, 13);
    Tensor in = random_input(2, {16, 16, 8}, 17);
    Tensor a = forward(s, p, in);
    Tensor b = forward(s, p, in);
    CHECK(a.data == b.data);
}

TEST_CASE("spec: JSON roundtrip preserves structure and parameter shapes") {
    testutil::TempDir tmp("spec_json");
    PlanConfig plan = toy_plan({16, 16, 8}, {1, 1, 0}, 4);
    NetworkSpec s = build_raspp(plan);
    save_spec(s, tmp.str("spec.json"));
    NetworkSpec r = load_spec(tmp.str("spec.json"));
    CHECK(param_count(r) == param_count(s));
    CHECK(residual_block_count(r) == residual_block_count(s));
    REQUIRE(r.aspp.has_value());
    CHECK(r.aspp->rates == s.aspp->rates);
    Parameters p = init_parameters(s, 3);
    Parameters q = init_parameters(r, 3);
    Tensor in = random_input(1, {16, 16, 8}, 1);
    CHECK(forward(s, p, in).data == forward(r, q, in).data);
}
