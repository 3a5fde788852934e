#include "octseg/netexec.hpp"

#include <algorithm>
#include <cmath>

#include "octseg/rng.hpp"

namespace octseg {
namespace {

constexpr double kNormEps = 1e-5;

// ---- lowering ---------------------------------------------------------------

class Lowering {
  public:
    explicit Lowering(const NetworkSpec &spec) : spec_(spec) {
        prog_.pools = spec.pools;
        prog_.input_slot = 0;
        prog_.slot_count = 1;
    }

    Program run() {
        int cur = emit_conv_block(0, spec_.stem, "stem");
        if (spec_.aspp) cur = emit_aspp(cur, *spec_.aspp);
        std::vector<int> skips;
        for (std::size_t s = 0; s < spec_.encoder.size(); ++s) {
            cur = emit_stage(cur, spec_.encoder[s], "enc" + std::to_string(s));
            skips.push_back(cur);
        }
        cur = emit_stage(cur, spec_.bottleneck, "bottleneck");
        for (std::size_t i = 0; i < spec_.decoder.size(); ++i) {
            const auto &d = spec_.decoder[i];
            std::size_t depth = spec_.decoder.size() - 1 - i;  // S-2 .. 0
            std::string prefix = "dec" + std::to_string(depth);
            cur = emit_transposed(cur, d.upsample, prefix + ".up");
            cur = emit_concat(cur, skips.at(depth), d.upsample.out_channels,
                              stage_in_channels(d.block) - d.upsample.out_channels);
            cur = emit_stage(cur, d.block, prefix);
        }
        cur = emit_head(cur);
        prog_.output_slot = emit_softmax(cur);
        return std::move(prog_);
    }

  private:
    static int stage_in_channels(const StageBlock &b) {
        if (const auto *p = std::get_if<PlainBlockSpec>(&b)) return p->conv1.in_channels;
        return std::get<ResidualBlockSpec>(b).body1.in_channels;
    }

    int new_slot() { return prog_.slot_count++; }

    void declare(const std::string &name, std::vector<int> shape, ParamInit init, int fan_in = 1) {
        prog_.params.push_back({name, std::move(shape), init, fan_in});
    }

    int emit_conv(int in, const std::string &name, int ci, int co, Dims3 kernel, Dims3 stride,
                  Dims3 dilation) {
        Op op;
        op.kind = OpKind::Conv;
        op.in0 = in;
        op.out = new_slot();
        op.in_ch = ci;
        op.out_ch = co;
        op.kernel = kernel;
        op.stride = stride;
        op.dilation = dilation;
        op.weights = name + ".w";
        op.bias = name + ".b";
        declare(op.weights, {co, ci, kernel[2], kernel[1], kernel[0]}, ParamInit::HeConv,
                ci * kernel[0] * kernel[1] * kernel[2]);
        declare(op.bias, {co}, ParamInit::Zero);
        prog_.ops.push_back(op);
        return op.out;
    }

    int emit_norm(int in, const std::string &name, int channels) {
        Op op;
        op.kind = OpKind::InstanceNorm;
        op.in0 = in;
        op.out = new_slot();
        op.in_ch = op.out_ch = channels;
        op.weights = name + ".g";
        op.bias = name + ".b";
        declare(op.weights, {channels}, ParamInit::One);
        declare(op.bias, {channels}, ParamInit::Zero);
        prog_.ops.push_back(op);
        return op.out;
    }

    int emit_lrelu(int in, int channels, double slope) {
        Op op;
        op.kind = OpKind::LeakyReLU;
        op.in0 = in;
        op.out = new_slot();
        op.in_ch = op.out_ch = channels;
        op.negative_slope = slope;
        prog_.ops.push_back(op);
        return op.out;
    }

    int emit_conv_block(int in, const ConvBlockSpec &b, const std::string &prefix) {
        int cur = emit_conv(in, prefix + ".conv", b.in_channels, b.out_channels, b.kernel,
                            b.stride, b.dilation);
        if (b.instance_norm) cur = emit_norm(cur, prefix + ".norm", b.out_channels);
        return emit_lrelu(cur, b.out_channels, b.negative_slope);
    }

    int emit_stage(int in, const StageBlock &block, const std::string &prefix) {
        if (const auto *p = std::get_if<PlainBlockSpec>(&block)) {
            int cur = emit_conv_block2(in, p->conv1, prefix + ".conv1", prefix + ".norm1");
            return emit_conv_block2(cur, p->conv2, prefix + ".conv2", prefix + ".norm2");
        }
        const auto &r = std::get<ResidualBlockSpec>(block);
        int body = emit_conv_block2(in, r.body1, prefix + ".conv1", prefix + ".norm1");
        body = emit_conv_block2(body, r.body2, prefix + ".conv2", prefix + ".norm2");
        int skip = in;
        if (r.projection)
            skip = emit_conv(in, prefix + ".skip", r.body1.in_channels, r.body2.out_channels,
                             {1, 1, 1}, r.body1.stride, {1, 1, 1});
        Op add;
        add.kind = OpKind::Add;
        add.in0 = body;
        add.in1 = skip;
        add.out = new_slot();
        add.in_ch = add.out_ch = r.body2.out_channels;
        prog_.ops.push_back(add);
        return add.out;
    }

    // like emit_conv_block but with separate conv/norm naming used inside stages
    int emit_conv_block2(int in, const ConvBlockSpec &b, const std::string &conv_name,
                         const std::string &norm_name) {
        int cur =
            emit_conv(in, conv_name, b.in_channels, b.out_channels, b.kernel, b.stride, b.dilation);
        if (b.instance_norm) cur = emit_norm(cur, norm_name, b.out_channels);
        return emit_lrelu(cur, b.out_channels, b.negative_slope);
    }

    int emit_aspp(int in, const ASPPSpec &aspp) {
        std::vector<int> branches;
        for (std::size_t i = 0; i < aspp.rates.size(); ++i) {
            int r = aspp.rates[i];
            ConvBlockSpec b;
            b.in_channels = aspp.in_channels;
            b.out_channels = aspp.branch_channels;
            b.kernel = spec_.stem.kernel;
            for (int a = 0; a < 3; ++a) b.dilation[a] = b.kernel[a] == 1 ? 1 : r;
            branches.push_back(emit_conv_block(in, b, "aspp.b" + std::to_string(i)));
        }
        int cur = branches[0];
        int ch = aspp.branch_channels;
        for (std::size_t i = 1; i < branches.size(); ++i) {
            cur = emit_concat(cur, branches[i], ch, aspp.branch_channels);
            ch += aspp.branch_channels;
        }
        ConvBlockSpec fuse;
        fuse.in_channels = ch;
        fuse.out_channels = aspp.fuse_channels;
        fuse.kernel = {1, 1, 1};
        return emit_conv_block(cur, fuse, "aspp.fuse");
    }

    int emit_concat(int a, int b, int a_ch, int b_ch) {
        Op op;
        op.kind = OpKind::Concat;
        op.in0 = a;
        op.in1 = b;
        op.out = new_slot();
        op.in_ch = a_ch;
        op.out_ch = a_ch + b_ch;
        prog_.ops.push_back(op);
        return op.out;
    }

    int emit_transposed(int in, const TransposedConvSpec &t, const std::string &name) {
        Op op;
        op.kind = OpKind::ConvTranspose;
        op.in0 = in;
        op.out = new_slot();
        op.in_ch = t.in_channels;
        op.out_ch = t.out_channels;
        op.kernel = t.stride;
        op.stride = t.stride;
        op.weights = name + ".w";
        op.bias = name + ".b";
        declare(op.weights, {t.in_channels, t.out_channels, t.stride[2], t.stride[1], t.stride[0]},
                ParamInit::HeTransposed, t.in_channels);
        declare(op.bias, {t.out_channels}, ParamInit::Zero);
        prog_.ops.push_back(op);
        return op.out;
    }

    int emit_head(int in) {
        Op op;
        op.kind = OpKind::Conv;
        op.in0 = in;
        op.out = new_slot();
        op.in_ch = spec_.head_in;
        op.out_ch = spec_.num_classes;
        op.kernel = {1, 1, 1};
        op.weights = "head.w";
        op.bias = "head.b";
        declare(op.weights, {spec_.num_classes, spec_.head_in, 1, 1, 1}, ParamInit::HeConv,
                spec_.head_in);
        declare(op.bias, {spec_.num_classes}, ParamInit::Zero);
        prog_.ops.push_back(op);
        return op.out;
    }

    int emit_softmax(int in) {
        Op op;
        op.kind = OpKind::Softmax;
        op.in0 = in;
        op.out = new_slot();
        op.in_ch = op.out_ch = spec_.num_classes;
        prog_.ops.push_back(op);
        return op.out;
    }

    const NetworkSpec &spec_;
    Program prog_;
};

// ---- kernels ----------------------------------------------------------------

Dims3 conv_out_shape(const Op &op, const Dims3 &in) {
    Dims3 out;
    for (int a = 0; a < 3; ++a) {
        int pad = op.dilation[a] * (op.kernel[a] - 1) / 2;
        int span = op.dilation[a] * (op.kernel[a] - 1) + 1;
        out[a] = (in[a] + 2 * pad - span) / op.stride[a] + 1;
        if (out[a] < 1)
            throw RuntimeError("network: convolution output collapsed on axis " +
                               std::string(1, "xyz"[a]));
    }
    return out;
}

struct Range {
    int lo, hi;  // output index range [lo, hi)
};

// output indices whose receptive tap k stays inside the input on this axis
Range tap_range(int in_dim, int out_dim, int stride, int pad, int tap_offset) {
    int lo_num = pad - tap_offset;
    int lo = lo_num > 0 ? (lo_num + stride - 1) / stride : 0;
    int hi_num = in_dim - 1 - tap_offset + pad;
    if (hi_num < 0) return {0, 0};
    int hi = std::min(out_dim, hi_num / stride + 1);
    return {lo, std::max(lo, hi)};
}

void conv_forward(const Op &op, const ParamTensor &W, const ParamTensor &B, const Tensor &in,
                  Tensor &out) {
    Dims3 osp = conv_out_shape(op, in.sp);
    out = Tensor(in.n, op.out_ch, osp);
    const int ix = in.sp[0], iy = in.sp[1], iz = in.sp[2];
    const int ox = osp[0], oy = osp[1], oz = osp[2];
    Dims3 pad;
    for (int a = 0; a < 3; ++a) pad[a] = op.dilation[a] * (op.kernel[a] - 1) / 2;

    for (int n = 0; n < in.n; ++n) {
        for (int co = 0; co < op.out_ch; ++co) {
            double *o = out.plane(n, co);
            const double bias = B.v[co];
            std::fill(o, o + out.spatial(), bias);
            for (int ci = 0; ci < op.in_ch; ++ci) {
                const double *ip = in.plane(n, ci);
                for (int kz = 0; kz < op.kernel[2]; ++kz) {
                    Range rz = tap_range(iz, oz, op.stride[2], pad[2], kz * op.dilation[2]);
                    for (int ky = 0; ky < op.kernel[1]; ++ky) {
                        Range ry = tap_range(iy, oy, op.stride[1], pad[1], ky * op.dilation[1]);
                        for (int kx = 0; kx < op.kernel[0]; ++kx) {
                            Range rx = tap_range(ix, ox, op.stride[0], pad[0], kx * op.dilation[0]);
                            const double w =
                                W.v[(((std::int64_t(co) * op.in_ch + ci) * op.kernel[2] + kz) *
                                         op.kernel[1] +
                                     ky) *
                                        op.kernel[0] +
                                    kx];
                            for (int z = rz.lo; z < rz.hi; ++z) {
                                const int sz = z * op.stride[2] - pad[2] + kz * op.dilation[2];
                                for (int y = ry.lo; y < ry.hi; ++y) {
                                    const int sy = y * op.stride[1] - pad[1] + ky * op.dilation[1];
                                    const double *irow = ip + (std::int64_t(sz) * iy + sy) * ix;
                                    double *orow = o + (std::int64_t(z) * oy + y) * ox;
                                    if (op.stride[0] == 1) {
                                        const int off = -pad[0] + kx * op.dilation[0];
                                        for (int x = rx.lo; x < rx.hi; ++x)
                                            orow[x] += w * irow[x + off];
                                    } else {
                                        for (int x = rx.lo; x < rx.hi; ++x)
                                            orow[x] += w * irow[x * op.stride[0] - pad[0] +
                                                                kx * op.dilation[0]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv_backward(const Op &op, const ParamTensor &W, const Tensor &in, const Tensor &dout,
                   Tensor &din, ParamTensor &dW, ParamTensor &dB) {
    const Dims3 osp = dout.sp;
    const int ix = in.sp[0], iy = in.sp[1], iz = in.sp[2];
    const int ox = osp[0], oy = osp[1], oz = osp[2];
    Dims3 pad;
    for (int a = 0; a < 3; ++a) pad[a] = op.dilation[a] * (op.kernel[a] - 1) / 2;

    for (int n = 0; n < in.n; ++n) {
        for (int co = 0; co < op.out_ch; ++co) {
            const double *go = dout.plane(n, co);
            double bsum = 0.0;
            for (std::int64_t i = 0; i < dout.spatial(); ++i) bsum += go[i];
            dB.v[co] += bsum;
            for (int ci = 0; ci < op.in_ch; ++ci) {
                const double *ip = in.plane(n, ci);
                double *gi = din.plane(n, ci);
                for (int kz = 0; kz < op.kernel[2]; ++kz) {
                    Range rz = tap_range(iz, oz, op.stride[2], pad[2], kz * op.dilation[2]);
                    for (int ky = 0; ky < op.kernel[1]; ++ky) {
                        Range ry = tap_range(iy, oy, op.stride[1], pad[1], ky * op.dilation[1]);
                        for (int kx = 0; kx < op.kernel[0]; ++kx) {
                            Range rx = tap_range(ix, ox, op.stride[0], pad[0], kx * op.dilation[0]);
                            const std::int64_t widx =
                                (((std::int64_t(co) * op.in_ch + ci) * op.kernel[2] + kz) *
                                     op.kernel[1] +
                                 ky) *
                                    op.kernel[0] +
                                kx;
                            const double w = W.v[widx];
                            double wacc = 0.0;
                            for (int z = rz.lo; z < rz.hi; ++z) {
                                const int sz = z * op.stride[2] - pad[2] + kz * op.dilation[2];
                                for (int y = ry.lo; y < ry.hi; ++y) {
                                    const int sy = y * op.stride[1] - pad[1] + ky * op.dilation[1];
                                    const double *grow = go + (std::int64_t(z) * oy + y) * ox;
                                    const std::int64_t irow0 = (std::int64_t(sz) * iy + sy) * ix;
                                    if (op.stride[0] == 1) {
                                        const int off = -pad[0] + kx * op.dilation[0];
                                        for (int x = rx.lo; x < rx.hi; ++x) {
                                            const double g = grow[x];
                                            gi[irow0 + x + off] += w * g;
                                            wacc += ip[irow0 + x + off] * g;
                                        }
                                    } else {
                                        for (int x = rx.lo; x < rx.hi; ++x) {
                                            const double g = grow[x];
                                            const std::int64_t ii =
                                                irow0 + x * op.stride[0] - pad[0] +
                                                kx * op.dilation[0];
                                            gi[ii] += w * g;
                                            wacc += ip[ii] * g;
                                        }
                                    }
                                }
                            }
                            dW.v[widx] += wacc;
                        }
                    }
                }
            }
        }
    }
}

void convt_forward(const Op &op, const ParamTensor &W, const ParamTensor &B, const Tensor &in,
                   Tensor &out) {
    Dims3 osp{in.sp[0] * op.stride[0], in.sp[1] * op.stride[1], in.sp[2] * op.stride[2]};
    out = Tensor(in.n, op.out_ch, osp);
    const int ix = in.sp[0], iy = in.sp[1], iz = in.sp[2];
    const int ox = osp[0], oy = osp[1];

    for (int n = 0; n < in.n; ++n) {
        for (int co = 0; co < op.out_ch; ++co) {
            double *o = out.plane(n, co);
            std::fill(o, o + out.spatial(), B.v[co]);
            for (int ci = 0; ci < op.in_ch; ++ci) {
                const double *ip = in.plane(n, ci);
                for (int kz = 0; kz < op.kernel[2]; ++kz)
                    for (int ky = 0; ky < op.kernel[1]; ++ky)
                        for (int kx = 0; kx < op.kernel[0]; ++kx) {
                            const double w =
                                W.v[(((std::int64_t(ci) * op.out_ch + co) * op.kernel[2] + kz) *
                                         op.kernel[1] +
                                     ky) *
                                        op.kernel[0] +
                                    kx];
                            for (int z = 0; z < iz; ++z) {
                                double *oz_ = o + (std::int64_t(z * op.stride[2] + kz) * oy +
                                                   ky) * ox;
                                const double *irow = ip + std::int64_t(z) * iy * ix;
                                for (int y = 0; y < iy; ++y) {
                                    double *orow = oz_ + std::int64_t(y) * op.stride[1] * ox + kx;
                                    const double *ir = irow + std::int64_t(y) * ix;
                                    for (int x = 0; x < ix; ++x)
                                        orow[std::int64_t(x) * op.stride[0]] += w * ir[x];
                                }
                            }
                        }
            }
        }
    }
}

void convt_backward(const Op &op, const ParamTensor &W, const Tensor &in, const Tensor &dout,
                    Tensor &din, ParamTensor &dW, ParamTensor &dB) {
    const int ix = in.sp[0], iy = in.sp[1], iz = in.sp[2];
    const int ox = dout.sp[0], oy = dout.sp[1];

    for (int n = 0; n < in.n; ++n) {
        for (int co = 0; co < op.out_ch; ++co) {
            const double *go = dout.plane(n, co);
            double bsum = 0.0;
            for (std::int64_t i = 0; i < dout.spatial(); ++i) bsum += go[i];
            dB.v[co] += bsum;
            for (int ci = 0; ci < op.in_ch; ++ci) {
                const double *ip = in.plane(n, ci);
                double *gi = din.plane(n, ci);
                for (int kz = 0; kz < op.kernel[2]; ++kz)
                    for (int ky = 0; ky < op.kernel[1]; ++ky)
                        for (int kx = 0; kx < op.kernel[0]; ++kx) {
                            const std::int64_t widx =
                                (((std::int64_t(ci) * op.out_ch + co) * op.kernel[2] + kz) *
                                     op.kernel[1] +
                                 ky) *
                                    op.kernel[0] +
                                kx;
                            const double w = W.v[widx];
                            double wacc = 0.0;
                            for (int z = 0; z < iz; ++z) {
                                const double *gz =
                                    go + (std::int64_t(z * op.stride[2] + kz) * oy + ky) * ox;
                                for (int y = 0; y < iy; ++y) {
                                    const double *grow = gz + std::int64_t(y) * op.stride[1] * ox +
                                                         kx;
                                    const std::int64_t irow = (std::int64_t(z) * iy + y) * ix;
                                    for (int x = 0; x < ix; ++x) {
                                        const double g = grow[std::int64_t(x) * op.stride[0]];
                                        gi[irow + x] += w * g;
                                        wacc += ip[irow + x] * g;
                                    }
                                }
                            }
                            dW.v[widx] += wacc;
                        }
            }
        }
    }
}

void norm_forward(const Op &op, const ParamTensor &scale, const ParamTensor &shift,
                  const Tensor &in, Tensor &out) {
    out = Tensor(in.n, in.c, in.sp);
    const std::int64_t vox = in.spatial();
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < in.c; ++c) {
            const double *x = in.plane(n, c);
            double *y = out.plane(n, c);
            double mean = 0.0;
            for (std::int64_t i = 0; i < vox; ++i) mean += x[i];
            mean /= double(vox);
            double var = 0.0;
            for (std::int64_t i = 0; i < vox; ++i) var += (x[i] - mean) * (x[i] - mean);
            var /= double(vox);
            const double inv = 1.0 / std::sqrt(var + kNormEps);
            const double g = scale.v[c], b = shift.v[c];
            for (std::int64_t i = 0; i < vox; ++i) y[i] = g * (x[i] - mean) * inv + b;
        }
    (void)op;
}

void norm_backward(const Op &op, const ParamTensor &scale, const Tensor &in, const Tensor &dout,
                   Tensor &din, ParamTensor &dscale, ParamTensor &dshift) {
    const std::int64_t vox = in.spatial();
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < in.c; ++c) {
            const double *x = in.plane(n, c);
            const double *dy = dout.plane(n, c);
            double *dx = din.plane(n, c);
            double mean = 0.0;
            for (std::int64_t i = 0; i < vox; ++i) mean += x[i];
            mean /= double(vox);
            double var = 0.0;
            for (std::int64_t i = 0; i < vox; ++i) var += (x[i] - mean) * (x[i] - mean);
            var /= double(vox);
            const double inv = 1.0 / std::sqrt(var + kNormEps);
            const double g = scale.v[c];

            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::int64_t i = 0; i < vox; ++i) {
                const double xhat = (x[i] - mean) * inv;
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * xhat;
            }
            dshift.v[c] += sum_dy;
            dscale.v[c] += sum_dy_xhat;
            const double mean_dy = sum_dy / double(vox);
            const double mean_dy_xhat = sum_dy_xhat / double(vox);
            for (std::int64_t i = 0; i < vox; ++i) {
                const double xhat = (x[i] - mean) * inv;
                dx[i] += g * inv * (dy[i] - mean_dy - xhat * mean_dy_xhat);
            }
        }
    (void)op;
}

void softmax_forward(const Tensor &in, Tensor &out) {
    out = Tensor(in.n, in.c, in.sp);
    const std::int64_t vox = in.spatial();
    for (int n = 0; n < in.n; ++n)
        for (std::int64_t i = 0; i < vox; ++i) {
            double m = in.plane(n, 0)[i];
            for (int c = 1; c < in.c; ++c) m = std::max(m, in.plane(n, c)[i]);
            double sum = 0.0;
            for (int c = 0; c < in.c; ++c) {
                double e = std::exp(in.plane(n, c)[i] - m);
                out.plane(n, c)[i] = e;
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (int c = 0; c < in.c; ++c) out.plane(n, c)[i] *= inv;
        }
}

void softmax_backward(const Tensor &probs, const Tensor &dout, Tensor &din) {
    const std::int64_t vox = probs.spatial();
    for (int n = 0; n < probs.n; ++n)
        for (std::int64_t i = 0; i < vox; ++i) {
            double dot = 0.0;
            for (int c = 0; c < probs.c; ++c) dot += probs.plane(n, c)[i] * dout.plane(n, c)[i];
            for (int c = 0; c < probs.c; ++c)
                din.plane(n, c)[i] += probs.plane(n, c)[i] * (dout.plane(n, c)[i] - dot);
        }
}

const ParamTensor &fetch(const Parameters &params, const std::string &name) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end()) throw RuntimeError("network: missing parameter '" + name + "'");
    return it->second;
}

}  // namespace

Program lower(const NetworkSpec &spec) { return Lowering(spec).run(); }

Parameters init_parameters(const NetworkSpec &spec, std::uint64_t seed) {
    Program prog = lower(spec);
    Parameters params;
    params.seed = seed;
    Rng rng(seed);
    for (const auto &decl : prog.params) {
        ParamTensor t;
        t.shape = decl.shape;
        t.v.resize(std::size_t(t.size()));
        switch (decl.init) {
            case ParamInit::HeConv:
            case ParamInit::HeTransposed: {
                const double stddev = std::sqrt(2.0 / double(decl.fan_in));
                for (auto &w : t.v) w = rng.normal(0.0, stddev);
                break;
            }
            case ParamInit::Zero:
                break;  // already zero
            case ParamInit::One:
                std::fill(t.v.begin(), t.v.end(), 1.0);
                break;
        }
        params.tensors.emplace(decl.name, std::move(t));
    }
    return params;
}

Tensor forward(const Program &prog, const Parameters &params, const Tensor &input, Trace *trace) {
    if (prog.ops.empty() || input.c != prog.ops.front().in_ch)
        throw RuntimeError("network: input channel mismatch");
    for (int a = 0; a < 3; ++a)
        if (input.sp[a] % (1 << prog.pools[a]) != 0)
            throw RuntimeError(std::string("network: spatial axis ") + "xyz"[a] +
                               " not divisible by the pooling schedule");

    Trace local;
    Trace &tr = trace ? *trace : local;
    tr.slots.assign(std::size_t(prog.slot_count), Tensor{});
    tr.slots[std::size_t(prog.input_slot)] = input;

    for (const Op &op : prog.ops) {
        const Tensor &in = tr.slots[std::size_t(op.in0)];
        Tensor &out = tr.slots[std::size_t(op.out)];
        switch (op.kind) {
            case OpKind::Conv:
                conv_forward(op, fetch(params, op.weights), fetch(params, op.bias), in, out);
                break;
            case OpKind::ConvTranspose:
                convt_forward(op, fetch(params, op.weights), fetch(params, op.bias), in, out);
                break;
            case OpKind::InstanceNorm:
                norm_forward(op, fetch(params, op.weights), fetch(params, op.bias), in, out);
                break;
            case OpKind::LeakyReLU: {
                out = Tensor(in.n, in.c, in.sp);
                const double a = op.negative_slope;
                for (std::int64_t i = 0; i < in.size(); ++i) {
                    double x = in.data[std::size_t(i)];
                    out.data[std::size_t(i)] = x > 0 ? x : a * x;
                }
                break;
            }
            case OpKind::Add: {
                const Tensor &rhs = tr.slots[std::size_t(op.in1)];
                if (in.size() != rhs.size() || in.sp != rhs.sp)
                    throw RuntimeError("network: residual add shape mismatch");
                out = in;
                for (std::int64_t i = 0; i < out.size(); ++i)
                    out.data[std::size_t(i)] += rhs.data[std::size_t(i)];
                break;
            }
            case OpKind::Concat: {
                const Tensor &rhs = tr.slots[std::size_t(op.in1)];
                if (in.sp != rhs.sp || in.n != rhs.n)
                    throw RuntimeError("network: concat spatial mismatch");
                out = Tensor(in.n, in.c + rhs.c, in.sp);
                for (int n = 0; n < in.n; ++n) {
                    for (int c = 0; c < in.c; ++c)
                        std::copy(in.plane(n, c), in.plane(n, c) + in.spatial(),
                                  out.plane(n, c));
                    for (int c = 0; c < rhs.c; ++c)
                        std::copy(rhs.plane(n, c), rhs.plane(n, c) + rhs.spatial(),
                                  out.plane(n, in.c + c));
                }
                break;
            }
            case OpKind::Softmax:
                softmax_forward(in, out);
                break;
        }
    }
    return tr.slots[std::size_t(prog.output_slot)];
}

Tensor forward(const NetworkSpec &spec, const Parameters &params, const Tensor &input) {
    Program prog = lower(spec);
    return forward(prog, params, input);
}

Gradients backward(const Program &prog, const Parameters &params, const Trace &trace,
                   const Tensor &out_grad) {
    Gradients grads;
    for (const auto &decl : prog.params) {
        ParamTensor t;
        t.shape = decl.shape;
        t.v.assign(std::size_t(t.size()), 0.0);
        grads.tensors.emplace(decl.name, std::move(t));
    }

    std::vector<Tensor> gslot(trace.slots.size());
    auto grad_of = [&](int slot) -> Tensor & {
        Tensor &g = gslot[std::size_t(slot)];
        if (g.size() == 0 && trace.slots[std::size_t(slot)].size() != 0) {
            const Tensor &v = trace.slots[std::size_t(slot)];
            g = Tensor(v.n, v.c, v.sp);
        }
        return g;
    };
    grad_of(prog.output_slot) = out_grad;

    for (auto it = prog.ops.rbegin(); it != prog.ops.rend(); ++it) {
        const Op &op = *it;
        const Tensor &dout = gslot[std::size_t(op.out)];
        if (dout.size() == 0) continue;  // branch never contributed
        const Tensor &in = trace.slots[std::size_t(op.in0)];
        switch (op.kind) {
            case OpKind::Conv:
                conv_backward(op, fetch(params, op.weights), in, dout, grad_of(op.in0),
                              grads.tensors.at(op.weights), grads.tensors.at(op.bias));
                break;
            case OpKind::ConvTranspose:
                convt_backward(op, fetch(params, op.weights), in, dout, grad_of(op.in0),
                               grads.tensors.at(op.weights), grads.tensors.at(op.bias));
                break;
            case OpKind::InstanceNorm:
                norm_backward(op, fetch(params, op.weights), in, dout, grad_of(op.in0),
                              grads.tensors.at(op.weights), grads.tensors.at(op.bias));
                break;
            case OpKind::LeakyReLU: {
                Tensor &din = grad_of(op.in0);
                const double a = op.negative_slope;
                for (std::int64_t i = 0; i < in.size(); ++i)
                    din.data[std::size_t(i)] +=
                        dout.data[std::size_t(i)] * (in.data[std::size_t(i)] > 0 ? 1.0 : a);
                break;
            }
            case OpKind::Add: {
                Tensor &d0 = grad_of(op.in0);
                Tensor &d1 = grad_of(op.in1);
                for (std::int64_t i = 0; i < dout.size(); ++i) {
                    d0.data[std::size_t(i)] += dout.data[std::size_t(i)];
                    d1.data[std::size_t(i)] += dout.data[std::size_t(i)];
                }
                break;
            }
            case OpKind::Concat: {
                Tensor &d0 = grad_of(op.in0);
                Tensor &d1 = grad_of(op.in1);
                const Tensor &rhs = trace.slots[std::size_t(op.in1)];
                for (int n = 0; n < in.n; ++n) {
                    for (int c = 0; c < in.c; ++c) {
                        const double *src = dout.plane(n, c);
                        double *dst = d0.plane(n, c);
                        for (std::int64_t i = 0; i < in.spatial(); ++i) dst[i] += src[i];
                    }
                    for (int c = 0; c < rhs.c; ++c) {
                        const double *src = dout.plane(n, in.c + c);
                        double *dst = d1.plane(n, c);
                        for (std::int64_t i = 0; i < rhs.spatial(); ++i) dst[i] += src[i];
                    }
                }
                break;
            }
            case OpKind::Softmax: {
                const Tensor &probs = trace.slots[std::size_t(op.out)];
                softmax_backward(probs, dout, grad_of(op.in0));
                break;
            }
        }
    }
    grads.input = std::move(gslot[std::size_t(prog.input_slot)]);
    return grads;
}

}  // namespace octseg
