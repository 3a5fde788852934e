#include "octseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "octseg/loss.hpp"
#include "octseg/resample.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace octseg {

TrainSample make_train_sample(const Volume &v, const LabelMask &m, const PlanConfig &plan) {
    if (v.dims != m.dims) throw RuntimeError("train: volume/mask dims mismatch");
    Volume rv = normalize(resample(v, plan.target_spacing), plan.normalization);
    LabelMask rm = resample(m, plan.target_spacing);

    // symmetric zero padding up to the patch size
    Dims3 dims;
    Dims3 lo;
    for (int a = 0; a < 3; ++a) {
        dims[a] = std::max(rv.dims[a], plan.patch_size[a]);
        lo[a] = (dims[a] - rv.dims[a]) / 2;
    }
    TrainSample s;
    s.dims = dims;
    s.volume.assign(std::size_t(voxel_count(dims)), 0.0f);
    s.mask.assign(std::size_t(voxel_count(dims)), 0);
    for (int z = 0; z < rv.dims[2]; ++z)
        for (int y = 0; y < rv.dims[1]; ++y)
            for (int x = 0; x < rv.dims[0]; ++x) {
                std::int64_t dst = voxel_index(dims, x + lo[0], y + lo[1], z + lo[2]);
                s.volume[std::size_t(dst)] = rv.at(x, y, z);
                s.mask[std::size_t(dst)] = rm.at(x, y, z);
            }
    for (std::int64_t i = 0; i < voxel_count(dims); ++i)
        if (s.mask[std::size_t(i)] != 0) s.foreground.push_back(i);
    return s;
}

double poly_lr(double base, int epoch, int max_epochs, double exponent) {
    double frac = 1.0 - double(epoch) / double(max_epochs);
    return base * std::pow(std::max(frac, 0.0), exponent);
}

void adam_step(Parameters &params, const Gradients &grads, AdamState &state,
               const TrainConfig &cfg, double lr) {
    if (state.m.empty()) {
        for (const auto &[name, t] : params.tensors) {
            ParamTensor zero;
            zero.shape = t.shape;
            zero.v.assign(t.v.size(), 0.0);
            state.m.emplace(name, zero);
            state.v.emplace(name, zero);
        }
    }
    ++state.step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, double(state.step));
    const double corr2 = 1.0 - std::pow(b2, double(state.step));
    for (auto &[name, t] : params.tensors) {
        const auto &g = grads.tensors.at(name).v;
        auto &m = state.m.at(name).v;
        auto &v = state.v.at(name).v;
        for (std::size_t i = 0; i < t.v.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / corr1;
            const double vhat = v[i] / corr2;
            t.v[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

namespace {

Dims3 clamp_origin(Dims3 center, const Dims3 &patch, const Dims3 &dims) {
    Dims3 o;
    for (int a = 0; a < 3; ++a)
        o[a] = std::clamp(center[a] - patch[a] / 2, 0, dims[a] - patch[a]);
    return o;
}

Patch extract_patch(const TrainSample &s, const Dims3 &origin, const Dims3 &patch) {
    Patch p;
    p.dims = patch;
    p.volume.resize(std::size_t(voxel_count(patch)));
    p.mask.resize(std::size_t(voxel_count(patch)));
    std::size_t o = 0;
    for (int z = 0; z < patch[2]; ++z)
        for (int y = 0; y < patch[1]; ++y)
            for (int x = 0; x < patch[0]; ++x, ++o) {
                std::int64_t src =
                    voxel_index(s.dims, x + origin[0], y + origin[1], z + origin[2]);
                p.volume[o] = s.volume[std::size_t(src)];
                p.mask[o] = s.mask[std::size_t(src)];
            }
    return p;
}

}  // namespace

Checkpoint train(const NetworkSpec &spec, const Parameters &initial,
                 const std::vector<TrainSample> &samples, const PlanConfig &plan,
                 const TrainConfig &cfg, const AugmentationConfig &aug) {
    if (samples.empty()) throw ConfigError("train: no training samples");
    const Dims3 patch = plan.patch_size;
    const int batch = plan.batch_size;
    const int forced_fg = int(std::ceil(batch * cfg.foreground_fraction));

    Checkpoint ck;
    ck.spec = spec;
    ck.params = initial;
    ck.plan = plan;

    const Program prog = lower(spec);
    Rng rng(cfg.seed);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr = poly_lr(cfg.learning_rate, epoch, cfg.max_epochs, cfg.poly_exponent);
        double epoch_loss = 0.0;
        for (int b = 0; b < cfg.batches_per_epoch; ++b) {
            Tensor input(batch, 1, patch);
            LabelBatch target;
            target.n = batch;
            target.sp = patch;
            target.labels.resize(std::size_t(batch) * std::size_t(voxel_count(patch)));

            for (int i = 0; i < batch; ++i) {
                const TrainSample &s = samples[std::size_t(rng.below(std::int64_t(samples.size())))];
                Dims3 origin;
                if (i < forced_fg && !s.foreground.empty()) {
                    std::int64_t fg =
                        s.foreground[std::size_t(rng.below(std::int64_t(s.foreground.size())))];
                    Dims3 center{int(fg % s.dims[0]), int((fg / s.dims[0]) % s.dims[1]),
                                 int(fg / (std::int64_t(s.dims[0]) * s.dims[1]))};
                    origin = clamp_origin(center, patch, s.dims);
                } else {
                    for (int a = 0; a < 3; ++a)
                        origin[a] = int(rng.below(s.dims[a] - patch[a] + 1));
                }
                Patch p = extract_patch(s, origin, patch);
                augment(p, aug, rng);
                double *dst = input.plane(i, 0);
                for (std::int64_t k = 0; k < voxel_count(patch); ++k)
                    dst[k] = double(p.volume[std::size_t(k)]);
                std::copy(p.mask.begin(), p.mask.end(),
                          target.labels.begin() + std::int64_t(i) * voxel_count(patch));
            }

            Trace trace;
            Tensor probs = forward(prog, ck.params, input, &trace);
            Tensor grad_probs;
            LossResult loss = dice_ce_loss(probs, target, &grad_probs);
            if (!std::isfinite(loss.total))
                throw RuntimeError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(b) + ", lr " + std::to_string(lr));
            Gradients grads = backward(prog, ck.params, trace, grad_probs);
            adam_step(ck.params, grads, ck.optimizer, cfg, lr);
            epoch_loss += loss.total;
        }
        ck.loss_history.push_back(epoch_loss / std::max(1, cfg.batches_per_epoch));
        ck.epoch = epoch + 1;
    }
    return ck;
}

// ---- checkpoint I/O ----------------------------------------------------------

namespace {

void write_blob(const std::string &path, const std::map<std::string, ParamTensor> &tensors,
                json &entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("checkpoint: cannot write '" + path + "'");
    std::int64_t offset = 0;
    for (const auto &[name, t] : tensors) {
        entries.push_back(
            {{"name", name}, {"shape", t.shape}, {"dtype", "f64"}, {"offset", offset}});
        out.write(reinterpret_cast<const char *>(t.v.data()),
                  std::streamsize(t.v.size() * sizeof(double)));
        offset += std::int64_t(t.v.size() * sizeof(double));
    }
    if (!out) throw RuntimeError("checkpoint: write failed for '" + path + "'");
}

std::map<std::string, ParamTensor> read_blob(const std::string &path, const json &entries) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("checkpoint: cannot open '" + path + "'");
    std::map<std::string, ParamTensor> tensors;
    for (const auto &e : entries) {
        ParamTensor t;
        t.shape = e.at("shape").get<std::vector<int>>();
        t.v.resize(std::size_t(t.size()));
        in.seekg(e.at("offset").get<std::int64_t>());
        in.read(reinterpret_cast<char *>(t.v.data()),
                std::streamsize(t.v.size() * sizeof(double)));
        if (!in) throw RuntimeError("checkpoint: truncated blob '" + path + "'");
        tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
    return tensors;
}

}  // namespace

void save_checkpoint(const Checkpoint &ck, const std::string &dir, const TrainConfig &cfg) {
    fs::create_directories(dir);
    save_plan(ck.plan, (fs::path(dir) / "plan.json").string());
    save_spec(ck.spec, (fs::path(dir) / "spec.json").string());

    json manifest;
    manifest["seed"] = ck.params.seed;
    manifest["epoch"] = ck.epoch;
    manifest["loss_history"] = ck.loss_history;
    manifest["adam_step"] = ck.optimizer.step;
    manifest["tensors"] = json::array();
    write_blob((fs::path(dir) / "weights.bin").string(), ck.params.tensors,
               manifest["tensors"]);
    manifest["optimizer_m"] = json::array();
    manifest["optimizer_v"] = json::array();
    if (!ck.optimizer.m.empty()) {
        write_blob((fs::path(dir) / "optimizer_m.bin").string(), ck.optimizer.m,
                   manifest["optimizer_m"]);
        write_blob((fs::path(dir) / "optimizer_v.bin").string(), ck.optimizer.v,
                   manifest["optimizer_v"]);
    }
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw RuntimeError("checkpoint: cannot write manifest in '" + dir + "'");
    mf << manifest.dump(2) << "\n";

    std::ofstream log(fs::path(dir) / "train_log.csv");
    log << "epoch,lr,loss\n";
    char buf[64];
    for (std::size_t e = 0; e < ck.loss_history.size(); ++e) {
        double lr = poly_lr(cfg.learning_rate, int(e), cfg.max_epochs, cfg.poly_exponent);
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e, lr, ck.loss_history[e]);
        log << buf;
    }
}

Checkpoint load_checkpoint(const std::string &dir) {
    fs::path base(dir);
    if (!fs::exists(base / "manifest.json"))
        throw ConfigError("checkpoint: missing manifest '" + (base / "manifest.json").string() +
                          "'");
    Checkpoint ck;
    ck.plan = load_plan((base / "plan.json").string());
    ck.spec = load_spec((base / "spec.json").string());
    std::ifstream mf(base / "manifest.json");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception &e) {
        throw RuntimeError("checkpoint: malformed manifest: " + std::string(e.what()));
    }
    ck.params.seed = manifest.value("seed", 0ull);
    ck.epoch = manifest.value("epoch", 0);
    ck.loss_history = manifest.value("loss_history", std::vector<double>{});
    ck.optimizer.step = manifest.value("adam_step", std::int64_t(0));
    ck.params.tensors = read_blob((base / "weights.bin").string(), manifest.at("tensors"));
    if (!manifest["optimizer_m"].empty()) {
        ck.optimizer.m =
            read_blob((base / "optimizer_m.bin").string(), manifest["optimizer_m"]);
        ck.optimizer.v =
            read_blob((base / "optimizer_v.bin").string(), manifest["optimizer_v"]);
    }
    return ck;
}

}  // namespace octseg
