#pragma once

#include <string>
#include <vector>

#include "octseg/augment.hpp"
#include "octseg/netexec.hpp"
#include "octseg/planner.hpp"

namespace octseg {

// Training recipe. learning_rate/max_epochs/loss/optimizer follow the fixed
// self-configuring defaults; the polynomial schedule is
// lr_t = lr0 * (1 - epoch/max_epochs)^0.9.
struct TrainConfig {
    double learning_rate = 0.01;
    int max_epochs = 1000;
    int batches_per_epoch = 250;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double poly_exponent = 0.9;
    double foreground_fraction = 1.0 / 3.0;  // patches forced to contain foreground
    std::uint64_t seed = 0;
};

struct AdamState {
    std::map<std::string, ParamTensor> m, v;
    std::int64_t step = 0;
};

struct Checkpoint {
    NetworkSpec spec;
    Parameters params;
    PlanConfig plan;
    AdamState optimizer;
    int epoch = 0;
    std::vector<double> loss_history;  // one entry per completed epoch
};

// A volume preprocessed for training: resampled to the plan's target spacing,
// normalized, and padded (symmetric, zeros) up to the patch size.
struct TrainSample {
    Dims3 dims{0, 0, 0};
    std::vector<float> volume;
    std::vector<std::uint8_t> mask;
    std::vector<std::int64_t> foreground;  // voxel indices with mask != 0
};

TrainSample make_train_sample(const Volume &v, const LabelMask &m, const PlanConfig &plan);

double poly_lr(double base, int epoch, int max_epochs, double exponent);

void adam_step(Parameters &params, const Gradients &grads, AdamState &state,
               const TrainConfig &cfg, double lr);

// Foreground-biased patch sampling, on-the-fly augmentation, Adam with the
// polynomial schedule. Deterministic given (seed, samples, configs). Aborts
// with epoch/batch/lr diagnostics if the loss goes non-finite.
Checkpoint train(const NetworkSpec &spec, const Parameters &initial,
                 const std::vector<TrainSample> &samples, const PlanConfig &plan,
                 const TrainConfig &cfg, const AugmentationConfig &aug);

// Checkpoint directory: plan.json, spec.json, manifest.json, weights.bin,
// optimizer.bin, train_log.csv (epoch, lr, loss). Blobs are little-endian f64.
void save_checkpoint(const Checkpoint &ck, const std::string &dir, const TrainConfig &cfg);
Checkpoint load_checkpoint(const std::string &dir);

}  // namespace octseg
