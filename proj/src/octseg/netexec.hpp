#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "octseg/netspec.hpp"
#include "octseg/tensor.hpp"

namespace octseg {

struct ParamTensor {
    std::vector<int> shape;
    std::vector<double> v;

    std::int64_t size() const {
        std::int64_t s = 1;
        for (int d : shape) s *= d;
        return s;
    }
};

// Flat named weight store. Iteration order (std::map) is deterministic; the
// *initialisation* order follows the lowered program so identical seeds give
// bit-identical parameters.
struct Parameters {
    std::map<std::string, ParamTensor> tensors;
    std::uint64_t seed = 0;
};

enum class OpKind { Conv, ConvTranspose, InstanceNorm, LeakyReLU, Add, Concat, Softmax };

enum class ParamInit { HeConv, HeTransposed, Zero, One };

struct ParamDecl {
    std::string name;
    std::vector<int> shape;
    ParamInit init;
    int fan_in = 1;
};

struct Op {
    OpKind kind{};
    int in0 = -1, in1 = -1, out = -1;  // value slots
    int in_ch = 0, out_ch = 0;
    Dims3 kernel{1, 1, 1}, stride{1, 1, 1}, dilation{1, 1, 1};
    std::string weights, bias;  // conv: w/b, instance norm: scale/shift
    double negative_slope = 0.01;
};

// NetworkSpec flattened to an executable op list (slots form a DAG; encoder
// outputs feed both the next stage and the matching decoder concat).
struct Program {
    std::vector<Op> ops;
    int slot_count = 1;
    int input_slot = 0;
    int output_slot = 0;
    Dims3 pools{0, 0, 0};
    std::vector<ParamDecl> params;
};

Program lower(const NetworkSpec &spec);

// He fan-in-scaled normal for conv weights, identity for norms, zero biases.
Parameters init_parameters(const NetworkSpec &spec, std::uint64_t seed);

struct Trace {
    std::vector<Tensor> slots;
};

// Input batch x 1 x spatial; output batch x num_classes x spatial, channel
// softmax applied. Spatial dims must be divisible by the pooling schedule.
// Pass a Trace to keep activations for backward.
Tensor forward(const Program &prog, const Parameters &params, const Tensor &input,
               Trace *trace = nullptr);
Tensor forward(const NetworkSpec &spec, const Parameters &params, const Tensor &input);

struct Gradients {
    std::map<std::string, ParamTensor> tensors;
    Tensor input;  // dLoss/dInput
};

// out_grad is dLoss/d(probabilities). Returns parameter gradients.
Gradients backward(const Program &prog, const Parameters &params, const Trace &trace,
                   const Tensor &out_grad);

}  // namespace octseg
