#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "octseg/planner.hpp"

namespace octseg {

// conv -> instance norm -> LeakyReLU(0.01)
struct ConvBlockSpec {
    int in_channels = 0;
    int out_channels = 0;
    Dims3 kernel{3, 3, 3};
    Dims3 stride{1, 1, 1};
    Dims3 dilation{1, 1, 1};
    bool instance_norm = true;
    double negative_slope = 0.01;
};

struct PlainBlockSpec {
    ConvBlockSpec conv1, conv2;
};

// out = body2(body1(x)) + skip(x); the addition comes last so a zeroed body
// reduces the block to its skip path exactly. skip is the identity when
// channels and stride match, otherwise a strided 1x1x1 projection conv.
struct ResidualBlockSpec {
    ConvBlockSpec body1, body2;
    bool projection = false;
};

using StageBlock = std::variant<PlainBlockSpec, ResidualBlockSpec>;

// Parallel dilated 3x3x3 branches over the stem features, channel-concatenated
// and fused back to base width by a 1x1x1 conv. Padding equals the dilation,
// so every branch preserves the spatial shape.
struct ASPPSpec {
    std::vector<int> rates;
    int in_channels = 0;
    int branch_channels = 0;
    int fuse_channels = 0;
};

// kernel = stride: exact shape inversion of the matching strided conv
struct TransposedConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    Dims3 stride{2, 2, 2};
};

struct DecoderStageSpec {
    TransposedConvSpec upsample;
    StageBlock block;
};

// Declarative network graph. Stage count = max(pools) + 1; encoder stages sit
// at depths 0..S-2, the bottleneck at depth S-1, decoder stages mirror depths
// S-2..0 and concatenate the same-depth encoder output.
struct NetworkSpec {
    Dims3 pools{0, 0, 0};
    int num_classes = 4;
    int base_features = 0;
    int max_features = 0;
    ConvBlockSpec stem;
    std::optional<ASPPSpec> aspp;
    std::vector<StageBlock> encoder;
    StageBlock bottleneck = PlainBlockSpec{};
    std::vector<DecoderStageSpec> decoder;
    int head_in = 0;  // 1x1x1 classification conv head_in -> num_classes
};

// Baseline: plain conv blocks, strided-conv downsampling, transposed-conv
// upsampling.
NetworkSpec build_unet(const PlanConfig &plan);

// Variant: every encoder/bottleneck/decoder block residual-wrapped, plus an
// ASPP stem between the first convolution and encoder stage 0. Dilation rates
// default to {1,2,4,8} and are scaled down when a dilated kernel would exceed
// the patch extent.
NetworkSpec build_raspp(const PlanConfig &plan, std::vector<int> rates = {1, 2, 4, 8});

std::int64_t param_count(const ConvBlockSpec &b);
std::int64_t param_count(const NetworkSpec &spec);

int residual_block_count(const NetworkSpec &spec);
int stage_block_count(const NetworkSpec &spec);

void save_spec(const NetworkSpec &spec, const std::string &path);
NetworkSpec load_spec(const std::string &path);

}  // namespace octseg
