#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace octseg {

// Axis convention used throughout: index 0 = x (B-scan width), index 1 = y
// (A-scan depth / image height), index 2 = z (B-scan index). Voxel storage is
// x-fastest, matching the on-disk MetaImage payload order.
using Dims3 = std::array<int, 3>;
using Spacing3 = std::array<double, 3>;

inline std::int64_t voxel_count(const Dims3 &d) {
    return std::int64_t(d[0]) * d[1] * d[2];
}

inline std::int64_t voxel_index(const Dims3 &d, int x, int y, int z) {
    return (std::int64_t(z) * d[1] + y) * d[0] + x;
}

// ConfigError -> exit code 2 (usage, bad config, missing upstream artifact),
// RuntimeError -> exit code 3 (I/O failures, malformed payloads, non-finite loss).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RuntimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace octseg
