#pragma once

#include <vector>

#include "octseg/common.hpp"

namespace octseg {

// Dense NCXYZ tensor, double precision, x fastest:
// offset(n, c, x, y, z) = (((n*C + c)*SZ + z)*SY + y)*SX + x.
struct Tensor {
    int n = 0, c = 0;
    Dims3 sp{0, 0, 0};
    std::vector<double> data;

    Tensor() = default;
    Tensor(int n_, int c_, Dims3 sp_) : n(n_), c(c_), sp(sp_) {
        data.assign(std::size_t(std::int64_t(n) * c * voxel_count(sp)), 0.0);
    }

    std::int64_t spatial() const { return voxel_count(sp); }
    std::int64_t size() const { return std::int64_t(n) * c * spatial(); }

    double *plane(int ni, int ci) { return data.data() + (std::int64_t(ni) * c + ci) * spatial(); }
    const double *plane(int ni, int ci) const {
        return data.data() + (std::int64_t(ni) * c + ci) * spatial();
    }

    double &at(int ni, int ci, int x, int y, int z) {
        return data[(std::int64_t(ni) * c + ci) * spatial() + voxel_index(sp, x, y, z)];
    }
    double at(int ni, int ci, int x, int y, int z) const {
        return data[(std::int64_t(ni) * c + ci) * spatial() + voxel_index(sp, x, y, z)];
    }
};

}  // namespace octseg
