#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "octseg/common.hpp"

namespace octseg {

// Percentile with linear interpolation between order statistics.
// values must be sorted ascending.
inline double percentile_sorted(const std::vector<double> &values, double q) {
    if (values.empty()) throw ConfigError("percentile: empty sample");
    if (values.size() == 1) return values[0];
    double rank = q / 100.0 * double(values.size() - 1);
    std::size_t lo = std::size_t(rank);
    if (lo >= values.size() - 1) return values.back();
    double frac = rank - double(lo);
    return values[lo] + (values[lo + 1] - values[lo]) * frac;
}

inline double mean_of(const std::vector<double> &values) {
    double s = 0.0;
    for (double v : values) s += v;
    return s / double(values.size());
}

// population standard deviation
inline double stddev_of(const std::vector<double> &values, double mean) {
    double s = 0.0;
    for (double v : values) s += (v - mean) * (v - mean);
    return std::sqrt(s / double(values.size()));
}

}  // namespace octseg
