#pragma once

#include "octseg/volume.hpp"

namespace octseg {

struct IntensityStats {
    double mean = 0.0;
    double stddev = 0.0;
    double p005 = 0.0;  // 0.5th percentile
    double p995 = 0.0;  // 99.5th percentile
};

// Resamples to the target spacing. New dims = round(dims * spacing / target),
// each >= 1. Volumes interpolate trilinearly, masks nearest-neighbour (never
// introduces labels absent from the input). Equal spacing returns a verbatim
// copy.
Volume resample(const Volume &v, Spacing3 target_spacing);
LabelMask resample(const LabelMask &m, Spacing3 target_spacing);

// Clip to [p005, p995], then z-score with the dataset-level stats. stddev 0
// degrades to centering only.
Volume normalize(const Volume &v, const IntensityStats &stats);

}  // namespace octseg
