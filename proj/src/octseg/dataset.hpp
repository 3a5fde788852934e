#pragma once

#include <optional>
#include <string>
#include <vector>

#include "octseg/resample.hpp"
#include "octseg/volume.hpp"

namespace octseg {

struct IndexEntry {
    std::string volume;  // path, relative entries resolve against the index file
    std::string mask;    // empty when absent
    std::string vendor;
    std::string split;   // "train" | "test"
};

struct DatasetIndex {
    std::vector<IndexEntry> entries;

    std::vector<IndexEntry> with_split(const std::string &split) const;
    std::vector<IndexEntry> with_vendor(const std::string &vendor) const;
};

// JSON file: {"entries": [{"volume":..., "mask":..., "vendor":..., "split":...}]}.
// Relative paths are rewritten to be relative to the loader's cwd by joining
// with the index file's directory. Validates: unique volume paths, train
// entries carry masks, split is train/test.
DatasetIndex load_index(const std::string &path);
void save_index(const DatasetIndex &index, const std::string &path);

struct Fingerprint {
    std::vector<Dims3> shapes;
    std::vector<Spacing3> spacings;
    IntensityStats intensity;
    int num_volumes = 0;
    std::array<double, kNumClasses> class_presence{0, 0, 0, 0};
};

// Dataset fingerprint over the train split: per-volume shapes and spacings in
// index order, plus intensity statistics pooled over foreground voxels
// (mask != 0; the whole volume when an entry has no mask). Pooled values are
// sorted before reduction, so the statistics are invariant under entry
// reordering.
Fingerprint extract_fingerprint(const DatasetIndex &index);

Fingerprint load_fingerprint(const std::string &path);
void save_fingerprint(const Fingerprint &f, const std::string &path);

}  // namespace octseg
