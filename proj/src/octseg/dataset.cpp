#include "octseg/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "octseg/metaimage.hpp"
#include "octseg/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace octseg {

std::vector<IndexEntry> DatasetIndex::with_split(const std::string &split) const {
    std::vector<IndexEntry> out;
    for (const auto &e : entries)
        if (e.split == split) out.push_back(e);
    return out;
}

std::vector<IndexEntry> DatasetIndex::with_vendor(const std::string &vendor) const {
    std::vector<IndexEntry> out;
    for (const auto &e : entries)
        if (e.vendor == vendor) out.push_back(e);
    return out;
}

DatasetIndex load_index(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("index: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        throw RuntimeError("index: malformed JSON in '" + path + "': " + e.what());
    }
    if (!j.contains("entries") || !j["entries"].is_array())
        throw RuntimeError("index: missing 'entries' array in '" + path + "'");

    fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string &p) {
        if (p.empty() || fs::path(p).is_absolute()) return p;
        return (base / p).string();
    };

    DatasetIndex index;
    std::set<std::string> seen;
    for (const auto &je : j["entries"]) {
        IndexEntry e;
        e.volume = resolve(je.at("volume").get<std::string>());
        if (je.contains("mask") && !je["mask"].is_null())
            e.mask = resolve(je["mask"].get<std::string>());
        e.vendor = je.value("vendor", "");
        e.split = je.value("split", "train");
        if (e.split != "train" && e.split != "test")
            throw RuntimeError("index: bad split '" + e.split + "' in '" + path + "'");
        if (!seen.insert(e.volume).second)
            throw RuntimeError("index: duplicate volume path '" + e.volume + "'");
        if (e.split == "train" && e.mask.empty())
            throw RuntimeError("index: train entry without mask: '" + e.volume + "'");
        index.entries.push_back(std::move(e));
    }
    return index;
}

void save_index(const DatasetIndex &index, const std::string &path) {
    json j;
    j["entries"] = json::array();
    for (const auto &e : index.entries) {
        json je;
        je["volume"] = e.volume;
        if (!e.mask.empty()) je["mask"] = e.mask;
        je["vendor"] = e.vendor;
        je["split"] = e.split;
        j["entries"].push_back(je);
    }
    std::ofstream out(path);
    if (!out) throw RuntimeError("index: cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

Fingerprint extract_fingerprint(const DatasetIndex &index) {
    auto train = index.with_split("train");
    if (train.empty()) throw ConfigError("fingerprint: no train entries in index");

    Fingerprint f;
    std::vector<double> pooled;
    std::array<int, kNumClasses> volumes_with_class{0, 0, 0, 0};
    for (const auto &e : train) {
        Volume v = read_metaimage(e.volume);
        f.shapes.push_back(v.dims);
        f.spacings.push_back(v.spacing);
        if (!e.mask.empty()) {
            LabelMask m = read_mask(e.mask);
            if (m.dims != v.dims)
                throw RuntimeError("fingerprint: mask dims differ from volume for '" + e.volume +
                                   "'");
            bool present[kNumClasses] = {false, false, false, false};
            for (std::size_t i = 0; i < m.labels.size(); ++i) {
                if (m.labels[i] != 0) pooled.push_back(double(v.voxels[i]));
                present[m.labels[i]] = true;
            }
            for (int c = 0; c < kNumClasses; ++c)
                if (present[c]) ++volumes_with_class[c];
        } else {
            for (float x : v.voxels) pooled.push_back(double(x));
            ++volumes_with_class[0];
        }
    }
    f.num_volumes = int(train.size());
    for (int c = 0; c < kNumClasses; ++c)
        f.class_presence[c] = double(volumes_with_class[c]) / double(f.num_volumes);

    if (pooled.empty())
        throw RuntimeError("fingerprint: no foreground voxels in any train mask");
    std::sort(pooled.begin(), pooled.end());
    f.intensity.mean = mean_of(pooled);
    f.intensity.stddev = stddev_of(pooled, f.intensity.mean);
    f.intensity.p005 = percentile_sorted(pooled, 0.5);
    f.intensity.p995 = percentile_sorted(pooled, 99.5);
    return f;
}

Fingerprint load_fingerprint(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("fingerprint: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        throw RuntimeError("fingerprint: malformed JSON in '" + path + "': " + e.what());
    }
    Fingerprint f;
    try {
        for (const auto &s : j.at("shapes")) f.shapes.push_back({s.at(0), s.at(1), s.at(2)});
        for (const auto &s : j.at("spacings")) f.spacings.push_back({s.at(0), s.at(1), s.at(2)});
        f.num_volumes = j.at("num_volumes").get<int>();
        f.intensity.mean = j.at("intensity").at("mean").get<double>();
        f.intensity.stddev = j.at("intensity").at("stddev").get<double>();
        f.intensity.p005 = j.at("intensity").at("p005").get<double>();
        f.intensity.p995 = j.at("intensity").at("p995").get<double>();
        auto cp = j.at("class_presence");
        for (int c = 0; c < kNumClasses; ++c) f.class_presence[c] = cp.at(c).get<double>();
    } catch (const json::exception &e) {
        throw RuntimeError("fingerprint: bad field in '" + path + "': " + e.what());
    }
    return f;
}

void save_fingerprint(const Fingerprint &f, const std::string &path) {
    json j;
    j["num_volumes"] = f.num_volumes;
    j["shapes"] = json::array();
    for (const auto &s : f.shapes) j["shapes"].push_back({s[0], s[1], s[2]});
    j["spacings"] = json::array();
    for (const auto &s : f.spacings) j["spacings"].push_back({s[0], s[1], s[2]});
    j["intensity"] = {{"mean", f.intensity.mean},
                      {"stddev", f.intensity.stddev},
                      {"p005", f.intensity.p005},
                      {"p995", f.intensity.p995}};
    j["class_presence"] = f.class_presence;
    std::ofstream out(path);
    if (!out) throw RuntimeError("fingerprint: cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

}  // namespace octseg
