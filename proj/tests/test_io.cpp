#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "octseg/dataset.hpp"
#include "octseg/metaimage.hpp"
#include "octseg/phantom.hpp"
#include "octseg/resample.hpp"
#include "octseg/rng.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

using namespace octseg;

TEST_CASE("metaimage: direct decode of enumerated bytes") {
    testutil::TempDir tmp("mhd_decode");
    testutil::spit(tmp.str("v.mhd"),
                   "NDims = 3\n"
                   "DimSize = 2 2 2\n"
                   "ElementSpacing = 1 1 1\n"
                   "ElementType = MET_UCHAR\n"
                   "ElementDataFile = v.raw\n");
    testutil::spit(tmp.str("v.raw"), std::string("\x00\x01\x02\x03\x04\x05\x06\x07", 8));

    Volume v = read_metaimage(tmp.str("v.mhd"));
    CHECK(v.dims == Dims3{2, 2, 2});
    CHECK(v.at(0, 0, 0) == 0.0f);
    CHECK(v.at(1, 1, 1) == 7.0f);
    CHECK(v.at(1, 0, 0) == 1.0f);  // x fastest
    CHECK(v.at(0, 1, 0) == 2.0f);
    CHECK(v.at(0, 0, 1) == 4.0f);
}

TEST_CASE("metaimage: single voxel write") {
    testutil::TempDir tmp("mhd_single");
    Volume v = make_volume({1, 1, 1});
    v.element_type = ElementType::U8;
    v.voxels[0] = 42.0f;
    write_metaimage(v, tmp.str("v.mhd"));
    std::string raw = testutil::slurp(tmp.str("v.raw"));
    REQUIRE(raw.size() == 1);
    CHECK(static_cast<unsigned char>(raw[0]) == 42);
}

TEST_CASE("metaimage: roundtrip is bit exact per element type") {
    testutil::TempDir tmp("mhd_rt");
    Rng rng(7);
    for (ElementType t :
         {ElementType::U8, ElementType::I16, ElementType::U16, ElementType::F32}) {
        Dims3 dims{int(1 + rng.below(6)), int(1 + rng.below(6)), int(1 + rng.below(6))};
        Volume v = make_volume(dims, {0.5, 0.25, 1.0});
        v.element_type = t;
        v.origin = {1.0, -2.0, 0.25};
        for (auto &x : v.voxels) {
            switch (t) {
                case ElementType::U8: x = float(rng.below(256)); break;
                case ElementType::I16: x = float(rng.below(65536) - 32768); break;
                case ElementType::U16: x = float(rng.below(65536)); break;
                case ElementType::F32: x = float(rng.normal()); break;
            }
        }
        write_metaimage(v, tmp.str("rt.mhd"));
        Volume r = read_metaimage(tmp.str("rt.mhd"));
        CHECK(r.dims == v.dims);
        CHECK(r.spacing == v.spacing);
        CHECK(r.origin == v.origin);
        CHECK(r.element_type == t);
        CHECK(r.voxels == v.voxels);
    }
}

TEST_CASE("metaimage: mask roundtrip equals input voxel for voxel") {
    testutil::TempDir tmp("mhd_mask");
    Rng rng(11);
    LabelMask m = make_mask({5, 4, 3}, {0.5, 0.25, 1.0});
    for (auto &l : m.labels) l = std::uint8_t(rng.below(4));
    write_mask(m, tmp.str("m.mhd"));
    LabelMask r = read_mask(tmp.str("m.mhd"));
    CHECK(r.labels == m.labels);
    CHECK(r.spacing == m.spacing);
}

TEST_CASE("metaimage: spacing preserved exactly") {
    testutil::TempDir tmp("mhd_sp");
    Volume v = make_volume({2, 2, 2}, {0.5, 0.25, 1.0});
    write_metaimage(v, tmp.str("v.mhd"));
    Volume r = read_metaimage(tmp.str("v.mhd"));
    CHECK(r.spacing[0] == 0.5);
    CHECK(r.spacing[1] == 0.25);
    CHECK(r.spacing[2] == 1.0);
}

TEST_CASE("metaimage: missing header key is named") {
    testutil::TempDir tmp("mhd_err");
    testutil::spit(tmp.str("bad.mhd"),
                   "NDims = 3\n"
                   "ElementSpacing = 1 1 1\n"
                   "ElementType = MET_UCHAR\n"
                   "ElementDataFile = bad.raw\n");
    testutil::spit(tmp.str("bad.raw"), "");
    CHECK_THROWS_WITH_AS(read_metaimage(tmp.str("bad.mhd")),
                         doctest::Contains("DimSize"), RuntimeError);
}

TEST_CASE("metaimage: truncated payload is rejected") {
    testutil::TempDir tmp("mhd_trunc");
    testutil::spit(tmp.str("t.mhd"),
                   "NDims = 3\n"
                   "DimSize = 2 2 2\n"
                   "ElementSpacing = 1 1 1\n"
                   "ElementType = MET_USHORT\n"
                   "ElementDataFile = t.raw\n");
    testutil::spit(tmp.str("t.raw"), std::string(7, 'x'));  // expected 16 bytes
    CHECK_THROWS_WITH_AS(read_metaimage(tmp.str("t.mhd")), doctest::Contains("mismatch"),
                         RuntimeError);
}

TEST_CASE("metaimage: LOCAL payload") {
    testutil::TempDir tmp("mhd_local");
    std::string header =
        "NDims = 3\nDimSize = 2 1 1\nElementSpacing = 1 1 1\n"
        "ElementType = MET_UCHAR\nElementDataFile = LOCAL\n";
    testutil::spit(tmp.str("l.mhd"), header + std::string("\x05\x09", 2));
    Volume v = read_metaimage(tmp.str("l.mhd"));
    CHECK(v.at(0, 0, 0) == 5.0f);
    CHECK(v.at(1, 0, 0) == 9.0f);
}

TEST_CASE("phantom: deterministic in (seed, profile)") {
    auto a = generate_phantom(123, "Tiny");
    auto b = generate_phantom(123, "Tiny");
    CHECK(a.volume.voxels == b.volume.voxels);
    CHECK(a.mask.labels == b.mask.labels);
    auto c = generate_phantom(124, "Tiny");
    CHECK(a.volume.voxels != c.volume.voxels);
}

TEST_CASE("phantom: profile geometry") {
    auto t = generate_phantom(1, "Tiny");
    CHECK(t.volume.dims[0] <= 32);
    CHECK(t.volume.dims[1] <= 32);
    CHECK(t.volume.dims[2] <= 16);
    CHECK(t.volume.dims == t.mask.dims);
    CHECK(t.volume.meta.at("vendor") == "Phantom");

    CHECK(phantom_profile_dims("Cirrus") == Dims3{512, 1024, 128});
    CHECK(phantom_profile_dims("Spectralis") == Dims3{512, 496, 49});
    CHECK(phantom_profile_dims("Topcon") == Dims3{512, 885, 128});
    CHECK_THROWS_AS(generate_phantom(1, "Unknown"), ConfigError);
}

TEST_CASE("phantom: Spectralis header roundtrips with paper geometry") {
    testutil::TempDir tmp("mhd_spectralis");
    auto p = generate_phantom(5, "Spectralis");
    CHECK(p.volume.dims == Dims3{512, 496, 49});
    write_metaimage(p.volume, tmp.str("s.mhd"));
    Volume r = read_metaimage(tmp.str("s.mhd"));
    CHECK(r.dims == Dims3{512, 496, 49});
}

TEST_CASE("resample: identity when target equals source spacing") {
    auto p = generate_phantom(3, "Tiny");
    Volume r = resample(p.volume, p.volume.spacing);
    CHECK(r.dims == p.volume.dims);
    CHECK(r.voxels == p.volume.voxels);
    LabelMask m = resample(p.mask, p.mask.spacing);
    CHECK(m.labels == p.mask.labels);
}

TEST_CASE("resample: constant field stays constant, dims follow spacing ratio") {
    Volume v = make_volume({2, 2, 2}, {1.0, 1.0, 1.0}, 7.0f);
    Volume r = resample(v, {0.5, 0.5, 0.5});
    CHECK(r.dims == Dims3{4, 4, 4});
    CHECK(r.spacing == Spacing3{0.5, 0.5, 0.5});
    for (float x : r.voxels) CHECK(x == 7.0f);
}

TEST_CASE("resample: nearest neighbour never invents labels") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        Dims3 dims{int(2 + rng.below(7)), int(2 + rng.below(7)), int(2 + rng.below(7))};
        LabelMask m = make_mask(dims, {1.0, 1.0, 1.0});
        std::set<int> in_labels;
        for (auto &l : m.labels) {
            l = (rng.below(2) == 0) ? 0 : 2;  // labels {0, 2} only
            in_labels.insert(l);
        }
        Spacing3 target{rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0)};
        LabelMask r = resample(m, target);
        for (auto l : r.labels) CHECK(in_labels.count(l) == 1);
    }
}

TEST_CASE("resample: rejects non-positive spacing") {
    Volume v = make_volume({2, 2, 2});
    CHECK_THROWS_AS(resample(v, {0.0, 1.0, 1.0}), ConfigError);
}

TEST_CASE("normalize: centering and clipping") {
    IntensityStats st{5.0, 2.0, 1.0, 9.0};
    Volume v = make_volume({2, 2, 1}, {1, 1, 1}, 5.0f);
    Volume z = normalize(v, st);
    for (float x : z.voxels) CHECK(x == 0.0f);

    v.voxels[0] = 100.0f;  // above p995 -> clips to 9
    v.voxels[1] = -100.0f; // below p005 -> clips to 1
    z = normalize(v, st);
    CHECK(z.voxels[0] == doctest::Approx((9.0 - 5.0) / 2.0));
    CHECK(z.voxels[1] == doctest::Approx((1.0 - 5.0) / 2.0));

    IntensityStats zero_std{5.0, 0.0, 1.0, 9.0};
    z = normalize(v, zero_std);
    CHECK(z.voxels[2] == 0.0f);  // mean subtraction only
}

TEST_CASE("normalize: output matches brute-force recomputation") {
    auto p = generate_phantom(9, "Tiny");
    IntensityStats st{0.4, 0.3, 0.05, 1.1};
    Volume z = normalize(p.volume, st);
    for (std::size_t i = 0; i < z.voxels.size(); ++i) {
        double x = std::clamp(double(p.volume.voxels[i]), st.p005, st.p995);
        CHECK(double(z.voxels[i]) == doctest::Approx((x - st.mean) / st.stddev).epsilon(1e-6));
    }
}

namespace {

// Builds a small on-disk phantom dataset and returns its index.
DatasetIndex write_phantom_set(const testutil::TempDir &tmp, int count, std::uint64_t seed0) {
    DatasetIndex index;
    for (int i = 0; i < count; ++i) {
        auto p = generate_phantom(seed0 + std::uint64_t(i), "Tiny");
        std::string v = tmp.str("vol_" + std::to_string(i) + ".mhd");
        std::string m = tmp.str("mask_" + std::to_string(i) + ".mhd");
        write_metaimage(p.volume, v);
        write_mask(p.mask, m);
        index.entries.push_back({v, m, "Phantom", "train"});
    }
    return index;
}

}  // namespace

TEST_CASE("fingerprint: constant foreground field") {
    testutil::TempDir tmp("fp_const");
    Volume v = make_volume({2, 2, 2}, {1, 1, 1}, 5.0f);
    LabelMask m = make_mask({2, 2, 2}, {1, 1, 1}, 1);
    write_metaimage(v, tmp.str("v.mhd"));
    write_mask(m, tmp.str("m.mhd"));
    DatasetIndex index;
    index.entries.push_back({tmp.str("v.mhd"), tmp.str("m.mhd"), "Phantom", "train"});

    Fingerprint f = extract_fingerprint(index);
    CHECK(f.num_volumes == 1);
    CHECK(f.intensity.mean == 5.0);
    CHECK(f.intensity.stddev == 0.0);
    CHECK(f.intensity.p005 == 5.0);
    CHECK(f.intensity.p995 == 5.0);
    CHECK(f.class_presence[1] == 1.0);
    CHECK(f.class_presence[2] == 0.0);
}

TEST_CASE("fingerprint: shapes enumerate train volumes in order") {
    testutil::TempDir tmp("fp_shapes");
    DatasetIndex index;
    int dx[2] = {4, 8};
    for (int i = 0; i < 2; ++i) {
        Volume v = make_volume({dx[i], 4, 4}, {1, 1, 1}, 1.0f);
        LabelMask m = make_mask({dx[i], 4, 4}, {1, 1, 1}, 1);
        std::string vp = tmp.str("v" + std::to_string(i) + ".mhd");
        std::string mp = tmp.str("m" + std::to_string(i) + ".mhd");
        write_metaimage(v, vp);
        write_mask(m, mp);
        index.entries.push_back({vp, mp, "Phantom", "train"});
    }
    Fingerprint f = extract_fingerprint(index);
    REQUIRE(f.shapes.size() == 2);
    CHECK(f.shapes[0] == Dims3{4, 4, 4});
    CHECK(f.shapes[1] == Dims3{8, 4, 4});
}

TEST_CASE("fingerprint: pooled stats match brute force and ignore entry order") {
    testutil::TempDir tmp("fp_oracle");
    DatasetIndex index = write_phantom_set(tmp, 10, 100);

    // brute force over concatenated foreground voxels
    std::vector<double> pooled;
    for (const auto &e : index.entries) {
        Volume v = read_metaimage(e.volume);
        LabelMask m = read_mask(e.mask);
        for (std::size_t i = 0; i < m.labels.size(); ++i)
            if (m.labels[i] != 0) pooled.push_back(double(v.voxels[i]));
    }
    REQUIRE(!pooled.empty());
    auto expect = oracle::pooled_stats(pooled);

    Fingerprint f = extract_fingerprint(index);
    CHECK(f.intensity.mean == doctest::Approx(expect.mean).epsilon(1e-9));
    CHECK(f.intensity.stddev == doctest::Approx(expect.stddev).epsilon(1e-9));
    CHECK(f.intensity.p005 == doctest::Approx(expect.p005).epsilon(1e-9));
    CHECK(f.intensity.p995 == doctest::Approx(expect.p995).epsilon(1e-9));
    CHECK(f.intensity.p005 <= f.intensity.mean);
    CHECK(f.intensity.mean <= f.intensity.p995);

    DatasetIndex shuffled = index;
    std::reverse(shuffled.entries.begin(), shuffled.entries.end());
    Fingerprint g = extract_fingerprint(shuffled);
    CHECK(g.intensity.mean == f.intensity.mean);
    CHECK(g.intensity.stddev == f.intensity.stddev);
    CHECK(g.intensity.p005 == f.intensity.p005);
    CHECK(g.intensity.p995 == f.intensity.p995);
}

TEST_CASE("fingerprint: empty train set rejected") {
    DatasetIndex index;
    CHECK_THROWS_AS(extract_fingerprint(index), ConfigError);
}

TEST_CASE("fingerprint: JSON roundtrip") {
    testutil::TempDir tmp("fp_json");
    DatasetIndex index = write_phantom_set(tmp, 3, 42);
    Fingerprint f = extract_fingerprint(index);
    save_fingerprint(f, tmp.str("fp.json"));
    Fingerprint g = load_fingerprint(tmp.str("fp.json"));
    CHECK(g.num_volumes == f.num_volumes);
    CHECK(g.shapes == f.shapes);
    CHECK(g.intensity.mean == f.intensity.mean);
    CHECK(g.class_presence == f.class_presence);
}

TEST_CASE("index: JSON roundtrip, validation") {
    testutil::TempDir tmp("idx");
    DatasetIndex index;
    index.entries.push_back({tmp.str("a.mhd"), tmp.str("am.mhd"), "Cirrus", "train"});
    index.entries.push_back({tmp.str("b.mhd"), "", "Topcon", "test"});
    save_index(index, tmp.str("index.json"));
    DatasetIndex r = load_index(tmp.str("index.json"));
    REQUIRE(r.entries.size() == 2);
    CHECK(r.entries[0].vendor == "Cirrus");
    CHECK(r.entries[0].mask == tmp.str("am.mhd"));
    CHECK(r.entries[1].mask.empty());
    CHECK(r.with_split("train").size() == 1);
    CHECK(r.with_vendor("Topcon").size() == 1);

    testutil::spit(tmp.str("bad.json"), R"({"entries":[{"volume":"x.mhd","split":"train"}]})");
    CHECK_THROWS_AS(load_index(tmp.str("bad.json")), RuntimeError);  // train without mask
    CHECK_THROWS_AS(load_index(tmp.str("missing.json")), ConfigError);
}
