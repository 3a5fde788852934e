#include "octseg/metaimage.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace octseg {
namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string &s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

struct Header {
    int ndims = 0;
    Dims3 dims{0, 0, 0};
    Spacing3 spacing{1.0, 1.0, 1.0};
    Spacing3 origin{0.0, 0.0, 0.0};
    ElementType type = ElementType::F32;
    std::string data_file;
    std::streamoff payload_offset = 0;  // used when data_file == "LOCAL"
};

ElementType parse_element_type(const std::string &v) {
    if (v == "MET_UCHAR") return ElementType::U8;
    if (v == "MET_SHORT") return ElementType::I16;
    if (v == "MET_USHORT") return ElementType::U16;
    if (v == "MET_FLOAT") return ElementType::F32;
    throw RuntimeError("metaimage: unsupported ElementType '" + v + "'");
}

const char *element_type_name(ElementType t) {
    switch (t) {
        case ElementType::U8: return "MET_UCHAR";
        case ElementType::I16: return "MET_SHORT";
        case ElementType::U16: return "MET_USHORT";
        case ElementType::F32: return "MET_FLOAT";
    }
    return "MET_FLOAT";
}

template <typename T>
bool parse_triple(const std::string &v, std::array<T, 3> &out) {
    std::istringstream ss(v);
    for (int i = 0; i < 3; ++i) {
        double d;
        if (!(ss >> d)) return false;
        out[i] = T(d);
    }
    return true;
}

Header read_header(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("metaimage: cannot open '" + path + "'");

    Header h;
    bool saw_ndims = false, saw_dims = false, saw_spacing = false, saw_type = false;
    std::string line;
    while (std::getline(in, line)) {
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (trim(line).empty()) continue;
            throw RuntimeError("metaimage: garbled header line '" + trim(line) + "' in " + path);
        }
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "NDims") {
            h.ndims = std::atoi(val.c_str());
            saw_ndims = true;
        } else if (key == "DimSize") {
            if (!parse_triple(val, h.dims) || h.dims[0] < 1 || h.dims[1] < 1 || h.dims[2] < 1)
                throw RuntimeError("metaimage: garbled DimSize in " + path);
            saw_dims = true;
        } else if (key == "ElementSpacing") {
            if (!parse_triple(val, h.spacing) || h.spacing[0] <= 0 || h.spacing[1] <= 0 ||
                h.spacing[2] <= 0)
                throw RuntimeError("metaimage: garbled ElementSpacing in " + path);
            saw_spacing = true;
        } else if (key == "Offset" || key == "Position" || key == "Origin") {
            if (!parse_triple(val, h.origin))
                throw RuntimeError("metaimage: garbled " + key + " in " + path);
        } else if (key == "ElementType") {
            h.type = parse_element_type(val);
            saw_type = true;
        } else if (key == "CompressedData") {
            if (val == "True" || val == "true")
                throw RuntimeError("metaimage: compressed payloads are not supported (" + path + ")");
        } else if (key == "BinaryDataByteOrderMSB" || key == "ElementByteOrderMSB") {
            if (val == "True" || val == "true")
                throw RuntimeError("metaimage: big-endian payloads are not supported (" + path + ")");
        } else if (key == "ElementDataFile") {
            h.data_file = val;
            h.payload_offset = in.tellg();
            break;  // ElementDataFile terminates the header
        }
        // other keys (ObjectType, TransformMatrix, ...) are ignored
    }
    if (!saw_ndims) throw RuntimeError("metaimage: missing header key NDims in " + path);
    if (h.ndims != 3) throw RuntimeError("metaimage: NDims must be 3 in " + path);
    if (!saw_dims) throw RuntimeError("metaimage: missing header key DimSize in " + path);
    if (!saw_spacing) throw RuntimeError("metaimage: missing header key ElementSpacing in " + path);
    if (!saw_type) throw RuntimeError("metaimage: missing header key ElementType in " + path);
    if (h.data_file.empty())
        throw RuntimeError("metaimage: missing header key ElementDataFile in " + path);
    return h;
}

std::vector<char> read_payload(const std::string &header_path, const Header &h) {
    std::int64_t expected = voxel_count(h.dims) * element_size(h.type);
    std::vector<char> raw(static_cast<std::size_t>(expected));
    if (h.data_file == "LOCAL") {
        std::ifstream in(header_path, std::ios::binary);
        in.seekg(h.payload_offset);
        in.read(raw.data(), expected);
        if (in.gcount() != expected)
            throw RuntimeError("metaimage: truncated LOCAL payload in " + header_path + " (expected " +
                               std::to_string(expected) + " bytes, got " +
                               std::to_string(in.gcount()) + ")");
        return raw;
    }
    fs::path data_path = fs::path(header_path).parent_path() / h.data_file;
    std::ifstream in(data_path, std::ios::binary);
    if (!in) throw RuntimeError("metaimage: cannot open payload '" + data_path.string() + "'");
    in.seekg(0, std::ios::end);
    std::int64_t actual = in.tellg();
    if (actual != expected)
        throw RuntimeError("metaimage: payload size mismatch for '" + data_path.string() +
                           "' (expected " + std::to_string(expected) + " bytes, got " +
                           std::to_string(actual) + ")");
    in.seekg(0);
    in.read(raw.data(), expected);
    return raw;
}

// Host is assumed little-endian (checked at startup in capi); payloads are LE.
void decode(const std::vector<char> &raw, ElementType t, std::vector<float> &out) {
    std::size_t n = raw.size() / element_size(t);
    out.resize(n);
    switch (t) {
        case ElementType::U8:
            for (std::size_t i = 0; i < n; ++i)
                out[i] = float(static_cast<unsigned char>(raw[i]));
            break;
        case ElementType::I16: {
            for (std::size_t i = 0; i < n; ++i) {
                std::int16_t v;
                std::memcpy(&v, raw.data() + 2 * i, 2);
                out[i] = float(v);
            }
            break;
        }
        case ElementType::U16: {
            for (std::size_t i = 0; i < n; ++i) {
                std::uint16_t v;
                std::memcpy(&v, raw.data() + 2 * i, 2);
                out[i] = float(v);
            }
            break;
        }
        case ElementType::F32:
            std::memcpy(out.data(), raw.data(), raw.size());
            break;
    }
}

std::vector<char> encode(const std::vector<float> &voxels, ElementType t) {
    std::vector<char> raw(voxels.size() * element_size(t));
    switch (t) {
        case ElementType::U8:
            for (std::size_t i = 0; i < voxels.size(); ++i)
                raw[i] = char(static_cast<unsigned char>(voxels[i]));
            break;
        case ElementType::I16:
            for (std::size_t i = 0; i < voxels.size(); ++i) {
                std::int16_t v = std::int16_t(voxels[i]);
                std::memcpy(raw.data() + 2 * i, &v, 2);
            }
            break;
        case ElementType::U16:
            for (std::size_t i = 0; i < voxels.size(); ++i) {
                std::uint16_t v = std::uint16_t(voxels[i]);
                std::memcpy(raw.data() + 2 * i, &v, 2);
            }
            break;
        case ElementType::F32:
            std::memcpy(raw.data(), voxels.data(), raw.size());
            break;
    }
    return raw;
}

void write_pair(const std::string &path, Dims3 dims, Spacing3 spacing, Spacing3 origin,
                ElementType type, const std::vector<char> &raw) {
    fs::path header_path(path);
    fs::path raw_path = header_path;
    raw_path.replace_extension(".raw");

    std::ofstream hdr(header_path, std::ios::binary);
    if (!hdr) throw RuntimeError("metaimage: cannot write '" + path + "'");
    hdr << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "BinaryData = True\n"
        << "BinaryDataByteOrderMSB = False\n"
        << "CompressedData = False\n"
        << "Offset = " << format_double(origin[0]) << " " << format_double(origin[1]) << " "
        << format_double(origin[2]) << "\n"
        << "ElementSpacing = " << format_double(spacing[0]) << " " << format_double(spacing[1])
        << " " << format_double(spacing[2]) << "\n"
        << "DimSize = " << dims[0] << " " << dims[1] << " " << dims[2] << "\n"
        << "ElementType = " << element_type_name(type) << "\n"
        << "ElementDataFile = " << raw_path.filename().string() << "\n";
    if (!hdr) throw RuntimeError("metaimage: write failed for '" + path + "'");

    std::ofstream out(raw_path, std::ios::binary);
    if (!out) throw RuntimeError("metaimage: cannot write '" + raw_path.string() + "'");
    out.write(raw.data(), std::streamsize(raw.size()));
    if (!out) throw RuntimeError("metaimage: write failed for '" + raw_path.string() + "'");
}

}  // namespace

Volume read_metaimage(const std::string &path) {
    Header h = read_header(path);
    std::vector<char> raw = read_payload(path, h);
    Volume v;
    v.dims = h.dims;
    v.spacing = h.spacing;
    v.origin = h.origin;
    v.element_type = h.type;
    decode(raw, h.type, v.voxels);
    return v;
}

void write_metaimage(const Volume &v, const std::string &path) {
    if (v.size() != std::int64_t(v.voxels.size()))
        throw RuntimeError("metaimage: voxel buffer does not match dims");
    write_pair(path, v.dims, v.spacing, v.origin, v.element_type, encode(v.voxels, v.element_type));
}

LabelMask volume_to_mask(const Volume &v) {
    LabelMask m;
    m.dims = v.dims;
    m.spacing = v.spacing;
    m.origin = v.origin;
    m.meta = v.meta;
    m.labels.resize(v.voxels.size());
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        float f = v.voxels[i];
        if (f < 0 || f > 3 || f != float(int(f)))
            throw RuntimeError("metaimage: mask voxel out of label range {0..3}: " +
                               std::to_string(f));
        m.labels[i] = std::uint8_t(f);
    }
    return m;
}

Volume mask_to_volume(const LabelMask &m) {
    Volume v;
    v.dims = m.dims;
    v.spacing = m.spacing;
    v.origin = m.origin;
    v.meta = m.meta;
    v.element_type = ElementType::U8;
    v.voxels.assign(m.labels.begin(), m.labels.end());
    return v;
}

LabelMask read_mask(const std::string &path) {
    return volume_to_mask(read_metaimage(path));
}

void write_mask(const LabelMask &m, const std::string &path) {
    if (m.size() != std::int64_t(m.labels.size()))
        throw RuntimeError("metaimage: label buffer does not match dims");
    std::vector<char> raw(m.labels.size());
    std::memcpy(raw.data(), m.labels.data(), raw.size());
    write_pair(path, m.dims, m.spacing, m.origin, ElementType::U8, raw);
}

}  // namespace octseg
