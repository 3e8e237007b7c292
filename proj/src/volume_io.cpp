// NIfTI-1 (single file, optionally gzipped) and MetaImage (MHD + RAW) readers/writers.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <zlib.h>

#include "cpm/volume.hpp"

namespace cpm {
namespace {

std::vector<char> read_maybe_gzipped(const std::filesystem::path &path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (f == nullptr) {
        throw VolumeError("cannot open " + path.string());
    }
    std::vector<char> out;
    std::array<char, 1 << 16> chunk{};
    while (true) {
        const int n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
        if (n < 0) {
            gzclose(f);
            throw VolumeError("read error in " + path.string());
        }
        if (n == 0) {
            break;
        }
        out.insert(out.end(), chunk.begin(), chunk.begin() + n);
    }
    gzclose(f);
    return out;
}

std::vector<char> inflate_all(const std::vector<char> &in, size_t expected) {
    std::vector<char> out(expected);
    uLongf len = static_cast<uLongf>(expected);
    if (uncompress(reinterpret_cast<Bytef *>(out.data()), &len, reinterpret_cast<const Bytef *>(in.data()),
                   static_cast<uLong>(in.size())) != Z_OK ||
        len != expected) {
        throw VolumeError("failed to inflate compressed voxel data");
    }
    return out;
}

enum class Scalar { U8, I8, U16, I16, U32, I32, U64, I64, F32, F64 };

size_t scalar_size(Scalar s) {
    switch (s) {
    case Scalar::U8:
    case Scalar::I8: return 1;
    case Scalar::U16:
    case Scalar::I16: return 2;
    case Scalar::U32:
    case Scalar::I32:
    case Scalar::F32: return 4;
    case Scalar::U64:
    case Scalar::I64:
    case Scalar::F64: return 8;
    }
    return 0;
}

template <typename T> T load_as(const char *p, bool swap) {
    std::array<char, sizeof(T)> b{};
    std::memcpy(b.data(), p, sizeof(T));
    if (swap) {
        std::reverse(b.begin(), b.end());
    }
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}

std::vector<double> decode_scalars(const char *data, size_t count, Scalar type, bool swap) {
    std::vector<double> out(count);
    const size_t w = scalar_size(type);
    for (size_t n = 0; n < count; ++n) {
        const char *p = data + n * w;
        switch (type) {
        case Scalar::U8: out[n] = static_cast<unsigned char>(*p); break;
        case Scalar::I8: out[n] = static_cast<signed char>(*p); break;
        case Scalar::U16: out[n] = load_as<uint16_t>(p, swap); break;
        case Scalar::I16: out[n] = load_as<int16_t>(p, swap); break;
        case Scalar::U32: out[n] = load_as<uint32_t>(p, swap); break;
        case Scalar::I32: out[n] = load_as<int32_t>(p, swap); break;
        case Scalar::U64: out[n] = static_cast<double>(load_as<uint64_t>(p, swap)); break;
        case Scalar::I64: out[n] = static_cast<double>(load_as<int64_t>(p, swap)); break;
        case Scalar::F32: out[n] = load_as<float>(p, swap); break;
        case Scalar::F64: out[n] = load_as<double>(p, swap); break;
        }
    }
    return out;
}

// Splits a linear map into per-column spacing and unit axes, re-orthonormalising small float noise.
void frame_from_linear(const Mat3 &m, WorldFrame &frame) {
    for (int c = 0; c < 3; ++c) {
        const double n = m.cols[c].norm();
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw VolumeError("header affine has a degenerate axis (non-positive spacing)");
        }
        frame.spacing[c] = n;
        frame.axes.cols[c] = m.cols[c] / n;
    }
    double worst = 0.0;
    for (int c = 0; c < 3; ++c) {
        for (int d = c + 1; d < 3; ++d) {
            worst = std::max(worst, std::abs(frame.axes.cols[c].dot(frame.axes.cols[d])));
        }
    }
    if (worst > 1e-3) {
        std::cerr << "warning: header axes are sheared (max |cos| = " << worst << "); orthonormalising\n";
    }
    // Gram-Schmidt
    auto &a = frame.axes.cols;
    a[1] = a[1] - a[0] * a[0].dot(a[1]);
    a[1] = a[1] / a[1].norm();
    a[2] = a[2] - a[0] * a[0].dot(a[2]) - a[1] * a[1].dot(a[2]);
    a[2] = a[2] / a[2].norm();
}

// ---------------------------------------------------------------- NIfTI-1

constexpr size_t kNiftiHeaderSize = 348;

Scalar nifti_scalar(int16_t datatype) {
    switch (datatype) {
    case 2: return Scalar::U8;
    case 4: return Scalar::I16;
    case 8: return Scalar::I32;
    case 16: return Scalar::F32;
    case 64: return Scalar::F64;
    case 256: return Scalar::I8;
    case 512: return Scalar::U16;
    case 768: return Scalar::U32;
    case 1024: return Scalar::I64;
    case 1280: return Scalar::U64;
    default: break;
    }
    throw VolumeError("unsupported NIfTI datatype " + std::to_string(datatype));
}

Volume load_nifti(const std::filesystem::path &path) {
    const std::vector<char> buf = read_maybe_gzipped(path);
    if (buf.size() < kNiftiHeaderSize) {
        throw VolumeError("file too short for a NIfTI-1 header: " + path.string());
    }
    const char *h = buf.data();
    bool swap = false;
    if (load_as<int32_t>(h, false) != 348) {
        if (load_as<int32_t>(h, true) != 348) {
            throw VolumeError("not a NIfTI-1 file (sizeof_hdr != 348): " + path.string());
        }
        swap = true;
    }
    if (std::memcmp(h + 344, "n+1", 4) != 0) {
        throw VolumeError("only single-file NIfTI-1 (magic n+1) is supported: " + path.string());
    }
    auto i16 = [&](size_t off) { return load_as<int16_t>(h + off, swap); };
    auto f32 = [&](size_t off) { return static_cast<double>(load_as<float>(h + off, swap)); };

    std::array<int16_t, 8> dim{};
    for (int i = 0; i < 8; ++i) {
        dim[i] = i16(40 + 2 * i);
    }
    if (dim[0] < 3 || dim[0] > 7) {
        throw VolumeError("unsupported NIfTI dimensionality " + std::to_string(dim[0]));
    }
    for (int i = 4; i <= dim[0]; ++i) {
        if (dim[i] > 1) {
            throw VolumeError("only 3D single-channel NIfTI volumes are supported");
        }
    }
    const Dims dims{dim[1], dim[2], dim[3]};
    if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0) {
        throw VolumeError("NIfTI dimensions must be positive");
    }
    const Scalar type = nifti_scalar(i16(70));
    std::array<double, 8> pixdim{};
    for (int i = 0; i < 8; ++i) {
        pixdim[i] = f32(76 + 4 * i);
    }
    const double vox_offset = f32(108);
    double slope = f32(112);
    const double inter = f32(116);
    if (slope == 0.0 || !std::isfinite(slope)) {
        slope = 1.0;
    }
    const int16_t qform_code = i16(252);
    const int16_t sform_code = i16(254);

    WorldFrame frame;
    frame.label = FrameLabel::RAS;
    if (sform_code > 0) {
        Mat3 m;
        for (int c = 0; c < 3; ++c) {
            m.cols[c] = {f32(280 + 4 * c), f32(296 + 4 * c), f32(312 + 4 * c)};
        }
        frame_from_linear(m, frame);
        frame.origin = {f32(280 + 12), f32(296 + 12), f32(312 + 12)};
    } else if (qform_code > 0) {
        const double b = f32(256), c = f32(260), d = f32(264);
        const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
        const double qfac = pixdim[0] < 0.0 ? -1.0 : 1.0;
        Mat3 r;
        r.cols[0] = {a * a + b * b - c * c - d * d, 2 * (b * c + a * d), 2 * (b * d - a * c)};
        r.cols[1] = {2 * (b * c - a * d), a * a + c * c - b * b - d * d, 2 * (c * d + a * b)};
        r.cols[2] = Vec3{2 * (b * d + a * c), 2 * (c * d - a * b), a * a + d * d - b * b - c * c} * qfac;
        for (int k = 0; k < 3; ++k) {
            r.cols[k] = r.cols[k] * pixdim[k + 1];
        }
        frame_from_linear(r, frame);
        frame.origin = {f32(268), f32(272), f32(276)};
    } else {
        frame.spacing = {pixdim[1], pixdim[2], pixdim[3]};
        frame.label = FrameLabel::Unknown;
    }
    frame.validate();

    const size_t count = static_cast<size_t>(dims.count());
    const size_t offset = static_cast<size_t>(std::max(vox_offset, static_cast<double>(kNiftiHeaderSize)));
    if (buf.size() < offset + count * scalar_size(type)) {
        throw VolumeError("NIfTI voxel data truncated: " + path.string());
    }
    std::vector<double> raw = decode_scalars(buf.data() + offset, count, type, swap);
    if (slope != 1.0 || inter != 0.0) {
        for (double &v : raw) {
            v = v * slope + inter;
        }
    }
    return Volume::from_raw(dims, frame, raw);
}

template <typename T> void put(std::vector<char> &h, size_t off, T v) { std::memcpy(h.data() + off, &v, sizeof(T)); }

void save_nifti(const Volume &volume, const std::filesystem::path &path) {
    std::vector<char> out(352, 0);
    put<int32_t>(out, 0, 348);
    const Dims &d = volume.dims();
    const int16_t dim[8] = {3, static_cast<int16_t>(d.x), static_cast<int16_t>(d.y), static_cast<int16_t>(d.z), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) {
        put<int16_t>(out, 40 + 2 * i, dim[i]);
    }
    put<int16_t>(out, 70, 4);  // int16
    put<int16_t>(out, 72, 16); // bitpix
    const WorldFrame &f = volume.frame();
    const float pixdim[8] = {1.0f, static_cast<float>(f.spacing.x), static_cast<float>(f.spacing.y),
                             static_cast<float>(f.spacing.z), 1.0f, 1.0f, 1.0f, 1.0f};
    for (int i = 0; i < 8; ++i) {
        put<float>(out, 76 + 4 * i, pixdim[i]);
    }
    put<float>(out, 108, 352.0f);
    put<float>(out, 112, 1.0f);
    put<char>(out, 123, 2); // mm
    put<int16_t>(out, 254, 1);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            put<float>(out, 280 + 16 * r + 4 * c, static_cast<float>(f.axes.at(r, c) * f.spacing[c]));
        }
        put<float>(out, 280 + 16 * r + 12, static_cast<float>(f.origin[r]));
    }
    std::memcpy(out.data() + 344, "n+1", 4);
    for (Intensity v : volume.voxels()) {
        const auto s = static_cast<int16_t>(v);
        const char *p = reinterpret_cast<const char *>(&s);
        out.insert(out.end(), p, p + 2);
    }

    const std::string name = path.string();
    if (name.size() > 3 && name.compare(name.size() - 3, 3, ".gz") == 0) {
        gzFile g = gzopen(name.c_str(), "wb");
        if (g == nullptr || gzwrite(g, out.data(), static_cast<unsigned>(out.size())) != static_cast<int>(out.size())) {
            if (g != nullptr) {
                gzclose(g);
            }
            throw VolumeError("cannot write " + name);
        }
        gzclose(g);
    } else {
        std::ofstream os(path, std::ios::binary);
        os.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!os) {
            throw VolumeError("cannot write " + name);
        }
    }
}

// ---------------------------------------------------------------- MetaImage

std::vector<double> parse_numbers(const std::string &s) {
    std::istringstream is(s);
    std::vector<double> v;
    double x;
    while (is >> x) {
        v.push_back(x);
    }
    return v;
}

Scalar met_scalar(const std::string &t) {
    static const std::map<std::string, Scalar> types = {
        {"MET_UCHAR", Scalar::U8},   {"MET_CHAR", Scalar::I8},        {"MET_USHORT", Scalar::U16},
        {"MET_SHORT", Scalar::I16},  {"MET_UINT", Scalar::U32},       {"MET_INT", Scalar::I32},
        {"MET_ULONG_LONG", Scalar::U64}, {"MET_LONG_LONG", Scalar::I64}, {"MET_FLOAT", Scalar::F32},
        {"MET_DOUBLE", Scalar::F64}};
    auto it = types.find(t);
    if (it == types.end()) {
        throw VolumeError("unsupported MetaImage ElementType " + t);
    }
    return it->second;
}

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

Volume load_mhd(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw VolumeError("cannot open " + path.string());
    }
    std::map<std::string, std::string> kv;
    std::string line;
    std::streampos data_start = 0;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        kv[key] = value;
        if (key == "ElementDataFile") {
            data_start = is.tellg();
            break;
        }
    }
    auto get = [&](const std::string &k) -> const std::string * {
        auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    auto is_true = [](const std::string *v) { return v != nullptr && (*v == "True" || *v == "true" || *v == "1"); };

    const std::string *ndims = get("NDims");
    const std::string *dimsize = get("DimSize");
    const std::string *etype = get("ElementType");
    const std::string *datafile = get("ElementDataFile");
    if (ndims == nullptr || dimsize == nullptr || etype == nullptr || datafile == nullptr) {
        throw VolumeError("MetaImage header missing NDims/DimSize/ElementType/ElementDataFile: " + path.string());
    }
    if (std::stoi(*ndims) != 3) {
        throw VolumeError("unsupported MetaImage dimensionality " + *ndims);
    }
    if (const std::string *ch = get("ElementNumberOfChannels"); ch != nullptr && std::stoi(*ch) != 1) {
        throw VolumeError("only single-channel MetaImage volumes are supported");
    }
    const std::vector<double> ds = parse_numbers(*dimsize);
    if (ds.size() != 3 || ds[0] < 1 || ds[1] < 1 || ds[2] < 1) {
        throw VolumeError("bad MetaImage DimSize");
    }
    const Dims dims{static_cast<int64_t>(ds[0]), static_cast<int64_t>(ds[1]), static_cast<int64_t>(ds[2])};

    WorldFrame frame;
    frame.label = FrameLabel::LPS;
    const std::string *sp = get("ElementSpacing");
    if (sp == nullptr) {
        sp = get("ElementSize");
    }
    if (sp != nullptr) {
        const auto v = parse_numbers(*sp);
        if (v.size() != 3) {
            throw VolumeError("bad MetaImage ElementSpacing");
        }
        frame.spacing = {v[0], v[1], v[2]};
    }
    for (const char *k : {"Offset", "Position", "Origin"}) {
        if (const std::string *o = get(k); o != nullptr) {
            const auto v = parse_numbers(*o);
            if (v.size() != 3) {
                throw VolumeError("bad MetaImage Offset");
            }
            frame.origin = {v[0], v[1], v[2]};
            break;
        }
    }
    for (const char *k : {"TransformMatrix", "Rotation", "Orientation"}) {
        if (const std::string *t = get(k); t != nullptr) {
            const auto v = parse_numbers(*t);
            if (v.size() != 9) {
                throw VolumeError("bad MetaImage TransformMatrix");
            }
            Mat3 m;
            for (int c = 0; c < 3; ++c) {
                m.cols[c] = {v[3 * c], v[3 * c + 1], v[3 * c + 2]};
            }
            Mat3 scaled = m;
            for (int c = 0; c < 3; ++c) {
                scaled.cols[c] = m.cols[c] * frame.spacing[c];
            }
            const Vec3 spacing = frame.spacing;
            frame_from_linear(scaled, frame);
            frame.spacing = spacing;
            break;
        }
    }
    frame.validate();

    const Scalar type = met_scalar(*etype);
    const size_t count = static_cast<size_t>(dims.count());
    const size_t nbytes = count * scalar_size(type);
    bool msb = is_true(get("ElementByteOrderMSB")) || is_true(get("BinaryDataByteOrderMSB"));
    const bool swap = msb != (std::endian::native == std::endian::big);

    std::vector<char> bytes;
    if (*datafile == "LOCAL") {
        is.clear();
        is.seekg(data_start);
        bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    } else {
        const auto raw_path = path.parent_path() / *datafile;
        std::ifstream rs(raw_path, std::ios::binary);
        if (!rs) {
            throw VolumeError("cannot open MetaImage data file " + raw_path.string());
        }
        bytes.assign(std::istreambuf_iterator<char>(rs), std::istreambuf_iterator<char>());
    }
    if (is_true(get("CompressedData"))) {
        bytes = inflate_all(bytes, nbytes);
    }
    if (const std::string *hs = get("HeaderSize"); hs != nullptr && *datafile != "LOCAL") {
        const long skip = std::stol(*hs);
        if (skip > 0) {
            bytes.erase(bytes.begin(), bytes.begin() + std::min<long>(skip, static_cast<long>(bytes.size())));
        } else if (skip == -1 && bytes.size() >= nbytes) {
            bytes.erase(bytes.begin(), bytes.end() - static_cast<long>(nbytes));
        }
    }
    if (bytes.size() < nbytes) {
        throw VolumeError("MetaImage voxel data truncated: " + path.string());
    }
    const std::vector<double> raw = decode_scalars(bytes.data(), count, type, swap);
    return Volume::from_raw(dims, frame, raw);
}

void save_mhd(const Volume &volume, const std::filesystem::path &path) {
    auto raw_path = path;
    raw_path.replace_extension(".raw");
    const WorldFrame &f = volume.frame();
    const Dims &d = volume.dims();
    std::ofstream hs(path);
    hs.precision(17);
    hs << "ObjectType = Image\nNDims = 3\nBinaryData = True\nBinaryDataByteOrderMSB = False\n"
       << "CompressedData = False\nTransformMatrix =";
    for (int c = 0; c < 3; ++c) {
        for (int r = 0; r < 3; ++r) {
            hs << ' ' << f.axes.at(r, c);
        }
    }
    hs << "\nOffset = " << f.origin.x << ' ' << f.origin.y << ' ' << f.origin.z << "\nElementSpacing = " << f.spacing.x
       << ' ' << f.spacing.y << ' ' << f.spacing.z << "\nDimSize = " << d.x << ' ' << d.y << ' ' << d.z
       << "\nElementType = MET_SHORT\nElementDataFile = " << raw_path.filename().string() << '\n';
    if (!hs) {
        throw VolumeError("cannot write " + path.string());
    }
    std::ofstream rs(raw_path, std::ios::binary);
    if (std::endian::native != std::endian::little) {
        throw VolumeError("MetaImage writer only supports little-endian hosts");
    }
    for (Intensity v : volume.voxels()) {
        const auto s = static_cast<int16_t>(v);
        rs.write(reinterpret_cast<const char *>(&s), 2);
    }
    if (!rs) {
        throw VolumeError("cannot write " + raw_path.string());
    }
}

} // namespace

Volume load_volume(const std::filesystem::path &path, VolumeFormat format) {
    if (!std::filesystem::exists(path)) {
        throw VolumeError("no such file: " + path.string());
    }
    return format == VolumeFormat::Nifti1 ? load_nifti(path) : load_mhd(path);
}

void save_volume(const Volume &volume, const std::filesystem::path &path, VolumeFormat format) {
    if (format == VolumeFormat::Nifti1) {
        save_nifti(volume, path);
    } else {
        save_mhd(volume, path);
    }
}

} // namespace cpm
