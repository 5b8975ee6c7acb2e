#pragma once

#include <array>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "lesionkit/volume.hpp"

namespace lesionkit {

// ---------------------------------------------------------------------------
// Deterministic gzip (RFC 1952). zlib's gzopen stamps the current time into
// the member header; we drive deflate/inflate directly with mtime=0, os=255
// so identical input always yields identical bytes.
// ---------------------------------------------------------------------------

namespace gzip {

inline bool looks_gzip(const std::vector<unsigned char>& bytes) {
    return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

inline std::vector<unsigned char> compress(const std::vector<unsigned char>& in, int level = 6) {
    z_stream zs{};
    if (deflateInit2(&zs, level, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw IoError("gzip: deflateInit2 failed");
    gz_header head{};
    head.time = 0;
    head.os = 255;
    deflateSetHeader(&zs, &head);

    std::vector<unsigned char> out;
    out.resize(deflateBound(&zs, static_cast<uLong>(in.size())));
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END)
        throw IoError("gzip: deflate failed (rc=" + std::to_string(rc) + ")");
    out.resize(out.size() - zs.avail_out);
    return out;
}

inline std::vector<unsigned char> decompress(const std::vector<unsigned char>& in) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK)
        throw IoError("gzip: inflateInit2 failed");
    std::vector<unsigned char> out;
    out.resize(std::max<std::size_t>(in.size() * 4, 1 << 16));
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    std::size_t written = 0;
    for (;;) {
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        const int rc = inflate(&zs, Z_NO_FLUSH);
        written = out.size() - zs.avail_out;
        if (rc == Z_STREAM_END)
            break;
        if (rc == Z_OK || rc == Z_BUF_ERROR) {
            if (zs.avail_out == 0) {
                out.resize(out.size() * 2);
                continue;
            }
            if (rc == Z_BUF_ERROR) {
                inflateEnd(&zs);
                throw FormatError("gzip: truncated stream");
            }
            continue;
        }
        inflateEnd(&zs);
        throw FormatError("gzip: corrupt stream (rc=" + std::to_string(rc) + ")");
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

} // namespace gzip

namespace nifti {

// ---------------------------------------------------------------------------
// NIfTI-1 single-file format: 348-byte little-endian header, 4-byte extension
// flag, payload at vox_offset. NIfTI-2 and two-file .hdr/.img are rejected.
// ---------------------------------------------------------------------------

struct Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
static_assert(sizeof(Header) == 348, "nifti-1 header must pack to 348 bytes");

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtInt32 = 8;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;
constexpr std::int16_t kDtInt8 = 256;
constexpr std::int16_t kDtUint16 = 512;

inline int bytes_per_voxel(std::int16_t datatype) {
    switch (datatype) {
    case kDtUint8:
    case kDtInt8: return 1;
    case kDtInt16:
    case kDtUint16: return 2;
    case kDtInt32:
    case kDtFloat32: return 4;
    case kDtFloat64: return 8;
    default: return 0;
    }
}

namespace detail {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open " + path + ": " + std::strerror(errno));
    f.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(size);
    if (size > 0)
        f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!f)
        throw IoError("cannot read " + path + ": " + std::strerror(errno));
    return bytes;
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot open " + path + " for writing: " + std::strerror(errno));
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f)
        throw IoError("cannot write " + path + ": " + std::strerror(errno));
}

inline bool has_gz_suffix(const std::string& path) {
    return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

/// Column j = world direction of voxel axis j (RAS, unit length, qfac folded
/// in for the quaternion form).
inline Mat3 rotation_from_quaternion(double b, double c, double d, double qfac) {
    double a_sq = 1.0 - (b * b + c * c + d * d);
    const double a = a_sq > 0.0 ? std::sqrt(a_sq) : 0.0;
    Mat3 r{{{a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
            {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
            {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c}}};
    for (int i = 0; i < 3; ++i)
        r[i][2] *= qfac;
    return r;
}

/// Shepperd's method, matching the reference nifti quaternion convention.
inline std::array<double, 3> quaternion_from_rotation(const Mat3& r) {
    double a = r[0][0] + r[1][1] + r[2][2] + 1.0;
    double b, c, d;
    if (a > 0.5) {
        a = 0.5 * std::sqrt(a);
        b = 0.25 * (r[2][1] - r[1][2]) / a;
        c = 0.25 * (r[0][2] - r[2][0]) / a;
        d = 0.25 * (r[1][0] - r[0][1]) / a;
    } else {
        const double xd = 1.0 + r[0][0] - r[1][1] - r[2][2];
        const double yd = 1.0 - r[0][0] + r[1][1] - r[2][2];
        const double zd = 1.0 - r[0][0] - r[1][1] + r[2][2];
        if (xd > 1.0) {
            b = 0.5 * std::sqrt(xd);
            a = 0.25 * (r[2][1] - r[1][2]) / b;
            c = 0.25 * (r[1][0] + r[0][1]) / b;
            d = 0.25 * (r[2][0] + r[0][2]) / b;
        } else if (yd > 1.0) {
            c = 0.5 * std::sqrt(yd);
            a = 0.25 * (r[0][2] - r[2][0]) / c;
            b = 0.25 * (r[1][0] + r[0][1]) / c;
            d = 0.25 * (r[2][1] + r[1][2]) / c;
        } else {
            d = 0.5 * std::sqrt(zd);
            a = 0.25 * (r[1][0] - r[0][1]) / d;
            b = 0.25 * (r[2][0] + r[0][2]) / d;
            c = 0.25 * (r[2][1] + r[1][2]) / d;
        }
        if (a < 0.0) {
            a = -a;
            b = -b;
            c = -c;
            d = -d;
        }
    }
    return {b, c, d};
}

/// Snap each column to its dominant world axis. Degenerate matrices (two
/// axes collapsing onto one world axis) are rejected.
inline std::array<AxisDir, 3> orientation_from_columns(const Mat3& r, const char* field) {
    std::array<AxisDir, 3> out{};
    bool used[3] = {false, false, false};
    for (int j = 0; j < 3; ++j) {
        int best = 0;
        double mag = std::abs(r[0][j]);
        for (int i = 1; i < 3; ++i)
            if (std::abs(r[i][j]) > mag) {
                mag = std::abs(r[i][j]);
                best = i;
            }
        if (mag <= 0.0 || used[best])
            throw FormatError(std::string("nifti: degenerate orientation in ") + field);
        used[best] = true;
        out[j] = axis_dir_from(best, r[best][j] >= 0.0 ? 1 : -1);
    }
    return out;
}

inline Mat3 direction_matrix(const std::array<AxisDir, 3>& orientation) {
    Mat3 m{{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}};
    for (int j = 0; j < 3; ++j)
        m[anatomical_axis(orientation[j])][j] = direction_sign(orientation[j]);
    return m;
}

struct Decoded {
    Header head;
    Geometry geometry;
    int ndim;
    std::array<int, 5> dims; // spatial x,y,z then dim4, dim5
    const unsigned char* payload;
    std::size_t payload_bytes;
};

inline Decoded decode(const std::vector<unsigned char>& bytes, const std::string& path,
                      int max_dim) {
    Decoded d{};
    if (bytes.size() < sizeof(Header) + 4)
        throw FormatError("nifti: " + path + ": file shorter than a nifti-1 header");
    std::memcpy(&d.head, bytes.data(), sizeof(Header));
    const Header& h = d.head;
    if (h.sizeof_hdr != 348) {
        if (h.sizeof_hdr == 540)
            throw FormatError("nifti: " + path + ": sizeof_hdr=540 (nifti-2 is unsupported)");
        throw FormatError("nifti: " + path + ": bad sizeof_hdr=" + std::to_string(h.sizeof_hdr) +
                          " (expected 348; big-endian files are unsupported)");
    }
    if (std::memcmp(h.magic, "n+1", 4) != 0) {
        if (std::memcmp(h.magic, "ni1", 4) == 0)
            throw FormatError("nifti: " + path + ": magic 'ni1' (two-file hdr/img is unsupported)");
        throw FormatError("nifti: " + path + ": bad magic field");
    }
    if (h.dim[0] < 1 || h.dim[0] > 7)
        throw FormatError("nifti: " + path + ": bad dim[0]=" + std::to_string(h.dim[0]));
    d.ndim = h.dim[0];
    int effective = 0;
    for (int i = 1; i <= d.ndim; ++i) {
        if (h.dim[i] < 1)
            throw FormatError("nifti: " + path + ": bad dim[" + std::to_string(i) + "]=" +
                              std::to_string(h.dim[i]));
        if (h.dim[i] > 1)
            effective = i;
    }
    if (effective > max_dim || d.ndim > 5)
        throw ValidationError("nifti: " + path + ": " + std::to_string(std::max(effective, d.ndim)) +
                              "-dimensional payload is unsupported here (expected " +
                              std::to_string(max_dim) + "D)");
    for (int i = 0; i < 5; ++i)
        d.dims[i] = i + 1 <= d.ndim ? h.dim[i + 1] : 1;

    const int bpv = bytes_per_voxel(h.datatype);
    if (bpv == 0)
        throw FormatError("nifti: " + path + ": unsupported datatype=" + std::to_string(h.datatype));
    if (h.bitpix != bpv * 8)
        throw FormatError("nifti: " + path + ": bitpix=" + std::to_string(h.bitpix) +
                          " inconsistent with datatype=" + std::to_string(h.datatype));

    Geometry g;
    g.shape = {d.dims[0], d.dims[1], d.dims[2]};
    for (int a = 0; a < 3; ++a) {
        if (!(h.pixdim[a + 1] > 0.0f))
            throw FormatError("nifti: " + path + ": pixdim[" + std::to_string(a + 1) +
                              "] must be > 0");
        g.spacing[a] = h.pixdim[a + 1];
    }
    // qform preferred over sform; with neither, fall back to pixdim with
    // canonical orientation.
    if (h.qform_code > 0) {
        const double qfac = h.pixdim[0] < 0.0f ? -1.0 : 1.0;
        const Mat3 r = rotation_from_quaternion(h.quatern_b, h.quatern_c, h.quatern_d, qfac);
        g.orientation = orientation_from_columns(r, "qform");
        g.origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
    } else if (h.sform_code > 0) {
        Mat3 r;
        const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r[i][j] = rows[i][j];
        for (int j = 0; j < 3; ++j) {
            const double norm = std::sqrt(r[0][j] * r[0][j] + r[1][j] * r[1][j] + r[2][j] * r[2][j]);
            if (!(norm > 0.0))
                throw FormatError("nifti: " + path + ": srow column " + std::to_string(j) +
                                  " has zero norm");
            g.spacing[j] = static_cast<float>(norm);
        }
        g.orientation = orientation_from_columns(r, "sform");
        g.origin = {rows[0][3], rows[1][3], rows[2][3]};
    }
    g.validate();
    d.geometry = g;

    const auto vox_offset = static_cast<std::size_t>(h.vox_offset);
    if (h.vox_offset < 348.0f || static_cast<float>(vox_offset) != h.vox_offset)
        throw FormatError("nifti: " + path + ": bad vox_offset=" + std::to_string(h.vox_offset));
    std::size_t nvox = 1;
    for (int i = 0; i < 5; ++i)
        nvox *= static_cast<std::size_t>(d.dims[i]);
    const std::size_t need = nvox * static_cast<std::size_t>(bpv);
    if (bytes.size() < vox_offset + need)
        throw FormatError("nifti: " + path + ": payload truncated (need " + std::to_string(need) +
                          " bytes at offset " + std::to_string(vox_offset) + ")");
    d.payload = bytes.data() + vox_offset;
    d.payload_bytes = need;
    return d;
}

/// Payload order in the file is x fastest; in memory axis 2 is fastest.
/// `frame` selects the 4th-dimension volume for multi-channel files.
template <typename Out, typename Convert>
void decode_payload(const Decoded& d, int frame, Convert conv, std::vector<Out>& out) {
    const auto& g = d.geometry;
    const int n0 = g.shape[0], n1 = g.shape[1], n2 = g.shape[2];
    out.resize(g.voxel_count());
    const std::size_t frame_voxels = g.voxel_count();
    const int bpv = bytes_per_voxel(d.head.datatype);
    const unsigned char* base = d.payload + static_cast<std::size_t>(frame) * frame_voxels * bpv;

    const auto fetch = [&](std::size_t linear) -> double {
        const unsigned char* p = base + linear * bpv;
        switch (d.head.datatype) {
        case kDtUint8: return *p;
        case kDtInt8: return static_cast<double>(*reinterpret_cast<const std::int8_t*>(p));
        case kDtInt16: {
            std::int16_t v;
            std::memcpy(&v, p, 2);
            return v;
        }
        case kDtUint16: {
            std::uint16_t v;
            std::memcpy(&v, p, 2);
            return v;
        }
        case kDtInt32: {
            std::int32_t v;
            std::memcpy(&v, p, 4);
            return v;
        }
        case kDtFloat32: {
            float v;
            std::memcpy(&v, p, 4);
            return v;
        }
        default: {
            double v;
            std::memcpy(&v, p, 8);
            return v;
        }
        }
    };

    std::size_t linear = 0;
    for (int i2 = 0; i2 < n2; ++i2)
        for (int i1 = 0; i1 < n1; ++i1)
            for (int i0 = 0; i0 < n0; ++i0, ++linear)
                out[g.index(i0, i1, i2)] = conv(fetch(linear), linear);
}

/// Fast path: float32 payload into float storage without value conversion,
/// preserving bit patterns.
inline void decode_payload_f32(const Decoded& d, int frame, std::vector<float>& out) {
    const auto& g = d.geometry;
    const int n0 = g.shape[0], n1 = g.shape[1], n2 = g.shape[2];
    out.resize(g.voxel_count());
    const unsigned char* base = d.payload + static_cast<std::size_t>(frame) * g.voxel_count() * 4;
    std::size_t linear = 0;
    for (int i2 = 0; i2 < n2; ++i2)
        for (int i1 = 0; i1 < n1; ++i1)
            for (int i0 = 0; i0 < n0; ++i0, ++linear)
                std::memcpy(&out[g.index(i0, i1, i2)], base + linear * 4, 4);
}

inline bool nontrivial_scaling(const Header& h) {
    return h.scl_slope != 0.0f && (h.scl_slope != 1.0f || h.scl_inter != 0.0f);
}

inline Header make_header(const Geometry& g, std::int16_t datatype, int dim4) {
    Header h;
    std::memset(&h, 0, sizeof(Header));
    h.sizeof_hdr = 348;
    h.dim[0] = dim4 > 1 ? 4 : 3;
    h.dim[1] = static_cast<std::int16_t>(g.shape[0]);
    h.dim[2] = static_cast<std::int16_t>(g.shape[1]);
    h.dim[3] = static_cast<std::int16_t>(g.shape[2]);
    h.dim[4] = static_cast<std::int16_t>(std::max(dim4, 1));
    for (int i = h.dim[0] + 1; i < 8; ++i)
        h.dim[i] = 1;
    h.datatype = datatype;
    h.bitpix = static_cast<std::int16_t>(bytes_per_voxel(datatype) * 8);

    const Mat3 dmat = direction_matrix(g.orientation);
    const double det = dmat[0][0] * (dmat[1][1] * dmat[2][2] - dmat[1][2] * dmat[2][1]) -
                       dmat[0][1] * (dmat[1][0] * dmat[2][2] - dmat[1][2] * dmat[2][0]) +
                       dmat[0][2] * (dmat[1][0] * dmat[2][1] - dmat[1][1] * dmat[2][0]);
    const double qfac = det < 0.0 ? -1.0 : 1.0;
    Mat3 rot = dmat;
    for (int i = 0; i < 3; ++i)
        rot[i][2] *= qfac;
    const auto q = quaternion_from_rotation(rot);

    h.pixdim[0] = static_cast<float>(qfac);
    for (int a = 0; a < 3; ++a)
        h.pixdim[a + 1] = g.spacing[a];
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2; // mm
    h.qform_code = 1;
    h.sform_code = 1;
    h.quatern_b = static_cast<float>(q[0]);
    h.quatern_c = static_cast<float>(q[1]);
    h.quatern_d = static_cast<float>(q[2]);
    h.qoffset_x = g.origin[0];
    h.qoffset_y = g.origin[1];
    h.qoffset_z = g.origin[2];
    float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j)
            rows[i][j] = static_cast<float>(dmat[i][j]) * g.spacing[j];
        rows[i][3] = g.origin[i];
    }
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

template <typename Store>
void encode_payload(const Geometry& g, const std::vector<Store>& data,
                    std::vector<unsigned char>& out) {
    const int n0 = g.shape[0], n1 = g.shape[1], n2 = g.shape[2];
    const std::size_t start = out.size();
    out.resize(start + data.size() * sizeof(Store));
    unsigned char* base = out.data() + start;
    std::size_t linear = 0;
    for (int i2 = 0; i2 < n2; ++i2)
        for (int i1 = 0; i1 < n1; ++i1)
            for (int i0 = 0; i0 < n0; ++i0, ++linear)
                std::memcpy(base + linear * sizeof(Store), &data[g.index(i0, i1, i2)], sizeof(Store));
}

inline void finish_write(std::vector<unsigned char>& bytes, const std::string& path) {
    if (has_gz_suffix(path))
        bytes = gzip::compress(bytes);
    write_file(path, bytes);
}

inline std::vector<unsigned char> read_maybe_gz(const std::string& path) {
    auto bytes = read_file(path);
    if (gzip::looks_gzip(bytes))
        bytes = gzip::decompress(bytes);
    return bytes;
}

} // namespace detail
} // namespace nifti

// ---------------------------------------------------------------------------
// Public I/O
// ---------------------------------------------------------------------------

/// Load one MRI channel. Integer payloads are converted to float; float32
/// payloads keep their exact bit patterns. scl_slope/scl_inter are applied
/// when nontrivial.
inline ScalarVolume load_scalar_nifti(const std::string& path) {
    const auto bytes = nifti::detail::read_maybe_gz(path);
    const auto d = nifti::detail::decode(bytes, path, 3);
    ScalarVolume v;
    v.geometry = d.geometry;
    if (d.head.datatype == nifti::kDtFloat32 && !nifti::detail::nontrivial_scaling(d.head)) {
        nifti::detail::decode_payload_f32(d, 0, v.data);
    } else {
        const double slope = nifti::detail::nontrivial_scaling(d.head) ? d.head.scl_slope : 1.0;
        const double inter = nifti::detail::nontrivial_scaling(d.head) ? d.head.scl_inter : 0.0;
        nifti::detail::decode_payload<float>(
            d, 0, [&](double raw, std::size_t) { return static_cast<float>(raw * slope + inter); },
            v.data);
    }
    return v;
}

/// Load a segmentation map, validating every voxel against the configured
/// label code set.
inline LabelVolume load_label_nifti(const std::string& path, const LabelCodes& codes = {}) {
    codes.validate();
    const auto bytes = nifti::detail::read_maybe_gz(path);
    const auto d = nifti::detail::decode(bytes, path, 3);
    if (nifti::detail::nontrivial_scaling(d.head))
        throw FormatError("nifti: " + path + ": scl_slope/scl_inter scaling on a label volume");
    LabelVolume v;
    v.geometry = d.geometry;
    nifti::detail::decode_payload<std::uint8_t>(
        d, 0,
        [&](double raw, std::size_t linear) {
            if (!(raw >= 0.0 && raw <= 255.0) || std::round(raw) != raw)
                throw ValidationError("nifti: " + path + ": unknown label code " +
                                      std::to_string(raw) + " at voxel index " +
                                      std::to_string(linear));
            const auto code = static_cast<std::uint8_t>(raw);
            if (!codes.is_valid(code))
                throw ValidationError("nifti: " + path + ": unknown label code " +
                                      std::to_string(static_cast<int>(code)) +
                                      " at voxel index " + std::to_string(linear));
            return code;
        },
        v.data);
    return v;
}

/// Load a 3-channel probability volume (4D float file, 4th dim = channels).
inline ProbabilityVolume load_probability_nifti(const std::string& path) {
    const auto bytes = nifti::detail::read_maybe_gz(path);
    const auto d = nifti::detail::decode(bytes, path, 4);
    if (d.dims[3] != 3)
        throw FormatError("nifti: " + path + ": expected 3 channels in dim[4], got " +
                          std::to_string(d.dims[3]));
    ProbabilityVolume p;
    p.geometry = d.geometry;
    for (int c = 0; c < 3; ++c) {
        if (d.head.datatype == nifti::kDtFloat32 && !nifti::detail::nontrivial_scaling(d.head))
            nifti::detail::decode_payload_f32(d, c, p.channels[c]);
        else
            nifti::detail::decode_payload<float>(
                d, c, [](double raw, std::size_t) { return static_cast<float>(raw); }, p.channels[c]);
    }
    p.validate();
    return p;
}

/// Save a scalar volume as float32. Non-finite values are rejected.
inline void save_nifti(const ScalarVolume& v, const std::string& path) {
    v.validate();
    for (std::size_t i = 0; i < v.data.size(); ++i)
        if (!std::isfinite(v.data[i]))
            throw ValidationError("save_nifti: non-finite value at voxel index " + std::to_string(i));
    const auto h = nifti::detail::make_header(v.geometry, nifti::kDtFloat32, 1);
    std::vector<unsigned char> bytes(352, 0);
    std::memcpy(bytes.data(), &h, sizeof(h));
    nifti::detail::encode_payload(v.geometry, v.data, bytes);
    nifti::detail::finish_write(bytes, path);
}

/// Save a label volume as uint8.
inline void save_nifti(const LabelVolume& v, const std::string& path) {
    v.validate();
    const auto h = nifti::detail::make_header(v.geometry, nifti::kDtUint8, 1);
    std::vector<unsigned char> bytes(352, 0);
    std::memcpy(bytes.data(), &h, sizeof(h));
    nifti::detail::encode_payload(v.geometry, v.data, bytes);
    nifti::detail::finish_write(bytes, path);
}

/// Save a probability volume as a 4D float32 file (x,y,z,channel).
inline void save_nifti(const ProbabilityVolume& p, const std::string& path) {
    p.validate();
    const auto h = nifti::detail::make_header(p.geometry, nifti::kDtFloat32, 3);
    std::vector<unsigned char> bytes(352, 0);
    std::memcpy(bytes.data(), &h, sizeof(h));
    for (int c = 0; c < 3; ++c)
        nifti::detail::encode_payload(p.geometry, p.channels[c], bytes);
    nifti::detail::finish_write(bytes, path);
}

} // namespace lesionkit
