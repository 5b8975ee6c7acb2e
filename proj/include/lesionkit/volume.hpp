#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lesionkit/util.hpp"

namespace lesionkit {

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Anatomical direction of a voxel axis, named tail->head.
/// Canonical volumes run (L->R, P->A, I->S), i.e. RAS+.
enum class AxisDir : std::uint8_t { LR, RL, PA, AP, IS, SI };

/// World axis the direction lives on: 0 = left/right, 1 = posterior/anterior,
/// 2 = inferior/superior.
inline int anatomical_axis(AxisDir d) {
    switch (d) {
    case AxisDir::LR:
    case AxisDir::RL: return 0;
    case AxisDir::PA:
    case AxisDir::AP: return 1;
    default: return 2;
    }
}

inline int direction_sign(AxisDir d) {
    return (d == AxisDir::LR || d == AxisDir::PA || d == AxisDir::IS) ? 1 : -1;
}

inline AxisDir axis_dir_from(int anat_axis, int sign) {
    static constexpr AxisDir pos[3] = {AxisDir::LR, AxisDir::PA, AxisDir::IS};
    static constexpr AxisDir neg[3] = {AxisDir::RL, AxisDir::AP, AxisDir::SI};
    return sign >= 0 ? pos[anat_axis] : neg[anat_axis];
}

inline const char* to_string(AxisDir d) {
    switch (d) {
    case AxisDir::LR: return "L->R";
    case AxisDir::RL: return "R->L";
    case AxisDir::PA: return "P->A";
    case AxisDir::AP: return "A->P";
    case AxisDir::IS: return "I->S";
    default: return "S->I";
    }
}

/// Voxel grid metadata. Spacing and origin are float32 on purpose: that is
/// the precision NIfTI-1 stores, and geometry must survive a save/load round
/// trip bit-exactly.
struct Geometry {
    std::array<int, 3> shape{1, 1, 1};
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    std::array<AxisDir, 3> orientation{AxisDir::LR, AxisDir::PA, AxisDir::IS};
    std::array<float, 3> origin{0.0f, 0.0f, 0.0f};

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1]) *
               static_cast<std::size_t>(shape[2]);
    }

    /// Row-major over axis order (0,1,2): axis 2 varies fastest.
    std::size_t index(int i0, int i1, int i2) const {
        return (static_cast<std::size_t>(i0) * shape[1] + static_cast<std::size_t>(i1)) * shape[2] +
               static_cast<std::size_t>(i2);
    }

    bool in_bounds(int i0, int i1, int i2) const {
        return i0 >= 0 && i0 < shape[0] && i1 >= 0 && i1 < shape[1] && i2 >= 0 && i2 < shape[2];
    }

    bool canonical_orientation() const {
        return orientation[0] == AxisDir::LR && orientation[1] == AxisDir::PA &&
               orientation[2] == AxisDir::IS;
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (shape[a] < 1)
                throw ValidationError("geometry: shape[" + std::to_string(a) + "] must be >= 1, got " +
                                      std::to_string(shape[a]));
            if (!(spacing[a] > 0.0f))
                throw ValidationError("geometry: spacing[" + std::to_string(a) + "] must be > 0, got " +
                                      std::to_string(spacing[a]));
        }
        bool seen[3] = {false, false, false};
        for (int a = 0; a < 3; ++a)
            seen[anatomical_axis(orientation[a])] = true;
        if (!(seen[0] && seen[1] && seen[2]))
            throw ValidationError("geometry: orientation repeats an anatomical axis");
    }

    friend bool operator==(const Geometry&, const Geometry&) = default;
};

inline std::string shape_string(const Geometry& g) {
    std::ostringstream os;
    os << g.shape[0] << "x" << g.shape[1] << "x" << g.shape[2];
    return os.str();
}

inline void require_same_geometry(const Geometry& a, const Geometry& b, const char* what) {
    if (!(a == b))
        throw ValidationError(std::string(what) + ": geometry mismatch (" + shape_string(a) + " vs " +
                              shape_string(b) + ")");
}

/// Geometry of a box cut out of `g` at inclusive voxel corner `lo` with the
/// given shape. The origin moves so world coordinates stay put.
inline Geometry subgeometry(const Geometry& g, const std::array<int, 3>& lo,
                            const std::array<int, 3>& shape) {
    Geometry out = g;
    out.shape = shape;
    for (int a = 0; a < 3; ++a) {
        const int world = anatomical_axis(g.orientation[a]);
        const double shift = static_cast<double>(direction_sign(g.orientation[a])) *
                             static_cast<double>(g.spacing[a]) * static_cast<double>(lo[a]);
        out.origin[world] = static_cast<float>(static_cast<double>(g.origin[world]) + shift);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Volume types. All are plain immutable-by-convention value types: construct,
// then share freely across threads.
// ---------------------------------------------------------------------------

/// One MRI channel: real intensity per voxel.
struct ScalarVolume {
    Geometry geometry;
    std::vector<float> data;

    void validate() const {
        geometry.validate();
        if (data.size() != geometry.voxel_count())
            throw ValidationError("scalar volume: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_string(geometry));
    }
};

/// Categorical segmentation labels, one code per voxel.
struct LabelVolume {
    Geometry geometry;
    std::vector<std::uint8_t> data;

    void validate() const {
        geometry.validate();
        if (data.size() != geometry.voxel_count())
            throw ValidationError("label volume: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_string(geometry));
    }
};

/// 0/1 mask.
struct BinaryVolume {
    Geometry geometry;
    std::vector<std::uint8_t> data;

    void validate() const {
        geometry.validate();
        if (data.size() != geometry.voxel_count())
            throw ValidationError("binary volume: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_string(geometry));
    }
};

inline std::int64_t foreground_count(const BinaryVolume& m) {
    std::int64_t n = 0;
    for (std::uint8_t v : m.data)
        n += (v != 0);
    return n;
}

/// Channel order of the network-facing 3-channel representation.
enum Channel : int { kWholeTumor = 0, kTumorCore = 1, kEnhancingTumor = 2 };

inline const char* channel_name(int c) {
    switch (c) {
    case kWholeTumor: return "wt";
    case kTumorCore: return "tc";
    default: return "et";
    }
}

/// Binary (WT, TC, ET) channels sharing one grid. merge_labels produces
/// nested channels: ET subset of TC subset of WT.
struct ChannelMask {
    Geometry geometry;
    std::array<std::vector<std::uint8_t>, 3> channels;

    void validate() const {
        geometry.validate();
        for (const auto& c : channels)
            if (c.size() != geometry.voxel_count())
                throw ValidationError("channel mask: channel length does not match shape " +
                                      shape_string(geometry));
    }

    BinaryVolume channel(int c) const { return BinaryVolume{geometry, channels[c]}; }
};

/// Real-valued (WT, TC, ET) channels, each value in [0,1].
struct ProbabilityVolume {
    Geometry geometry;
    std::array<std::vector<float>, 3> channels;

    void validate() const {
        geometry.validate();
        for (int c = 0; c < 3; ++c) {
            if (channels[c].size() != geometry.voxel_count())
                throw ValidationError("probability volume: channel length does not match shape " +
                                      shape_string(geometry));
            for (float v : channels[c])
                if (!(v >= 0.0f && v <= 1.0f))
                    throw ValidationError(std::string("probability volume: value outside [0,1] in channel ") +
                                          channel_name(c));
        }
    }

    ScalarVolume channel(int c) const { return ScalarVolume{geometry, channels[c]}; }
};

/// Stacked input channels for a predictor (t1w, t1c, ... in a configured
/// order).
struct MultiChannelVolume {
    Geometry geometry;
    std::vector<std::vector<float>> channels;

    void validate() const {
        geometry.validate();
        if (channels.empty())
            throw ValidationError("multi-channel volume: no channels");
        for (const auto& c : channels)
            if (c.size() != geometry.voxel_count())
                throw ValidationError("multi-channel volume: channel length does not match shape " +
                                      shape_string(geometry));
    }
};

inline MultiChannelVolume stack_channels(const std::vector<ScalarVolume>& vols) {
    if (vols.empty())
        throw ValidationError("stack_channels: no input volumes");
    MultiChannelVolume out;
    out.geometry = vols[0].geometry;
    for (const auto& v : vols) {
        require_same_geometry(vols[0].geometry, v.geometry, "stack_channels");
        out.channels.push_back(v.data);
    }
    return out;
}

/// Threshold a probability volume into a channel mask (>= threshold is
/// foreground).
inline ChannelMask binarize(const ProbabilityVolume& p, double threshold = 0.5) {
    ChannelMask out;
    out.geometry = p.geometry;
    const std::size_t n = p.geometry.voxel_count();
    for (int c = 0; c < 3; ++c) {
        out.channels[c].resize(n);
        for (std::size_t i = 0; i < n; ++i)
            out.channels[c][i] = static_cast<double>(p.channels[c][i]) >= threshold ? 1 : 0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Label code set
// ---------------------------------------------------------------------------

/// Voxel codes of the segmentation classes. The default mapping is
/// 0/1/2/3 = background/NETC/SNFH/ET; alternate code sets are configurable.
struct LabelCodes {
    std::uint8_t background = 0;
    std::uint8_t netc = 1;
    std::uint8_t snfh = 2;
    std::uint8_t et = 3;

    bool is_valid(std::uint8_t v) const {
        return v == background || v == netc || v == snfh || v == et;
    }

    void validate() const {
        if (background == netc || background == snfh || background == et || netc == snfh ||
            netc == et || snfh == et)
            throw ValidationError("label codes: codes must be pairwise distinct");
    }

    friend bool operator==(const LabelCodes&, const LabelCodes&) = default;
};

// ---------------------------------------------------------------------------
// Orientation canonicalization
// ---------------------------------------------------------------------------

namespace detail {

struct AxisMap {
    std::array<int, 3> source_axis;  // per canonical axis: input axis it comes from
    std::array<bool, 3> flip;        // per canonical axis: reversed polarity
    bool identity;
};

inline AxisMap canonical_axis_map(const Geometry& g) {
    AxisMap m{};
    std::array<int, 3> by_world{-1, -1, -1};
    for (int a = 0; a < 3; ++a) {
        const int w = anatomical_axis(g.orientation[a]);
        if (by_world[w] != -1)
            throw ValidationError("canonicalize_orientation: orientation repeats anatomical axis " +
                                  std::string(to_string(g.orientation[a])));
        by_world[w] = a;
    }
    m.identity = true;
    for (int k = 0; k < 3; ++k) {
        m.source_axis[k] = by_world[k];
        m.flip[k] = direction_sign(g.orientation[by_world[k]]) < 0;
        if (m.source_axis[k] != k || m.flip[k])
            m.identity = false;
    }
    return m;
}

template <typename T>
std::vector<T> permute_flip(const std::vector<T>& src, const Geometry& g, const AxisMap& m,
                            const std::array<int, 3>& out_shape) {
    std::vector<T> dst(src.size());
    std::array<int, 3> idx{};
    std::size_t o = 0;
    for (int a = 0; a < out_shape[0]; ++a)
        for (int b = 0; b < out_shape[1]; ++b)
            for (int c = 0; c < out_shape[2]; ++c, ++o) {
                const std::array<int, 3> out{a, b, c};
                for (int k = 0; k < 3; ++k) {
                    const int j = m.source_axis[k];
                    idx[j] = m.flip[k] ? g.shape[j] - 1 - out[k] : out[k];
                }
                dst[o] = src[g.index(idx[0], idx[1], idx[2])];
            }
    return dst;
}

inline Geometry canonical_geometry(const Geometry& g, const AxisMap& m) {
    Geometry out;
    for (int k = 0; k < 3; ++k) {
        const int j = m.source_axis[k];
        out.shape[k] = g.shape[j];
        out.spacing[k] = g.spacing[j];
        out.orientation[k] = axis_dir_from(k, +1);
        if (m.flip[k])
            out.origin[k] = static_cast<float>(static_cast<double>(g.origin[k]) -
                                               static_cast<double>(g.spacing[j]) * (g.shape[j] - 1));
        else
            out.origin[k] = g.origin[k];
    }
    return out;
}

} // namespace detail

/// Reorder and flip voxel data so the axes run (L->R, P->A, I->S).
/// Idempotent; preserves the multiset of voxel values.
template <typename Vol>
Vol canonicalize_orientation(const Vol& v) {
    v.validate();
    const auto m = detail::canonical_axis_map(v.geometry);
    if (m.identity)
        return v;
    Vol out;
    out.geometry = detail::canonical_geometry(v.geometry, m);
    out.data = detail::permute_flip(v.data, v.geometry, m, out.geometry.shape);
    return out;
}

// ---------------------------------------------------------------------------
// Isotropic resampling
// ---------------------------------------------------------------------------

namespace detail {

inline std::array<int, 3> resampled_shape(const Geometry& g, double target) {
    std::array<int, 3> s{};
    for (int a = 0; a < 3; ++a) {
        // ceil so the resampled grid never crops anatomy
        const double extent = static_cast<double>(g.shape[a]) * static_cast<double>(g.spacing[a]);
        s[a] = std::max(1, static_cast<int>(std::ceil(extent / target - 1e-9)));
    }
    return s;
}

inline Geometry resampled_geometry(const Geometry& g, double target) {
    Geometry out = g;
    out.shape = resampled_shape(g, target);
    out.spacing = {static_cast<float>(target), static_cast<float>(target), static_cast<float>(target)};
    return out;
}

inline float sample_trilinear(const ScalarVolume& v, double u0, double u1, double u2) {
    const auto& g = v.geometry;
    const auto clampf = [](double u, int n) {
        if (u < 0.0) return 0.0;
        const double hi = static_cast<double>(n - 1);
        return u > hi ? hi : u;
    };
    u0 = clampf(u0, g.shape[0]);
    u1 = clampf(u1, g.shape[1]);
    u2 = clampf(u2, g.shape[2]);
    const int i0 = static_cast<int>(u0), i1 = static_cast<int>(u1), i2 = static_cast<int>(u2);
    const int j0 = std::min(i0 + 1, g.shape[0] - 1);
    const int j1 = std::min(i1 + 1, g.shape[1] - 1);
    const int j2 = std::min(i2 + 1, g.shape[2] - 1);
    const double f0 = u0 - i0, f1 = u1 - i1, f2 = u2 - i2;
    const auto at = [&](int a, int b, int c) {
        return static_cast<double>(v.data[g.index(a, b, c)]);
    };
    const double c00 = at(i0, i1, i2) * (1 - f2) + at(i0, i1, j2) * f2;
    const double c01 = at(i0, j1, i2) * (1 - f2) + at(i0, j1, j2) * f2;
    const double c10 = at(j0, i1, i2) * (1 - f2) + at(j0, i1, j2) * f2;
    const double c11 = at(j0, j1, i2) * (1 - f2) + at(j0, j1, j2) * f2;
    const double c0 = c00 * (1 - f1) + c01 * f1;
    const double c1 = c10 * (1 - f1) + c11 * f1;
    return static_cast<float>(c0 * (1 - f0) + c1 * f0);
}

} // namespace detail

/// Resample a scalar volume to isotropic `target` mm spacing (trilinear,
/// edge-clamped). A volume already at the target spacing is returned as is.
inline ScalarVolume resample_isotropic(const ScalarVolume& v, double target) {
    if (!(target > 0.0))
        throw ValidationError("resample_isotropic: target spacing must be > 0");
    v.validate();
    const auto t = static_cast<float>(target);
    if (v.geometry.spacing[0] == t && v.geometry.spacing[1] == t && v.geometry.spacing[2] == t)
        return v;
    ScalarVolume out;
    out.geometry = detail::resampled_geometry(v.geometry, target);
    out.data.resize(out.geometry.voxel_count());
    const auto& g = v.geometry;
    std::size_t o = 0;
    for (int a = 0; a < out.geometry.shape[0]; ++a) {
        const double u0 = static_cast<double>(a) * target / g.spacing[0];
        for (int b = 0; b < out.geometry.shape[1]; ++b) {
            const double u1 = static_cast<double>(b) * target / g.spacing[1];
            for (int c = 0; c < out.geometry.shape[2]; ++c, ++o) {
                const double u2 = static_cast<double>(c) * target / g.spacing[2];
                out.data[o] = detail::sample_trilinear(v, u0, u1, u2);
            }
        }
    }
    return out;
}

/// Label variant: nearest-neighbor so codes stay categorical.
inline LabelVolume resample_isotropic(const LabelVolume& v, double target) {
    if (!(target > 0.0))
        throw ValidationError("resample_isotropic: target spacing must be > 0");
    v.validate();
    const auto t = static_cast<float>(target);
    if (v.geometry.spacing[0] == t && v.geometry.spacing[1] == t && v.geometry.spacing[2] == t)
        return v;
    LabelVolume out;
    out.geometry = detail::resampled_geometry(v.geometry, target);
    out.data.resize(out.geometry.voxel_count());
    const auto& g = v.geometry;
    const auto nearest = [](double u, int n) {
        const auto i = static_cast<int>(std::llround(u));
        return i < 0 ? 0 : (i >= n ? n - 1 : i);
    };
    std::size_t o = 0;
    for (int a = 0; a < out.geometry.shape[0]; ++a) {
        const int i0 = nearest(static_cast<double>(a) * target / g.spacing[0], g.shape[0]);
        for (int b = 0; b < out.geometry.shape[1]; ++b) {
            const int i1 = nearest(static_cast<double>(b) * target / g.spacing[1], g.shape[1]);
            for (int c = 0; c < out.geometry.shape[2]; ++c, ++o) {
                const int i2 = nearest(static_cast<double>(c) * target / g.spacing[2], g.shape[2]);
                out.data[o] = v.data[g.index(i0, i1, i2)];
            }
        }
    }
    return out;
}

} // namespace lesionkit
