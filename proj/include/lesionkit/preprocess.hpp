#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "lesionkit/components.hpp"
#include "lesionkit/util.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

// ---------------------------------------------------------------------------
// Intensity rescaling
// ---------------------------------------------------------------------------

struct RescaleConfig {
    double lower_percentile = 0.1;
    double upper_percentile = 99.9;

    void validate() const {
        if (!(lower_percentile >= 0.0 && lower_percentile < 100.0))
            throw ValidationError("rescale: lower_percentile must be in [0,100), got " +
                                  std::to_string(lower_percentile));
        if (!(upper_percentile > 0.0 && upper_percentile <= 100.0))
            throw ValidationError("rescale: upper_percentile must be in (0,100], got " +
                                  std::to_string(upper_percentile));
        if (!(lower_percentile < upper_percentile))
            throw ValidationError("rescale: lower_percentile must be < upper_percentile");
    }
};

/// Clamp-rescale intensities to [0,1] between the configured percentiles of
/// the whole channel (background included). A degenerate range (hi == lo,
/// e.g. a constant volume) yields all zeros and sets *degenerate when given;
/// callers surface that as a warning.
inline ScalarVolume percentile_rescale(const ScalarVolume& vol, const RescaleConfig& cfg = {},
                                       bool* degenerate = nullptr) {
    cfg.validate();
    vol.validate();
    if (vol.data.empty())
        throw ValidationError("percentile_rescale: volume has no voxels");
    if (degenerate)
        *degenerate = false;

    std::vector<float> sorted(vol.data);
    std::sort(sorted.begin(), sorted.end());
    const double lo = percentile_sorted(sorted, cfg.lower_percentile);
    const double hi = percentile_sorted(sorted, cfg.upper_percentile);

    ScalarVolume out;
    out.geometry = vol.geometry;
    out.data.resize(vol.data.size());
    if (!(hi > lo)) {
        if (degenerate)
            *degenerate = true;
        std::fill(out.data.begin(), out.data.end(), 0.0f);
        return out;
    }
    const double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < vol.data.size(); ++i) {
        const double t = (vol.data[i] - lo) * scale;
        out.data[i] = static_cast<float>(std::clamp(t, 0.0, 1.0));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subtraction sequence
// ---------------------------------------------------------------------------

/// Squared difference of two already-rescaled channels. Symmetric, stays in
/// [0,1] for inputs in [0,1].
inline ScalarVolume subtraction_sequence(const ScalarVolume& t1c, const ScalarVolume& t1w) {
    t1c.validate();
    t1w.validate();
    require_same_geometry(t1c.geometry, t1w.geometry, "subtraction_sequence");
    ScalarVolume out;
    out.geometry = t1c.geometry;
    out.data.resize(t1c.data.size());
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const float d = t1c.data[i] - t1w.data[i];
        out.data[i] = d * d;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Channel sets
// ---------------------------------------------------------------------------

enum class ChannelRole : std::uint8_t { t1w, t1c, t2w, flair, subtraction };

inline const char* to_string(ChannelRole r) {
    switch (r) {
    case ChannelRole::t1w: return "t1w";
    case ChannelRole::t1c: return "t1c";
    case ChannelRole::t2w: return "t2w";
    case ChannelRole::flair: return "flair";
    default: return "subtraction";
    }
}

inline ChannelRole channel_role_from(const std::string& name) {
    for (ChannelRole r : {ChannelRole::t1w, ChannelRole::t1c, ChannelRole::t2w, ChannelRole::flair,
                          ChannelRole::subtraction})
        if (name == to_string(r))
            return r;
    throw ValidationError("unknown channel role '" + name + "'");
}

struct InputChannelSet {
    std::vector<ChannelRole> roles;

    static InputChannelSet standard() {
        return {{ChannelRole::t1w, ChannelRole::t1c, ChannelRole::t2w, ChannelRole::flair}};
    }
    static InputChannelSet with_subtraction() {
        return {{ChannelRole::t1w, ChannelRole::t1c, ChannelRole::subtraction, ChannelRole::flair}};
    }

    void validate() const {
        if (roles.empty())
            throw ValidationError("input channel set must not be empty");
        for (std::size_t i = 0; i < roles.size(); ++i)
            for (std::size_t j = i + 1; j < roles.size(); ++j)
                if (roles[i] == roles[j])
                    throw ValidationError(std::string("duplicate channel role '") +
                                          to_string(roles[i]) + "' in input channel set");
    }
};

// ---------------------------------------------------------------------------
// Label merging
// ---------------------------------------------------------------------------

/// WT = NETC + SNFH + ET, TC = NETC + ET, ET = ET. The nesting
/// ET <= TC <= WT holds by construction.
inline ChannelMask merge_labels(const LabelVolume& labels, const LabelCodes& codes = {}) {
    labels.validate();
    codes.validate();
    ChannelMask out;
    out.geometry = labels.geometry;
    for (auto& ch : out.channels)
        ch.assign(labels.data.size(), 0);
    for (std::size_t i = 0; i < labels.data.size(); ++i) {
        const std::uint8_t code = labels.data[i];
        if (code == codes.background)
            continue;
        if (!codes.is_valid(code))
            throw ValidationError("merge_labels: unknown label code " +
                                  std::to_string(static_cast<int>(code)) + " at voxel index " +
                                  std::to_string(i));
        out.channels[kWholeTumor][i] = 1;
        if (code == codes.netc || code == codes.et)
            out.channels[kTumorCore][i] = 1;
        if (code == codes.et)
            out.channels[kEnhancingTumor][i] = 1;
    }
    return out;
}

/// Inverse of merge_labels. Non-nested voxels resolve by priority
/// ET > TC > WT, so unmerge(merge(x)) == x on valid label volumes.
inline LabelVolume unmerge_labels(const ChannelMask& mask, const LabelCodes& codes = {}) {
    mask.validate();
    codes.validate();
    LabelVolume out;
    out.geometry = mask.geometry;
    out.data.resize(mask.geometry.voxel_count());
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (mask.channels[kEnhancingTumor][i])
            out.data[i] = codes.et;
        else if (mask.channels[kTumorCore][i])
            out.data[i] = codes.netc;
        else if (mask.channels[kWholeTumor][i])
            out.data[i] = codes.snfh;
        else
            out.data[i] = codes.background;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Small-lesion dataset masking
// ---------------------------------------------------------------------------

/// Remove every lesion larger than tau voxels. A lesion is a connected
/// component of the whole-tumor mask; removal blanks all labels inside it.
inline LabelVolume mask_large_lesions(const LabelVolume& labels, std::int64_t tau,
                                      const LabelCodes& codes = {},
                                      Connectivity conn = Connectivity::c26) {
    if (tau < 1)
        throw ValidationError("mask_large_lesions: tau must be >= 1, got " + std::to_string(tau));
    const ChannelMask merged = merge_labels(labels, codes);
    const ComponentLabeling wt = connected_components(merged.channel(kWholeTumor), conn);

    LabelVolume out = labels;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const std::int32_t id = wt.ids[i];
        if (id > 0 && wt.sizes[id - 1] > tau)
            out.data[i] = codes.background;
    }
    return out;
}

inline bool has_lesions(const LabelVolume& labels, const LabelCodes& codes = {}) {
    labels.validate();
    for (const std::uint8_t code : labels.data)
        if (code != codes.background)
            return true;
    return false;
}

} // namespace lesionkit
