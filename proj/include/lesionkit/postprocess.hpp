#pragma once

#include <cstdint>
#include <string>

#include "lesionkit/components.hpp"
#include "lesionkit/preprocess.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

struct PostprocessRules {
    std::int64_t wt_min_voxels = 25;   // whole-tumor blobs below this are removed
    std::int64_t netc_min_voxels = 20; // small NETC blobs are relabeled ET
    std::int64_t snfh_min_voxels = 20; // small SNFH blobs are removed
    std::int64_t et_min_voxels = 10;   // small ET blobs are removed
    Connectivity connectivity = Connectivity::c26;

    void validate() const {
        if (wt_min_voxels < 0 || netc_min_voxels < 0 || snfh_min_voxels < 0 || et_min_voxels < 0)
            throw ValidationError("postprocess: thresholds must be >= 0");
    }
};

namespace detail {

/// Blobs of `code` smaller than min_voxels become `replacement`.
inline void relabel_small_blobs(LabelVolume& labels, std::uint8_t code, std::int64_t min_voxels,
                                std::uint8_t replacement, Connectivity conn) {
    if (min_voxels <= 0)
        return;
    BinaryVolume mask;
    mask.geometry = labels.geometry;
    mask.data.resize(labels.data.size());
    bool any = false;
    for (std::size_t v = 0; v < labels.data.size(); ++v) {
        mask.data[v] = labels.data[v] == code ? 1 : 0;
        any = any || mask.data[v];
    }
    if (!any)
        return;
    const ComponentLabeling cc = connected_components(mask, conn);
    for (std::size_t v = 0; v < labels.data.size(); ++v) {
        const std::int32_t id = cc.ids[v];
        if (id > 0 && cc.sizes[id - 1] < min_voxels)
            labels.data[v] = replacement;
    }
}

} // namespace detail

/// Size-threshold cleanup rules, applied once in a fixed order:
///   1. whole-tumor blobs (union of all labels) below wt_min_voxels are erased
///   2. NETC blobs below netc_min_voxels become ET
///   3. SNFH blobs below snfh_min_voxels are erased
///   4. ET blobs below et_min_voxels are erased
/// "Below" is strict, so a blob of exactly the threshold size survives.
inline LabelVolume apply_rules(const LabelVolume& labels, const PostprocessRules& rules = {},
                               const LabelCodes& codes = {}) {
    rules.validate();
    labels.validate();
    codes.validate();
    LabelVolume out = labels;

    if (rules.wt_min_voxels > 0) {
        BinaryVolume wt;
        wt.geometry = out.geometry;
        wt.data.resize(out.data.size());
        for (std::size_t v = 0; v < out.data.size(); ++v) {
            const std::uint8_t code = out.data[v];
            if (code != codes.background && !codes.is_valid(code))
                throw ValidationError("apply_rules: unknown label code " +
                                      std::to_string(static_cast<int>(code)) + " at voxel index " +
                                      std::to_string(v));
            wt.data[v] = code != codes.background ? 1 : 0;
        }
        const ComponentLabeling cc = connected_components(wt, rules.connectivity);
        for (std::size_t v = 0; v < out.data.size(); ++v) {
            const std::int32_t id = cc.ids[v];
            if (id > 0 && cc.sizes[id - 1] < rules.wt_min_voxels)
                out.data[v] = codes.background;
        }
    }
    detail::relabel_small_blobs(out, codes.netc, rules.netc_min_voxels, codes.et,
                                rules.connectivity);
    detail::relabel_small_blobs(out, codes.snfh, rules.snfh_min_voxels, codes.background,
                                rules.connectivity);
    detail::relabel_small_blobs(out, codes.et, rules.et_min_voxels, codes.background,
                                rules.connectivity);
    return out;
}

} // namespace lesionkit
