#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lesionkit/components.hpp"
#include "lesionkit/preprocess.hpp"
#include "lesionkit/util.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

struct EvalConfig {
    int dilation_radius = 3;
    Connectivity connectivity = Connectivity::c26;
    double hd_penalty = 373.13;
    // When false, a channel that is empty in both gt and prediction scores
    // NaN and drops out of the cross-label means instead of scoring as
    // perfect.
    bool score_both_empty_as_perfect = true;

    void validate() const {
        if (dilation_radius < 0)
            throw ValidationError("eval: dilation_radius must be >= 0, got " +
                                  std::to_string(dilation_radius));
        if (!(hd_penalty > 0.0))
            throw ValidationError("eval: hd_penalty must be > 0, got " +
                                  std::to_string(hd_penalty));
    }
};

struct DistanceVolume {
    Geometry geometry;
    std::vector<double> data;
};

// ---------------------------------------------------------------------------
// Voxel-count kernels
// ---------------------------------------------------------------------------

inline double dice(const BinaryVolume& a, const BinaryVolume& b) {
    a.validate();
    b.validate();
    require_same_geometry(a.geometry, b.geometry, "dice");
    std::size_t na = 0, nb = 0, ni = 0;
    for (std::size_t v = 0; v < a.data.size(); ++v) {
        na += a.data[v] != 0;
        nb += b.data[v] != 0;
        ni += (a.data[v] != 0) && (b.data[v] != 0);
    }
    if (na + nb == 0)
        return 1.0;
    return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

// ---------------------------------------------------------------------------
// Exact Euclidean distance transform (separable parabola method), with the
// physical voxel spacing folded into each axis pass. Distances are to the
// nearest foreground voxel center, in mm.
// ---------------------------------------------------------------------------

namespace detail {

constexpr double kEdtInf = 1e20;

/// 1D squared-distance transform over samples at positions x_i = i*step.
/// f holds input squared distances, d receives the output lower envelope.
inline void dt1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                 std::vector<double>& z, int n, double step) {
    int k = 0;
    v[0] = 0;
    z[0] = -kEdtInf;
    z[1] = +kEdtInf;
    for (int q = 1; q < n; ++q) {
        const double xq = q * step;
        double s;
        for (;;) {
            const double xv = v[k] * step;
            s = ((f[q] + xq * xq) - (f[v[k]] + xv * xv)) / (2.0 * (xq - xv));
            if (s <= z[k]) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = +kEdtInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        const double xq = q * step;
        while (z[k + 1] < xq)
            ++k;
        const double dx = xq - v[k] * step;
        d[q] = dx * dx + f[v[k]];
    }
}

} // namespace detail

inline DistanceVolume edt(const BinaryVolume& mask) {
    mask.validate();
    const Geometry& g = mask.geometry;
    const int n0 = g.shape[0], n1 = g.shape[1], n2 = g.shape[2];

    DistanceVolume out;
    out.geometry = g;
    out.data.resize(g.voxel_count());
    bool any = false;
    for (std::size_t v = 0; v < mask.data.size(); ++v) {
        out.data[v] = mask.data[v] ? 0.0 : detail::kEdtInf;
        any = any || mask.data[v];
    }
    if (!any) {
        std::fill(out.data.begin(), out.data.end(), std::numeric_limits<double>::infinity());
        return out;
    }

    const int nmax = std::max({n0, n1, n2});
    std::vector<double> f(nmax), d(nmax), z(nmax + 1);
    std::vector<int> v(nmax);

    const auto pass = [&](int n, std::size_t lines, double step,
                          auto&& line_base, std::size_t stride) {
        for (std::size_t l = 0; l < lines; ++l) {
            const std::size_t base = line_base(l);
            for (int i = 0; i < n; ++i)
                f[i] = out.data[base + stride * i];
            detail::dt1d(f, d, v, z, n, step);
            for (int i = 0; i < n; ++i)
                out.data[base + stride * i] = d[i];
        }
    };

    const std::size_t s2 = 1, s1 = static_cast<std::size_t>(n2),
                      s0 = static_cast<std::size_t>(n1) * n2;
    pass(n2, static_cast<std::size_t>(n0) * n1, g.spacing[2],
         [&](std::size_t l) { return l * s1; }, s2);
    pass(n1, static_cast<std::size_t>(n0) * n2, g.spacing[1],
         [&](std::size_t l) { return (l / n2) * s0 + (l % n2); }, s1);
    pass(n0, static_cast<std::size_t>(n1) * n2, g.spacing[0],
         [&](std::size_t l) { return l; }, s0);

    for (auto& value : out.data)
        value = std::sqrt(value);
    return out;
}

/// Foreground voxels with at least one 6-neighbor that is background or lies
/// outside the volume.
inline BinaryVolume surface(const BinaryVolume& mask) {
    mask.validate();
    const Geometry& g = mask.geometry;
    const int n0 = g.shape[0], n1 = g.shape[1], n2 = g.shape[2];
    BinaryVolume out;
    out.geometry = g;
    out.data.assign(g.voxel_count(), 0);
    std::size_t v = 0;
    for (int i0 = 0; i0 < n0; ++i0)
        for (int i1 = 0; i1 < n1; ++i1)
            for (int i2 = 0; i2 < n2; ++i2, ++v) {
                if (!mask.data[v])
                    continue;
                const bool boundary =
                    i0 == 0 || !mask.data[v - static_cast<std::size_t>(n1) * n2] ||
                    i0 == n0 - 1 || !mask.data[v + static_cast<std::size_t>(n1) * n2] ||
                    i1 == 0 || !mask.data[v - static_cast<std::size_t>(n2)] ||
                    i1 == n1 - 1 || !mask.data[v + static_cast<std::size_t>(n2)] ||
                    i2 == 0 || !mask.data[v - 1] || i2 == n2 - 1 || !mask.data[v + 1];
                out.data[v] = boundary ? 1 : 0;
            }
    return out;
}

/// 95th-percentile symmetric surface distance: max of the two directed
/// linear-interpolation percentiles. Both inputs empty scores 0; exactly one
/// empty scores the configured penalty.
inline double hd95(const BinaryVolume& a, const BinaryVolume& b, const EvalConfig& cfg = {}) {
    cfg.validate();
    a.validate();
    b.validate();
    require_same_geometry(a.geometry, b.geometry, "hd95");
    const bool ea = std::all_of(a.data.begin(), a.data.end(), [](std::uint8_t x) { return !x; });
    const bool eb = std::all_of(b.data.begin(), b.data.end(), [](std::uint8_t x) { return !x; });
    if (ea && eb)
        return 0.0;
    if (ea != eb)
        return cfg.hd_penalty;

    const BinaryVolume sa = surface(a), sb = surface(b);
    const DistanceVolume to_b = edt(sb), to_a = edt(sa);
    std::vector<double> da, db;
    for (std::size_t v = 0; v < sa.data.size(); ++v) {
        if (sa.data[v])
            da.push_back(to_b.data[v]);
        if (sb.data[v])
            db.push_back(to_a.data[v]);
    }
    std::sort(da.begin(), da.end());
    std::sort(db.begin(), db.end());
    return std::max(percentile_sorted(da, 95.0), percentile_sorted(db, 95.0));
}

// ---------------------------------------------------------------------------
// Lesion matching and lesion-wise metrics
// ---------------------------------------------------------------------------

struct MatchResult {
    // matched_pred[i] lists the predicted component ids overlapping the
    // dilation of ground-truth lesion i+1, sorted ascending. One predicted
    // component may appear under several lesions.
    std::vector<std::vector<std::int32_t>> matched_pred;
    std::vector<std::int32_t> unmatched_gt;   // missed lesions (FN)
    std::vector<std::int32_t> unmatched_pred; // additional detections (FP)
};

namespace detail {

inline VoxelBox pad_box(const VoxelBox& box, int pad, const Geometry& g) {
    VoxelBox out;
    for (int a = 0; a < 3; ++a) {
        out.lo[a] = std::max(box.lo[a] - pad, 0);
        out.hi[a] = std::min(box.hi[a] + pad, g.shape[a] - 1);
    }
    return out;
}

inline VoxelBox merge_box(const VoxelBox& a, const VoxelBox& b) {
    VoxelBox out;
    for (int axis = 0; axis < 3; ++axis) {
        out.lo[axis] = std::min(a.lo[axis], b.lo[axis]);
        out.hi[axis] = std::max(a.hi[axis], b.hi[axis]);
    }
    return out;
}

/// Crop the voxels whose component id is flagged in `wanted` out of a
/// labeling, into a volume covering just `box`.
inline BinaryVolume crop_ids(const ComponentLabeling& labeling, const VoxelBox& box,
                             const std::vector<char>& wanted) {
    const Geometry& g = labeling.geometry;
    BinaryVolume out;
    out.geometry = subgeometry(
        g, box.lo, {box.hi[0] - box.lo[0] + 1, box.hi[1] - box.lo[1] + 1, box.hi[2] - box.lo[2] + 1});
    out.data.resize(out.geometry.voxel_count());
    std::size_t w = 0;
    for (int i0 = box.lo[0]; i0 <= box.hi[0]; ++i0)
        for (int i1 = box.lo[1]; i1 <= box.hi[1]; ++i1)
            for (int i2 = box.lo[2]; i2 <= box.hi[2]; ++i2, ++w) {
                const std::int32_t id = labeling.ids[g.index(i0, i1, i2)];
                out.data[w] = id > 0 && wanted[id] ? 1 : 0;
            }
    return out;
}

inline MatchResult match_from_labelings(const ComponentLabeling& gt, const ComponentLabeling& pred,
                                        const EvalConfig& cfg) {
    MatchResult m;
    m.matched_pred.resize(gt.count);
    std::vector<char> pred_hit(pred.count + 1, 0);
    std::vector<char> wanted(gt.count + 1, 0);
    const Geometry& g = gt.geometry;

    for (std::int32_t i = 1; i <= gt.count; ++i) {
        const VoxelBox box = pad_box(gt.bounding_boxes[i - 1], cfg.dilation_radius, g);
        wanted[i] = 1;
        const BinaryVolume lesion = crop_ids(gt, box, wanted);
        wanted[i] = 0;
        const BinaryVolume dilated = dilate(lesion, cfg.dilation_radius, cfg.connectivity);

        std::vector<std::int32_t> ids;
        std::size_t w = 0;
        for (int i0 = box.lo[0]; i0 <= box.hi[0]; ++i0)
            for (int i1 = box.lo[1]; i1 <= box.hi[1]; ++i1)
                for (int i2 = box.lo[2]; i2 <= box.hi[2]; ++i2, ++w) {
                    if (!dilated.data[w])
                        continue;
                    const std::int32_t id = pred.ids[g.index(i0, i1, i2)];
                    if (id > 0)
                        ids.push_back(id);
                }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        for (const std::int32_t id : ids)
            pred_hit[id] = 1;
        if (ids.empty())
            m.unmatched_gt.push_back(i);
        m.matched_pred[i - 1] = std::move(ids);
    }
    for (std::int32_t c = 1; c <= pred.count; ++c)
        if (!pred_hit[c])
            m.unmatched_pred.push_back(c);
    return m;
}

} // namespace detail

/// Pair predicted components with ground-truth lesions: a component matches a
/// lesion when it intersects the lesion dilated by cfg.dilation_radius.
inline MatchResult match_lesions(const BinaryVolume& gt, const BinaryVolume& pred,
                                 const EvalConfig& cfg = {}) {
    cfg.validate();
    require_same_geometry(gt.geometry, pred.geometry, "match_lesions");
    const ComponentLabeling lg = connected_components(gt, cfg.connectivity);
    const ComponentLabeling lp = connected_components(pred, cfg.connectivity);
    return detail::match_from_labelings(lg, lp, cfg);
}

struct LesionwiseResult {
    double ldsc = 0.0;
    double lhd95 = 0.0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

/// Lesion-wise Dice and HD95 with unmatched lesions and additional detections
/// folded in as penalty terms:
///   lDSC  = sum_matched DSC_i / (N_gt + FP)
///   lHD95 = (sum_matched HD95_i + penalty * (FN + FP)) / (N_gt + FP)
/// Both inputs empty scores (1, 0) with zero counts.
inline LesionwiseResult lesionwise_metrics(const BinaryVolume& gt, const BinaryVolume& pred,
                                           const EvalConfig& cfg = {}) {
    cfg.validate();
    require_same_geometry(gt.geometry, pred.geometry, "lesionwise_metrics");
    const ComponentLabeling lg = connected_components(gt, cfg.connectivity);
    const ComponentLabeling lp = connected_components(pred, cfg.connectivity);
    const MatchResult m = detail::match_from_labelings(lg, lp, cfg);

    LesionwiseResult r;
    r.fp = static_cast<std::int64_t>(m.unmatched_pred.size());
    r.fn = static_cast<std::int64_t>(m.unmatched_gt.size());
    if (lg.count == 0 && lp.count == 0) {
        r.ldsc = 1.0;
        r.lhd95 = 0.0;
        return r;
    }

    KahanSum dsc_sum, hd_sum;
    std::vector<char> want_gt(lg.count + 1, 0), want_pred(lp.count + 1, 0);
    for (std::int32_t i = 1; i <= lg.count; ++i) {
        const auto& matched = m.matched_pred[i - 1];
        if (matched.empty())
            continue;
        VoxelBox box = lg.bounding_boxes[i - 1];
        for (const std::int32_t c : matched)
            box = detail::merge_box(box, lp.bounding_boxes[c - 1]);
        box = detail::pad_box(box, 1, gt.geometry);

        want_gt[i] = 1;
        const BinaryVolume lesion = detail::crop_ids(lg, box, want_gt);
        want_gt[i] = 0;
        for (const std::int32_t c : matched)
            want_pred[c] = 1;
        const BinaryVolume fused = detail::crop_ids(lp, box, want_pred);
        for (const std::int32_t c : matched)
            want_pred[c] = 0;

        dsc_sum.add(dice(lesion, fused));
        hd_sum.add(hd95(lesion, fused, cfg));
    }
    const double denom = static_cast<double>(lg.count + r.fp);
    r.ldsc = dsc_sum.value() / denom;
    r.lhd95 = (hd_sum.value() + cfg.hd_penalty * static_cast<double>(r.fn + r.fp)) / denom;
    return r;
}

// ---------------------------------------------------------------------------
// Per-patient report
// ---------------------------------------------------------------------------

struct LabelMetrics {
    double ldsc = 0.0;
    double cdsc = 0.0;
    double lhd95 = 0.0;
    double chd95 = 0.0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

struct MeanMetrics {
    double ldsc = 0.0;
    double cdsc = 0.0;
    double lhd95 = 0.0;
    double chd95 = 0.0;
    double fp = 0.0;
    double fn = 0.0;
};

struct MetricsReport {
    std::array<LabelMetrics, 3> labels; // indexed by Channel (wt, tc, et)
    MeanMetrics mean;
};

/// Merge both inputs to WT/TC/ET channel masks and score every channel with
/// the cumulative and lesion-wise kernels, plus cross-label means. Channels
/// empty on both sides score NaN and drop out of the means when the config
/// disables the perfect-score convention.
inline MetricsReport evaluate_patient(const LabelVolume& gt, const LabelVolume& pred,
                                      const EvalConfig& cfg = {}, const LabelCodes& codes = {}) {
    cfg.validate();
    require_same_geometry(gt.geometry, pred.geometry, "evaluate_patient");
    const ChannelMask mg = merge_labels(gt, codes);
    const ChannelMask mp = merge_labels(pred, codes);

    MetricsReport report;
    int included = 0;
    KahanSum sum_ldsc, sum_cdsc, sum_lhd, sum_chd, sum_fp, sum_fn;
    for (int c = 0; c < 3; ++c) {
        const BinaryVolume bg = mg.channel(c);
        const BinaryVolume bp = mp.channel(c);
        LabelMetrics& lm = report.labels[c];
        const bool empty_gt =
            std::all_of(bg.data.begin(), bg.data.end(), [](std::uint8_t x) { return !x; });
        const bool empty_pred =
            std::all_of(bp.data.begin(), bp.data.end(), [](std::uint8_t x) { return !x; });
        if (empty_gt && empty_pred && !cfg.score_both_empty_as_perfect) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            lm.ldsc = lm.cdsc = lm.lhd95 = lm.chd95 = nan;
            continue;
        }
        lm.cdsc = dice(bg, bp);
        lm.chd95 = hd95(bg, bp, cfg);
        const LesionwiseResult lw = lesionwise_metrics(bg, bp, cfg);
        lm.ldsc = lw.ldsc;
        lm.lhd95 = lw.lhd95;
        lm.fp = lw.fp;
        lm.fn = lw.fn;
        ++included;
        sum_ldsc.add(lm.ldsc);
        sum_cdsc.add(lm.cdsc);
        sum_lhd.add(lm.lhd95);
        sum_chd.add(lm.chd95);
        sum_fp.add(static_cast<double>(lm.fp));
        sum_fn.add(static_cast<double>(lm.fn));
    }
    if (included == 0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        report.mean = {nan, nan, nan, nan, nan, nan};
    } else {
        const double n = included;
        report.mean = {sum_ldsc.value() / n, sum_cdsc.value() / n, sum_lhd.value() / n,
                       sum_chd.value() / n,  sum_fp.value() / n,   sum_fn.value() / n};
    }
    return report;
}

} // namespace lesionkit
