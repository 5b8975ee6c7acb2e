#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lesionkit/components.hpp"
#include "lesionkit/util.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

struct LossConfig {
    double smooth_epsilon = 1e-5;
    double dice_weight = 1.0;   // inside the DiceCE combination
    double ce_weight = 1.0;     // inside the DiceCE combination
    double global_weight = 2.0; // DiceCE term of the final loss
    double blob_weight = 1.0;   // blob term of the final loss
    double clamp_epsilon = 1e-7;

    void validate() const {
        if (!(smooth_epsilon > 0.0) || !(clamp_epsilon > 0.0))
            throw ValidationError("loss: epsilons must be > 0");
        if (clamp_epsilon >= 0.5)
            throw ValidationError("loss: clamp_epsilon must be < 0.5");
        if (dice_weight < 0.0 || ce_weight < 0.0 || global_weight < 0.0 || blob_weight < 0.0)
            throw ValidationError("loss: weights must be >= 0");
    }
};

namespace detail {

inline void require_probabilities(const ScalarVolume& p, const char* what) {
    for (std::size_t i = 0; i < p.data.size(); ++i)
        if (!(p.data[i] >= 0.0f && p.data[i] <= 1.0f))
            throw ValidationError(std::string(what) + ": probability " +
                                  std::to_string(p.data[i]) + " outside [0,1] at voxel index " +
                                  std::to_string(i));
}

struct DiceSums {
    KahanSum overlap; // sum of p over foreground voxels, scan order
    KahanSum total_p; // sum of p over all voxels, scan order
    std::int64_t total_g = 0;
};

inline DiceSums dice_sums(const ScalarVolume& p, const BinaryVolume& g) {
    DiceSums s;
    for (std::size_t v = 0; v < p.data.size(); ++v) {
        s.total_p.add(p.data[v]);
        if (g.data[v]) {
            s.overlap.add(p.data[v]);
            ++s.total_g;
        }
    }
    return s;
}

inline double dice_loss_from(double overlap, double total_p, double total_g, double eps) {
    return 1.0 - (2.0 * overlap + eps) / (total_p + total_g + eps);
}

} // namespace detail

/// Soft Dice loss 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps).
inline double soft_dice_loss(const ScalarVolume& p, const BinaryVolume& g,
                             const LossConfig& cfg = {}) {
    cfg.validate();
    p.validate();
    g.validate();
    require_same_geometry(p.geometry, g.geometry, "soft_dice_loss");
    detail::require_probabilities(p, "soft_dice_loss");
    const auto s = detail::dice_sums(p, g);
    return detail::dice_loss_from(s.overlap.value(), s.total_p.value(),
                                  static_cast<double>(s.total_g), cfg.smooth_epsilon);
}

/// Binary cross-entropy with probabilities clamped away from the log poles.
inline double binary_cross_entropy(const ScalarVolume& p, const BinaryVolume& g,
                                   const LossConfig& cfg = {}) {
    cfg.validate();
    p.validate();
    g.validate();
    require_same_geometry(p.geometry, g.geometry, "binary_cross_entropy");
    detail::require_probabilities(p, "binary_cross_entropy");
    KahanSum sum;
    for (std::size_t v = 0; v < p.data.size(); ++v) {
        const double ph = std::clamp(static_cast<double>(p.data[v]), cfg.clamp_epsilon,
                                     1.0 - cfg.clamp_epsilon);
        sum.add(g.data[v] ? std::log(ph) : std::log1p(-ph));
    }
    return -sum.value() / static_cast<double>(p.data.size());
}

/// Mean over channels of dice_weight*softDice + ce_weight*BCE.
inline double dice_ce_loss(const ProbabilityVolume& p, const ChannelMask& g,
                           const LossConfig& cfg = {}) {
    cfg.validate();
    p.validate();
    g.validate();
    require_same_geometry(p.geometry, g.geometry, "dice_ce_loss");
    KahanSum sum;
    for (int c = 0; c < 3; ++c) {
        const ScalarVolume pc = p.channel(c);
        const BinaryVolume gc = g.channel(c);
        sum.add(cfg.dice_weight * soft_dice_loss(pc, gc, cfg) +
                cfg.ce_weight * binary_cross_entropy(pc, gc, cfg));
    }
    return sum.value() / 3.0;
}

/// Per-lesion soft Dice, averaged over lesions. For lesion i the loss is
/// computed on the volume with every other lesion's voxels excluded from both
/// p and g, which debiases the loss toward small lesions. Exclusion only
/// changes the sums, so each per-lesion term reduces to
///   overlap_i = sum of p over lesion i
///   total_p_i = sum(p) - (sum of p over all lesions - overlap_i)
///   total_g_i = |lesion i|
/// With a single lesion nothing is excluded and the value equals
/// soft_dice_loss exactly. An empty target scores 0.
inline double blob_loss(const ScalarVolume& p, const BinaryVolume& g, const LossConfig& cfg = {}) {
    cfg.validate();
    p.validate();
    g.validate();
    require_same_geometry(p.geometry, g.geometry, "blob_loss");
    detail::require_probabilities(p, "blob_loss");

    const ComponentLabeling lesions = connected_components(g, Connectivity::c26);
    if (lesions.count == 0)
        return 0.0;

    KahanSum total_p;
    KahanSum all_lesions_p;
    std::vector<KahanSum> lesion_p(lesions.count);
    for (std::size_t v = 0; v < p.data.size(); ++v) {
        total_p.add(p.data[v]);
        const std::int32_t id = lesions.ids[v];
        if (id > 0) {
            all_lesions_p.add(p.data[v]);
            lesion_p[id - 1].add(p.data[v]);
        }
    }

    KahanSum loss_sum;
    for (std::int32_t i = 0; i < lesions.count; ++i) {
        const double overlap = lesion_p[i].value();
        const double excluded = all_lesions_p.value() - overlap;
        const double domain_p = total_p.value() - excluded;
        const double domain_g = static_cast<double>(lesions.sizes[i]);
        loss_sum.add(detail::dice_loss_from(overlap, domain_p, domain_g, cfg.smooth_epsilon));
    }
    return loss_sum.value() / static_cast<double>(lesions.count);
}

/// Combined training objective: global_weight*DiceCE + blob_weight*blob, the
/// blob term averaged over the three channels.
inline double final_loss(const ProbabilityVolume& p, const ChannelMask& g,
                         const LossConfig& cfg = {}) {
    cfg.validate();
    p.validate();
    g.validate();
    require_same_geometry(p.geometry, g.geometry, "final_loss");
    KahanSum blob_sum;
    for (int c = 0; c < 3; ++c)
        blob_sum.add(blob_loss(p.channel(c), g.channel(c), cfg));
    return cfg.global_weight * dice_ce_loss(p, g, cfg) + cfg.blob_weight * blob_sum.value() / 3.0;
}

} // namespace lesionkit
