#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lesionkit/postprocess.hpp"
#include "lesionkit/preprocess.hpp"
#include "lesionkit/util.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

// ---------------------------------------------------------------------------
// Predictor interface
// ---------------------------------------------------------------------------

/// Stand-in for a trained network: maps a multi-channel patch to a
/// same-shaped (WT, TC, ET) probability patch.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual int input_channels() const = 0;
    virtual ProbabilityVolume predict(const MultiChannelVolume& patch) const = 0;
    /// Implementations that keep mutable state declare themselves serial; the
    /// harness then never invokes them concurrently.
    virtual bool thread_safe() const { return true; }
};

/// Emits fixed per-channel probabilities everywhere.
class ConstantPredictor final : public Predictor {
public:
    ConstantPredictor(int input_channels, std::array<float, 3> values)
        : input_channels_(input_channels), values_(values) {
        for (const float v : values_)
            if (!(v >= 0.0f && v <= 1.0f))
                throw ValidationError("constant predictor: value outside [0,1]");
    }
    int input_channels() const override { return input_channels_; }
    ProbabilityVolume predict(const MultiChannelVolume& patch) const override {
        ProbabilityVolume out;
        out.geometry = patch.geometry;
        for (int c = 0; c < 3; ++c)
            out.channels[c].assign(patch.geometry.voxel_count(), values_[c]);
        return out;
    }

private:
    int input_channels_;
    std::array<float, 3> values_;
};

/// Echoes input channel 0 (clamped to [0,1]) as every output channel. Useful
/// for checking that window placement and blending are exact.
class IdentityPredictor final : public Predictor {
public:
    explicit IdentityPredictor(int input_channels = 1) : input_channels_(input_channels) {}
    int input_channels() const override { return input_channels_; }
    ProbabilityVolume predict(const MultiChannelVolume& patch) const override {
        ProbabilityVolume out;
        out.geometry = patch.geometry;
        std::vector<float> clamped(patch.channels[0].size());
        for (std::size_t v = 0; v < clamped.size(); ++v)
            clamped[v] = std::clamp(patch.channels[0][v], 0.0f, 1.0f);
        for (int c = 0; c < 3; ++c)
            out.channels[c] = clamped;
        return out;
    }

private:
    int input_channels_;
};

/// Hard-thresholds input channel 0 with one cutoff per output channel,
/// emitting nested masks when the cutoffs ascend. A crude stand-in for a
/// segmentation network on bright-blob phantoms.
class ThresholdPredictor final : public Predictor {
public:
    ThresholdPredictor(int input_channels = 1, std::array<float, 3> cutoffs = {0.5f, 0.7f, 0.9f})
        : input_channels_(input_channels), cutoffs_(cutoffs) {}
    int input_channels() const override { return input_channels_; }
    ProbabilityVolume predict(const MultiChannelVolume& patch) const override {
        ProbabilityVolume out;
        out.geometry = patch.geometry;
        for (int c = 0; c < 3; ++c) {
            out.channels[c].resize(patch.channels[0].size());
            for (std::size_t v = 0; v < out.channels[c].size(); ++v)
                out.channels[c][v] = patch.channels[0][v] >= cutoffs_[c] ? 1.0f : 0.0f;
        }
        return out;
    }

private:
    int input_channels_;
    std::array<float, 3> cutoffs_;
};

// ---------------------------------------------------------------------------
// Sliding-window inference
// ---------------------------------------------------------------------------

struct SlidingWindowConfig {
    std::array<int, 3> patch_size{192, 192, 32};
    double overlap = 0.75;

    void validate() const {
        for (const int p : patch_size)
            if (p < 1)
                throw ValidationError("sliding window: patch_size entries must be >= 1");
        if (!(overlap >= 0.0 && overlap < 1.0))
            throw ValidationError("sliding window: overlap must be in [0,1), got " +
                                  std::to_string(overlap));
    }
};

/// Window start positions along one axis: stride max(1, floor(patch*(1-ov)))
/// plus a final window flush against the end so every voxel is covered.
/// Requires dim >= patch.
inline std::vector<int> window_origins(int dim, int patch, double overlap) {
    if (patch < 1 || dim < patch)
        throw ValidationError("window_origins: need dim >= patch >= 1, got dim " +
                              std::to_string(dim) + ", patch " + std::to_string(patch));
    const int stride = std::max(1, static_cast<int>(std::floor(patch * (1.0 - overlap))));
    std::vector<int> out;
    for (int o = 0; o + patch < dim; o += stride)
        out.push_back(o);
    out.push_back(dim - patch); // never a duplicate: loop origins stop short of it
    return out;
}

namespace detail {

struct Padding {
    std::array<int, 3> lo{0, 0, 0};
    std::array<int, 3> hi{0, 0, 0};
    bool any() const { return lo != std::array<int, 3>{0, 0, 0} || hi != std::array<int, 3>{0, 0, 0}; }
};

/// Symmetric padding that brings every axis up to the patch size.
inline Padding padding_for(const std::array<int, 3>& shape, const std::array<int, 3>& patch) {
    Padding p;
    for (int a = 0; a < 3; ++a) {
        const int missing = std::max(0, patch[a] - shape[a]);
        p.lo[a] = missing / 2;
        p.hi[a] = missing - p.lo[a];
    }
    return p;
}

inline MultiChannelVolume pad_zero(const MultiChannelVolume& in, const Padding& pad) {
    MultiChannelVolume out;
    out.geometry = subgeometry(in.geometry, {-pad.lo[0], -pad.lo[1], -pad.lo[2]},
                               {in.geometry.shape[0] + pad.lo[0] + pad.hi[0],
                                in.geometry.shape[1] + pad.lo[1] + pad.hi[1],
                                in.geometry.shape[2] + pad.lo[2] + pad.hi[2]});
    out.channels.resize(in.channels.size());
    for (std::size_t c = 0; c < in.channels.size(); ++c) {
        out.channels[c].assign(out.geometry.voxel_count(), 0.0f);
        for (int i0 = 0; i0 < in.geometry.shape[0]; ++i0)
            for (int i1 = 0; i1 < in.geometry.shape[1]; ++i1) {
                const std::size_t src = in.geometry.index(i0, i1, 0);
                const std::size_t dst =
                    out.geometry.index(i0 + pad.lo[0], i1 + pad.lo[1], pad.lo[2]);
                std::copy_n(in.channels[c].begin() + src, in.geometry.shape[2],
                            out.channels[c].begin() + dst);
            }
    }
    return out;
}

inline MultiChannelVolume crop_patch(const MultiChannelVolume& in, const std::array<int, 3>& lo,
                                     const std::array<int, 3>& shape) {
    MultiChannelVolume out;
    out.geometry = subgeometry(in.geometry, lo, shape);
    out.channels.resize(in.channels.size());
    for (std::size_t c = 0; c < in.channels.size(); ++c) {
        out.channels[c].resize(out.geometry.voxel_count());
        for (int i0 = 0; i0 < shape[0]; ++i0)
            for (int i1 = 0; i1 < shape[1]; ++i1) {
                const std::size_t src = in.geometry.index(lo[0] + i0, lo[1] + i1, lo[2]);
                const std::size_t dst = out.geometry.index(i0, i1, 0);
                std::copy_n(in.channels[c].begin() + src, shape[2], out.channels[c].begin() + dst);
            }
    }
    return out;
}

} // namespace detail

/// Tile the volume with overlapping windows, run the predictor on each, and
/// average the predictions voxel-wise (uniform weights). Volumes smaller than
/// the patch are zero-padded symmetrically and the padding cropped away.
inline ProbabilityVolume sliding_window_infer(const MultiChannelVolume& image,
                                              const Predictor& predictor,
                                              const SlidingWindowConfig& cfg = {}) {
    cfg.validate();
    image.validate();
    if (static_cast<int>(image.channels.size()) != predictor.input_channels())
        throw ValidationError("sliding_window_infer: predictor expects " +
                              std::to_string(predictor.input_channels()) + " channels, image has " +
                              std::to_string(image.channels.size()));

    const detail::Padding pad = detail::padding_for(image.geometry.shape, cfg.patch_size);
    const MultiChannelVolume* work = &image;
    MultiChannelVolume padded;
    if (pad.any()) {
        padded = detail::pad_zero(image, pad);
        work = &padded;
    }
    const Geometry& wg = work->geometry;

    std::array<std::vector<int>, 3> origins;
    for (int a = 0; a < 3; ++a)
        origins[a] = window_origins(wg.shape[a], cfg.patch_size[a], cfg.overlap);

    std::array<std::vector<double>, 3> sums;
    for (auto& s : sums)
        s.assign(wg.voxel_count(), 0.0);
    std::vector<std::uint32_t> coverage(wg.voxel_count(), 0);

    for (const int o0 : origins[0])
        for (const int o1 : origins[1])
            for (const int o2 : origins[2]) {
                const MultiChannelVolume patch =
                    detail::crop_patch(*work, {o0, o1, o2}, cfg.patch_size);
                const ProbabilityVolume pred = predictor.predict(patch);
                if (pred.geometry.shape != patch.geometry.shape)
                    throw ContractViolation(
                        "predictor returned shape " + shape_string(pred.geometry) +
                        " for a patch of shape " + shape_string(patch.geometry));
                pred.validate();
                for (int i0 = 0; i0 < cfg.patch_size[0]; ++i0)
                    for (int i1 = 0; i1 < cfg.patch_size[1]; ++i1) {
                        const std::size_t dst = wg.index(o0 + i0, o1 + i1, o2);
                        const std::size_t src = pred.geometry.index(i0, i1, 0);
                        for (int c = 0; c < 3; ++c) {
                            const auto& pc = pred.channels[c];
                            auto& sc = sums[c];
                            for (int i2 = 0; i2 < cfg.patch_size[2]; ++i2)
                                sc[dst + i2] += pc[src + i2];
                        }
                        for (int i2 = 0; i2 < cfg.patch_size[2]; ++i2)
                            coverage[dst + i2] += 1;
                    }
            }

    ProbabilityVolume out;
    out.geometry = image.geometry;
    for (int c = 0; c < 3; ++c)
        out.channels[c].resize(image.geometry.voxel_count());
    for (int i0 = 0; i0 < image.geometry.shape[0]; ++i0)
        for (int i1 = 0; i1 < image.geometry.shape[1]; ++i1)
            for (int i2 = 0; i2 < image.geometry.shape[2]; ++i2) {
                const std::size_t dst = image.geometry.index(i0, i1, i2);
                const std::size_t src = wg.index(i0 + pad.lo[0], i1 + pad.lo[1], i2 + pad.lo[2]);
                for (int c = 0; c < 3; ++c)
                    out.channels[c][dst] =
                        static_cast<float>(sums[c][src] / static_cast<double>(coverage[src]));
            }
    return out;
}

// ---------------------------------------------------------------------------
// Test-time augmentation
// ---------------------------------------------------------------------------

struct TtaConfig {
    bool flip_sagittal = true; // axis 0 in canonical orientation
    bool flip_coronal = true;  // axis 1 in canonical orientation
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(noise_sigma >= 0.0))
            throw ValidationError("tta: noise_sigma must be >= 0, got " +
                                  std::to_string(noise_sigma));
    }
};

struct FlipCombo {
    bool sagittal = false;
    bool coronal = false;

    /// Stable identifier used in file names: f, fs, fc or fsc.
    std::string code() const {
        std::string out = "f";
        if (sagittal)
            out += 's';
        if (coronal)
            out += 'c';
        return out;
    }

    friend bool operator==(const FlipCombo&, const FlipCombo&) = default;
};

/// All 2^(enabled axes) flip combinations, in a fixed order (identity first,
/// sagittal toggling fastest).
inline std::vector<FlipCombo> enumerate_flips(const TtaConfig& cfg) {
    std::vector<FlipCombo> out{{false, false}};
    if (cfg.flip_sagittal)
        out.push_back({true, false});
    if (cfg.flip_coronal) {
        out.push_back({false, true});
        if (cfg.flip_sagittal)
            out.push_back({true, true});
    }
    return out;
}

namespace detail {

template <typename T>
void flip_channel(std::vector<T>& data, const Geometry& g, const FlipCombo& combo) {
    const int n0 = g.shape[0], n1 = g.shape[1], n2 = g.shape[2];
    std::vector<T> tmp(data.size());
    for (int i0 = 0; i0 < n0; ++i0) {
        const int j0 = combo.sagittal ? n0 - 1 - i0 : i0;
        for (int i1 = 0; i1 < n1; ++i1) {
            const int j1 = combo.coronal ? n1 - 1 - i1 : i1;
            std::copy_n(data.begin() + g.index(i0, i1, 0), n2, tmp.begin() + g.index(j0, j1, 0));
        }
    }
    data = std::move(tmp);
}

/// Deterministic standard-normal stream: Box-Muller over mt19937_64, immune
/// to the standard library's unspecified normal_distribution algorithm.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}
    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        } while (u1 <= 0.0);
        const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        constexpr double kTwoPi = 6.283185307179586476925286766559;
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(kTwoPi * u2);
        have_spare_ = true;
        return r * std::cos(kTwoPi * u2);
    }

private:
    std::mt19937_64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace detail

/// Flip a multi-channel image in index space (sagittal = axis 0, coronal =
/// axis 1). Self-inverse.
inline MultiChannelVolume flip_image(const MultiChannelVolume& in, const FlipCombo& combo) {
    MultiChannelVolume out = in;
    for (auto& c : out.channels)
        detail::flip_channel(c, out.geometry, combo);
    return out;
}

inline ProbabilityVolume flip_prediction(const ProbabilityVolume& in, const FlipCombo& combo) {
    ProbabilityVolume out = in;
    for (auto& c : out.channels)
        detail::flip_channel(c, out.geometry, combo);
    return out;
}

/// Average sliding-window predictions over every flip combination, optionally
/// perturbing each variant with seeded Gaussian noise. Fully deterministic
/// for a fixed seed.
inline ProbabilityVolume tta_infer(const MultiChannelVolume& image, const Predictor& predictor,
                                   const TtaConfig& cfg = {},
                                   const SlidingWindowConfig& swcfg = {}) {
    cfg.validate();
    const std::vector<FlipCombo> combos = enumerate_flips(cfg);

    std::array<std::vector<double>, 3> sums;
    ProbabilityVolume out;
    out.geometry = image.geometry;
    for (auto& s : sums)
        s.assign(image.geometry.voxel_count(), 0.0);

    for (std::size_t k = 0; k < combos.size(); ++k) {
        MultiChannelVolume variant = flip_image(image, combos[k]);
        if (cfg.noise_sigma > 0.0) {
            detail::GaussianStream noise(detail::mix_seed(cfg.seed, k));
            for (auto& channel : variant.channels)
                for (auto& value : channel)
                    value = static_cast<float>(value + cfg.noise_sigma * noise.next());
        }
        const ProbabilityVolume pred =
            flip_prediction(sliding_window_infer(variant, predictor, swcfg), combos[k]);
        for (int c = 0; c < 3; ++c)
            for (std::size_t v = 0; v < sums[c].size(); ++v)
                sums[c][v] += pred.channels[c][v];
    }
    const double n = static_cast<double>(combos.size());
    for (int c = 0; c < 3; ++c) {
        out.channels[c].resize(sums[c].size());
        for (std::size_t v = 0; v < sums[c].size(); ++v)
            out.channels[c][v] = static_cast<float>(sums[c][v] / n);
    }
    return out;
}

/// Average externally produced per-flip predictions after inverting each
/// flip. Input order does not matter.
inline ProbabilityVolume
fuse_flip_variants(const std::vector<std::pair<FlipCombo, ProbabilityVolume>>& variants) {
    if (variants.empty())
        throw ValidationError("fuse_flip_variants: no inputs");
    std::array<std::vector<double>, 3> sums;
    ProbabilityVolume out;
    out.geometry = variants.front().second.geometry;
    for (auto& s : sums)
        s.assign(out.geometry.voxel_count(), 0.0);
    for (const auto& [combo, pred] : variants) {
        pred.validate();
        require_same_geometry(out.geometry, pred.geometry, "fuse_flip_variants");
        const ProbabilityVolume unflipped = flip_prediction(pred, combo);
        for (int c = 0; c < 3; ++c)
            for (std::size_t v = 0; v < sums[c].size(); ++v)
                sums[c][v] += unflipped.channels[c][v];
    }
    const double n = static_cast<double>(variants.size());
    for (int c = 0; c < 3; ++c) {
        out.channels[c].resize(sums[c].size());
        for (std::size_t v = 0; v < sums[c].size(); ++v)
            out.channels[c][v] = static_cast<float>(sums[c][v] / n);
    }
    return out;
}

/// End-to-end single-patient inference: (TTA) sliding window, binarize at
/// 0.5, reconstruct the label map, optionally apply the cleanup rules.
inline LabelVolume predict_patient(const MultiChannelVolume& image, const Predictor& predictor,
                                   const SlidingWindowConfig& swcfg = {},
                                   const TtaConfig* tta = nullptr,
                                   const PostprocessRules* rules = nullptr,
                                   const LabelCodes& codes = {}) {
    const ProbabilityVolume prob = tta ? tta_infer(image, predictor, *tta, swcfg)
                                       : sliding_window_infer(image, predictor, swcfg);
    LabelVolume labels = unmerge_labels(binarize(prob, 0.5), codes);
    if (rules)
        labels = apply_rules(labels, *rules, codes);
    return labels;
}

} // namespace lesionkit
