#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lesionkit/metrics.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

struct SimpleConfig {
    int max_iterations = 10;
    double drop_k = 2.0;          // drop candidates scoring below mean - k*stddev
    double vote_threshold = 0.5;  // fraction of total weight needed for foreground

    void validate() const {
        if (max_iterations < 1)
            throw ValidationError("simple: max_iterations must be >= 1, got " +
                                  std::to_string(max_iterations));
        if (!(drop_k > 0.0))
            throw ValidationError("simple: drop k must be > 0, got " + std::to_string(drop_k));
        if (!(vote_threshold > 0.0 && vote_threshold < 1.0))
            throw ValidationError("simple: vote_threshold must be in (0,1), got " +
                                  std::to_string(vote_threshold));
    }
};

/// Average the probability channels and threshold the mean.
inline ChannelMask mean_ensemble(const std::vector<ProbabilityVolume>& inputs,
                                 double threshold = 0.5) {
    if (inputs.empty())
        throw ValidationError("mean_ensemble: no inputs");
    for (const auto& p : inputs) {
        p.validate();
        require_same_geometry(inputs.front().geometry, p.geometry, "mean_ensemble");
    }
    ChannelMask out;
    out.geometry = inputs.front().geometry;
    const std::size_t nvox = out.geometry.voxel_count();
    const double n = static_cast<double>(inputs.size());
    for (int c = 0; c < 3; ++c) {
        out.channels[c].resize(nvox);
        for (std::size_t v = 0; v < nvox; ++v) {
            double sum = 0.0;
            for (const auto& p : inputs)
                sum += p.channels[c][v];
            out.channels[c][v] = sum / n >= threshold ? 1 : 0;
        }
    }
    return out;
}

/// Voxel-wise maximum of two probability volumes.
inline ProbabilityVolume max_ensemble(const ProbabilityVolume& a, const ProbabilityVolume& b) {
    a.validate();
    b.validate();
    require_same_geometry(a.geometry, b.geometry, "max_ensemble");
    ProbabilityVolume out;
    out.geometry = a.geometry;
    for (int c = 0; c < 3; ++c) {
        out.channels[c].resize(a.channels[c].size());
        for (std::size_t v = 0; v < a.channels[c].size(); ++v)
            out.channels[c][v] = std::max(a.channels[c][v], b.channels[c][v]);
    }
    return out;
}

namespace detail {

/// Unweighted majority with exact ties voting foreground.
inline BinaryVolume majority_vote(const std::vector<const BinaryVolume*>& inputs) {
    BinaryVolume out;
    out.geometry = inputs.front()->geometry;
    const std::size_t nvox = out.geometry.voxel_count();
    out.data.resize(nvox);
    const std::size_t n = inputs.size();
    for (std::size_t v = 0; v < nvox; ++v) {
        std::size_t votes = 0;
        for (const auto* in : inputs)
            votes += in->data[v] != 0;
        out.data[v] = 2 * votes >= n ? 1 : 0;
    }
    return out;
}

inline BinaryVolume weighted_vote(const std::vector<const BinaryVolume*>& inputs,
                                  const std::vector<double>& weights, double threshold) {
    double total = 0.0;
    for (const double w : weights)
        total += w;
    BinaryVolume out;
    out.geometry = inputs.front()->geometry;
    const std::size_t nvox = out.geometry.voxel_count();
    out.data.resize(nvox);
    const double needed = threshold * total;
    for (std::size_t v = 0; v < nvox; ++v) {
        double vote = 0.0;
        for (std::size_t i = 0; i < inputs.size(); ++i)
            if (inputs[i]->data[v])
                vote += weights[i];
        out.data[v] = vote >= needed ? 1 : 0;
    }
    return out;
}

} // namespace detail

/// Iterative performance-weighted fusion. Starts from an unweighted majority
/// vote, then repeatedly scores each surviving candidate by its Dice overlap
/// with the current fusion, drops outliers below mean - k*stddev (population
/// stddev, never dropping the last survivor), and re-fuses by score-weighted
/// voting, until the fusion stops changing or the iteration budget runs out.
inline BinaryVolume simple_ensemble(const std::vector<BinaryVolume>& inputs,
                                    const SimpleConfig& cfg = {}) {
    cfg.validate();
    if (inputs.empty())
        throw ValidationError("simple_ensemble: no inputs");
    for (const auto& b : inputs) {
        b.validate();
        require_same_geometry(inputs.front().geometry, b.geometry, "simple_ensemble");
    }

    std::vector<const BinaryVolume*> survivors;
    survivors.reserve(inputs.size());
    for (const auto& b : inputs)
        survivors.push_back(&b);

    BinaryVolume fusion = detail::majority_vote(survivors);
    for (int it = 0; it < cfg.max_iterations; ++it) {
        std::vector<double> scores(survivors.size());
        double mean = 0.0;
        for (std::size_t i = 0; i < survivors.size(); ++i) {
            scores[i] = dice(*survivors[i], fusion);
            mean += scores[i];
        }
        mean /= static_cast<double>(scores.size());
        double var = 0.0;
        for (const double s : scores)
            var += (s - mean) * (s - mean);
        var /= static_cast<double>(scores.size());
        const double cutoff = mean - cfg.drop_k * std::sqrt(var);

        std::vector<const BinaryVolume*> kept;
        std::vector<double> kept_scores;
        for (std::size_t i = 0; i < survivors.size(); ++i) {
            if (scores[i] < cutoff)
                continue;
            kept.push_back(survivors[i]);
            kept_scores.push_back(scores[i]);
        }
        if (kept.empty()) {
            const std::size_t best = static_cast<std::size_t>(
                std::max_element(scores.begin(), scores.end()) - scores.begin());
            kept.push_back(survivors[best]);
            kept_scores.push_back(scores[best]);
        }
        survivors = std::move(kept);

        double total_weight = 0.0;
        for (const double w : kept_scores)
            total_weight += w;
        if (!(total_weight > 0.0))
            break; // all survivors disagree completely with the fusion; keep it

        BinaryVolume next = detail::weighted_vote(survivors, kept_scores, cfg.vote_threshold);
        if (next.data == fusion.data)
            break;
        fusion = std::move(next);
    }
    return fusion;
}

/// Channel-wise SIMPLE over mask stacks.
inline ChannelMask simple_ensemble(const std::vector<ChannelMask>& inputs,
                                   const SimpleConfig& cfg = {}) {
    if (inputs.empty())
        throw ValidationError("simple_ensemble: no inputs");
    ChannelMask out;
    out.geometry = inputs.front().geometry;
    for (int c = 0; c < 3; ++c) {
        std::vector<BinaryVolume> channel;
        channel.reserve(inputs.size());
        for (const auto& m : inputs)
            channel.push_back(m.channel(c));
        out.channels[c] = simple_ensemble(channel, cfg).data;
    }
    return out;
}

} // namespace lesionkit
