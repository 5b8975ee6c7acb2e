#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "lesionkit/volume.hpp"

namespace lesionkit {

enum class Connectivity : int { c6 = 6, c18 = 18, c26 = 26 };

inline int to_int(Connectivity c) { return static_cast<int>(c); }

inline Connectivity connectivity_from(int value) {
    if (value != 6 && value != 18 && value != 26)
        throw ValidationError("connectivity must be 6, 18 or 26, got " + std::to_string(value));
    return static_cast<Connectivity>(value);
}

namespace detail {

struct Offset3 {
    int d0, d1, d2;
};

/// Neighborhood induced by the connectivity: 6 = faces, 18 = faces + edges,
/// 26 = full 3x3x3 shell.
inline std::vector<Offset3> neighbor_offsets(Connectivity conn) {
    const int max_manhattan = conn == Connectivity::c6 ? 1 : conn == Connectivity::c18 ? 2 : 3;
    std::vector<Offset3> out;
    for (int d0 = -1; d0 <= 1; ++d0)
        for (int d1 = -1; d1 <= 1; ++d1)
            for (int d2 = -1; d2 <= 1; ++d2) {
                const int manhattan = std::abs(d0) + std::abs(d1) + std::abs(d2);
                if (manhattan >= 1 && manhattan <= max_manhattan)
                    out.push_back({d0, d1, d2});
            }
    return out;
}

/// The half of the neighborhood already visited in scan order (axis 2
/// fastest, axis 0 slowest).
inline std::vector<Offset3> prior_offsets(Connectivity conn) {
    std::vector<Offset3> out;
    for (const auto& o : neighbor_offsets(conn))
        if (o.d0 < 0 || (o.d0 == 0 && (o.d1 < 0 || (o.d1 == 0 && o.d2 < 0))))
            out.push_back(o);
    return out;
}

class UnionFind {
public:
    std::int32_t make() {
        parent_.push_back(static_cast<std::int32_t>(parent_.size()));
        return parent_.back();
    }
    std::int32_t find(std::int32_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b)
            parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::int32_t> parent_;
};

} // namespace detail

struct VoxelBox {
    std::array<int, 3> lo{0, 0, 0};
    std::array<int, 3> hi{-1, -1, -1}; // inclusive

    friend bool operator==(const VoxelBox&, const VoxelBox&) = default;
};

struct ComponentLabeling {
    Geometry geometry;
    std::vector<std::int32_t> ids; // 0 background, components 1..count
    std::int32_t count = 0;
    std::vector<std::int64_t> sizes;      // sizes[k] = voxels with id k+1
    std::vector<VoxelBox> bounding_boxes; // same indexing as sizes
};

/// Two-pass scan labeling with union-find over provisional labels. Final ids
/// are dense and follow first-encounter scan order, so the result is fully
/// deterministic.
inline ComponentLabeling connected_components(const BinaryVolume& mask,
                                              Connectivity conn = Connectivity::c26) {
    mask.validate();
    const Geometry& g = mask.geometry;
    const int n0 = g.shape[0], n1 = g.shape[1], n2 = g.shape[2];

    ComponentLabeling out;
    out.geometry = g;
    out.ids.assign(g.voxel_count(), 0);

    const auto prior = detail::prior_offsets(conn);
    std::vector<std::ptrdiff_t> deltas(prior.size());
    for (std::size_t k = 0; k < prior.size(); ++k)
        deltas[k] = (static_cast<std::ptrdiff_t>(prior[k].d0) * n1 + prior[k].d1) * n2 + prior[k].d2;

    constexpr std::int32_t kUnlabeled = -1;
    std::vector<std::int32_t> provisional(g.voxel_count(), kUnlabeled);
    detail::UnionFind uf;

    std::size_t v = 0;
    for (int i0 = 0; i0 < n0; ++i0)
        for (int i1 = 0; i1 < n1; ++i1)
            for (int i2 = 0; i2 < n2; ++i2, ++v) {
                if (!mask.data[v])
                    continue;
                std::int32_t label = kUnlabeled;
                for (std::size_t k = 0; k < prior.size(); ++k) {
                    const auto& o = prior[k];
                    const int j0 = i0 + o.d0, j1 = i1 + o.d1, j2 = i2 + o.d2;
                    if (j0 < 0 || j1 < 0 || j1 >= n1 || j2 < 0 || j2 >= n2)
                        continue;
                    const std::int32_t nb = provisional[static_cast<std::size_t>(
                        static_cast<std::ptrdiff_t>(v) + deltas[k])];
                    if (nb == kUnlabeled)
                        continue;
                    if (label == kUnlabeled)
                        label = nb;
                    else
                        uf.unite(label, nb);
                }
                provisional[v] = label == kUnlabeled ? uf.make() : label;
            }

    // Second pass: map union-find roots to dense ids in scan order and gather
    // per-component statistics.
    std::vector<std::int32_t> dense; // root -> final id, 0 = not seen yet
    v = 0;
    for (int i0 = 0; i0 < n0; ++i0)
        for (int i1 = 0; i1 < n1; ++i1)
            for (int i2 = 0; i2 < n2; ++i2, ++v) {
                if (provisional[v] == kUnlabeled)
                    continue;
                const std::int32_t root = uf.find(provisional[v]);
                if (static_cast<std::size_t>(root) >= dense.size())
                    dense.resize(root + 1, 0);
                if (dense[root] == 0) {
                    dense[root] = ++out.count;
                    out.sizes.push_back(0);
                    out.bounding_boxes.push_back({{i0, i1, i2}, {i0, i1, i2}});
                }
                const std::int32_t id = dense[root];
                out.ids[v] = id;
                out.sizes[id - 1] += 1;
                auto& box = out.bounding_boxes[id - 1];
                box.lo = {std::min(box.lo[0], i0), std::min(box.lo[1], i1), std::min(box.lo[2], i2)};
                box.hi = {std::max(box.hi[0], i0), std::max(box.hi[1], i1), std::max(box.hi[2], i2)};
            }
    return out;
}

/// Radius-fold iterated unit dilation with the structuring element induced by
/// conn. Radius 0 is the identity.
inline BinaryVolume dilate(const BinaryVolume& mask, int radius,
                           Connectivity conn = Connectivity::c26) {
    if (radius < 0)
        throw ValidationError("dilate: radius must be >= 0, got " + std::to_string(radius));
    mask.validate();
    const Geometry& g = mask.geometry;
    const int n0 = g.shape[0], n1 = g.shape[1], n2 = g.shape[2];
    const auto offsets = detail::neighbor_offsets(conn);

    BinaryVolume cur = mask;
    BinaryVolume next;
    next.geometry = g;
    for (int r = 0; r < radius; ++r) {
        next.data = cur.data;
        std::size_t v = 0;
        for (int i0 = 0; i0 < n0; ++i0)
            for (int i1 = 0; i1 < n1; ++i1)
                for (int i2 = 0; i2 < n2; ++i2, ++v) {
                    if (!cur.data[v])
                        continue;
                    for (const auto& o : offsets) {
                        const int j0 = i0 + o.d0, j1 = i1 + o.d1, j2 = i2 + o.d2;
                        if (g.in_bounds(j0, j1, j2))
                            next.data[g.index(j0, j1, j2)] = 1;
                    }
                }
        std::swap(cur, next);
    }
    return cur;
}

inline BinaryVolume extract_component(const ComponentLabeling& labeling, std::int32_t id) {
    if (id < 1 || id > labeling.count)
        throw ValidationError("extract_component: id " + std::to_string(id) +
                              " out of range 1.." + std::to_string(labeling.count));
    BinaryVolume out;
    out.geometry = labeling.geometry;
    out.data.resize(labeling.ids.size());
    for (std::size_t v = 0; v < labeling.ids.size(); ++v)
        out.data[v] = labeling.ids[v] == id ? 1 : 0;
    return out;
}

} // namespace lesionkit
