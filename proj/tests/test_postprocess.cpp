#include <catch2/catch_amalgamated.hpp>

#include <lesionkit/postprocess.hpp>

#include <algorithm>
#include <array>
#include <cstdint>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace lesionkit;

namespace {

void paint_box(LabelVolume& labels, std::uint8_t code, std::array<int, 3> lo,
               std::array<int, 3> hi) {
    for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
            for (int i = lo[0]; i <= hi[0]; ++i)
                labels.data[labels.geometry.index(i, j, k)] = code;
}

std::int64_t count_code(const LabelVolume& labels, std::uint8_t code) {
    return std::count(labels.data.begin(), labels.data.end(), code);
}

// A slab of SNFH hosting thin islands of other labels, plus two isolated
// blobs sitting right at the whole-tumor size boundary:
//   isolated SNFH of 24   -> erased by the whole-tumor rule (24 < 25)
//   isolated SNFH of 25   -> survives everything
//   NETC line of 19       -> relabeled ET (19 < 20), then kept (19 >= 10)
//   NETC line of 20       -> survives
//   ET line of 9          -> erased (9 < 10)
//   ET line of 10         -> survives
LabelVolume boundary_phantom() {
    LabelVolume labels = support::blank_labels(support::make_geometry({30, 18, 12}));
    paint_box(labels, 2, {2, 2, 4}, {27, 15, 6});    // host slab, 26*14*3 = 1092
    paint_box(labels, 1, {3, 4, 5}, {21, 4, 5});     // netc 19
    paint_box(labels, 1, {3, 7, 5}, {22, 7, 5});     // netc 20
    paint_box(labels, 3, {3, 10, 5}, {11, 10, 5});   // et 9
    paint_box(labels, 3, {3, 13, 5}, {12, 13, 5});   // et 10
    paint_box(labels, 2, {2, 2, 9}, {5, 4, 10});     // isolated snfh 24
    paint_box(labels, 2, {10, 2, 10}, {14, 6, 10});  // isolated snfh 25
    return labels;
}

}  // namespace

TEST_CASE("apply_rules leaves background alone", "[postprocess]") {
    const LabelVolume empty = support::blank_labels(support::make_geometry({8, 8, 8}));
    const LabelVolume out = apply_rules(empty);
    REQUIRE(out.data == empty.data);
}

TEST_CASE("whole-tumor size boundary", "[postprocess]") {
    LabelVolume labels = support::blank_labels(support::make_geometry({20, 10, 12}));
    paint_box(labels, 2, {2, 2, 2}, {5, 4, 3});    // 4*3*2 = 24 voxels
    paint_box(labels, 2, {10, 2, 2}, {14, 6, 2});  // 5*5*1 = 25 voxels

    const LabelVolume out = apply_rules(labels);
    REQUIRE(out.data[labels.geometry.index(3, 3, 2)] == 0);
    REQUIRE(out.data[labels.geometry.index(12, 4, 2)] == 2);
    REQUIRE(count_code(out, 2) == 25);

    SECTION("disabling the whole-tumor rule keeps the small blob") {
        PostprocessRules rules;
        rules.wt_min_voxels = 0;
        const LabelVolume kept = apply_rules(labels, rules);
        REQUIRE(kept.data == labels.data);  // both blobs clear the snfh rule (>= 20)
    }
}

TEST_CASE("boundary phantom settles exactly as the rules dictate", "[postprocess]") {
    const LabelVolume input = boundary_phantom();
    const LabelVolume out = apply_rules(input);

    // Hand-built expectation: 24-blob gone, netc-19 now et, et-9 gone.
    LabelVolume expect = input;
    paint_box(expect, 0, {2, 2, 9}, {5, 4, 10});
    paint_box(expect, 3, {3, 4, 5}, {21, 4, 5});
    paint_box(expect, 0, {3, 10, 5}, {11, 10, 5});
    REQUIRE(out.data == expect.data);

    REQUIRE(count_code(out, 1) == 20);
    REQUIRE(count_code(out, 2) == 1092 - 19 - 20 - 9 - 10 + 25);
    REQUIRE(count_code(out, 3) == 19 + 10);

    const LabelVolume oracle_out = oracle::postprocess_oracle(input, PostprocessRules{});
    REQUIRE(out.data == oracle_out.data);

    // The surviving configuration is a fixed point.
    REQUIRE(apply_rules(out).data == out.data);
}

TEST_CASE("rules are applied in sequence on the evolving volume", "[postprocess]") {
    const Geometry g = support::make_geometry({30, 18, 10});

    SECTION("netc relabeled to et can die under the et rule") {
        LabelVolume labels = support::blank_labels(g);
        paint_box(labels, 2, {2, 2, 2}, {11, 8, 4});  // host 10*7*3 = 210
        paint_box(labels, 1, {3, 5, 3}, {7, 5, 3});   // netc 5
        const LabelVolume out = apply_rules(labels);
        REQUIRE(count_code(out, 1) == 0);
        REQUIRE(count_code(out, 3) == 0);  // 5 < 20 -> et, then 5 < 10 -> background
        REQUIRE(count_code(out, 2) == 210 - 5);
        REQUIRE(out.data == oracle::postprocess_oracle(labels, PostprocessRules{}).data);
    }

    SECTION("netc relabeled to et can rescue a small adjacent et blob") {
        LabelVolume labels = support::blank_labels(g);
        paint_box(labels, 2, {2, 2, 2}, {27, 15, 4});  // host 26*14*3
        paint_box(labels, 1, {3, 4, 3}, {21, 4, 3});   // netc 19
        paint_box(labels, 3, {3, 5, 3}, {5, 5, 3});    // et 3, touching the netc line
        const LabelVolume out = apply_rules(labels);
        REQUIRE(count_code(out, 3) == 22);  // merged 19 + 3 >= 10 survives whole
        REQUIRE(count_code(out, 1) == 0);
        REQUIRE(out.data == oracle::postprocess_oracle(labels, PostprocessRules{}).data);
    }
}

TEST_CASE("zero thresholds disable their rules", "[postprocess]") {
    const LabelVolume input = boundary_phantom();
    PostprocessRules off;
    off.wt_min_voxels = 0;
    off.netc_min_voxels = 0;
    off.snfh_min_voxels = 0;
    off.et_min_voxels = 0;
    REQUIRE(apply_rules(input, off).data == input.data);
}

TEST_CASE("rule connectivity decides component membership", "[postprocess]") {
    // Two 13-voxel lines touching only at one corner pair: a single 26-voxel
    // component under c26, two sub-threshold components under c6 or c18.
    LabelVolume labels = support::blank_labels(support::make_geometry({30, 8, 8}));
    paint_box(labels, 2, {0, 3, 3}, {12, 3, 3});
    paint_box(labels, 2, {13, 4, 4}, {25, 4, 4});

    REQUIRE(apply_rules(labels).data == labels.data);

    PostprocessRules face;
    face.connectivity = Connectivity::c6;
    REQUIRE(count_code(apply_rules(labels, face), 2) == 0);

    PostprocessRules edge;
    edge.connectivity = Connectivity::c18;
    REQUIRE(count_code(apply_rules(labels, edge), 2) == 0);
}

TEST_CASE("apply_rules honors custom codes and rejects bad input", "[postprocess]") {
    SECTION("custom label codes") {
        LabelCodes codes;
        codes.netc = 10;
        codes.snfh = 20;
        codes.et = 30;
        LabelVolume labels = support::blank_labels(support::make_geometry({12, 10, 8}));
        paint_box(labels, 20, {2, 2, 2}, {7, 7, 4});  // host 6*6*3 = 108
        paint_box(labels, 10, {3, 3, 3}, {4, 4, 3});  // netc island of 4

        PostprocessRules rules;
        rules.netc_min_voxels = 5;
        rules.snfh_min_voxels = 5;
        rules.et_min_voxels = 3;
        const LabelVolume out = apply_rules(labels, rules, codes);
        REQUIRE(count_code(out, 10) == 0);
        REQUIRE(count_code(out, 30) == 4);  // relabeled island, 4 >= 3 survives
        REQUIRE(count_code(out, 20) == 104);
        REQUIRE(out.data == oracle::postprocess_oracle(labels, rules, codes).data);
    }

    SECTION("negative threshold") {
        PostprocessRules rules;
        rules.et_min_voxels = -1;
        const LabelVolume empty = support::blank_labels(support::make_geometry({4, 4, 4}));
        REQUIRE_THROWS_AS(apply_rules(empty, rules), ValidationError);
    }

    SECTION("unknown label code") {
        LabelVolume labels = support::blank_labels(support::make_geometry({4, 4, 4}));
        labels.data[7] = 7;
        REQUIRE_THROWS_WITH(apply_rules(labels),
                            Catch::Matchers::ContainsSubstring("unknown label code"));
    }
}
