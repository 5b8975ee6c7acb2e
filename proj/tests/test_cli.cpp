#include <catch2/catch_amalgamated.hpp>

#include <lesionkit/cli.hpp>

#include <array>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "test_support.hpp"

using namespace lesionkit;

namespace {

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr,
            std::string* err = nullptr) {
    std::ostringstream captured_out, captured_err;
    std::streambuf* old_out = std::cout.rdbuf(captured_out.rdbuf());
    std::streambuf* old_err = std::cerr.rdbuf(captured_err.rdbuf());
    const int rc = cli::run(args);
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    if (out)
        *out = captured_out.str();
    if (err)
        *err = captured_err.str();
    return rc;
}

void write_json_file(const std::string& path, const Json& j) {
    std::ofstream f(path, std::ios::binary);
    f << j.dump(2) << "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
}

void paint(LabelVolume& labels, std::uint8_t code, std::array<int, 3> lo, std::array<int, 3> hi) {
    for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
            for (int i = lo[0]; i <= hi[0]; ++i)
                labels.data[labels.geometry.index(i, j, k)] = code;
}

// Labels with a sizable blob of every class, so no metric degenerates.
LabelVolume rich_labels() {
    LabelVolume labels = support::blank_labels(support::make_geometry({16, 12, 8}));
    paint(labels, 2, {2, 2, 2}, {9, 9, 5});
    paint(labels, 1, {3, 3, 3}, {6, 6, 4});
    paint(labels, 3, {4, 4, 3}, {5, 5, 4});
    return labels;
}

Json parse_json_file(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    return Json::parse(f);
}

}  // namespace

TEST_CASE("cli surface basics", "[cli]") {
    unsetenv(kConfigEnvVar);
    std::string out;

    REQUIRE(run_cli({"lesionkit", "--version"}, &out) == 0);
    REQUIRE(out.find("lesionkit 1.0.0") != std::string::npos);

    REQUIRE(run_cli({"lesionkit", "--help"}, &out) == 0);
    REQUIRE(out.find("preprocess") != std::string::npos);

    REQUIRE(run_cli({"lesionkit"}) == 1);
    REQUIRE(run_cli({"lesionkit", "--bogus"}) == 1);
    REQUIRE(run_cli({"lesionkit", "frobnicate"}) == 1);
    REQUIRE(run_cli({"lesionkit", "components"}) == 1);  // missing required --input
}

TEST_CASE("cli components emits a blob table", "[cli]") {
    unsetenv(kConfigEnvVar);
    support::TempDir dir;

    LabelVolume mask = support::blank_labels(support::make_geometry({6, 6, 3}));
    mask.data[mask.geometry.index(0, 0, 0)] = 1;
    mask.data[mask.geometry.index(1, 0, 0)] = 1;
    mask.data[mask.geometry.index(2, 0, 0)] = 1;
    mask.data[mask.geometry.index(4, 4, 1)] = 1;
    save_nifti(mask, dir.file("mask.nii.gz"));

    SECTION("json to a file") {
        REQUIRE(run_cli({"lesionkit", "components", "--input", dir.file("mask.nii.gz"),
                         "--output", dir.file("table.json")}) == 0);
        const Json j = parse_json_file(dir.file("table.json"));
        REQUIRE(j["count"] == 2);
        REQUIRE(j["components"][0]["id"] == 1);
        REQUIRE(j["components"][0]["size"] == 3);
        REQUIRE(j["components"][0]["bbox_lo"] == Json::array({0, 0, 0}));
        REQUIRE(j["components"][0]["bbox_hi"] == Json::array({2, 0, 0}));
        REQUIRE(j["components"][1]["size"] == 1);
    }

    SECTION("json to stdout") {
        std::string out;
        REQUIRE(run_cli({"lesionkit", "components", "--input", dir.file("mask.nii.gz")}, &out) ==
                0);
        const Json j = Json::parse(out);
        REQUIRE(j["count"] == 2);
    }

    SECTION("connectivity changes the partition") {
        LabelVolume diag = support::blank_labels(support::make_geometry({4, 4, 4}));
        diag.data[diag.geometry.index(0, 0, 0)] = 1;
        diag.data[diag.geometry.index(1, 1, 1)] = 1;
        save_nifti(diag, dir.file("diag.nii.gz"));

        std::string out;
        REQUIRE(run_cli({"lesionkit", "components", "--input", dir.file("diag.nii.gz")}, &out) ==
                0);
        REQUIRE(Json::parse(out)["count"] == 1);
        REQUIRE(run_cli({"lesionkit", "components", "--input", dir.file("diag.nii.gz"),
                         "--connectivity", "6"},
                        &out) == 0);
        REQUIRE(Json::parse(out)["count"] == 2);
    }

    SECTION("bad arguments") {
        REQUIRE(run_cli({"lesionkit", "components", "--input", dir.file("mask.nii.gz"),
                         "--connectivity", "7"}) == 1);
        REQUIRE(run_cli({"lesionkit", "components", "--input", dir.file("nope.nii.gz")}) == 2);
    }
}

TEST_CASE("cli eval scores prediction directories", "[cli]") {
    unsetenv(kConfigEnvVar);
    support::TempDir dir;
    const std::string gt_dir = dir.file("gt");
    const std::string pred_dir = dir.file("pred");
    cli::detail::ensure_dir(gt_dir);
    cli::detail::ensure_dir(pred_dir);

    const LabelVolume a = rich_labels();
    LabelVolume b = support::blank_labels(support::make_geometry({12, 12, 8}));
    paint(b, 2, {4, 4, 2}, {6, 6, 4});  // single snfh lesion
    const LabelVolume b_empty = support::blank_labels(b.geometry);

    save_nifti(a, gt_dir + "/caseA.nii.gz");
    save_nifti(b, gt_dir + "/caseB.nii.gz");
    save_nifti(a, pred_dir + "/caseA.nii.gz");
    save_nifti(b_empty, pred_dir + "/caseB.nii.gz");

    SECTION("per-patient reports and the aggregate") {
        const std::string reports = dir.file("reports");
        REQUIRE(run_cli({"lesionkit", "eval", "--gt", gt_dir, "--pred", pred_dir, "--out-dir",
                         reports}) == 0);

        const Json ja = parse_json_file(reports + "/caseA.metrics.json");
        for (const char* ch : {"wt", "tc", "et"}) {
            REQUIRE(ja[ch]["ldsc"] == 1.0);
            REQUIRE(ja[ch]["cdsc"] == 1.0);
            REQUIRE(ja[ch]["lhd95"] == 0.0);
            REQUIRE(ja[ch]["fp"] == 0);
            REQUIRE(ja[ch]["fn"] == 0);
        }
        REQUIRE(ja["mean"]["ldsc"] == 1.0);

        const Json jb = parse_json_file(reports + "/caseB.metrics.json");
        REQUIRE(jb["wt"]["ldsc"] == 0.0);
        REQUIRE(jb["wt"]["fn"] == 1);
        REQUIRE(jb["wt"]["lhd95"].get<double>() == 373.13);
        REQUIRE(jb["tc"]["ldsc"] == 1.0);  // both empty scores perfect by default
        REQUIRE(jb["et"]["lhd95"] == 0.0);

        const Json agg = parse_json_file(reports + "/aggregate.json");
        REQUIRE(agg["patients"] == 2);
        const double la = ja["wt"]["ldsc"].get<double>();
        const double lb = jb["wt"]["ldsc"].get<double>();
        REQUIRE(agg["metrics"]["wt"]["ldsc"]["count"] == 2);
        REQUIRE(agg["metrics"]["wt"]["ldsc"]["mean"].get<double>() == (la + lb) / 2.0);
        REQUIRE(agg["metrics"]["wt"]["ldsc"]["median"].get<double>() == 0.5);
        REQUIRE(agg["metrics"]["wt"]["ldsc"]["std"].get<double>() == 0.5);
        REQUIRE(agg["metrics"]["wt"]["fn"]["mean"].get<double>() == 0.5);
    }

    SECTION("identical results regardless of worker count") {
        const std::string r1 = dir.file("r1"), r2 = dir.file("r2");
        REQUIRE(run_cli({"lesionkit", "eval", "--gt", gt_dir, "--pred", pred_dir, "--out-dir", r1,
                         "--jobs", "1"}) == 0);
        REQUIRE(run_cli({"lesionkit", "eval", "--gt", gt_dir, "--pred", pred_dir, "--out-dir", r2,
                         "--jobs", "3"}) == 0);
        REQUIRE(support::read_bytes(r1 + "/aggregate.json") ==
                support::read_bytes(r2 + "/aggregate.json"));
        REQUIRE(support::read_bytes(r1 + "/caseB.metrics.json") ==
                support::read_bytes(r2 + "/caseB.metrics.json"));
    }

    SECTION("a gt case without a prediction fails") {
        save_nifti(b, gt_dir + "/caseC.nii.gz");
        std::string err;
        REQUIRE(run_cli({"lesionkit", "eval", "--gt", gt_dir, "--pred", pred_dir, "--out-dir",
                         dir.file("r")},
                        nullptr, &err) == 1);
        REQUIRE(err.find("caseC") != std::string::npos);
    }

    SECTION("an extra prediction is only a warning") {
        save_nifti(b, pred_dir + "/caseD.nii.gz");
        std::string err;
        REQUIRE(run_cli({"lesionkit", "eval", "--gt", gt_dir, "--pred", pred_dir, "--out-dir",
                         dir.file("r")},
                        nullptr, &err) == 0);
        REQUIRE(err.find("caseD") != std::string::npos);
    }

    SECTION("a corrupt prediction is an i/o failure") {
        write_text_file(pred_dir + "/caseA.nii.gz", "not a nifti");
        std::error_code ec;
        std::filesystem::remove(pred_dir + "/caseA.nii", ec);
        REQUIRE(run_cli({"lesionkit", "eval", "--gt", gt_dir, "--pred", pred_dir, "--out-dir",
                         dir.file("r")}) == 2);
    }
}

TEST_CASE("cli postprocess cleans label files", "[cli]") {
    unsetenv(kConfigEnvVar);
    support::TempDir dir;

    LabelVolume labels = support::blank_labels(support::make_geometry({20, 12, 8}));
    paint(labels, 2, {2, 2, 2}, {7, 5, 4});    // 6*4*3 = 72, survives
    paint(labels, 2, {12, 8, 5}, {14, 9, 6});  // 3*2*2 = 12 < 25, erased
    const std::string input = dir.file("seg.nii.gz");
    save_nifti(labels, input);

    SECTION("default rules") {
        const std::string out_dir = dir.file("clean");
        REQUIRE(run_cli({"lesionkit", "postprocess", "--input", input, "--out-dir", out_dir}) ==
                0);
        const LabelVolume cleaned = load_label_nifti(out_dir + "/seg.nii.gz");
        REQUIRE(cleaned.data == apply_rules(labels).data);
        REQUIRE(cleaned.data[labels.geometry.index(13, 8, 5)] == 0);
        REQUIRE(cleaned.data[labels.geometry.index(3, 3, 3)] == 2);
    }

    SECTION("thresholds of zero turn the rules off") {
        const std::string out_dir = dir.file("asis");
        REQUIRE(run_cli({"lesionkit", "postprocess", "--input", input, "--out-dir", out_dir,
                         "--wt-min", "0", "--netc-min", "0", "--snfh-min", "0", "--et-min",
                         "0"}) == 0);
        REQUIRE(support::read_bytes(out_dir + "/seg.nii.gz") == support::read_bytes(input));
    }

    SECTION("refuses to overwrite the input in place") {
        REQUIRE(run_cli({"lesionkit", "postprocess", "--input", input, "--out-dir",
                         dir.path().string()}) == 1);
    }

    SECTION("a directory input processes every case") {
        const std::string in_dir = dir.file("batch");
        cli::detail::ensure_dir(in_dir);
        save_nifti(labels, in_dir + "/one.nii.gz");
        save_nifti(labels, in_dir + "/two.nii.gz");
        const std::string out_dir = dir.file("batch-clean");
        REQUIRE(run_cli({"lesionkit", "postprocess", "--input", in_dir, "--out-dir", out_dir}) ==
                0);
        REQUIRE(std::filesystem::exists(out_dir + "/one.nii.gz"));
        REQUIRE(std::filesystem::exists(out_dir + "/two.nii.gz"));
    }
}

TEST_CASE("cli ensemble fuses prediction files", "[cli]") {
    unsetenv(kConfigEnvVar);
    support::TempDir dir;
    std::mt19937_64 rng(0xC11FFull);

    const LabelVolume labels = rich_labels();
    const std::string label_file = dir.file("seg.nii.gz");
    save_nifti(labels, label_file);

    const Geometry g = support::make_geometry({7, 6, 5});
    const ProbabilityVolume p1 = support::random_probability(rng, g);
    const ProbabilityVolume p2 = support::random_probability(rng, g);
    save_nifti(p1, dir.file("p1.nii.gz"));
    save_nifti(p2, dir.file("p2.nii.gz"));

    SECTION("simple on identical label inputs is the identity") {
        const std::string fused = dir.file("fused.nii.gz");
        REQUIRE(run_cli({"lesionkit", "ensemble", "--inputs", label_file, label_file, label_file,
                         "--method", "simple", "--output", fused}) == 0);
        REQUIRE(support::read_bytes(fused) == support::read_bytes(label_file));
    }

    SECTION("mean fuses probabilities at a threshold") {
        const std::string fused = dir.file("mean.nii.gz");
        REQUIRE(run_cli({"lesionkit", "ensemble", "--inputs", dir.file("p1.nii.gz"),
                         dir.file("p2.nii.gz"), "--method", "mean", "--threshold", "0.6",
                         "--output", fused}) == 0);
        const LabelVolume got = load_label_nifti(fused);
        const LabelVolume expect = unmerge_labels(mean_ensemble({p1, p2}, 0.6));
        REQUIRE(got.data == expect.data);
    }

    SECTION("max requires probability inputs and matches the library") {
        const std::string fused = dir.file("max.nii.gz");
        REQUIRE(run_cli({"lesionkit", "ensemble", "--inputs", dir.file("p1.nii.gz"),
                         dir.file("p2.nii.gz"), "--method", "max", "--output", fused}) == 0);
        const ProbabilityVolume got = load_probability_nifti(fused);
        REQUIRE(got.channels == max_ensemble(p1, p2).channels);

        REQUIRE(run_cli({"lesionkit", "ensemble", "--inputs", label_file, label_file, "--method",
                         "max", "--output", dir.file("nope.nii.gz")}) == 1);
    }

    SECTION("bad invocations") {
        REQUIRE(run_cli({"lesionkit", "ensemble", "--inputs", label_file, "--method", "median",
                         "--output", dir.file("x.nii.gz")}) == 1);
        REQUIRE(run_cli({"lesionkit", "ensemble", "--inputs", label_file, "--method", "mean"}) ==
                1);
    }
}

TEST_CASE("cli loss reports every term", "[cli]") {
    unsetenv(kConfigEnvVar);
    support::TempDir dir;
    std::mt19937_64 rng(0x10559ull);

    const LabelVolume gt_labels = rich_labels();
    const ProbabilityVolume pred = support::random_probability(rng, gt_labels.geometry);
    save_nifti(gt_labels, dir.file("gt.nii.gz"));
    save_nifti(pred, dir.file("pred.nii.gz"));

    std::string out;
    REQUIRE(run_cli({"lesionkit", "loss", "--pred", dir.file("pred.nii.gz"), "--gt",
                     dir.file("gt.nii.gz")},
                    &out) == 0);
    const Json j = Json::parse(out);

    const ProbabilityVolume lp = load_probability_nifti(dir.file("pred.nii.gz"));
    const ChannelMask lg = merge_labels(load_label_nifti(dir.file("gt.nii.gz")));
    const LossConfig cfg;
    for (int c = 0; c < 3; ++c) {
        REQUIRE(j["soft_dice"][channel_name(c)].get<double>() ==
                soft_dice_loss(lp.channel(c), lg.channel(c), cfg));
        REQUIRE(j["bce"][channel_name(c)].get<double>() ==
                binary_cross_entropy(lp.channel(c), lg.channel(c), cfg));
        REQUIRE(j["blob"][channel_name(c)].get<double>() ==
                blob_loss(lp.channel(c), lg.channel(c), cfg));
    }
    REQUIRE(j["dice_ce"].get<double>() == dice_ce_loss(lp, lg, cfg));
    REQUIRE(j["final"].get<double>() == final_loss(lp, lg, cfg));
    REQUIRE_THAT(j["final"].get<double>(),
                 Catch::Matchers::WithinAbs(
                     2.0 * j["dice_ce"].get<double>() + j["blob"]["mean"].get<double>(), 1e-12));

    REQUIRE(run_cli({"lesionkit", "loss", "--pred", dir.file("missing.nii.gz"), "--gt",
                     dir.file("gt.nii.gz")}) == 2);
}

TEST_CASE("cli mask-small keeps only small-lesion cases", "[cli]") {
    unsetenv(kConfigEnvVar);
    support::TempDir dir;
    const std::string in_dir = dir.file("labels");
    cli::detail::ensure_dir(in_dir);

    LabelVolume small = support::blank_labels(support::make_geometry({12, 10, 8}));
    paint(small, 3, {2, 2, 2}, {3, 3, 3});  // 8 voxels
    LabelVolume big = support::blank_labels(support::make_geometry({12, 10, 8}));
    paint(big, 2, {2, 2, 2}, {6, 6, 3});  // 50 voxels
    save_nifti(small, in_dir + "/caseA.nii.gz");
    save_nifti(big, in_dir + "/caseB.nii.gz");

    const std::string out_dir = dir.file("filtered");
    REQUIRE(run_cli({"lesionkit", "mask-small", "--input", in_dir, "--out-dir", out_dir, "--tau",
                     "10"}) == 0);

    const Json j = parse_json_file(out_dir + "/mask_small_summary.json");
    REQUIRE(j["tau"] == 10);
    REQUIRE(j["kept"] == Json::array({"caseA"}));
    REQUIRE(j["filtered"] == Json::array({"caseB"}));
    REQUIRE(std::filesystem::exists(out_dir + "/caseA.nii.gz"));
    REQUIRE_FALSE(std::filesystem::exists(out_dir + "/caseB.nii.gz"));

    const LabelVolume kept = load_label_nifti(out_dir + "/caseA.nii.gz");
    REQUIRE(kept.data == mask_large_lesions(small, 10).data);
}

TEST_CASE("cli infer drives the toy predictors", "[cli]") {
    unsetenv(kConfigEnvVar);
    support::TempDir dir;
    std::mt19937_64 rng(0x1A2FEull);

    Json cfg_json;
    cfg_json["sliding_window"] = {{"patch_size", Json::array({8, 8, 4})}, {"overlap", 0.5}};
    const std::string config = dir.file("config.json");
    write_json_file(config, cfg_json);

    const Geometry g = support::make_geometry({12, 10, 6});
    ScalarVolume image = support::blank_scalar(g);
    for (auto& v : image.data)
        v = static_cast<float>(support::unit_double(rng));
    const std::string image_file = dir.file("image.nii.gz");
    save_nifti(image, image_file);

    SECTION("constant zero gives pure background") {
        const std::string seg = dir.file("seg.nii.gz");
        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--channels", image_file,
                         "--predictor", "constant", "--values", "0", "0", "0", "--output",
                         seg}) == 0);
        const LabelVolume labels = load_label_nifti(seg);
        REQUIRE(std::count(labels.data.begin(), labels.data.end(), 0) ==
                static_cast<std::ptrdiff_t>(labels.data.size()));
    }

    SECTION("identity echoes the input probabilities") {
        const std::string seg = dir.file("seg.nii.gz");
        const std::string prob = dir.file("prob.nii.gz");
        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--channels", image_file,
                         "--predictor", "identity", "--output", seg, "--save-prob", prob}) == 0);
        const ProbabilityVolume fused = load_probability_nifti(prob);
        for (int c = 0; c < 3; ++c)
            REQUIRE(fused.channels[c] == image.data);
        const LabelVolume labels = load_label_nifti(seg);
        REQUIRE(labels.data == unmerge_labels(binarize(fused, 0.5)).data);
    }

    SECTION("threshold predictor recovers intensity bands") {
        ScalarVolume bands = support::blank_scalar(g);
        for (int k = 0; k < 6; ++k)
            for (int j = 0; j < 10; ++j) {
                for (int i = 0; i < 3; ++i)
                    bands.data[g.index(i, j, k)] = 0.95F;
                for (int i = 3; i < 6; ++i)
                    bands.data[g.index(i, j, k)] = 0.75F;
                for (int i = 6; i < 9; ++i)
                    bands.data[g.index(i, j, k)] = 0.55F;
            }
        save_nifti(bands, dir.file("bands.nii.gz"));
        const std::string seg = dir.file("bands-seg.nii.gz");
        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--channels",
                         dir.file("bands.nii.gz"), "--predictor", "threshold", "--output",
                         seg}) == 0);
        const LabelVolume labels = load_label_nifti(seg);
        REQUIRE(labels.data[g.index(1, 4, 3)] == 3);
        REQUIRE(labels.data[g.index(4, 4, 3)] == 1);
        REQUIRE(labels.data[g.index(7, 4, 3)] == 2);
        REQUIRE(labels.data[g.index(10, 4, 3)] == 0);
    }

    SECTION("--postprocess erases a tiny prediction") {
        ScalarVolume tiny = support::blank_scalar(support::make_geometry({2, 2, 2}));
        tiny.data.assign(tiny.data.size(), 1.0F);
        save_nifti(tiny, dir.file("tiny.nii.gz"));

        const std::string raw = dir.file("raw.nii.gz");
        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--channels",
                         dir.file("tiny.nii.gz"), "--predictor", "constant", "--values", "1", "1",
                         "1", "--output", raw}) == 0);
        const LabelVolume raw_labels = load_label_nifti(raw);
        REQUIRE(std::count(raw_labels.data.begin(), raw_labels.data.end(), 3) == 8);

        const std::string clean = dir.file("clean.nii.gz");
        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--channels",
                         dir.file("tiny.nii.gz"), "--predictor", "constant", "--values", "1", "1",
                         "1", "--postprocess", "--output", clean}) == 0);
        const LabelVolume cleaned = load_label_nifti(clean);
        REQUIRE(std::count(cleaned.data.begin(), cleaned.data.end(), 0) == 8);
    }

    SECTION("precomputed flip variants are unflipped and averaged") {
        const Geometry pg = support::make_geometry({6, 5, 4});
        const ProbabilityVolume base = support::random_probability(rng, pg);
        for (const FlipCombo& combo : enumerate_flips(TtaConfig{}))
            save_nifti(flip_prediction(base, combo),
                       dir.file("toy_" + combo.code() + ".nii.gz"));

        const std::string seg = dir.file("fused-seg.nii.gz");
        const std::string prob = dir.file("fused-prob.nii.gz");
        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--precomputed",
                         dir.path().string(), "--case", "toy", "--output", seg, "--save-prob",
                         prob}) == 0);
        REQUIRE(load_probability_nifti(prob).channels == base.channels);

        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--precomputed",
                         dir.path().string(), "--output", dir.file("x.nii.gz")}) == 1);
    }

    SECTION("bad invocations") {
        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--channels", image_file,
                         "--predictor", "resnet", "--output", dir.file("x.nii.gz")}) == 1);
        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--channels", image_file,
                         "--predictor", "constant", "--values", "0", "0", "--output",
                         dir.file("x.nii.gz")}) == 1);
        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--output",
                         dir.file("x.nii.gz")}) == 1);
    }
}

TEST_CASE("cli seed pins augmentation noise", "[cli]") {
    unsetenv(kConfigEnvVar);
    support::TempDir dir;
    std::mt19937_64 rng(0x5EEDull);

    Json cfg_json;
    cfg_json["sliding_window"] = {{"patch_size", Json::array({8, 8, 4})}, {"overlap", 0.5}};
    cfg_json["tta"] = {{"noise_sigma", 0.05}};
    const std::string config = dir.file("config.json");
    write_json_file(config, cfg_json);

    ScalarVolume image = support::blank_scalar(support::make_geometry({10, 9, 5}));
    for (auto& v : image.data)
        v = static_cast<float>(support::unit_double(rng));
    save_nifti(image, dir.file("image.nii.gz"));

    const auto infer_with_seed = [&](const std::string& seed, const std::string& out) {
        REQUIRE(run_cli({"lesionkit", "infer", "--config", config, "--seed", seed, "--channels",
                         dir.file("image.nii.gz"), "--predictor", "identity", "--tta", "--output",
                         out, "--save-prob", out + ".prob.nii.gz"}) == 0);
    };
    infer_with_seed("5", dir.file("a.nii.gz"));
    infer_with_seed("5", dir.file("b.nii.gz"));
    infer_with_seed("6", dir.file("c.nii.gz"));

    REQUIRE(support::read_bytes(dir.file("a.nii.gz")) == support::read_bytes(dir.file("b.nii.gz")));
    REQUIRE(support::read_bytes(dir.file("a.nii.gz.prob.nii.gz")) ==
            support::read_bytes(dir.file("b.nii.gz.prob.nii.gz")));
    REQUIRE(support::read_bytes(dir.file("a.nii.gz.prob.nii.gz")) !=
            support::read_bytes(dir.file("c.nii.gz.prob.nii.gz")));
}

TEST_CASE("cli config file handling", "[cli]") {
    unsetenv(kConfigEnvVar);
    support::TempDir dir;

    LabelVolume labels = support::blank_labels(support::make_geometry({16, 10, 8}));
    paint(labels, 2, {2, 2, 2}, {4, 4, 3});  // 18 voxels, default rules erase it
    const std::string input = dir.file("seg.nii.gz");
    save_nifti(labels, input);

    Json off;
    off["postprocess"] = {{"wt_min_voxels", 0},
                          {"netc_min_voxels", 0},
                          {"snfh_min_voxels", 0},
                          {"et_min_voxels", 0}};
    const std::string off_config = dir.file("off.json");
    write_json_file(off_config, off);

    SECTION("unknown keys are rejected") {
        write_json_file(dir.file("bad.json"), Json{{"bogus", 1}});
        std::string err;
        REQUIRE(run_cli({"lesionkit", "postprocess", "--input", input, "--out-dir",
                         dir.file("out"), "--config", dir.file("bad.json")},
                        nullptr, &err) == 1);
        REQUIRE(err.find("unknown key") != std::string::npos);
    }

    SECTION("invalid values are rejected") {
        write_json_file(dir.file("bad.json"),
                        Json{{"rescale",
                              {{"lower_percentile", 60.0}, {"upper_percentile", 40.0}}}});
        REQUIRE(run_cli({"lesionkit", "postprocess", "--input", input, "--out-dir",
                         dir.file("out"), "--config", dir.file("bad.json")}) == 1);
    }

    SECTION("broken json and missing files are i/o failures") {
        write_text_file(dir.file("broken.json"), "{ nope");
        REQUIRE(run_cli({"lesionkit", "postprocess", "--input", input, "--out-dir",
                         dir.file("out"), "--config", dir.file("broken.json")}) == 2);
        REQUIRE(run_cli({"lesionkit", "postprocess", "--input", input, "--out-dir",
                         dir.file("out"), "--config", dir.file("absent.json")}) == 2);
    }

    SECTION("the environment variable supplies the default config") {
        setenv(kConfigEnvVar, off_config.c_str(), 1);
        const std::string out_env = dir.file("via-env");
        REQUIRE(run_cli({"lesionkit", "postprocess", "--input", input, "--out-dir", out_env}) ==
                0);
        REQUIRE(support::read_bytes(out_env + "/seg.nii.gz") == support::read_bytes(input));

        // An explicit --config beats the environment.
        Json defaults = Json::object();
        write_json_file(dir.file("defaults.json"), defaults);
        const std::string out_flag = dir.file("via-flag");
        REQUIRE(run_cli({"lesionkit", "postprocess", "--input", input, "--out-dir", out_flag,
                         "--config", dir.file("defaults.json")}) == 0);
        const LabelVolume cleaned = load_label_nifti(out_flag + "/seg.nii.gz");
        REQUIRE(std::count(cleaned.data.begin(), cleaned.data.end(), 2) == 0);
        unsetenv(kConfigEnvVar);
    }
}
