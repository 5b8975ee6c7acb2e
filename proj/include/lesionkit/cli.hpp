#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "lesionkit/config.hpp"
#include "lesionkit/ensemble.hpp"
#include "lesionkit/inference.hpp"
#include "lesionkit/losses.hpp"
#include "lesionkit/metrics.hpp"
#include "lesionkit/nifti.hpp"
#include "lesionkit/postprocess.hpp"
#include "lesionkit/preprocess.hpp"
#include "lesionkit/util.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {
namespace cli {

namespace fs = std::filesystem;

namespace detail {

inline bool is_nifti_name(const std::string& name) {
    const auto ends_with = [&](const char* suffix) {
        const std::size_t n = std::string(suffix).size();
        return name.size() > n && name.compare(name.size() - n, n, suffix) == 0;
    };
    return ends_with(".nii") || ends_with(".nii.gz");
}

inline std::string case_stem(const std::string& name) {
    if (name.size() > 7 && name.compare(name.size() - 7, 7, ".nii.gz") == 0)
        return name.substr(0, name.size() - 7);
    if (name.size() > 4 && name.compare(name.size() - 4, 4, ".nii") == 0)
        return name.substr(0, name.size() - 4);
    return name;
}

/// stem -> file path for every NIfTI directly inside dir, sorted by stem.
inline std::map<std::string, fs::path> case_map(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    std::error_code ec;
    fs::directory_iterator it(dir, ec);
    if (ec)
        throw IoError("cannot list directory " + dir.string() + ": " + ec.message());
    for (const auto& entry : it) {
        if (!entry.is_regular_file())
            continue;
        const std::string name = entry.path().filename().string();
        if (!is_nifti_name(name))
            continue;
        const std::string stem = case_stem(name);
        if (out.count(stem))
            throw ValidationError("directory " + dir.string() + " holds case '" + stem +
                                  "' more than once (.nii and .nii.gz)");
        out.emplace(stem, entry.path());
    }
    return out;
}

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    f.flush();
    if (!f)
        throw IoError("cannot write " + path.string());
}

inline void emit_json(const Json& j, const std::string& output_path) {
    const std::string text = j.dump(2) + "\n";
    if (output_path.empty())
        std::cout << text;
    else
        write_text(output_path, text);
}

/// Run fn(0..n-1) on a small worker pool. Exceptions are rethrown in index
/// order once every worker has drained.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    const std::size_t workers =
        std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n)
                    return;
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& t : pool)
        t.join();
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

/// Sniff whether a NIfTI file stores a multi-channel (4D) payload.
inline bool is_probability_file(const std::string& path) {
    const auto bytes = nifti::detail::read_maybe_gz(path);
    if (bytes.size() < sizeof(nifti::Header))
        throw FormatError("nifti: " + path + ": file shorter than a nifti-1 header");
    nifti::Header h;
    std::memcpy(&h, bytes.data(), sizeof(h));
    if (h.sizeof_hdr != 348)
        throw FormatError("nifti: " + path + ": bad sizeof_hdr=" + std::to_string(h.sizeof_hdr));
    return h.dim[0] >= 4 && h.dim[4] > 1;
}

/// Load a prediction as probabilities: 4D files directly, 3D label maps as
/// hard 0/1 channels.
inline ProbabilityVolume load_as_probability(const std::string& path, const LabelCodes& codes) {
    if (is_probability_file(path))
        return load_probability_nifti(path);
    const ChannelMask mask = merge_labels(load_label_nifti(path, codes), codes);
    ProbabilityVolume out;
    out.geometry = mask.geometry;
    for (int c = 0; c < 3; ++c) {
        out.channels[c].resize(mask.channels[c].size());
        for (std::size_t v = 0; v < mask.channels[c].size(); ++v)
            out.channels[c][v] = mask.channels[c][v] ? 1.0f : 0.0f;
    }
    return out;
}

/// Load a prediction as a hard channel mask: 4D files are binarized at 0.5,
/// 3D label maps merged.
inline ChannelMask load_as_mask(const std::string& path, const LabelCodes& codes) {
    if (is_probability_file(path))
        return binarize(load_probability_nifti(path), 0.5);
    return merge_labels(load_label_nifti(path, codes), codes);
}

/// Any payload with nonzero voxels, as a binary mask.
inline BinaryVolume load_binary_mask(const std::string& path) {
    const ScalarVolume s = load_scalar_nifti(path);
    BinaryVolume out;
    out.geometry = s.geometry;
    out.data.resize(s.data.size());
    for (std::size_t v = 0; v < s.data.size(); ++v)
        out.data[v] = s.data[v] != 0.0f ? 1 : 0;
    return out;
}

inline Json stats_json(std::vector<double> values) {
    values.erase(std::remove_if(values.begin(), values.end(),
                                [](double v) { return std::isnan(v); }),
                 values.end());
    Json j;
    j["count"] = values.size();
    if (values.empty()) {
        j["mean"] = nullptr;
        j["median"] = nullptr;
        j["std"] = nullptr;
        return j;
    }
    double mean = 0.0;
    for (const double v : values)
        mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (const double v : values)
        var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    std::sort(values.begin(), values.end());
    j["mean"] = mean;
    j["median"] = percentile_sorted(values, 50.0);
    j["std"] = std::sqrt(var);
    return j;
}

struct LabelFieldRef {
    const char* name;
    double (*get)(const LabelMetrics&);
};

inline constexpr std::array<LabelFieldRef, 6> kLabelFields{{
    {"ldsc", [](const LabelMetrics& m) { return m.ldsc; }},
    {"cdsc", [](const LabelMetrics& m) { return m.cdsc; }},
    {"lhd95", [](const LabelMetrics& m) { return m.lhd95; }},
    {"chd95", [](const LabelMetrics& m) { return m.chd95; }},
    {"fp", [](const LabelMetrics& m) { return static_cast<double>(m.fp); }},
    {"fn", [](const LabelMetrics& m) { return static_cast<double>(m.fn); }},
}};

struct MeanFieldRef {
    const char* name;
    double (*get)(const MeanMetrics&);
};

inline constexpr std::array<MeanFieldRef, 6> kMeanFields{{
    {"ldsc", [](const MeanMetrics& m) { return m.ldsc; }},
    {"cdsc", [](const MeanMetrics& m) { return m.cdsc; }},
    {"lhd95", [](const MeanMetrics& m) { return m.lhd95; }},
    {"chd95", [](const MeanMetrics& m) { return m.chd95; }},
    {"fp", [](const MeanMetrics& m) { return m.fp; }},
    {"fn", [](const MeanMetrics& m) { return m.fn; }},
}};

inline Json aggregate_json(const std::vector<MetricsReport>& reports) {
    Json metrics;
    for (int c = 0; c < 3; ++c) {
        Json block;
        for (const auto& field : kLabelFields) {
            std::vector<double> values;
            values.reserve(reports.size());
            for (const auto& r : reports)
                values.push_back(field.get(r.labels[c]));
            block[field.name] = stats_json(std::move(values));
        }
        metrics[channel_name(c)] = block;
    }
    Json block;
    for (const auto& field : kMeanFields) {
        std::vector<double> values;
        values.reserve(reports.size());
        for (const auto& r : reports)
            values.push_back(field.get(r.mean));
        block[field.name] = stats_json(std::move(values));
    }
    metrics["mean"] = block;

    Json j;
    j["patients"] = reports.size();
    j["metrics"] = metrics;
    return j;
}

// -----------------------------------------------------------------------
// Subcommand state
// -----------------------------------------------------------------------

struct PreprocessArgs {
    std::string t1w, t1c, t2w, flair, labels;
    bool subtraction = false;
    std::string out_dir;
};

struct ComponentsArgs {
    std::string input;
    int connectivity = 26;
    std::string output;
};

struct EvalArgs {
    std::string gt_dir, pred_dir;
    std::string out_dir;
};

struct PostprocessArgs {
    std::string input;
    std::string out_dir;
};

struct EnsembleArgs {
    std::vector<std::string> inputs;
    std::string method = "mean";
    double threshold = 0.5;
    std::string output;
};

struct InferArgs {
    std::vector<std::string> channels;
    std::string predictor = "identity";
    std::vector<float> values{1.0f, 1.0f, 1.0f};
    std::vector<float> cutoffs{0.5f, 0.7f, 0.9f};
    bool tta = false;
    bool postprocess = false;
    std::string precomputed_dir, case_name;
    std::string output;
    std::string save_prob;
};

struct LossArgs {
    std::string pred, gt;
    std::string output;
};

struct MaskSmallArgs {
    std::string input_dir;
    std::string out_dir;
    std::int64_t tau = 1000;
};

inline void run_preprocess(const PreprocessArgs& a, const ToolkitConfig& cfg) {
    const fs::path out_dir = a.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(a.out_dir);
    ensure_dir(out_dir);

    const std::array<std::pair<const char*, const std::string*>, 4> inputs{{
        {"t1w", &a.t1w}, {"t1c", &a.t1c}, {"t2w", &a.t2w}, {"flair", &a.flair}}};
    std::map<std::string, ScalarVolume> rescaled;
    for (const auto& [role, path] : inputs) {
        if (path->empty())
            continue;
        bool degenerate = false;
        ScalarVolume v = percentile_rescale(load_scalar_nifti(*path), cfg.rescale, &degenerate);
        if (degenerate)
            std::cerr << "warning: " << *path
                      << ": degenerate intensity range, channel rescaled to all zeros\n";
        save_nifti(v, (out_dir / (std::string(role) + ".nii.gz")).string());
        rescaled.emplace(role, std::move(v));
    }
    if (a.subtraction) {
        if (!rescaled.count("t1c") || !rescaled.count("t1w"))
            throw ValidationError("preprocess: --subtraction needs both --t1c and --t1w");
        save_nifti(subtraction_sequence(rescaled.at("t1c"), rescaled.at("t1w")),
                   (out_dir / "subtraction.nii.gz").string());
    }
    if (!a.labels.empty()) {
        const ChannelMask mask = merge_labels(load_label_nifti(a.labels, cfg.labels), cfg.labels);
        ProbabilityVolume channels;
        channels.geometry = mask.geometry;
        for (int c = 0; c < 3; ++c) {
            channels.channels[c].resize(mask.channels[c].size());
            for (std::size_t v = 0; v < mask.channels[c].size(); ++v)
                channels.channels[c][v] = mask.channels[c][v] ? 1.0f : 0.0f;
        }
        save_nifti(channels, (out_dir / "merged.nii.gz").string());
    }
    std::cout << "preprocess: wrote " << out_dir.string() << "\n";
}

inline void run_components(const ComponentsArgs& a) {
    const BinaryVolume mask = load_binary_mask(a.input);
    const ComponentLabeling cc = connected_components(mask, connectivity_from(a.connectivity));
    Json j;
    j["count"] = cc.count;
    Json list = Json::array();
    for (std::int32_t id = 1; id <= cc.count; ++id) {
        Json item;
        item["id"] = id;
        item["size"] = cc.sizes[id - 1];
        item["bbox_lo"] = cc.bounding_boxes[id - 1].lo;
        item["bbox_hi"] = cc.bounding_boxes[id - 1].hi;
        list.push_back(std::move(item));
    }
    j["components"] = std::move(list);
    emit_json(j, a.output);
}

inline void run_eval(const EvalArgs& a, const ToolkitConfig& cfg) {
    const auto gt_cases = case_map(a.gt_dir);
    const auto pred_cases = case_map(a.pred_dir);
    if (gt_cases.empty())
        throw ValidationError("eval: no NIfTI files in " + a.gt_dir);

    std::vector<std::pair<std::string, std::array<fs::path, 2>>> cases;
    std::string missing;
    for (const auto& [stem, gt_path] : gt_cases) {
        const auto it = pred_cases.find(stem);
        if (it == pred_cases.end()) {
            missing += missing.empty() ? stem : ", " + stem;
            continue;
        }
        cases.push_back({stem, {gt_path, it->second}});
    }
    if (!missing.empty())
        throw ValidationError("eval: no prediction for: " + missing);
    for (const auto& [stem, path] : pred_cases)
        if (!gt_cases.count(stem))
            std::cerr << "warning: prediction '" << stem << "' has no ground truth, skipped\n";

    const fs::path out_dir = a.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(a.out_dir);
    ensure_dir(out_dir);

    std::vector<MetricsReport> reports(cases.size());
    parallel_for(cases.size(), cfg.jobs, [&](std::size_t i) {
        const LabelVolume gt = load_label_nifti(cases[i].second[0].string(), cfg.labels);
        const LabelVolume pred = load_label_nifti(cases[i].second[1].string(), cfg.labels);
        reports[i] = evaluate_patient(gt, pred, cfg.eval, cfg.labels);
    });

    for (std::size_t i = 0; i < cases.size(); ++i)
        write_text(out_dir / (cases[i].first + ".metrics.json"),
                   metrics_report_to_json(reports[i]).dump(2) + "\n");
    write_text(out_dir / "aggregate.json", aggregate_json(reports).dump(2) + "\n");
    std::cout << "eval: " << cases.size() << " case(s) -> " << out_dir.string() << "\n";
}

inline void run_postprocess(const PostprocessArgs& a, const ToolkitConfig& cfg) {
    const fs::path input(a.input);
    const fs::path out_dir = a.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(a.out_dir);
    ensure_dir(out_dir);

    std::vector<std::pair<std::string, fs::path>> files;
    std::error_code ec;
    if (fs::is_directory(input, ec)) {
        for (const auto& [stem, path] : case_map(input))
            files.push_back({path.filename().string(), path});
    } else {
        files.push_back({input.filename().string(), input});
    }
    if (files.empty())
        throw ValidationError("postprocess: no NIfTI files in " + a.input);
    if (fs::weakly_canonical(out_dir, ec) == fs::weakly_canonical(input.parent_path(), ec) &&
        !fs::is_directory(input, ec))
        throw ValidationError("postprocess: refusing to overwrite the input file in place");

    parallel_for(files.size(), cfg.jobs, [&](std::size_t i) {
        const LabelVolume labels = load_label_nifti(files[i].second.string(), cfg.labels);
        save_nifti(apply_rules(labels, cfg.postprocess, cfg.labels),
                   (out_dir / files[i].first).string());
    });
    std::cout << "postprocess: " << files.size() << " file(s) -> " << out_dir.string() << "\n";
}

inline void run_ensemble(const EnsembleArgs& a, const ToolkitConfig& cfg) {
    if (a.inputs.empty())
        throw ValidationError("ensemble: no input predictions");
    if (a.output.empty())
        throw ValidationError("ensemble: --output is required");

    if (a.method == "mean") {
        std::vector<ProbabilityVolume> inputs;
        inputs.reserve(a.inputs.size());
        for (const auto& path : a.inputs)
            inputs.push_back(load_as_probability(path, cfg.labels));
        save_nifti(unmerge_labels(mean_ensemble(inputs, a.threshold), cfg.labels), a.output);
    } else if (a.method == "simple") {
        std::vector<ChannelMask> inputs;
        inputs.reserve(a.inputs.size());
        for (const auto& path : a.inputs)
            inputs.push_back(load_as_mask(path, cfg.labels));
        save_nifti(unmerge_labels(simple_ensemble(inputs, cfg.simple), cfg.labels), a.output);
    } else if (a.method == "max") {
        ProbabilityVolume fused;
        for (std::size_t i = 0; i < a.inputs.size(); ++i) {
            if (!is_probability_file(a.inputs[i]))
                throw ValidationError("ensemble: --method max needs probability inputs, got a "
                                      "label volume: " +
                                      a.inputs[i]);
            ProbabilityVolume p = load_probability_nifti(a.inputs[i]);
            fused = i == 0 ? std::move(p) : max_ensemble(fused, p);
        }
        save_nifti(fused, a.output);
    } else {
        throw ValidationError("ensemble: unknown method '" + a.method +
                              "' (expected mean, simple or max)");
    }
    std::cout << "ensemble: " << a.inputs.size() << " input(s) -> " << a.output << "\n";
}

inline void run_infer(const InferArgs& a, const ToolkitConfig& cfg) {
    if (a.output.empty())
        throw ValidationError("infer: --output is required");
    ProbabilityVolume prob;

    if (!a.precomputed_dir.empty() || !a.case_name.empty()) {
        if (a.precomputed_dir.empty() || a.case_name.empty())
            throw ValidationError("infer: --precomputed and --case must be given together");
        std::vector<std::pair<FlipCombo, ProbabilityVolume>> variants;
        for (const FlipCombo& combo : enumerate_flips(cfg.tta)) {
            const fs::path path =
                fs::path(a.precomputed_dir) / (a.case_name + "_" + combo.code() + ".nii.gz");
            variants.push_back({combo, load_probability_nifti(path.string())});
        }
        prob = fuse_flip_variants(variants);
    } else {
        if (a.channels.empty())
            throw ValidationError("infer: provide --channels or --precomputed/--case");
        std::vector<ScalarVolume> vols;
        vols.reserve(a.channels.size());
        for (const auto& path : a.channels)
            vols.push_back(load_scalar_nifti(path));
        const MultiChannelVolume image = stack_channels(vols);

        std::unique_ptr<Predictor> predictor;
        const int nch = static_cast<int>(a.channels.size());
        if (a.predictor == "constant") {
            if (a.values.size() != 3)
                throw ValidationError("infer: --values needs 3 numbers");
            predictor = std::make_unique<ConstantPredictor>(
                nch, std::array<float, 3>{a.values[0], a.values[1], a.values[2]});
        } else if (a.predictor == "identity") {
            predictor = std::make_unique<IdentityPredictor>(nch);
        } else if (a.predictor == "threshold") {
            if (a.cutoffs.size() != 3)
                throw ValidationError("infer: --cutoffs needs 3 numbers");
            predictor = std::make_unique<ThresholdPredictor>(
                nch, std::array<float, 3>{a.cutoffs[0], a.cutoffs[1], a.cutoffs[2]});
        } else {
            throw ValidationError("infer: unknown predictor '" + a.predictor +
                                  "' (expected constant, identity or threshold)");
        }
        prob = a.tta ? tta_infer(image, *predictor, cfg.tta, cfg.sliding_window)
                     : sliding_window_infer(image, *predictor, cfg.sliding_window);
    }

    if (!a.save_prob.empty())
        save_nifti(prob, a.save_prob);
    LabelVolume labels = unmerge_labels(binarize(prob, 0.5), cfg.labels);
    if (a.postprocess)
        labels = apply_rules(labels, cfg.postprocess, cfg.labels);
    save_nifti(labels, a.output);
    std::cout << "infer: wrote " << a.output << "\n";
}

inline void run_loss(const LossArgs& a, const ToolkitConfig& cfg) {
    const ProbabilityVolume pred = load_probability_nifti(a.pred);
    const ChannelMask gt = merge_labels(load_label_nifti(a.gt, cfg.labels), cfg.labels);

    Json j;
    Json soft, bce, blob;
    KahanSum blob_sum;
    for (int c = 0; c < 3; ++c) {
        const ScalarVolume pc = pred.channel(c);
        const BinaryVolume gc = gt.channel(c);
        soft[channel_name(c)] = soft_dice_loss(pc, gc, cfg.loss);
        bce[channel_name(c)] = binary_cross_entropy(pc, gc, cfg.loss);
        const double b = blob_loss(pc, gc, cfg.loss);
        blob[channel_name(c)] = b;
        blob_sum.add(b);
    }
    blob["mean"] = blob_sum.value() / 3.0;
    j["soft_dice"] = soft;
    j["bce"] = bce;
    j["dice_ce"] = dice_ce_loss(pred, gt, cfg.loss);
    j["blob"] = blob;
    j["final"] = final_loss(pred, gt, cfg.loss);
    emit_json(j, a.output);
}

inline void run_mask_small(const MaskSmallArgs& a, const ToolkitConfig& cfg) {
    const auto cases = case_map(a.input_dir);
    if (cases.empty())
        throw ValidationError("mask-small: no NIfTI files in " + a.input_dir);
    const fs::path out_dir = a.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(a.out_dir);
    ensure_dir(out_dir);

    std::vector<std::pair<std::string, fs::path>> files(cases.begin(), cases.end());
    std::vector<char> kept(files.size(), 0);
    parallel_for(files.size(), cfg.jobs, [&](std::size_t i) {
        const LabelVolume labels = load_label_nifti(files[i].second.string(), cfg.labels);
        const LabelVolume masked = mask_large_lesions(labels, a.tau, cfg.labels);
        if (!has_lesions(masked, cfg.labels))
            return;
        kept[i] = 1;
        save_nifti(masked, (out_dir / files[i].second.filename().string()).string());
    });

    Json j;
    j["tau"] = a.tau;
    Json kept_list = Json::array(), filtered_list = Json::array();
    for (std::size_t i = 0; i < files.size(); ++i)
        (kept[i] ? kept_list : filtered_list).push_back(files[i].first);
    j["kept"] = std::move(kept_list);
    j["filtered"] = std::move(filtered_list);
    write_text(out_dir / "mask_small_summary.json", j.dump(2) + "\n");
    std::cout << "mask-small: kept " << j["kept"].size() << " of " << files.size()
              << " case(s) -> " << out_dir.string() << "\n";
}

} // namespace detail

/// Entry point behind main(): parses argv, dispatches one subcommand, maps
/// errors to exit codes (0 ok, 1 validation, 2 I/O).
inline int run(int argc, const char* const* argv) {
    CLI::App app{"lesionkit: volumetric lesion segmentation toolkit"};
    app.set_version_flag("--version", std::string("lesionkit ") + kToolkitVersion +
                                          " (config schema " + kConfigSchemaVersion + ")");
    app.require_subcommand(1);

    std::string config_path = default_config_path();
    std::uint64_t seed = 0;
    int jobs = 0;
    app.add_option("--config", config_path, "toolkit config file (JSON)");
    auto* seed_opt = app.add_option("--seed", seed, "seed for all randomness");
    app.add_option("--jobs", jobs, "worker pool size")->check(CLI::PositiveNumber);

    detail::PreprocessArgs pre;
    auto* cmd_pre = app.add_subcommand("preprocess", "rescale channels, synthesize subtraction, "
                                                     "merge labels");
    cmd_pre->add_option("--t1w", pre.t1w, "t1w channel");
    cmd_pre->add_option("--t1c", pre.t1c, "t1c channel");
    cmd_pre->add_option("--t2w", pre.t2w, "t2w channel");
    cmd_pre->add_option("--flair", pre.flair, "flair channel");
    cmd_pre->add_option("--labels", pre.labels, "segmentation to merge");
    cmd_pre->add_flag("--subtraction", pre.subtraction, "emit (t1c-t1w)^2 channel");
    cmd_pre->add_option("--out-dir", pre.out_dir, "output directory");

    detail::ComponentsArgs comp;
    auto* cmd_comp = app.add_subcommand("components", "label a mask and emit a JSON size table");
    cmd_comp->add_option("--input", comp.input, "mask volume")->required();
    cmd_comp->add_option("--connectivity", comp.connectivity, "6, 18 or 26");
    cmd_comp->add_option("--output", comp.output, "JSON output path (default stdout)");

    detail::EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "score predictions against ground truth");
    cmd_eval->add_option("--gt", ev.gt_dir, "ground-truth directory")->required();
    cmd_eval->add_option("--pred", ev.pred_dir, "prediction directory")->required();
    cmd_eval->add_option("--out-dir", ev.out_dir, "report directory");

    detail::PostprocessArgs post;
    auto* cmd_post = app.add_subcommand("postprocess", "apply small-blob cleanup rules");
    cmd_post->add_option("--input", post.input, "label file or directory")->required();
    cmd_post->add_option("--out-dir", post.out_dir, "output directory");
    std::int64_t wt_min = -1, netc_min = -1, snfh_min = -1, et_min = -1;
    cmd_post->add_option("--wt-min", wt_min, "whole-tumor removal threshold");
    cmd_post->add_option("--netc-min", netc_min, "NETC relabel threshold");
    cmd_post->add_option("--snfh-min", snfh_min, "SNFH removal threshold");
    cmd_post->add_option("--et-min", et_min, "ET removal threshold");

    detail::EnsembleArgs ens;
    auto* cmd_ens = app.add_subcommand("ensemble", "fuse candidate segmentations");
    cmd_ens->add_option("--inputs", ens.inputs, "prediction files")->required()->expected(-1);
    cmd_ens->add_option("--method", ens.method, "mean, simple or max");
    cmd_ens->add_option("--threshold", ens.threshold, "mean-fusion threshold");
    cmd_ens->add_option("--output", ens.output, "fused output file")->required();

    detail::InferArgs inf;
    auto* cmd_inf = app.add_subcommand("infer", "sliding-window inference with a toy predictor "
                                                "or precomputed variants");
    cmd_inf->add_option("--channels", inf.channels, "input channel files, in order")->expected(-1);
    cmd_inf->add_option("--predictor", inf.predictor, "constant, identity or threshold");
    cmd_inf->add_option("--values", inf.values, "constant predictor outputs")->expected(3);
    cmd_inf->add_option("--cutoffs", inf.cutoffs, "threshold predictor cutoffs")->expected(3);
    cmd_inf->add_flag("--tta", inf.tta, "average over flip combinations");
    cmd_inf->add_flag("--postprocess", inf.postprocess, "apply cleanup rules to the labels");
    cmd_inf->add_option("--precomputed", inf.precomputed_dir, "directory of per-flip predictions");
    cmd_inf->add_option("--case", inf.case_name, "case stem inside --precomputed");
    cmd_inf->add_option("--output", inf.output, "label output file")->required();
    cmd_inf->add_option("--save-prob", inf.save_prob, "also save fused probabilities");

    detail::LossArgs loss;
    auto* cmd_loss = app.add_subcommand("loss", "evaluate loss terms on a prediction/target pair");
    cmd_loss->add_option("--pred", loss.pred, "probability volume (4D)")->required();
    cmd_loss->add_option("--gt", loss.gt, "target label volume")->required();
    cmd_loss->add_option("--output", loss.output, "JSON output path (default stdout)");

    detail::MaskSmallArgs ms;
    auto* cmd_ms = app.add_subcommand("mask-small", "remove large lesions and filter empty cases");
    cmd_ms->add_option("--input", ms.input_dir, "label directory")->required();
    cmd_ms->add_option("--out-dir", ms.out_dir, "output directory");
    cmd_ms->add_option("--tau", ms.tau, "maximum lesion size in voxels");

    // Let --config/--seed/--jobs be given after the subcommand as well.
    for (auto* cmd : {cmd_pre, cmd_comp, cmd_eval, cmd_post, cmd_ens, cmd_inf, cmd_loss, cmd_ms})
        cmd->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help / --version
            std::cout << (dynamic_cast<const CLI::CallForHelp*>(&e) ||
                                  dynamic_cast<const CLI::CallForAllHelp*>(&e)
                              ? app.help()
                              : std::string(e.what()) + "\n");
            return 0;
        }
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        ToolkitConfig cfg;
        if (!config_path.empty())
            cfg = load_toolkit_config(config_path);
        if (seed_opt->count() > 0)
            cfg.tta.seed = seed;
        if (jobs > 0)
            cfg.jobs = jobs;

        if (cmd_pre->parsed()) {
            detail::run_preprocess(pre, cfg);
        } else if (cmd_comp->parsed()) {
            detail::run_components(comp);
        } else if (cmd_eval->parsed()) {
            detail::run_eval(ev, cfg);
        } else if (cmd_post->parsed()) {
            if (wt_min >= 0)
                cfg.postprocess.wt_min_voxels = wt_min;
            if (netc_min >= 0)
                cfg.postprocess.netc_min_voxels = netc_min;
            if (snfh_min >= 0)
                cfg.postprocess.snfh_min_voxels = snfh_min;
            if (et_min >= 0)
                cfg.postprocess.et_min_voxels = et_min;
            detail::run_postprocess(post, cfg);
        } else if (cmd_ens->parsed()) {
            detail::run_ensemble(ens, cfg);
        } else if (cmd_inf->parsed()) {
            detail::run_infer(inf, cfg);
        } else if (cmd_loss->parsed()) {
            detail::run_loss(loss, cfg);
        } else if (cmd_ms->parsed()) {
            detail::run_mask_small(ms, cfg);
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace cli
} // namespace lesionkit
