#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "lesionkit/ensemble.hpp"
#include "lesionkit/inference.hpp"
#include "lesionkit/losses.hpp"
#include "lesionkit/metrics.hpp"
#include "lesionkit/postprocess.hpp"
#include "lesionkit/preprocess.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

inline constexpr const char* kToolkitVersion = "1.0.0";
inline constexpr const char* kConfigSchemaVersion = "1";
inline constexpr const char* kConfigEnvVar = "LESIONKIT_CONFIG";

using Json = nlohmann::ordered_json;

struct ToolkitConfig {
    LabelCodes labels;
    RescaleConfig rescale;
    EvalConfig eval;
    PostprocessRules postprocess;
    SimpleConfig simple;
    SlidingWindowConfig sliding_window;
    TtaConfig tta;
    LossConfig loss;
    std::string output_dir = ".";
    int jobs = 1;

    void validate() const {
        labels.validate();
        rescale.validate();
        eval.validate();
        postprocess.validate();
        simple.validate();
        sliding_window.validate();
        tta.validate();
        loss.validate();
        if (jobs < 1)
            throw ValidationError("config: jobs must be >= 1, got " + std::to_string(jobs));
    }
};

namespace detail {

inline void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : allowed)
            known = known || item.key() == key;
        if (!known)
            throw ValidationError("config: unknown key '" + item.key() + "' in " + where);
    }
}

inline const Json* find(const Json& j, const char* key) {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

inline void read_double(const Json& j, const char* key, double& out, const std::string& where) {
    if (const Json* v = find(j, key)) {
        if (!v->is_number())
            throw ValidationError("config: " + where + "." + key + " must be a number");
        out = v->get<double>();
    }
}

inline void read_int(const Json& j, const char* key, int& out, const std::string& where) {
    if (const Json* v = find(j, key)) {
        if (!v->is_number_integer())
            throw ValidationError("config: " + where + "." + key + " must be an integer");
        out = v->get<int>();
    }
}

inline void read_int64(const Json& j, const char* key, std::int64_t& out,
                       const std::string& where) {
    if (const Json* v = find(j, key)) {
        if (!v->is_number_integer())
            throw ValidationError("config: " + where + "." + key + " must be an integer");
        out = v->get<std::int64_t>();
    }
}

inline void read_bool(const Json& j, const char* key, bool& out, const std::string& where) {
    if (const Json* v = find(j, key)) {
        if (!v->is_boolean())
            throw ValidationError("config: " + where + "." + key + " must be a boolean");
        out = v->get<bool>();
    }
}

inline void read_uint8(const Json& j, const char* key, std::uint8_t& out,
                       const std::string& where) {
    if (const Json* v = find(j, key)) {
        if (!v->is_number_integer() || v->get<std::int64_t>() < 0 || v->get<std::int64_t>() > 255)
            throw ValidationError("config: " + where + "." + key + " must be an integer in 0..255");
        out = static_cast<std::uint8_t>(v->get<std::int64_t>());
    }
}

inline void read_connectivity(const Json& j, const char* key, Connectivity& out,
                              const std::string& where) {
    if (const Json* v = find(j, key)) {
        if (!v->is_number_integer())
            throw ValidationError("config: " + where + "." + key + " must be 6, 18 or 26");
        out = connectivity_from(v->get<int>());
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Config parsing (strict: unknown keys are rejected at every level)
// ---------------------------------------------------------------------------

inline ToolkitConfig toolkit_config_from_json(const Json& j) {
    if (!j.is_object())
        throw ValidationError("config: document root must be an object");
    detail::reject_unknown_keys(j,
                                {"labels", "rescale", "eval", "postprocess", "simple",
                                 "sliding_window", "tta", "loss", "output_dir", "jobs"},
                                "the top level");
    ToolkitConfig cfg;

    if (const Json* v = detail::find(j, "labels")) {
        detail::reject_unknown_keys(*v, {"background", "netc", "snfh", "et"}, "labels");
        detail::read_uint8(*v, "background", cfg.labels.background, "labels");
        detail::read_uint8(*v, "netc", cfg.labels.netc, "labels");
        detail::read_uint8(*v, "snfh", cfg.labels.snfh, "labels");
        detail::read_uint8(*v, "et", cfg.labels.et, "labels");
    }
    if (const Json* v = detail::find(j, "rescale")) {
        detail::reject_unknown_keys(*v, {"lower_percentile", "upper_percentile"}, "rescale");
        detail::read_double(*v, "lower_percentile", cfg.rescale.lower_percentile, "rescale");
        detail::read_double(*v, "upper_percentile", cfg.rescale.upper_percentile, "rescale");
    }
    if (const Json* v = detail::find(j, "eval")) {
        detail::reject_unknown_keys(
            *v, {"dilation_radius", "connectivity", "hd_penalty", "score_both_empty_as_perfect"},
            "eval");
        detail::read_int(*v, "dilation_radius", cfg.eval.dilation_radius, "eval");
        detail::read_connectivity(*v, "connectivity", cfg.eval.connectivity, "eval");
        detail::read_double(*v, "hd_penalty", cfg.eval.hd_penalty, "eval");
        detail::read_bool(*v, "score_both_empty_as_perfect", cfg.eval.score_both_empty_as_perfect,
                          "eval");
    }
    if (const Json* v = detail::find(j, "postprocess")) {
        detail::reject_unknown_keys(*v,
                                    {"wt_min_voxels", "netc_min_voxels", "snfh_min_voxels",
                                     "et_min_voxels", "connectivity"},
                                    "postprocess");
        detail::read_int64(*v, "wt_min_voxels", cfg.postprocess.wt_min_voxels, "postprocess");
        detail::read_int64(*v, "netc_min_voxels", cfg.postprocess.netc_min_voxels, "postprocess");
        detail::read_int64(*v, "snfh_min_voxels", cfg.postprocess.snfh_min_voxels, "postprocess");
        detail::read_int64(*v, "et_min_voxels", cfg.postprocess.et_min_voxels, "postprocess");
        detail::read_connectivity(*v, "connectivity", cfg.postprocess.connectivity, "postprocess");
    }
    if (const Json* v = detail::find(j, "simple")) {
        detail::reject_unknown_keys(*v, {"max_iterations", "drop_k", "vote_threshold"}, "simple");
        detail::read_int(*v, "max_iterations", cfg.simple.max_iterations, "simple");
        detail::read_double(*v, "drop_k", cfg.simple.drop_k, "simple");
        detail::read_double(*v, "vote_threshold", cfg.simple.vote_threshold, "simple");
    }
    if (const Json* v = detail::find(j, "sliding_window")) {
        detail::reject_unknown_keys(*v, {"patch_size", "overlap"}, "sliding_window");
        if (const Json* p = detail::find(*v, "patch_size")) {
            if (!p->is_array() || p->size() != 3)
                throw ValidationError("config: sliding_window.patch_size must be 3 integers");
            for (int a = 0; a < 3; ++a) {
                if (!(*p)[a].is_number_integer())
                    throw ValidationError("config: sliding_window.patch_size must be 3 integers");
                cfg.sliding_window.patch_size[a] = (*p)[a].get<int>();
            }
        }
        detail::read_double(*v, "overlap", cfg.sliding_window.overlap, "sliding_window");
    }
    if (const Json* v = detail::find(j, "tta")) {
        detail::reject_unknown_keys(*v, {"flip_axes", "noise_sigma", "seed"}, "tta");
        if (const Json* axes = detail::find(*v, "flip_axes")) {
            if (!axes->is_array())
                throw ValidationError("config: tta.flip_axes must be an array");
            cfg.tta.flip_sagittal = false;
            cfg.tta.flip_coronal = false;
            for (const auto& axis : *axes) {
                if (axis == "sagittal" && !cfg.tta.flip_sagittal)
                    cfg.tta.flip_sagittal = true;
                else if (axis == "coronal" && !cfg.tta.flip_coronal)
                    cfg.tta.flip_coronal = true;
                else
                    throw ValidationError(
                        "config: tta.flip_axes entries must be unique, drawn from "
                        "{\"sagittal\", \"coronal\"}");
            }
        }
        detail::read_double(*v, "noise_sigma", cfg.tta.noise_sigma, "tta");
        if (const Json* s = detail::find(*v, "seed")) {
            if (!s->is_number_integer() || (!s->is_number_unsigned() && s->get<std::int64_t>() < 0))
                throw ValidationError("config: tta.seed must be a non-negative integer");
            cfg.tta.seed = s->get<std::uint64_t>();
        }
    }
    if (const Json* v = detail::find(j, "loss")) {
        detail::reject_unknown_keys(*v,
                                    {"smooth_epsilon", "dice_weight", "ce_weight", "global_weight",
                                     "blob_weight", "clamp_epsilon"},
                                    "loss");
        detail::read_double(*v, "smooth_epsilon", cfg.loss.smooth_epsilon, "loss");
        detail::read_double(*v, "dice_weight", cfg.loss.dice_weight, "loss");
        detail::read_double(*v, "ce_weight", cfg.loss.ce_weight, "loss");
        detail::read_double(*v, "global_weight", cfg.loss.global_weight, "loss");
        detail::read_double(*v, "blob_weight", cfg.loss.blob_weight, "loss");
        detail::read_double(*v, "clamp_epsilon", cfg.loss.clamp_epsilon, "loss");
    }
    if (const Json* v = detail::find(j, "output_dir")) {
        if (!v->is_string())
            throw ValidationError("config: output_dir must be a string");
        cfg.output_dir = v->get<std::string>();
    }
    detail::read_int(j, "jobs", cfg.jobs, "the top level");

    cfg.validate();
    return cfg;
}

inline ToolkitConfig load_toolkit_config(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw IoError("cannot open config file " + path);
    Json j;
    try {
        j = Json::parse(f);
    } catch (const Json::parse_error& e) {
        throw FormatError("config file " + path + ": " + e.what());
    }
    return toolkit_config_from_json(j);
}

inline Json toolkit_config_to_json(const ToolkitConfig& cfg) {
    Json j;
    j["labels"] = {{"background", cfg.labels.background},
                   {"netc", cfg.labels.netc},
                   {"snfh", cfg.labels.snfh},
                   {"et", cfg.labels.et}};
    j["rescale"] = {{"lower_percentile", cfg.rescale.lower_percentile},
                    {"upper_percentile", cfg.rescale.upper_percentile}};
    j["eval"] = {{"dilation_radius", cfg.eval.dilation_radius},
                 {"connectivity", to_int(cfg.eval.connectivity)},
                 {"hd_penalty", cfg.eval.hd_penalty},
                 {"score_both_empty_as_perfect", cfg.eval.score_both_empty_as_perfect}};
    j["postprocess"] = {{"wt_min_voxels", cfg.postprocess.wt_min_voxels},
                        {"netc_min_voxels", cfg.postprocess.netc_min_voxels},
                        {"snfh_min_voxels", cfg.postprocess.snfh_min_voxels},
                        {"et_min_voxels", cfg.postprocess.et_min_voxels},
                        {"connectivity", to_int(cfg.postprocess.connectivity)}};
    j["simple"] = {{"max_iterations", cfg.simple.max_iterations},
                   {"drop_k", cfg.simple.drop_k},
                   {"vote_threshold", cfg.simple.vote_threshold}};
    j["sliding_window"] = {{"patch_size", cfg.sliding_window.patch_size},
                           {"overlap", cfg.sliding_window.overlap}};
    Json axes = Json::array();
    if (cfg.tta.flip_sagittal)
        axes.push_back("sagittal");
    if (cfg.tta.flip_coronal)
        axes.push_back("coronal");
    j["tta"] = {{"flip_axes", axes}, {"noise_sigma", cfg.tta.noise_sigma}, {"seed", cfg.tta.seed}};
    j["loss"] = {{"smooth_epsilon", cfg.loss.smooth_epsilon},
                 {"dice_weight", cfg.loss.dice_weight},
                 {"ce_weight", cfg.loss.ce_weight},
                 {"global_weight", cfg.loss.global_weight},
                 {"blob_weight", cfg.loss.blob_weight},
                 {"clamp_epsilon", cfg.loss.clamp_epsilon}};
    j["output_dir"] = cfg.output_dir;
    j["jobs"] = cfg.jobs;
    return j;
}

/// Path from the environment, or empty when unset.
inline std::string default_config_path() {
    const char* env = std::getenv(kConfigEnvVar);
    return env ? env : "";
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

namespace detail {

inline Json number_or_null(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

inline Json label_metrics_to_json(const LabelMetrics& m) {
    Json j;
    j["ldsc"] = number_or_null(m.ldsc);
    j["cdsc"] = number_or_null(m.cdsc);
    j["lhd95"] = number_or_null(m.lhd95);
    j["chd95"] = number_or_null(m.chd95);
    j["fp"] = m.fp;
    j["fn"] = m.fn;
    return j;
}

} // namespace detail

inline Json metrics_report_to_json(const MetricsReport& report) {
    Json j;
    for (int c = 0; c < 3; ++c)
        j[channel_name(c)] = detail::label_metrics_to_json(report.labels[c]);
    Json mean;
    mean["ldsc"] = detail::number_or_null(report.mean.ldsc);
    mean["cdsc"] = detail::number_or_null(report.mean.cdsc);
    mean["lhd95"] = detail::number_or_null(report.mean.lhd95);
    mean["chd95"] = detail::number_or_null(report.mean.chd95);
    mean["fp"] = detail::number_or_null(report.mean.fp);
    mean["fn"] = detail::number_or_null(report.mean.fn);
    j["mean"] = mean;
    return j;
}

} // namespace lesionkit
