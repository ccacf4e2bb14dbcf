#ifndef EARBIO_EXPERIMENT_HPP
#define EARBIO_EXPERIMENT_HPP

// The four experimental conditions and the runner that compares them:
//   BM  - images as they are (resized by the classifier only)
//   PP  - zoom crop + Canny edge map
//   AZ  - zoom crop + augmentation of the training split
//   CES - zoom crop + Canny + augmentation of the edge-map training split

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "earbio/augmentation.hpp"
#include "earbio/dataset.hpp"
#include "earbio/edge.hpp"
#include "earbio/train.hpp"

namespace earbio {

enum class Condition { BM, PP, AZ, CES };

NLOHMANN_JSON_SERIALIZE_ENUM(Condition, {{Condition::BM, "BM"}, {Condition::PP, "PP"}, {Condition::AZ, "AZ"},
                                         {Condition::CES, "CES"}})

inline std::string condition_name(Condition c) { return nlohmann::json(c).get<std::string>(); }

inline Condition parse_condition(const std::string& s) {
    for (Condition c : {Condition::BM, Condition::PP, Condition::AZ, Condition::CES})
        if (condition_name(c) == s) return c;
    throw Error(Errc::InvalidConfig, "unknown condition '" + s + "'");
}

inline bool uses_zoom(Condition c) noexcept { return c != Condition::BM; }
inline bool uses_canny(Condition c) noexcept { return c == Condition::PP || c == Condition::CES; }
inline bool uses_augmentation(Condition c) noexcept { return c == Condition::AZ || c == Condition::CES; }

struct DatasetSection {
    fs::path root;
    std::string name;
    DatasetProfile profile;
};

struct ExperimentConfig {
    DatasetSection dataset;
    std::vector<Condition> conditions{Condition::BM, Condition::PP, Condition::AZ, Condition::CES};
    CannyParams canny;
    ZoomSpec zoom;
    AugmentConfig augment;
    TrainConfig train;
    std::vector<int> conv_channels{8, 16, 32};
    double test_fraction = 0.2;
    std::uint64_t master_seed = 0;
    int repeats = 3;
    fs::path output_dir = "experiment_out";
    int jobs = 1;
    bool report_timing = false;  // off keeps report files byte-reproducible

    void validate() const {
        if (repeats < 1) throw Error(Errc::InvalidConfig, "repeats must be >= 1");
        if (conditions.empty()) throw Error(Errc::InvalidConfig, "no conditions selected");
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error(Errc::InvalidConfig, "test_fraction in (0, 1)");
        augment.validate();
        train.validate();
        if (!(canny.low_threshold < canny.high_threshold)) throw Error(Errc::InvalidConfig, "canny low >= high");
    }
};

inline constexpr const char* kExperimentConfigVersion = "expcfg_v1";

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    using nlohmann::json;
    const auto& p = c.dataset.profile;
    json ds{{"root", c.dataset.root.generic_string()},
            {"name", c.dataset.name},
            {"layout", p.layout == Layout::PerSubjectDirectories ? "per-subject-dirs" : "filename-pattern"},
            {"label_pattern", p.label_pattern},
            {"zoom_enabled", p.zoom_enabled}};
    ds["expected_resolution"] =
        p.expected_resolution ? json::array({p.expected_resolution->first, p.expected_resolution->second}) : json();
    const auto& a = c.augment;
    return json{
        {"version", kExperimentConfigVersion},
        {"dataset", ds},
        {"conditions", c.conditions},
        {"canny",
         {{"sigma", c.canny.sigma},
          {"kernel_radius", c.canny.radius()},
          {"low", c.canny.low_threshold},
          {"high", c.canny.high_threshold}}},
        {"zoom",
         {{"target_w", c.zoom.target_w},
          {"target_h", c.zoom.target_h},
          {"margin_x", c.zoom.margin_x},
          {"margin_y", c.zoom.margin_y}}},
        {"augment",
         {{"jitter",
           {{"brightness", a.jitter.brightness},
            {"contrast", a.jitter.contrast},
            {"saturation", a.jitter.saturation},
            {"hue", a.jitter.hue}}},
          {"max_rotation", a.max_rotation},
          {"flip_prob", a.flip_prob},
          {"crop_prob", a.crop_prob},
          {"crop_scale_range", a.crop_scale_range},
          {"affine_prob", a.affine_prob},
          {"max_shear", a.max_shear},
          {"perspective_prob", a.perspective_prob},
          {"perspective_distortion", a.perspective_distortion},
          {"grayscale_prob", a.grayscale_prob},
          {"chains_per_image", a.chains_per_image}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"learning_rate", c.train.learning_rate},
          {"momentum", c.train.momentum},
          {"input_size", c.train.input_size},
          {"conv_channels", c.conv_channels}}},
        {"test_fraction", c.test_fraction},
        {"master_seed", c.master_seed},
        {"repeats", c.repeats},
        {"output_dir", c.output_dir.generic_string()},
        {"jobs", c.jobs},
        {"report_timing", c.report_timing},
    };
}

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
    if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

}  // namespace detail

/// Missing keys keep their defaults. Relative paths resolve against `base_dir`.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = ".") {
    using detail::read_opt;
    if (!j.is_object() || !j.contains("version")) throw Error(Errc::InvalidConfig, "config needs a 'version' field");
    if (j.at("version") != kExperimentConfigVersion) {
        throw Error(Errc::SchemaVersionMismatch, "expected " + std::string(kExperimentConfigVersion));
    }
    ExperimentConfig c;
    try {
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            std::string root, layout = "per-subject-dirs";
            read_opt(d, "root", root);
            if (!root.empty()) {
                c.dataset.root = fs::path(root).is_absolute() ? fs::path(root) : (base_dir / root).lexically_normal();
            }
            read_opt(d, "name", c.dataset.name);
            read_opt(d, "layout", layout);
            if (layout == "per-subject-dirs") c.dataset.profile.layout = Layout::PerSubjectDirectories;
            else if (layout == "filename-pattern") c.dataset.profile.layout = Layout::FilenamePattern;
            else throw Error(Errc::InvalidConfig, "unknown layout '" + layout + "'");
            read_opt(d, "label_pattern", c.dataset.profile.label_pattern);
            read_opt(d, "zoom_enabled", c.dataset.profile.zoom_enabled);
            if (d.contains("expected_resolution") && !d.at("expected_resolution").is_null()) {
                const auto r = d.at("expected_resolution").get<std::vector<int>>();
                if (r.size() != 2) throw Error(Errc::InvalidConfig, "expected_resolution is [w, h]");
                c.dataset.profile.expected_resolution = std::pair{r[0], r[1]};
            }
        }
        if (j.contains("conditions")) {
            c.conditions.clear();
            for (const auto& s : j.at("conditions")) c.conditions.push_back(parse_condition(s.get<std::string>()));
        }
        if (j.contains("canny")) {
            const auto& k = j.at("canny");
            read_opt(k, "sigma", c.canny.sigma);
            read_opt(k, "kernel_radius", c.canny.kernel_radius);
            read_opt(k, "low", c.canny.low_threshold);
            read_opt(k, "high", c.canny.high_threshold);
        }
        if (j.contains("zoom")) {
            const auto& z = j.at("zoom");
            read_opt(z, "target_w", c.zoom.target_w);
            read_opt(z, "target_h", c.zoom.target_h);
            read_opt(z, "margin_x", c.zoom.margin_x);
            read_opt(z, "margin_y", c.zoom.margin_y);
        }
        if (j.contains("augment")) {
            const auto& a = j.at("augment");
            if (a.contains("jitter")) {
                const auto& jt = a.at("jitter");
                read_opt(jt, "brightness", c.augment.jitter.brightness);
                read_opt(jt, "contrast", c.augment.jitter.contrast);
                read_opt(jt, "saturation", c.augment.jitter.saturation);
                read_opt(jt, "hue", c.augment.jitter.hue);
            }
            read_opt(a, "max_rotation", c.augment.max_rotation);
            read_opt(a, "flip_prob", c.augment.flip_prob);
            read_opt(a, "crop_prob", c.augment.crop_prob);
            read_opt(a, "crop_scale_range", c.augment.crop_scale_range);
            read_opt(a, "affine_prob", c.augment.affine_prob);
            read_opt(a, "max_shear", c.augment.max_shear);
            read_opt(a, "perspective_prob", c.augment.perspective_prob);
            read_opt(a, "perspective_distortion", c.augment.perspective_distortion);
            read_opt(a, "grayscale_prob", c.augment.grayscale_prob);
            read_opt(a, "chains_per_image", c.augment.chains_per_image);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            read_opt(t, "epochs", c.train.epochs);
            read_opt(t, "batch_size", c.train.batch_size);
            read_opt(t, "learning_rate", c.train.learning_rate);
            read_opt(t, "momentum", c.train.momentum);
            read_opt(t, "input_size", c.train.input_size);
            read_opt(t, "conv_channels", c.conv_channels);
        }
        read_opt(j, "test_fraction", c.test_fraction);
        read_opt(j, "master_seed", c.master_seed);
        read_opt(j, "repeats", c.repeats);
        std::string out;
        read_opt(j, "output_dir", out);
        if (!out.empty()) {
            c.output_dir = fs::path(out).is_absolute() ? fs::path(out) : (base_dir / out).lexically_normal();
        }
        read_opt(j, "jobs", c.jobs);
        read_opt(j, "report_timing", c.report_timing);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidConfig, e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig read_experiment_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
    }
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    return config_from_json(j, dir);
}

/// FNV-1a over the canonical JSON of everything that influences results
/// (output_dir, jobs and report_timing excluded).
inline std::string config_digest(const ExperimentConfig& c) {
    auto j = config_to_json(c);
    j.erase("output_dir");
    j.erase("jobs");
    j.erase("report_timing");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

inline std::uint64_t split_seed(std::uint64_t master_seed, int repeat) {
    return combine_seed(combine_seed(master_seed, "split"), static_cast<std::uint64_t>(repeat));
}

inline std::uint64_t cell_seed(std::uint64_t master_seed, Condition c, int repeat) {
    return combine_seed(combine_seed(master_seed, condition_name(c)), static_cast<std::uint64_t>(repeat));
}

/// Materializes one condition's inputs under `workdir`. Zoom and Canny are
/// applied to every record; augmentation only ever touches TRAIN records.
inline DatasetManifest prepare_condition(const DatasetManifest& m, Condition cond, const ExperimentConfig& cfg,
                                         const fs::path& workdir, std::uint64_t seed) {
    if (cond == Condition::BM) return m;
    const bool zoom = uses_zoom(cond) && cfg.dataset.profile.zoom_enabled;
    const bool edges = uses_canny(cond);
    DatasetManifest out = m;
    if (zoom || edges) {
        const fs::path dir = workdir / (edges ? "edges" : "zoomed");
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw Error(Errc::IoError, "cannot create " + dir.string());
        parallel_for(out.records.size(), cfg.jobs, [&](std::size_t i) {
            Record& r = out.records[i];
            try {
                Image img = load_image(r.path);
                if (zoom) img = zoom_crop(img, cfg.zoom);
                if (edges) img = to_rgb(canny(img, cfg.canny));
                r.path = dir / (file_stem_for(r.id) + ".png");
                save_image(img, r.path);
            } catch (const Error& e) {
                throw Error(e.code(), "record " + r.id + ": " + e.what());
            }
            if (edges) r.provenance = Provenance::EdgeMap;
        });
    }
    if (uses_augmentation(cond)) out = expand_dataset(out, cfg.augment, seed, workdir / "augmented", cfg.jobs);
    return out;
}

struct ReportRow {
    Condition condition = Condition::BM;
    int repeat = 0;
    std::uint64_t seed = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double wall_time_s = 0.0;
    std::string config_digest;
    bool ok = true;
    std::string error;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ExperimentReport {
    std::vector<ReportRow> rows;

    bool any_failed() const {
        return std::any_of(rows.begin(), rows.end(), [](const ReportRow& r) { return !r.ok; });
    }
    std::vector<double> test_accuracies(Condition c) const {
        std::vector<double> v;
        for (const auto& r : rows)
            if (r.condition == c && r.ok) v.push_back(r.test_accuracy);
        return v;
    }
    friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline constexpr const char* kReportVersion = "report_v1";

inline nlohmann::json report_to_json(const ExperimentReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json j{{"condition", row.condition},
                         {"repeat", row.repeat},
                         {"seed", row.seed},
                         {"train_accuracy", row.train_accuracy},
                         {"test_accuracy", row.test_accuracy},
                         {"wall_time_s", row.wall_time_s},
                         {"config_digest", row.config_digest},
                         {"status", row.ok ? "ok" : "failed"}};
        if (!row.ok) j["error"] = row.error;
        rows.push_back(std::move(j));
    }
    return {{"version", kReportVersion}, {"rows", std::move(rows)}};
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("version", "") != kReportVersion) {
        throw Error(Errc::SchemaVersionMismatch, "expected " + std::string(kReportVersion));
    }
    ExperimentReport r;
    try {
        for (const auto& jr : j.at("rows")) {
            ReportRow row;
            row.condition = parse_condition(jr.at("condition").get<std::string>());
            row.repeat = jr.at("repeat").get<int>();
            row.seed = jr.at("seed").get<std::uint64_t>();
            row.train_accuracy = jr.at("train_accuracy").get<double>();
            row.test_accuracy = jr.at("test_accuracy").get<double>();
            row.wall_time_s = jr.at("wall_time_s").get<double>();
            row.config_digest = jr.at("config_digest").get<std::string>();
            row.ok = jr.at("status").get<std::string>() == "ok";
            if (jr.contains("error")) row.error = jr.at("error").get<std::string>();
            r.rows.push_back(std::move(row));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::MalformedManifest, std::string("report: ") + e.what());
    }
    return r;
}

enum class ReportFormat { Csv, Json, Markdown };

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    if (s == "markdown" || s == "md" || s == "markdown_table") return ReportFormat::Markdown;
    throw Error(Errc::InvalidArgument, "unknown report format '" + s + "'");
}

namespace detail {

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string percent(double v) { return fixed(100.0 * v, 2); }

}  // namespace detail

inline std::string render_report(const ExperimentReport& r, ReportFormat fmt) {
    if (r.rows.empty()) throw Error(Errc::InvalidArgument, "empty report");
    std::ostringstream os;
    switch (fmt) {
        case ReportFormat::Json: os << report_to_json(r).dump(2) << '\n'; break;
        case ReportFormat::Csv:
            os << "condition,repeat,seed,train_acc,test_acc,wall_time_s\n";
            for (const auto& row : r.rows) {
                os << condition_name(row.condition) << ',' << row.repeat << ',' << row.seed << ','
                   << detail::fixed(row.train_accuracy, 6) << ',' << detail::fixed(row.test_accuracy, 6) << ','
                   << detail::fixed(row.wall_time_s, 3) << '\n';
            }
            break;
        case ReportFormat::Markdown: {
            // One column group (Train | Test) per condition, one line per repeat, medians last.
            std::vector<Condition> conds;
            int max_repeat = 0;
            for (const auto& row : r.rows) {
                if (std::find(conds.begin(), conds.end(), row.condition) == conds.end()) conds.push_back(row.condition);
                max_repeat = std::max(max_repeat, row.repeat);
            }
            std::sort(conds.begin(), conds.end());
            os << "| Repeat |";
            for (Condition c : conds) os << ' ' << condition_name(c) << " Train | " << condition_name(c) << " Test |";
            os << "\n|---|";
            for (std::size_t i = 0; i < conds.size(); ++i) os << "---|---|";
            os << '\n';
            for (int rep = 0; rep <= max_repeat; ++rep) {
                os << "| " << rep << " |";
                for (Condition c : conds) {
                    auto it = std::find_if(r.rows.begin(), r.rows.end(),
                                           [&](const ReportRow& x) { return x.condition == c && x.repeat == rep; });
                    if (it == r.rows.end() || !it->ok) os << " - | - |";
                    else os << ' ' << detail::percent(it->train_accuracy) << " | " << detail::percent(it->test_accuracy) << " |";
                }
                os << '\n';
            }
            os << "| median |";
            for (Condition c : conds) {
                std::vector<double> tr;
                for (const auto& x : r.rows)
                    if (x.condition == c && x.ok) tr.push_back(x.train_accuracy);
                os << ' ' << detail::percent(median(tr)) << " | " << detail::percent(median(r.test_accuracies(c))) << " |";
            }
            os << '\n';
            break;
        }
    }
    return os.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw Error(Errc::IoError, "cannot write " + path.string());
    }
}

inline void emit_report(const ExperimentReport& r, ReportFormat fmt, const fs::path& path) {
    write_text(path, render_report(r, fmt));
}

/// Runs every condition x repeat cell. A failing cell is recorded in its row
/// and does not stop the others. Writes per-cell manifests, checkpoints and
/// metrics plus report.{csv,json,md} under cfg.output_dir.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string digest = config_digest(cfg);
    std::error_code ec;
    fs::create_directories(cfg.output_dir / "splits", ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + cfg.output_dir.string());
    write_text(cfg.output_dir / "config.json", config_to_json(cfg).dump(2) + "\n");

    const DatasetManifest scanned = scan_dataset(cfg.dataset.root, cfg.dataset.profile, cfg.dataset.name).manifest;

    std::vector<DatasetManifest> splits;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
        splits.push_back(split_manifest(scanned, cfg.test_fraction, split_seed(cfg.master_seed, rep)));
        write_manifest(splits.back(), cfg.output_dir / "splits" / ("r" + std::to_string(rep) + ".json"));
    }

    std::vector<Condition> conds = cfg.conditions;
    std::sort(conds.begin(), conds.end());
    conds.erase(std::unique(conds.begin(), conds.end()), conds.end());

    ExperimentReport report;
    for (Condition c : conds)
        for (int rep = 0; rep < cfg.repeats; ++rep) {
            ReportRow row;
            row.condition = c;
            row.repeat = rep;
            row.seed = cell_seed(cfg.master_seed, c, rep);
            row.config_digest = digest;
            report.rows.push_back(row);
        }

    // Cells run one after another; each uses cfg.jobs internally for image work.
    for (auto& row : report.rows) {
        const auto t0 = std::chrono::steady_clock::now();
        const fs::path workdir = cfg.output_dir / "cells" / (condition_name(row.condition) + "_r" + std::to_string(row.repeat));
        try {
            fs::create_directories(workdir);
            const DatasetManifest prepared =
                prepare_condition(splits[static_cast<std::size_t>(row.repeat)], row.condition, cfg, workdir, row.seed);
            write_manifest(prepared, workdir / "manifest.json");
            TrainConfig tc = cfg.train;
            tc.seed = row.seed;
            TrainResult tr = train(prepared, tc, cfg.conv_channels, cfg.jobs);
            save_checkpoint(tr.model, workdir / "model.json");
            row.train_accuracy = accuracy_on(tr.model, prepared.select(Split::Train), cfg.jobs);
            row.test_accuracy = evaluate(tr.model, prepared, cfg.jobs);
            nlohmann::json metrics = nlohmann::json::array();
            for (const auto& m : tr.metrics)
                metrics.push_back({{"epoch", m.epoch}, {"mean_loss", m.mean_loss}, {"train_accuracy", m.train_accuracy}});
            write_text(workdir / "metrics.json", metrics.dump(2) + "\n");
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
            row.train_accuracy = row.test_accuracy = 0.0;
        }
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        row.wall_time_s = cfg.report_timing ? dt.count() : 0.0;
    }

    emit_report(report, ReportFormat::Csv, cfg.output_dir / "report.csv");
    emit_report(report, ReportFormat::Json, cfg.output_dir / "report.json");
    emit_report(report, ReportFormat::Markdown, cfg.output_dir / "report.md");
    return report;
}

}  // namespace earbio

#endif
