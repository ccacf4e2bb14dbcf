// earbio: command-line front end for the ear-biometric pipeline.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "earbio/augmentation.hpp"
#include "earbio/dataset.hpp"
#include "earbio/edge.hpp"
#include "earbio/experiment.hpp"
#include "earbio/geometry.hpp"
#include "earbio/image_io.hpp"
#include "earbio/synthetic.hpp"
#include "earbio/train.hpp"

namespace {

using namespace earbio;
using nlohmann::json;

struct Common {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out;
    std::string format = "text";
    int jobs = 1;
};

void add_common(CLI::App* sub, Common& c, bool out_required, const std::string& out_help) {
    sub->add_option("--seed", c.seed, "Seed for every random choice made by this command");
    sub->add_option("--config", c.config, "Experiment config (expcfg_v1) supplying defaults")->check(CLI::ExistingFile);
    auto* o = sub->add_option("--out", c.out, out_help);
    if (out_required) o->required();
    sub->add_option("--jobs", c.jobs, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
}

void add_format(CLI::App* sub, Common& c) {
    sub->add_option("--format", c.format, "Output format for printed results")
        ->check(CLI::IsMember({"text", "json"}));
}

ExperimentConfig base_config(const Common& c) {
    return c.config.empty() ? ExperimentConfig{} : read_experiment_config(c.config);
}

std::uint64_t seed_or(const Common& c, std::uint64_t fallback) { return c.seed.value_or(fallback); }

void print(const Common& c, const json& j, const std::string& text) {
    if (c.format == "json") std::cout << j.dump(2) << '\n';
    else std::cout << text << '\n';
}

bool is_manifest(const std::string& p) { return fs::path(p).extension() == ".json"; }

// Applies `op` to one image, or to every record of a manifest writing a new manifest.
template <typename Op>
json map_images(const std::string& in, const std::string& out, int jobs, Provenance prov, Op op) {
    if (!is_manifest(in)) {
        save_image(op(load_image(in)), out);
        return {{"input", in}, {"output", out}, {"images", 1}};
    }
    DatasetManifest m = read_manifest(in);
    const fs::path dir = out;
    fs::create_directories(dir);
    parallel_for(m.records.size(), jobs, [&](std::size_t i) {
        Record& r = m.records[i];
        try {
            const Image img = op(load_image(r.path));
            r.path = dir / (file_stem_for(r.id) + ".png");
            save_image(img, r.path);
        } catch (const Error& e) {
            throw Error(e.code(), "record " + r.id + ": " + e.what());
        }
        if (prov == Provenance::EdgeMap) r.provenance = prov;
    });
    write_manifest(m, dir / "manifest.json");
    return {{"input", in}, {"output", (dir / "manifest.json").string()}, {"images", m.records.size()}};
}

std::vector<int> parse_channels(const std::string& s) {
    std::vector<int> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw Error(Errc::InvalidArgument, "bad --channels list '" + s + "'");
        }
    }
    return v;
}

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
    return buf;
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

int run(int argc, char** argv) {
    CLI::App app{"Ear-biometric identification pipeline: zoom, Canny, augmentation, CNN training and experiments."};
    app.require_subcommand(1);
    app.fallthrough(false);

    Common c;
    int default_jobs = 1;
    try {
        default_jobs = std::stoi(env_or("EARBIO_JOBS", "1"));
    } catch (const std::exception&) {
        default_jobs = 1;
    }
    c.jobs = std::max(1, default_jobs);

    // scan
    auto* scan = app.add_subcommand("scan", "Scan a dataset tree into a manifest");
    std::string root, layout = "per-subject-dirs", pattern, profile = "earvn", name;
    scan->add_option("--root", root, "Dataset root directory")->required()->check(CLI::ExistingDirectory);
    scan->add_option("--layout", layout, "Label source")->check(CLI::IsMember({"per-subject-dirs", "filename-pattern"}));
    scan->add_option("--pattern", pattern, "Regex with one capture group (filename-pattern layout)");
    scan->add_option("--profile", profile, "ami: expect 492x702; earvn: variable resolution")
        ->check(CLI::IsMember({"ami", "earvn"}));
    scan->add_option("--name", name, "Dataset name stored in the manifest");
    add_common(scan, c, true, "Manifest to write");
    add_format(scan, c);

    // split
    auto* split = app.add_subcommand("split", "Stratified train/test split of a manifest");
    std::string in;
    double fraction = 0.2;
    split->add_option("--in", in, "Input manifest")->required()->check(CLI::ExistingFile);
    split->add_option("--fraction", fraction, "Test fraction per subject");
    add_common(split, c, true, "Manifest to write");
    add_format(split, c);

    // canny
    auto* cny = app.add_subcommand("canny", "Canny edge map of an image or of every image in a manifest");
    CannyParams cp;
    std::optional<double> sigma, low, high;
    std::optional<int> radius;
    cny->add_option("--in", in, "Image, or manifest (.json)")->required()->check(CLI::ExistingFile);
    cny->add_option("--sigma", sigma, "Gaussian sigma (default 1.4)");
    cny->add_option("--radius", radius, "Gaussian kernel radius (default ceil(3 sigma))");
    cny->add_option("--low", low, "Low threshold, fraction of the maximum (default 0.1)");
    cny->add_option("--high", high, "High threshold, fraction of the maximum (default 0.2)");
    add_common(cny, c, true, "Output image, or output directory for a manifest");
    add_format(cny, c);

    // zoom
    auto* zm = app.add_subcommand("zoom", "Centre crop and resize an image or every image in a manifest");
    std::optional<int> zw, zh;
    std::optional<double> mx, my;
    zm->add_option("--in", in, "Image, or manifest (.json)")->required()->check(CLI::ExistingFile);
    zm->add_option("--width", zw, "Target width (default 320)");
    zm->add_option("--height", zh, "Target height (default 490)");
    zm->add_option("--margin-x", mx, "Fraction of the width removed from each side");
    zm->add_option("--margin-y", my, "Fraction of the height removed from each side");
    add_common(zm, c, true, "Output image, or output directory for a manifest");
    add_format(zm, c);

    // augment
    auto* aug = app.add_subcommand("augment", "Write augmented copies of every TRAIN record");
    std::optional<int> chains;
    aug->add_option("--in", in, "Split manifest")->required()->check(CLI::ExistingFile);
    aug->add_option("--chains", chains, "Augmentations per image (default 10)");
    add_common(aug, c, true, "Output directory (images and manifest.json)");
    add_format(aug, c);

    // train
    auto* trn = app.add_subcommand("train", "Train the compact CNN on the TRAIN records of a manifest");
    std::optional<int> epochs, batch, input_size;
    std::optional<double> lr, momentum;
    std::string channels, metrics_path;
    trn->add_option("--in", in, "Split manifest")->required()->check(CLI::ExistingFile);
    trn->add_option("--epochs", epochs, "Epochs (default 10)");
    trn->add_option("--batch-size", batch, "Mini-batch size (default 16)");
    trn->add_option("--lr", lr, "Learning rate (default 0.01)");
    trn->add_option("--momentum", momentum, "SGD momentum (default 0.9)");
    trn->add_option("--input-size", input_size, "Square input side (default 64)");
    trn->add_option("--channels", channels, "Conv channels, comma separated (default 8,16,32)");
    trn->add_option("--metrics", metrics_path, "Write per-epoch metrics JSON here");
    add_common(trn, c, true, "Checkpoint to write");
    add_format(trn, c);

    // evaluate
    auto* evl = app.add_subcommand("evaluate", "Test accuracy of a checkpoint on a manifest's TEST records");
    std::string model_path;
    evl->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
    evl->add_option("--in", in, "Split manifest")->required()->check(CLI::ExistingFile);
    add_common(evl, c, false, "Also write the result JSON here");
    add_format(evl, c);

    // experiment
    auto* exp = app.add_subcommand("experiment", "Run the BM/PP/AZ/CES conditions and write reports");
    add_common(exp, c, false, "Output directory (overrides the config and EARBIO_OUTPUT_DIR)");
    exp->get_option("--config")->required();
    add_format(exp, c);

    // report
    auto* rep = app.add_subcommand("report", "Render a report.json as csv, json or a markdown table");
    std::string report_format = "markdown";
    rep->add_option("--in", in, "report.json written by experiment")->required()->check(CLI::ExistingFile);
    rep->add_option("--format", report_format, "csv, json or markdown")
        ->check(CLI::IsMember({"csv", "json", "markdown", "markdown_table", "md"}));
    rep->add_option("--out", c.out, "Write here instead of stdout");

    // synth
    auto* syn = app.add_subcommand("synth", "Generate a synthetic ear-glyph dataset (subject_XXX/img_YY.png)");
    int classes = 10, per_class = 30, width = 123, height = 175;
    syn->add_option("--classes", classes, "Subjects")->check(CLI::PositiveNumber);
    syn->add_option("--per-class", per_class, "Images per subject")->check(CLI::PositiveNumber);
    syn->add_option("--width", width, "Image width")->check(CLI::PositiveNumber);
    syn->add_option("--height", height, "Image height")->check(CLI::PositiveNumber);
    add_common(syn, c, true, "Dataset root to create");
    add_format(syn, c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return 1;
    }

    try {
        if (*scan) {
            DatasetProfile p = profile == "ami" ? DatasetProfile::ami() : DatasetProfile::earvn();
            if (layout == "filename-pattern") {
                p.layout = Layout::FilenamePattern;
                p.label_pattern = pattern;
            }
            const ScanResult res = scan_dataset(root, p, name);
            write_manifest(res.manifest, c.out);
            for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
            print(c,
                  {{"manifest", c.out},
                   {"records", res.manifest.records.size()},
                   {"class_count", res.manifest.class_count},
                   {"warnings", res.warnings.size()}},
                  std::to_string(res.manifest.records.size()) + " records, " +
                      std::to_string(res.manifest.class_count) + " classes -> " + c.out);
        } else if (*split) {
            const ExperimentConfig cfg = base_config(c);
            const double f = split->count("--fraction") ? fraction : cfg.test_fraction;
            const auto m = split_manifest(read_manifest(in), f, seed_or(c, cfg.master_seed));
            write_manifest(m, c.out);
            print(c, {{"manifest", c.out}, {"train", m.count(Split::Train)}, {"test", m.count(Split::Test)}},
                  std::to_string(m.count(Split::Train)) + " train, " + std::to_string(m.count(Split::Test)) +
                      " test -> " + c.out);
        } else if (*cny) {
            cp = base_config(c).canny;
            if (sigma) cp.sigma = *sigma;
            if (radius) cp.kernel_radius = *radius;
            if (low) cp.low_threshold = *low;
            if (high) cp.high_threshold = *high;
            if (!(cp.low_threshold < cp.high_threshold)) throw Error(Errc::ThresholdOrder, "--low must be below --high");
            const json r = map_images(in, c.out, c.jobs, Provenance::EdgeMap,
                                      [&](const Image& img) {
                                          Image e = canny(img, cp);
                                          return is_manifest(in) ? to_rgb(e) : e;
                                      });
            print(c, r, "edge maps: " + r.at("images").dump() + " -> " + r.at("output").get<std::string>());
        } else if (*zm) {
            ZoomSpec z = base_config(c).zoom;
            if (zw) z.target_w = *zw;
            if (zh) z.target_h = *zh;
            if (mx) z.margin_x = *mx;
            if (my) z.margin_y = *my;
            const json r = map_images(in, c.out, c.jobs, Provenance::Original,
                                      [&](const Image& img) { return zoom_crop(img, z); });
            print(c, r, "zoomed: " + r.at("images").dump() + " -> " + r.at("output").get<std::string>());
        } else if (*aug) {
            const ExperimentConfig cfg = base_config(c);
            AugmentConfig ac = cfg.augment;
            if (chains) ac.chains_per_image = *chains;
            const auto out = expand_dataset(read_manifest(in), ac, seed_or(c, cfg.master_seed), c.out, c.jobs);
            write_manifest(out, fs::path(c.out) / "manifest.json");
            print(c,
                  {{"manifest", (fs::path(c.out) / "manifest.json").string()},
                   {"train", out.count(Split::Train)},
                   {"test", out.count(Split::Test)}},
                  std::to_string(out.count(Split::Train)) + " train, " + std::to_string(out.count(Split::Test)) +
                      " test -> " + (fs::path(c.out) / "manifest.json").string());
        } else if (*trn) {
            const ExperimentConfig cfg = base_config(c);
            TrainConfig tc = cfg.train;
            tc.seed = seed_or(c, cfg.master_seed);
            if (epochs) tc.epochs = *epochs;
            if (batch) tc.batch_size = *batch;
            if (lr) tc.learning_rate = *lr;
            if (momentum) tc.momentum = *momentum;
            if (input_size) tc.input_size = *input_size;
            const std::vector<int> ch = channels.empty() ? cfg.conv_channels : parse_channels(channels);
            const DatasetManifest m = read_manifest(in);
            const TrainResult res = train(m, tc, ch, c.jobs);
            save_checkpoint(res.model, c.out);
            json metrics = json::array();
            for (const auto& e : res.metrics)
                metrics.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"train_accuracy", e.train_accuracy}});
            if (!metrics_path.empty()) write_text(metrics_path, metrics.dump(2) + "\n");
            const double acc = accuracy_on(res.model, m.select(Split::Train), c.jobs);
            print(c, {{"checkpoint", c.out}, {"train_accuracy", acc}, {"epochs", metrics}},
                  "train accuracy " + percent(acc) + ", final loss " +
                      std::to_string(res.metrics.back().mean_loss) + " -> " + c.out);
        } else if (*evl) {
            const TrainedModel model = load_checkpoint(model_path);
            const DatasetManifest m = read_manifest(in);
            const double acc = evaluate(model, m, c.jobs);
            const json r{{"test_accuracy", acc}, {"test_count", m.count(Split::Test)}};
            if (!c.out.empty()) write_text(c.out, r.dump(2) + "\n");
            print(c, r, "test accuracy " + percent(acc) + " on " + std::to_string(m.count(Split::Test)) + " images");
        } else if (*exp) {
            ExperimentConfig cfg = read_experiment_config(c.config);
            if (c.seed) cfg.master_seed = *c.seed;
            if (!c.out.empty()) cfg.output_dir = c.out;
            else if (const char* env = std::getenv("EARBIO_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
            if (exp->count("--jobs") || std::getenv("EARBIO_JOBS")) cfg.jobs = c.jobs;
            const ExperimentReport r = run_experiment(cfg);
            if (c.format == "json") std::cout << report_to_json(r).dump(2) << '\n';
            else std::cout << render_report(r, ReportFormat::Markdown);
            for (const auto& row : r.rows)
                if (!row.ok) std::cerr << "failed: " << condition_name(row.condition) << " r" << row.repeat << ": " << row.error << '\n';
            return r.any_failed() ? 2 : 0;
        } else if (*rep) {
            std::ifstream f(in, std::ios::binary);
            json j;
            try {
                j = json::parse(f);
            } catch (const json::exception& e) {
                throw Error(Errc::MalformedManifest, in + ": " + e.what());
            }
            const std::string text = render_report(report_from_json(j), parse_report_format(report_format));
            if (c.out.empty()) std::cout << text;
            else write_text(c.out, text);
        } else if (*syn) {
            synth::RenderOptions o;
            o.width = width;
            o.height = height;
            synth::write_glyph_dataset(c.out, classes, per_class, seed_or(c, 0), o);
            print(c, {{"root", c.out}, {"classes", classes}, {"per_class", per_class}},
                  std::to_string(classes * per_class) + " images -> " + c.out);
        }
    } catch (const Error& e) {
        std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
