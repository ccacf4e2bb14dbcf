#include <gtest/gtest.h>

#include "cli_runner.hpp"
#include "earbio/dataset.hpp"
#include "earbio/edge.hpp"
#include "earbio/experiment.hpp"
#include "earbio/image_io.hpp"
#include "earbio/synthetic.hpp"
#include "earbio/train.hpp"
#include "test_support.hpp"

using namespace earbio;
using earbio::testing::CliResult;
using earbio::testing::pixels;
using earbio::testing::read_file;
using earbio::testing::TempDir;

namespace {

const std::string kCli = EARBIO_CLI_PATH;

CliResult cli(const TempDir& dir, const std::vector<std::string>& args, const std::string& env = "") {
    return earbio::testing::run_cli(kCli, args, dir.path(), env);
}

synth::RenderOptions tiny() {
    synth::RenderOptions o;
    o.width = 24;
    o.height = 32;
    o.hair_strands = 2;
    return o;
}

fs::path write_config(const TempDir& dir, const fs::path& data, const std::string& out) {
    ExperimentConfig c;
    c.dataset.root = data;
    c.dataset.name = "glyphs";
    c.dataset.profile = DatasetProfile::earvn();
    c.augment.chains_per_image = 2;
    c.train.epochs = 2;
    c.train.batch_size = 8;
    c.train.input_size = 16;
    c.conv_channels = {4, 8};
    c.zoom = ZoomSpec{20, 28, 0.05, 0.05};
    c.test_fraction = 0.25;
    c.master_seed = 5;
    c.repeats = 1;
    c.output_dir = out;
    const fs::path p = dir / "cfg.json";
    write_text(p, config_to_json(c).dump(2));
    return p;
}

}  // namespace

TEST(Cli, HelpForEverySubcommandExitsZero) {
    TempDir dir;
    for (const char* sub : {"scan", "split", "canny", "zoom", "augment", "train", "evaluate", "experiment", "synth"}) {
        const auto r = cli(dir, {sub, "--help"});
        EXPECT_EQ(r.exit_code, 0) << sub;
        for (const char* flag : {"--seed", "--config", "--out", "--jobs", "--format"})
            EXPECT_NE(r.out.find(flag), std::string::npos) << sub << " " << flag;
    }
    const auto r = cli(dir, {"report", "--help"});
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("--format"), std::string::npos);
    EXPECT_EQ(cli(dir, {"--help"}).exit_code, 0);
}

TEST(Cli, UsageErrorsExitOne) {
    TempDir dir;
    const auto missing = cli(dir, {"canny"});
    EXPECT_EQ(missing.exit_code, 1);
    EXPECT_NE(missing.err.find("--in"), std::string::npos);
    EXPECT_NE(missing.err.find("Usage"), std::string::npos);
    EXPECT_EQ(cli(dir, {}).exit_code, 1);
    EXPECT_EQ(cli(dir, {"frobnicate"}).exit_code, 1);
    EXPECT_EQ(cli(dir, {"synth", "--out", (dir / "x").string(), "--classes", "zero"}).exit_code, 1);
    EXPECT_EQ(cli(dir, {"report", "--in", "/no/such/report.json"}).exit_code, 1);
}

TEST(Cli, RuntimeErrorsExitTwoAndNameThePath) {
    TempDir dir;
    write_text(dir / "bad.png", "not an image");
    const auto r = cli(dir, {"canny", "--in", (dir / "bad.png").string(), "--out", (dir / "e.png").string()});
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("bad.png"), std::string::npos) << r.err;

    const auto t = cli(dir, {"canny", "--in", (dir / "bad.png").string(), "--out", (dir / "e.png").string(),
                             "--low", "0.5", "--high", "0.2"});
    EXPECT_EQ(t.exit_code, 2);
}

TEST(Cli, CannyWritesTheLibraryEdgeMap) {
    TempDir dir;
    const Image img = synth::render_ear(synth::sample_shape(1, 3), 4, tiny());
    save_image(img, dir / "in.png");
    const auto r = cli(dir, {"canny", "--in", (dir / "in.png").string(), "--out", (dir / "e.png").string()});
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const Image e = load_image(dir / "e.png");
    EXPECT_EQ(e.channels(), 1);
    std::size_t ones = 0;
    for (double v : pixels(e)) {
        EXPECT_TRUE(v == 0.0 || v == 1.0);
        ones += v == 1.0;
    }
    EXPECT_GT(ones, 0u);
    EXPECT_EQ(pixels(e), pixels(canny(load_image(dir / "in.png"))));
}

TEST(Cli, ScanAmiTree) {
    TempDir dir;
    const fs::path root = dir / "ami";
    fs::create_directories(root);
    save_image(Image(492, 702, 3, 0.5), dir / "proto.png");
    for (int s = 1; s <= 100; ++s) {
        const fs::path sub = root / ("subject" + std::to_string(s));
        fs::create_directories(sub);
        for (int i = 0; i < 7; ++i) fs::copy_file(dir / "proto.png", sub / (std::to_string(i) + ".png"));
    }
    const auto r = cli(dir, {"scan", "--root", root.string(), "--profile", "ami", "--out",
                             (dir / "m.json").string(), "--format", "json"});
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("records"), 700);
    EXPECT_EQ(j.at("class_count"), 100);
    EXPECT_EQ(read_manifest(dir / "m.json").records.size(), 700u);
}

TEST(Cli, PipelineMatchesLibrary) {
    TempDir dir;
    synth::write_glyph_dataset(dir / "data", 3, 4, 7, tiny());
    const std::string m = (dir / "m.json").string(), s = (dir / "s.json").string();
    ASSERT_EQ(cli(dir, {"scan", "--root", (dir / "data").string(), "--out", m}).exit_code, 0);
    ASSERT_EQ(cli(dir, {"split", "--in", m, "--fraction", "0.25", "--seed", "11", "--out", s}).exit_code, 0);
    EXPECT_EQ(read_manifest(s), split_manifest(read_manifest(m), 0.25, 11));

    const auto t = cli(dir, {"train", "--in", s, "--out", (dir / "model.json").string(), "--epochs", "2",
                             "--input-size", "16", "--channels", "4,8", "--batch-size", "4", "--seed", "2"});
    ASSERT_EQ(t.exit_code, 0) << t.err;
    TrainConfig tc;
    tc.epochs = 2;
    tc.input_size = 16;
    tc.batch_size = 4;
    tc.seed = 2;
    const auto lib = train(read_manifest(s), tc, {4, 8});
    save_checkpoint(lib.model, dir / "lib.json");
    EXPECT_EQ(read_file(dir / "model.json"), read_file(dir / "lib.json"));

    const auto e = cli(dir, {"evaluate", "--model", (dir / "model.json").string(), "--in", s, "--format", "json"});
    ASSERT_EQ(e.exit_code, 0) << e.err;
    EXPECT_DOUBLE_EQ(nlohmann::json::parse(e.out).at("test_accuracy").get<double>(),
                     evaluate(lib.model, read_manifest(s)));
}

TEST(Cli, ConfigSuppliesDefaultsAndFlagsOverride) {
    TempDir dir;
    synth::write_glyph_dataset(dir / "data", 2, 4, 1, tiny());
    const auto cfg = write_config(dir, dir / "data", "unused");
    const std::string m = (dir / "m.json").string();
    ASSERT_EQ(cli(dir, {"scan", "--root", (dir / "data").string(), "--out", m}).exit_code, 0);
    ASSERT_EQ(cli(dir, {"split", "--in", m, "--config", cfg.string(), "--out", (dir / "a.json").string()}).exit_code, 0);
    EXPECT_EQ(read_manifest(dir / "a.json"), split_manifest(read_manifest(m), 0.25, 5));
    ASSERT_EQ(cli(dir, {"split", "--in", m, "--config", cfg.string(), "--fraction", "0.5", "--seed", "3", "--out",
                        (dir / "b.json").string()})
                  .exit_code,
              0);
    EXPECT_EQ(read_manifest(dir / "b.json"), split_manifest(read_manifest(m), 0.5, 3));
}

TEST(Cli, ExperimentIsByteReproducible) {
    TempDir dir;
    synth::write_glyph_dataset(dir / "data", 3, 4, 2, tiny());
    const auto cfg = write_config(dir, dir / "data", "from_config");
    const auto a = cli(dir, {"experiment", "--config", cfg.string(), "--out", (dir / "a").string()});
    ASSERT_EQ(a.exit_code, 0) << a.err;
    const auto b = cli(dir, {"experiment", "--config", cfg.string(), "--jobs", "3"},
                       "EARBIO_OUTPUT_DIR=" + earbio::testing::shell_quote((dir / "b").string()));
    ASSERT_EQ(b.exit_code, 0) << b.err;
    EXPECT_EQ(a.out, b.out);
    for (const char* f : {"report.csv", "report.json", "report.md"}) {
        ASSERT_TRUE(fs::exists(dir / "a" / f)) << f;
        EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
    }
    std::size_t images = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "a" / "cells")) {
        if (e.path().extension() != ".png") continue;
        const auto rel = fs::relative(e.path(), dir / "a");
        EXPECT_EQ(read_file(e.path()), read_file(dir / "b" / rel)) << rel;
        ++images;
    }
    EXPECT_GT(images, 0u);

    const auto csv = cli(dir, {"report", "--in", (dir / "a" / "report.json").string(), "--format", "csv"});
    ASSERT_EQ(csv.exit_code, 0);
    EXPECT_EQ(csv.out, read_file(dir / "a" / "report.csv"));
}
