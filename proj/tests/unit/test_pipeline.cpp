#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "ldmood/error.hpp"
#include "ldmood/pipeline/commands.hpp"
#include "ldmood/pipeline/config.hpp"
#include "ldmood/scoring/scorer.hpp"
#include "tiny_run.hpp"

using namespace ldmood;
using namespace ldmood::pipeline;
namespace fs = std::filesystem;

namespace {

Context tiny_context(const fs::path& root, std::uint64_t seed = 7) {
    Context ctx;
    ctx.config = run_config_from_json(test::tiny_run_json(seed));
    ctx.layout.root = root;
    return ctx;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

}  // namespace

TEST(Config, PresetsValidate) {
    const RunConfig desk = preset("desk");
    EXPECT_NO_THROW(desk.validate());
    EXPECT_EQ(desk.scoring.t_values.size(), 10u);
    const RunConfig big = preset("paper-shape");
    EXPECT_NO_THROW(big.validate());
    EXPECT_EQ(big.vq.embedding_dim, 64u);
    EXPECT_EQ(big.unet.channels, (std::vector<std::size_t>{128, 256, 256}));
    EXPECT_EQ(big.scoring.t_values.size(), 50u);
    EXPECT_EQ(big.scoring.sampler.inference_steps, 100u);
    EXPECT_THROW(preset("huge"), ConfigError);
}

TEST(Config, JsonRoundTripKeepsHash) {
    const RunConfig a = run_config_from_json(test::tiny_run_json());
    const RunConfig b = run_config_from_json(to_json(a));
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(to_json(a), to_json(b));
    EXPECT_EQ(a.data.dims, (Dims{16, 16, 16}));
    EXPECT_EQ(a.corruption_specs().size(), 2u);
}

TEST(Config, SeedRederivesComponentSeeds) {
    const RunConfig a = run_config_from_json(test::tiny_run_json(1));
    const RunConfig b = run_config_from_json(test::tiny_run_json(2));
    EXPECT_NE(a.vq.seed, b.vq.seed);
    EXPECT_NE(a.unet.seed, b.unet.seed);
    EXPECT_NE(a.scoring.seed, b.scoring.seed);
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a), config_hash(run_config_from_json(test::tiny_run_json(1))));
}

TEST(Config, PartialSectionsKeepPresetValues) {
    const RunConfig c = run_config_from_json(nlohmann::json{{"vqvae_train", {{"max_epochs", 3}}}});
    const RunConfig d = preset("desk");
    EXPECT_EQ(c.vq_train.max_epochs, 3u);
    EXPECT_EQ(c.vq_train.batch_size, d.vq_train.batch_size);
    EXPECT_EQ(c.vq.channels, d.vq.channels);
}

TEST(Config, ValidationErrors) {
    auto expect_invalid = [](nlohmann::json patch) {
        auto j = test::tiny_run_json();
        j.merge_patch(patch);
        EXPECT_THROW(run_config_from_json(j).validate(), ConfigError) << patch.dump();
    };
    expect_invalid({{"data", {{"val", 1}}}});
    expect_invalid({{"data", {{"dims", {12, 16, 16}}}}});
    expect_invalid({{"diffusion", {{"unet", {{"in_channels", 4}}}}}});
    expect_invalid({{"corruption", {{"skip", {"flip:2"}}}}});
    expect_invalid({{"scoring", {{"t_values", {0, 150}}}}});
    expect_invalid({{"workers", 0}});
    EXPECT_THROW(run_config_from_json(nlohmann::json::array()), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json{{"data", {{"dims", {16, 16}}}}}), ConfigError);
}

TEST(Config, LoadFromFile) {
    test::TempDir dir("cfg");
    std::ofstream(dir / "c.json") << test::tiny_run_json().dump();
    EXPECT_EQ(config_hash(load_run_config(dir / "c.json")), config_hash(run_config_from_json(test::tiny_run_json())));
    std::ofstream(dir / "bad.json") << "{ nope";
    EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
    EXPECT_THROW(load_run_config(dir / "missing.json"), ConfigError);
}

TEST(Pipeline, StagesRequireUpstreamArtifacts) {
    test::TempDir dir("order");
    const Context ctx = tiny_context(dir.path());
    EXPECT_THROW(cmd_corrupt(ctx), ConfigError);
    EXPECT_THROW(cmd_train_vqvae(ctx), ConfigError);
    EXPECT_THROW(cmd_train_ddpm(ctx), ConfigError);
    EXPECT_THROW(cmd_score(ctx), ConfigError);
    EXPECT_THROW(cmd_evaluate(ctx), ConfigError);
    cmd_synth_data(ctx);
    EXPECT_THROW(cmd_train_ddpm(ctx), ConfigError);
    EXPECT_THROW(cmd_fit_stats(ctx), ConfigError);
}

class TinyRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new test::TempDir("tiny");
        const Context ctx = tiny_context(dir_->path());
        first_ = new std::vector<RunManifest>(cmd_pipeline(ctx));
    }
    static void TearDownTestSuite() {
        delete first_;
        delete dir_;
    }
    static test::TempDir* dir_;
    static std::vector<RunManifest>* first_;
};

test::TempDir* TinyRun::dir_ = nullptr;
std::vector<RunManifest>* TinyRun::first_ = nullptr;

TEST_F(TinyRun, ProducesAllArtifacts) {
    const Layout l{dir_->path()};
    for (const auto& p : {l.vqvae(), l.ddpm(), l.stats(), l.results() / "table.txt", l.results() / "table.json",
                          l.root / "config.json", l.manifest(kIdTrain), l.manifest(kNearOod)}) {
        EXPECT_TRUE(fs::exists(p)) << p;
    }
    const RunConfig c = tiny_context(dir_->path()).config;
    for (const auto& name : test_manifests(c)) {
        const auto reports = scoring::load_reports(l.scores() / (name + ".jsonl"));
        EXPECT_FALSE(reports.empty()) << name;
        for (const auto& r : reports) {
            EXPECT_FALSE(r.failed) << r.id << ": " << r.error;
            EXPECT_TRUE(fs::exists(l.scores() / r.anomaly_map)) << r.anomaly_map;
        }
    }
    EXPECT_EQ(scoring::load_reports(l.scores() / "near_ood.jsonl").size(), 6u);
    std::ifstream in(l.results() / "table.txt");
    std::stringstream text;
    text << in.rdbuf();
    EXPECT_NE(text.str().find("cuboid_field"), std::string::npos);
    EXPECT_NE(text.str().find("gaussian_noise:0.2"), std::string::npos);
    EXPECT_NE(text.str().find("flip:0"), std::string::npos);
}

TEST_F(TinyRun, RunManifestsRecordProvenance) {
    const Layout l{dir_->path()};
    const RunConfig c = tiny_context(dir_->path()).config;
    for (const auto& m : *first_) {
        const auto j = read_json(l.runs() / (m.command + ".json"));
        EXPECT_EQ(j.at("command"), m.command);
        EXPECT_EQ(j.at("config_hash"), config_hash(c));
        EXPECT_EQ(j.at("seed"), c.seed);
        EXPECT_FALSE(j.contains("wall_time_s"));
        EXPECT_TRUE(fs::exists(l.runs() / (m.command + ".timing.json")));
        EXPECT_FALSE(j.at("outputs").empty()) << m.command;
        EXPECT_FALSE(m.skipped);
    }
}

TEST_F(TinyRun, SecondRunSkipsEveryStage) {
    const Context ctx = tiny_context(dir_->path());
    const auto before = test::read_bytes(ctx.layout.scores() / "head_like_test.jsonl");
    const auto again = cmd_pipeline(ctx);
    for (const auto& m : again) EXPECT_TRUE(m.skipped) << m.command;
    EXPECT_EQ(test::read_bytes(ctx.layout.scores() / "head_like_test.jsonl"), before);
}

TEST_F(TinyRun, RescoringReproducesScores) {
    Context ctx = tiny_context(dir_->path());
    ctx.force = true;
    const auto before = test::read_bytes(ctx.layout.scores() / "near_ood.jsonl");
    const auto m = cmd_score(ctx, {kNearOod});
    EXPECT_FALSE(m.skipped);
    EXPECT_EQ(test::read_bytes(ctx.layout.scores() / "near_ood.jsonl"), before);
}

TEST_F(TinyRun, AnomalyMapCommand) {
    const Context ctx = tiny_context(dir_->path());
    const auto manifest = load_manifest(ctx.layout.manifest(kNearOod));
    const fs::path in = manifest.resolve(manifest.entries.front());
    const fs::path out = dir_->path() / "adhoc";
    cmd_anomaly_map(ctx, {in}, out);
    const Volume map = load_volume(out / (in.stem().string() + ".map.vol"));
    EXPECT_EQ(map.dims(), (Dims{16, 16, 16}));
    EXPECT_TRUE(map.all_finite());
    EXPECT_THROW(cmd_anomaly_map(ctx, {}, out), ConfigError);
}

TEST_F(TinyRun, EvaluateWithComparisonIsReproducible) {
    Context ctx = tiny_context(dir_->path());
    ctx.force = true;
    cmd_evaluate(ctx, {{"copy", ctx.layout.scores()}});
    const auto a = test::read_bytes(ctx.layout.results() / "table.json");
    cmd_evaluate(ctx, {{"copy", ctx.layout.scores()}});
    EXPECT_EQ(test::read_bytes(ctx.layout.results() / "table.json"), a);
    const auto j = read_json(ctx.layout.results() / "table.json");
    EXPECT_TRUE(j.at(0).at("comparison").at("degenerate").get<bool>());
    EXPECT_THROW(cmd_evaluate(ctx, {{"missing", dir_->path() / "nowhere"}}), ConfigError);
    cmd_evaluate(ctx);
}

TEST(Pipeline, StaleStatsAreRefused) {
    test::TempDir dir("stale");
    Context ctx = tiny_context(dir.path());
    cmd_pipeline(ctx);
    // Retrain the diffusion model with a different seed: the stats no longer match.
    ctx.config.ddpm_train.seed += 1;
    cmd_train_ddpm(ctx);
    EXPECT_THROW(cmd_score(ctx, {kIdTest}), DataError);
    cmd_fit_stats(ctx);
    EXPECT_NO_THROW(cmd_score(ctx, {kIdTest}));
}

#ifdef LDMOOD_CLI

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LDMOOD_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
    test::TempDir dir("cli");
    const std::string out = "--out " + (dir / "out").string();
    EXPECT_EQ(run_cli("--version"), 0);
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("frobnicate"), 1);
    EXPECT_EQ(run_cli(out + " train-ddpm"), 1);
    EXPECT_EQ(run_cli("--config " + (dir / "missing.json").string() + " " + out + " synth-data"), 1);

    std::ofstream(dir / "bad.json") << R"({"data": {"val": 1}})";
    EXPECT_EQ(run_cli("--config " + (dir / "bad.json").string() + " " + out + " synth-data"), 1);

    std::ofstream(dir / "tiny.json") << test::tiny_run_json().dump();
    const std::string tiny = "--config " + (dir / "tiny.json").string() + " " + out + " -q";
    EXPECT_EQ(run_cli(tiny + " synth-data"), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "data" / "head_like_train.json"));
    EXPECT_EQ(run_cli(tiny + " score"), 1);

    std::ofstream(dir / "junk.vol") << "not a volume";
    EXPECT_EQ(run_cli(tiny + " train-vqvae"), 0);
    EXPECT_EQ(run_cli(tiny + " train-ddpm"), 0);
    EXPECT_EQ(run_cli(tiny + " fit-stats"), 0);
    EXPECT_EQ(run_cli(tiny + " anomaly-map " + (dir / "junk.vol").string()), 2);
}

#endif
