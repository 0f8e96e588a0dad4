#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ldmood/error.hpp"
#include "ldmood/pipeline/commands.hpp"
#include "ldmood/pipeline/config.hpp"

namespace fs = std::filesystem;
using namespace ldmood;

namespace {

struct Options {
    std::string config_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    bool deterministic = false;
    bool nondeterministic = false;
    std::string out;
    bool force = false;
    bool quiet = false;
};

pipeline::Context make_context(const Options& o) {
    if (!o.config_path.empty() && !o.preset.empty()) throw ConfigError("--preset and --config are mutually exclusive");
    pipeline::RunConfig cfg = !o.config_path.empty() ? pipeline::load_run_config(o.config_path)
                                                      : pipeline::preset(o.preset.empty() ? "desk" : o.preset);
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.derive_seeds();
    }
    if (o.workers) cfg.workers = *o.workers;
    if (o.deterministic) cfg.deterministic = true;
    if (o.nondeterministic) cfg.deterministic = false;

    std::string out = o.out;
    if (out.empty()) {
        const char* env = std::getenv("LDMOOD_OUT");
        out = env && *env ? env : "ldmood_out";
    }
    cfg.validate();
    pipeline::Context ctx{cfg, pipeline::Layout{fs::absolute(out)}, o.quiet ? nullptr : &std::cerr, o.force};
    return ctx;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised out-of-distribution detection for 3D volumes with latent diffusion"};
    app.set_version_flag("--version", pipeline::tool_version());
    app.require_subcommand(1);

    Options o;
    app.add_option("--config", o.config_path, "JSON run config (inherits from its \"preset\")")->check(CLI::ExistingFile);
    app.add_option("--preset", o.preset, "Start from a named preset instead of a file")->check(CLI::IsMember({"desk", "paper-shape"}));
    app.add_option("--seed", o.seed, "Global seed; component seeds derive from it");
    app.add_option("--workers", o.workers, "Worker threads for corruption and scoring")->check(CLI::PositiveNumber);
    auto* det = app.add_flag("--deterministic", o.deterministic, "Keep wall time out of run records (default)");
    app.add_flag("--no-deterministic", o.nondeterministic, "Record wall time in run records")->excludes(det);
    app.add_option("--out", o.out, "Output root (default: $LDMOOD_OUT or ./ldmood_out)");
    app.add_flag("--force", o.force, "Recompute stages whose inputs are unchanged");
    app.add_flag("-q,--quiet", o.quiet, "No progress output");

    std::vector<std::string> score_manifests;
    std::vector<std::string> map_inputs;
    std::string map_out;
    std::vector<std::string> compare;

    auto* synth = app.add_subcommand("synth-data", "Generate ID splits and far-OOD families");
    auto* corrupt = app.add_subcommand("corrupt", "Apply the corruption suite to the ID test split");
    auto* train_vq = app.add_subcommand("train-vqvae", "Train the VQ autoencoder");
    auto* train_ddpm = app.add_subcommand("train-ddpm", "Train the latent diffusion model");
    auto* fit = app.add_subcommand("fit-stats", "Fit validation statistics for z-scoring");
    auto* score = app.add_subcommand("score", "Score test manifests");
    score->add_option("manifests", score_manifests, "Manifest names under data/ (default: all test manifests)");
    auto* amap = app.add_subcommand("anomaly-map", "Anomaly maps for volume files");
    amap->add_option("inputs", map_inputs, "Volume files")->required()->check(CLI::ExistingFile);
    amap->add_option("-o,--output", map_out, "Output directory (default: <out>/maps/adhoc)");
    auto* eval = app.add_subcommand("evaluate", "AUC table with paired DeLong tests");
    eval->add_option("--compare", compare, "Extra model as NAME=SCORES_DIR");
    auto* pipe = app.add_subcommand("pipeline", "Run every stage in order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::Usage);
    }

    try {
        const pipeline::Context ctx = make_context(o);
        if (synth->parsed()) pipeline::cmd_synth_data(ctx);
        else if (corrupt->parsed()) pipeline::cmd_corrupt(ctx);
        else if (train_vq->parsed()) pipeline::cmd_train_vqvae(ctx);
        else if (train_ddpm->parsed()) pipeline::cmd_train_ddpm(ctx);
        else if (fit->parsed()) pipeline::cmd_fit_stats(ctx);
        else if (score->parsed()) pipeline::cmd_score(ctx, score_manifests);
        else if (amap->parsed()) {
            std::vector<fs::path> inputs(map_inputs.begin(), map_inputs.end());
            pipeline::cmd_anomaly_map(ctx, inputs, map_out.empty() ? ctx.layout.maps() / "adhoc" : fs::path(map_out));
        } else if (eval->parsed()) {
            std::vector<std::pair<std::string, fs::path>> extra;
            for (const auto& c : compare) {
                const auto eq = c.find('=');
                if (eq == std::string::npos || eq == 0) throw ConfigError("--compare expects NAME=DIR, got '" + c + "'");
                extra.emplace_back(c.substr(0, eq), c.substr(eq + 1));
            }
            pipeline::cmd_evaluate(ctx, extra);
        } else if (pipe->parsed()) pipeline::cmd_pipeline(ctx);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Data);
    }
    return 0;
}
