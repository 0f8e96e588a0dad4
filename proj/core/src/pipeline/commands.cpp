#include "ldmood/pipeline/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>

#include "ldmood/corruptions.hpp"
#include "ldmood/diffusion/trainer.hpp"
#include "ldmood/error.hpp"
#include "ldmood/pipeline/hashing.hpp"
#include "ldmood/rng.hpp"
#include "ldmood/scoring/scorer.hpp"
#include "ldmood/stats/table.hpp"
#include "ldmood/vqvae/trainer.hpp"

#ifndef LDMOOD_VERSION
#define LDMOOD_VERSION "0.0.0"
#endif

namespace ldmood::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string tool_version() { return LDMOOD_VERSION; }

json to_json(const RunManifest& m, bool include_wall_time) {
    json inputs = json::object(), outputs = json::object();
    for (const auto& [k, v] : m.inputs) inputs[k] = v;
    for (const auto& [k, v] : m.outputs) outputs[k] = v;
    json j{{"command", m.command},
           {"tool_version", m.tool_version},
           {"config_hash", m.config_hash},
           {"seed", m.seed},
           {"stage_hash", m.stage_hash},
           {"inputs", inputs},
           {"outputs", outputs}};
    if (include_wall_time) j["wall_time_s"] = m.wall_time_s;
    return j;
}

std::vector<std::string> test_manifests(const RunConfig& config) {
    std::vector<std::string> names{kIdTest};
    for (auto f : config.data.far_families) names.push_back(std::string(to_string(f)) + "_test");
    names.emplace_back(kNearOod);
    return names;
}

namespace {

using Clock = std::chrono::steady_clock;

void write_text_atomic(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw DataError("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError(path.string() + ": not valid JSON");
    return j;
}

std::string rel(const Layout& layout, const fs::path& p) { return fs::relative(p, layout.root).generic_string(); }

/// A manifest's identity covers its own text and every volume it lists.
std::string dataset_hash(const fs::path& manifest_path) {
    const DatasetManifest m = load_manifest(manifest_path);
    std::string acc = sha256_file(manifest_path);
    for (const auto& e : m.entries) acc += sha256_file(m.resolve(e));
    return sha256_hex(acc);
}

std::string artifact_hash(const Layout& layout, const std::string& relative) {
    const fs::path p = layout.root / relative;
    if (relative.starts_with("data/") && p.extension() == ".json") return dataset_hash(p);
    return sha256_file(p);
}

void require(const fs::path& p, const std::string& upstream) {
    if (!fs::exists(p)) {
        throw ConfigError("missing " + p.string() + "; run `ldmood " + upstream + "` first");
    }
}

class Stage {
public:
    Stage(const Context& ctx, std::string command, const json& stage_config)
        : ctx_(ctx), start_(Clock::now()) {
        m_.command = std::move(command);
        m_.tool_version = tool_version();
        m_.config_hash = config_hash(ctx.config);
        m_.seed = ctx.config.seed;
        m_.stage_hash = sha256_hex(stage_config.dump());
    }

    void input(const std::string& name, std::string hash) { m_.inputs.emplace_back(name, std::move(hash)); }
    void input_file(const fs::path& p) { input(rel(ctx_.layout, p), artifact_hash(ctx_.layout, rel(ctx_.layout, p))); }

    /// Identity of everything this stage depends on.
    std::string fingerprint() const { return sha256_hex(m_.stage_hash + to_json(m_, false).at("inputs").dump()); }

    fs::path record_path() const { return ctx_.layout.runs() / (m_.command + ".json"); }

    /// True when a previous run recorded the same inputs and its outputs are intact.
    bool up_to_date() {
        if (ctx_.force || !fs::exists(record_path())) return false;
        json prev;
        try {
            prev = read_json(record_path());
        } catch (const DataError&) {
            return false;
        }
        const json now = to_json(m_, false);
        if (prev.value("stage_hash", "") != m_.stage_hash || prev.value("inputs", json()) != now.at("inputs")) return false;
        std::vector<std::pair<std::string, std::string>> outputs;
        const json prev_outputs = prev.value("outputs", json::object());
        for (const auto& [path, hash] : prev_outputs.items()) {
            if (!fs::exists(ctx_.layout.root / path) || artifact_hash(ctx_.layout, path) != hash.get<std::string>()) {
                return false;
            }
            outputs.emplace_back(path, hash.get<std::string>());
        }
        m_.outputs = std::move(outputs);
        m_.skipped = true;
        log("up to date, skipping");
        return true;
    }

    void output(const fs::path& p) {
        const std::string r = rel(ctx_.layout, p);
        m_.outputs.emplace_back(r, artifact_hash(ctx_.layout, r));
    }

    void log(const std::string& line) const {
        if (ctx_.log) *ctx_.log << "[" << m_.command << "] " << line << std::endl;
    }

    RunManifest finish() {
        if (m_.skipped) return m_;
        m_.wall_time_s = std::chrono::duration<double>(Clock::now() - start_).count();
        std::sort(m_.outputs.begin(), m_.outputs.end());
        const bool det = ctx_.config.deterministic;
        write_text_atomic(record_path(), to_json(m_, !det).dump(2) + "\n");
        if (det) {
            write_text_atomic(ctx_.layout.runs() / (m_.command + ".timing.json"),
                              json{{"wall_time_s", m_.wall_time_s}}.dump(2) + "\n");
        }
        return m_;
    }

private:
    const Context& ctx_;
    Clock::time_point start_;
    RunManifest m_;
};

void write_resolved_config(const Context& ctx) {
    write_text_atomic(ctx.layout.root / "config.json", to_json(ctx.config).dump(2) + "\n");
}

std::vector<Volume> load_volumes(const DatasetManifest& m) {
    std::vector<Volume> out;
    out.reserve(m.size());
    for (const auto& e : m.entries) out.push_back(load_volume(m.resolve(e)));
    return out;
}

std::vector<nn::Tensor<float>> latents(vq::VQModel<float>& model, const std::vector<Volume>& volumes) {
    std::vector<nn::Tensor<float>> out;
    out.reserve(volumes.size());
    for (const auto& v : volumes) out.push_back(model.quantize(model.encode(v)).dequantized);
    return out;
}

std::string checkpoint_fingerprint(const fs::path& path) {
    if (!fs::exists(path)) return {};
    try {
        return vq::read_checkpoint_footer(path).value("fingerprint", std::string());
    } catch (const Error&) {
        return {};
    }
}

scoring::ModelPair load_models(const Layout& layout, Dims dims) {
    require(layout.vqvae(), "train-vqvae");
    require(layout.ddpm(), "train-ddpm");
    scoring::ModelPair models{vq::load_model(layout.vqvae()), diffusion::load_model(layout.ddpm())};
    // The diffusion checkpoint must have been trained on this autoencoder's latents.
    json fp = json::parse(checkpoint_fingerprint(layout.ddpm()), nullptr, false);
    if (!fp.is_object() || fp.value("vq_sha256", "") != sha256_file(layout.vqvae())) {
        throw DataError(layout.ddpm().string() + " was not trained on the current " + layout.vqvae().string() +
                        "; rerun `ldmood train-ddpm`");
    }
    models.check_compatible(dims);
    return models;
}

scoring::ValidationStats load_checked_stats(const Layout& layout) {
    require(layout.stats(), "fit-stats");
    scoring::ValidationStats stats = scoring::load_stats(layout.stats());
    if (stats.vq_hash != sha256_file(layout.vqvae()) || stats.ddpm_hash != sha256_file(layout.ddpm())) {
        throw DataError(layout.stats().string() + " was fitted with different model checkpoints; rerun `ldmood fit-stats`");
    }
    return stats;
}

json scoring_section(const RunConfig& c) {
    json s = to_json(c).at("scoring");
    s["dims"] = to_json(c).at("data").at("dims");
    return s;
}

}  // namespace

RunManifest cmd_synth_data(const Context& ctx) {
    const RunConfig& c = ctx.config;
    c.validate();
    Stage stage(ctx, "synth-data", json{{"seed", c.seed}, {"data", to_json(c).at("data")}});
    if (stage.up_to_date()) return stage.finish();
    write_resolved_config(ctx);

    const fs::path root = ctx.layout.data();
    std::set<fs::path> claimed;
    const double id_total = static_cast<double>(c.data.train + c.data.val + c.data.test);
    DatasetSpec id{"head_like",
                   SyntheticFamily::defaults(FamilyId::HeadLike),
                   c.data.train + c.data.val + c.data.test,
                   derive_seed(c.seed, hash_string("data:head_like")),
                   {c.data.train / id_total, c.data.val / id_total, c.data.test / id_total},
                   c.data.dims,
                   kIdLabel};
    const auto counts = split_counts(id.count, id.ratios);
    if (counts[0] != c.data.train || counts[1] != c.data.val || counts[2] != c.data.test) {
        throw ConfigError("data split counts do not round-trip through ratios");
    }
    std::vector<std::pair<std::string, std::size_t>> made;
    for (const auto& m : make_dataset(id, root, claimed).manifests) made.emplace_back(id.name + "_" + m.split, m.size());
    for (FamilyId f : c.data.far_families) {
        const std::string name(to_string(f));
        DatasetSpec far{name, SyntheticFamily::defaults(f), c.data.far_count, derive_seed(c.seed, hash_string("data:" + name)),
                        {0.0, 0.0, 1.0}, c.data.dims, "ood:" + name};
        for (const auto& m : make_dataset(far, root, claimed).manifests) made.emplace_back(name + "_" + m.split, m.size());
    }
    for (const auto& [name, count] : made) {
        stage.output(ctx.layout.manifest(name));
        stage.log(name + ": " + std::to_string(count) + " volumes");
    }
    return stage.finish();
}

RunManifest cmd_corrupt(const Context& ctx) {
    const RunConfig& c = ctx.config;
    c.validate();
    const fs::path input = ctx.layout.manifest(kIdTest);
    require(input, "synth-data");
    Stage stage(ctx, "corrupt", json{{"seed", c.seed}, {"corruption", to_json(c).at("corruption")}});
    stage.input_file(input);
    if (stage.up_to_date()) return stage.finish();

    const auto specs = c.corruption_specs();
    const DatasetManifest out = corrupt_dataset(load_manifest(input), specs, ctx.layout.data(), kNearOod, c.workers);
    stage.log(std::to_string(specs.size()) + " corruptions, " + std::to_string(out.size()) + " volumes");
    stage.output(ctx.layout.manifest(kNearOod));
    return stage.finish();
}

RunManifest cmd_train_vqvae(const Context& ctx) {
    const RunConfig& c = ctx.config;
    c.validate();
    const fs::path train_m = ctx.layout.manifest(kIdTrain), val_m = ctx.layout.manifest(kIdVal);
    require(train_m, "synth-data");
    require(val_m, "synth-data");
    const json all = to_json(c);
    Stage stage(ctx, "train-vqvae", json{{"vqvae", all.at("vqvae")}, {"train", all.at("vqvae_train")}});
    stage.input_file(train_m);
    stage.input_file(val_m);
    if (stage.up_to_date()) return stage.finish();

    const auto train = load_volumes(load_manifest(train_m));
    const auto val = load_volumes(load_manifest(val_m));
    const fs::path ckpt = ctx.layout.vqvae();
    fs::create_directories(ckpt.parent_path());
    const std::string fp = stage.fingerprint();
    const bool resume = checkpoint_fingerprint(ckpt) == fp;
    if (fs::exists(ckpt) && !resume) stage.log("inputs changed, training from scratch");

    vq::VQTrainer trainer(c.vq, c.vq_train);
    trainer.set_fingerprint(fp);
    const auto state = trainer.train(train, val, ckpt, resume, [&](const vq::VQEpochLog& e) {
        stage.log("epoch " + std::to_string(e.epoch) + " train " + std::to_string(e.train_loss) + " val_recon " +
                  std::to_string(e.val_reconstruction) + " codes " + std::to_string(e.codes_used));
    });
    stage.log("best epoch " + std::to_string(state.best_epoch) + ", val reconstruction " + std::to_string(state.best_val));
    stage.output(ckpt);
    return stage.finish();
}

RunManifest cmd_train_ddpm(const Context& ctx) {
    const RunConfig& c = ctx.config;
    c.validate();
    const fs::path train_m = ctx.layout.manifest(kIdTrain), val_m = ctx.layout.manifest(kIdVal);
    require(train_m, "synth-data");
    require(ctx.layout.vqvae(), "train-vqvae");
    const json all = to_json(c);
    Stage stage(ctx, "train-ddpm", json{{"diffusion", all.at("diffusion")}});
    stage.input_file(train_m);
    stage.input_file(val_m);
    stage.input_file(ctx.layout.vqvae());
    if (stage.up_to_date()) return stage.finish();

    vq::VQModel<float> vq_model = vq::load_model(ctx.layout.vqvae());
    const auto train = latents(vq_model, load_volumes(load_manifest(train_m)));
    const auto val = latents(vq_model, load_volumes(load_manifest(val_m)));

    const fs::path ckpt = ctx.layout.ddpm();
    const std::string fp = json{{"vq_sha256", sha256_file(ctx.layout.vqvae())}, {"inputs", stage.fingerprint()}}.dump();
    const bool resume = checkpoint_fingerprint(ckpt) == fp;
    if (fs::exists(ckpt) && !resume) stage.log("inputs changed, training from scratch");

    diffusion::DDPMTrainer trainer(c.unet, c.schedule, c.ddpm_train);
    trainer.set_fingerprint(fp);
    const auto state = trainer.train(train, val, ckpt, resume, [&](const diffusion::DDPMEpochLog& e) {
        stage.log("epoch " + std::to_string(e.epoch) + " train " + std::to_string(e.train_loss) + " val " +
                  std::to_string(e.val_loss));
    });
    stage.log("best epoch " + std::to_string(state.best_epoch) + ", val loss " + std::to_string(state.best_val) +
              " (initial " + std::to_string(state.initial_val) + ")");
    stage.output(ckpt);
    return stage.finish();
}

RunManifest cmd_fit_stats(const Context& ctx) {
    const RunConfig& c = ctx.config;
    c.validate();
    const fs::path val_m = ctx.layout.manifest(kIdVal);
    require(val_m, "synth-data");
    Stage stage(ctx, "fit-stats", scoring_section(c));
    stage.input_file(val_m);
    auto models = load_models(ctx.layout, c.data.dims);
    stage.input_file(ctx.layout.vqvae());
    stage.input_file(ctx.layout.ddpm());
    if (stage.up_to_date()) return stage.finish();

    const auto measurements = scoring::measure_manifest(models, load_manifest(val_m), c.scoring, c.workers);
    scoring::ValidationStats stats = scoring::fit_validation_stats(measurements, c.scoring);
    stats.vq_hash = sha256_file(ctx.layout.vqvae());
    stats.ddpm_hash = sha256_file(ctx.layout.ddpm());
    fs::create_directories(ctx.layout.stats().parent_path());
    scoring::save_stats(stats, ctx.layout.stats());
    stage.log("fitted on " + std::to_string(stats.count) + " validation volumes");
    stage.output(ctx.layout.stats());
    return stage.finish();
}

RunManifest cmd_score(const Context& ctx, const std::vector<std::string>& manifests) {
    const RunConfig& c = ctx.config;
    c.validate();
    const auto names = manifests.empty() ? test_manifests(c) : manifests;
    json section = scoring_section(c);
    section["write_maps"] = c.write_maps;
    section["manifests"] = names;
    Stage stage(ctx, manifests.empty() ? "score" : "score-partial", section);
    for (const auto& n : names) require(ctx.layout.manifest(n), n == kNearOod ? "corrupt" : "synth-data");
    // Consistency guards run before any compute.
    auto models = load_models(ctx.layout, c.data.dims);
    const auto stats = load_checked_stats(ctx.layout);
    for (const auto& n : names) stage.input_file(ctx.layout.manifest(n));
    stage.input_file(ctx.layout.stats());
    if (stage.up_to_date()) return stage.finish();

    for (const auto& n : names) {
        scoring::ScoreOptions opt;
        opt.workers = c.workers;
        opt.report_dir = ctx.layout.scores();
        if (c.write_maps) opt.map_dir = ctx.layout.maps() / n;
        const auto reports = scoring::score_dataset(models, stats, load_manifest(ctx.layout.manifest(n)), c.scoring, opt);
        const fs::path out = ctx.layout.scores() / (n + ".jsonl");
        scoring::save_reports(reports, out);
        const auto failed = std::count_if(reports.begin(), reports.end(), [](const auto& r) { return r.failed; });
        stage.log(n + ": " + std::to_string(reports.size()) + " scored, " + std::to_string(failed) + " failed");
        stage.output(out);
        for (const auto& r : reports) {
            if (!r.anomaly_map.empty()) stage.output(ctx.layout.scores() / r.anomaly_map);
        }
    }
    return stage.finish();
}

RunManifest cmd_anomaly_map(const Context& ctx, const std::vector<fs::path>& inputs, const fs::path& out_dir) {
    const RunConfig& c = ctx.config;
    c.validate();
    if (inputs.empty()) throw ConfigError("anomaly-map: no input volumes");
    auto models = load_models(ctx.layout, c.data.dims);
    const auto stats = load_checked_stats(ctx.layout);
    Stage stage(ctx, "anomaly-map", scoring_section(c));
    stage.input_file(ctx.layout.stats());
    fs::create_directories(out_dir);
    for (const auto& in : inputs) {
        const Volume v = load_volume(in);
        const std::string id = in.stem().string();
        const auto recons = scoring::reconstruct_multi_t(models, v, c.scoring, id, stats.anomaly_t_values);
        const fs::path out = out_dir / (id + ".map.vol");
        save_volume(scoring::anomaly_map(v, recons, stats), out);
        stage.log(in.string() + " -> " + out.string());
    }
    return stage.finish();
}

RunManifest cmd_evaluate(const Context& ctx, const std::vector<std::pair<std::string, fs::path>>& compare) {
    const RunConfig& c = ctx.config;
    const auto names = test_manifests(c);
    json section{{"manifests", names}};
    for (const auto& [model, dir] : compare) section["compare"].push_back(model);
    Stage stage(ctx, "evaluate", section);

    auto collect = [&](const std::string& model, const fs::path& dir, bool own) {
        stats::ModelReports mr{model, {}};
        for (const auto& n : names) {
            const fs::path p = dir / (n + ".jsonl");
            require(p, "score");
            if (own) stage.input_file(p);
            else stage.input(model + ":" + n, sha256_file(p));
            auto reports = scoring::load_reports(p);
            mr.reports.insert(mr.reports.end(), reports.begin(), reports.end());
        }
        return mr;
    };
    std::vector<stats::ModelReports> models{collect("ldm", ctx.layout.scores(), true)};
    for (const auto& [model, dir] : compare) models.push_back(collect(model, dir, false));
    if (stage.up_to_date()) return stage.finish();

    const stats::ResultsTable table = stats::results_table(models);
    write_text_atomic(ctx.layout.results() / "table.txt", table.render());
    write_text_atomic(ctx.layout.results() / "table.json", table.records().dump(2) + "\n");
    if (ctx.log) *ctx.log << table.render();
    stage.output(ctx.layout.results() / "table.txt");
    stage.output(ctx.layout.results() / "table.json");
    return stage.finish();
}

std::vector<RunManifest> cmd_pipeline(const Context& ctx) {
    ctx.config.validate();
    return {cmd_synth_data(ctx), cmd_corrupt(ctx),   cmd_train_vqvae(ctx), cmd_train_ddpm(ctx),
            cmd_fit_stats(ctx),  cmd_score(ctx),     cmd_evaluate(ctx)};
}

}  // namespace ldmood::pipeline
