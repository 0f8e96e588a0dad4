#include "ldmood/pipeline/config.hpp"

#include <algorithm>
#include <fstream>

#include "ldmood/error.hpp"
#include "ldmood/pipeline/hashing.hpp"
#include "ldmood/rng.hpp"

namespace ldmood::pipeline {

std::vector<CorruptionSpec> RunConfig::corruption_specs() const {
    std::vector<CorruptionSpec> specs = corruption.specs.empty() ? standard_suite(derive_seed(seed, hash_string("corrupt")))
                                                                 : corruption.specs;
    std::erase_if(specs, [&](const CorruptionSpec& s) {
        return std::find(corruption.skip.begin(), corruption.skip.end(), s.class_name()) != corruption.skip.end();
    });
    return specs;
}

void RunConfig::derive_seeds() {
    vq.seed = derive_seed(seed, hash_string("vqvae.init"));
    vq_train.seed = derive_seed(seed, hash_string("vqvae.train"));
    unet.seed = derive_seed(seed, hash_string("ddpm.init"));
    ddpm_train.seed = derive_seed(seed, hash_string("ddpm.train"));
    scoring.seed = derive_seed(seed, hash_string("scoring"));
}

void RunConfig::validate() const {
    if (workers == 0) throw ConfigError("workers must be >= 1");
    if (!data.dims.positive()) throw ConfigError("data dims must be positive");
    if (data.train == 0 || data.val < 2 || data.test == 0) {
        throw ConfigError("data: need train >= 1, val >= 2 (for validation statistics) and test >= 1");
    }
    vq.validate();
    vq.latent_dims(data.dims);
    unet.validate();
    if (unet.in_channels != vq.embedding_dim) {
        throw ConfigError("diffusion in_channels (" + std::to_string(unet.in_channels) + ") must equal the vqvae embedding_dim (" +
                          std::to_string(vq.embedding_dim) + ")");
    }
    const Dims latent = vq.latent_dims(data.dims);
    const std::uint32_t f = 1u << (unet.levels() - 1);
    if (latent.h % f || latent.w % f || latent.d % f) {
        throw ConfigError("latent grid " + to_string(latent) + " not divisible by the UNet downsampling " + std::to_string(f));
    }
    scoring.validate(schedule.steps);
    for (const auto& s : corruption_specs()) ldmood::validate(s);
    for (const auto& name : corruption.skip) {
        const auto all = corruption.specs.empty() ? standard_suite() : corruption.specs;
        if (std::none_of(all.begin(), all.end(), [&](const CorruptionSpec& s) { return s.class_name() == name; })) {
            throw ConfigError("corruption.skip: no spec named '" + name + "'");
        }
    }
}

RunConfig preset(const std::string& name) {
    RunConfig c;
    c.preset = name;
    if (name == "desk") {
        c.vq = vq::VQConfig::desk();
        c.unet = diffusion::UNetConfig::desk(c.vq.embedding_dim);
    } else if (name == "paper-shape") {
        c.vq = vq::VQConfig::paper_shape(3);
        c.vq_train.learning_rate = 3e-4;
        c.vq_train.batch_size = 64;
        c.vq_train.max_epochs = 500;
        c.unet = diffusion::UNetConfig::paper_shape(c.vq.embedding_dim);
        c.ddpm_train.learning_rate = 2.5e-5;
        c.ddpm_train.batch_size = 112;
        c.ddpm_train.max_epochs = 12000;
        c.scoring = scoring::ScoringConfig::paper_shape(c.schedule.steps);
        c.data.dims = {64, 64, 64};
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected desk or paper-shape)");
    }
    c.derive_seeds();
    return c;
}

nlohmann::json to_json(const RunConfig& c) {
    std::vector<std::string> families, specs;
    for (auto f : c.data.far_families) families.emplace_back(to_string(f));
    for (const auto& s : c.corruption.specs) specs.push_back(s.to_string());
    return nlohmann::json{
        {"preset", c.preset},
        {"seed", c.seed},
        {"deterministic", c.deterministic},
        {"data",
         {{"dims", {c.data.dims.h, c.data.dims.w, c.data.dims.d}},
          {"train", c.data.train},
          {"val", c.data.val},
          {"test", c.data.test},
          {"far_families", families},
          {"far_count", c.data.far_count}}},
        {"corruption", {{"specs", specs}, {"skip", c.corruption.skip}}},
        {"vqvae", c.vq},
        {"vqvae_train", c.vq_train},
        {"diffusion", {{"unet", c.unet}, {"schedule", c.schedule}, {"train", c.ddpm_train}}},
        {"scoring", c.scoring},
        {"write_maps", c.write_maps}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be an object");
    RunConfig c = preset(j.value("preset", std::string("desk")));
    // Overlay the preset's own serialization with the file, so partial sections keep preset values.
    nlohmann::json merged = to_json(c);
    merged.merge_patch(j);
    try {
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.derive_seeds();
        c.deterministic = merged.at("deterministic").get<bool>();
        c.workers = merged.value("workers", c.workers);
        const auto& d = merged.at("data");
        const auto dims = d.at("dims").get<std::vector<std::uint32_t>>();
        if (dims.size() != 3) throw ConfigError("data.dims must have 3 entries");
        c.data.dims = {dims[0], dims[1], dims[2]};
        c.data.train = d.at("train").get<std::size_t>();
        c.data.val = d.at("val").get<std::size_t>();
        c.data.test = d.at("test").get<std::size_t>();
        c.data.far_families.clear();
        for (const auto& f : d.at("far_families").get<std::vector<std::string>>()) {
            const FamilyId id = parse_family(f);
            if (id == FamilyId::HeadLike) throw ConfigError("head_like is the in-distribution family, not a far-OOD family");
            c.data.far_families.push_back(id);
        }
        c.data.far_count = d.at("far_count").get<std::size_t>();
        c.corruption.specs.clear();
        for (const auto& s : merged.at("corruption").at("specs").get<std::vector<std::string>>()) {
            c.corruption.specs.push_back(CorruptionSpec::parse(s));
        }
        c.corruption.skip = merged.at("corruption").at("skip").get<std::vector<std::string>>();
        // Component seeds come from the run seed unless set explicitly.
        const auto keep_seed = [&](const nlohmann::json& section, std::uint64_t derived) {
            return j.contains("seed") || !section.contains("seed") ? derived : section.at("seed").get<std::uint64_t>();
        };
        const auto vq_seed = c.vq.seed, vqt_seed = c.vq_train.seed, unet_seed = c.unet.seed, ddpm_seed = c.ddpm_train.seed,
                   sc_seed = c.scoring.seed;
        c.vq = merged.at("vqvae").get<vq::VQConfig>();
        c.vq_train = merged.at("vqvae_train").get<vq::VQTrainConfig>();
        c.unet = merged.at("diffusion").at("unet").get<diffusion::UNetConfig>();
        c.schedule = merged.at("diffusion").at("schedule").get<diffusion::NoiseSchedule>();
        c.ddpm_train = merged.at("diffusion").at("train").get<diffusion::DDPMTrainConfig>();
        c.scoring = merged.at("scoring").get<scoring::ScoringConfig>();
        c.write_maps = merged.at("write_maps").get<bool>();
        const nlohmann::json empty = nlohmann::json::object();
        auto section = [&](std::initializer_list<const char*> keys) {
            const nlohmann::json* s = &j;
            for (const char* k : keys) {
                if (!s->contains(k)) return empty;
                s = &s->at(k);
            }
            return *s;
        };
        c.vq.seed = keep_seed(section({"vqvae"}), vq_seed);
        c.vq_train.seed = keep_seed(section({"vqvae_train"}), vqt_seed);
        c.unet.seed = keep_seed(section({"diffusion", "unet"}), unet_seed);
        c.ddpm_train.seed = keep_seed(section({"diffusion", "train"}), ddpm_seed);
        c.scoring.seed = keep_seed(section({"scoring"}), sc_seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
    return run_config_from_json(j);
}

std::string config_hash(const RunConfig& c) { return sha256_hex(to_json(c).dump()); }

}  // namespace ldmood::pipeline
