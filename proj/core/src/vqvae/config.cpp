#include "ldmood/vqvae/config.hpp"

#include <nlohmann/json.hpp>

#include "ldmood/error.hpp"

namespace ldmood::vq {

void VQConfig::validate() const {
    if (levels < 1 || levels > 5) throw ConfigError("vqvae: levels must be in [1, 5]");
    if (channels.size() != static_cast<std::size_t>(levels)) {
        throw ConfigError("vqvae: need one channel count per level (" + std::to_string(levels) + ")");
    }
    for (auto c : channels)
        if (c == 0) throw ConfigError("vqvae: channel counts must be positive");
    if (embedding_dim < 1) throw ConfigError("vqvae: embedding_dim must be >= 1");
    if (codebook_size < 2) throw ConfigError("vqvae: codebook_size must be >= 2");
    if (commitment < 0) throw ConfigError("vqvae: commitment weight must be >= 0");
    if (groups == 0) throw ConfigError("vqvae: groups must be >= 1");
}

Dims VQConfig::latent_dims(Dims input) const {
    const auto f = static_cast<std::uint32_t>(downsample_factor());
    if (!input.positive() || input.h % f || input.w % f || input.d % f) {
        throw ValidationError("input dims " + to_string(input) + " not divisible by 2^" + std::to_string(levels));
    }
    return {input.h / f, input.w / f, input.d / f};
}

VQConfig VQConfig::desk() { return VQConfig{}; }

VQConfig VQConfig::paper_shape(int levels) {
    VQConfig c;
    c.levels = levels;
    c.channels.assign(static_cast<std::size_t>(levels), 128);
    c.embedding_dim = 64;
    c.codebook_size = levels <= 2 ? 64 : levels == 3 ? 256 : 1024;
    c.res_blocks = 3;
    return c;
}

void to_json(nlohmann::json& j, const VQConfig& c) {
    j = nlohmann::json{{"levels", c.levels},
                       {"channels", c.channels},
                       {"embedding_dim", c.embedding_dim},
                       {"codebook_size", c.codebook_size},
                       {"commitment", c.commitment},
                       {"res_blocks", c.res_blocks},
                       {"groups", c.groups},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, VQConfig& c) {
    VQConfig d;
    c.levels = j.value("levels", d.levels);
    c.channels = j.value("channels", d.channels);
    c.embedding_dim = j.value("embedding_dim", d.embedding_dim);
    c.codebook_size = j.value("codebook_size", d.codebook_size);
    c.commitment = j.value("commitment", d.commitment);
    c.res_blocks = j.value("res_blocks", d.res_blocks);
    c.groups = j.value("groups", d.groups);
    c.seed = j.value("seed", d.seed);
}

}  // namespace ldmood::vq
