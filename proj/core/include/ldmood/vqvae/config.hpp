#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ldmood/volume.hpp"

namespace ldmood::vq {

/// First-stage architecture. Spatial compression is 2^(3 * levels).
struct VQConfig {
    int levels = 2;
    std::vector<std::size_t> channels{16, 32};  // one entry per level
    std::size_t embedding_dim = 8;
    std::size_t codebook_size = 64;
    double commitment = 0.25;
    std::size_t res_blocks = 1;
    std::size_t groups = 8;
    std::uint64_t seed = 0;

    void validate() const;
    /// Latent grid for an input grid; throws if any extent is not divisible by 2^levels.
    Dims latent_dims(Dims input) const;
    std::size_t downsample_factor() const noexcept { return std::size_t{1} << levels; }

    /// Desk-scale default, and the full-size shape for l = 2, 3, 4 (codebook 64/256/1024, n = 64, 128 channels).
    static VQConfig desk();
    static VQConfig paper_shape(int levels);
};

void to_json(nlohmann::json& j, const VQConfig& c);
void from_json(const nlohmann::json& j, VQConfig& c);

}  // namespace ldmood::vq
