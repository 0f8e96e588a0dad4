#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ldmood/volume.hpp"

namespace ldmood {

enum class FamilyId { HeadLike, CuboidField, SphereGrid, StripeTexture };

/// Generator parameters for one synthetic volume family.
///
/// `head_like` is the in-distribution family: an ellipsoidal bright shell
/// around a smooth low-contrast interior, on an exactly-zero background. It is
/// synthesized in Hounsfield-like units and passed through preprocess_ct. The
/// other families are far-OOD stand-ins and are min-max rescaled.
struct SyntheticFamily {
    FamilyId id = FamilyId::HeadLike;
    /// Ellipsoid semi-axes (head_like) or sphere radii (sphere_grid), as a fraction of the extent / in voxels.
    std::pair<double, double> radius_range{0.40, 0.45};
    /// Interior blobs (head_like) or boxes (cuboid_field).
    std::pair<int, int> blob_count{3, 6};
    /// Cycles per voxel (stripe_texture).
    std::pair<double, double> texture_frequency{0.08, 0.2};

    static SyntheticFamily defaults(FamilyId id);
};

std::string_view to_string(FamilyId id) noexcept;
FamilyId parse_family(std::string_view name);
std::vector<FamilyId> far_ood_families();

/// Pure function of (family, seed, dims). Every dim must be a multiple of `granularity`.
Volume synth_volume(const SyntheticFamily& family, std::uint64_t seed, Dims dims, std::uint32_t granularity = 16);

}  // namespace ldmood
