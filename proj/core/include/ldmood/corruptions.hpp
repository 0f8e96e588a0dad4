#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ldmood/dataset.hpp"
#include "ldmood/volume.hpp"

namespace ldmood {

enum class CorruptionKind { GaussianNoise, BackgroundValue, Flip, ChunkRemove, ForegroundMask, IntensityScale };

enum class ChunkLocation { Top = 0, Middle = 1 };

/// One near-OOD corruption. `param` is sigma, background level, axis,
/// chunk location, unused, or scale factor depending on `kind`.
struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::GaussianNoise;
    double param = 0.0;
    std::uint64_t seed = 0;

    /// "kind:param", the class part used in OOD labels.
    std::string class_name() const;
    /// "kind:param:seed", replayable.
    std::string to_string() const;
    static CorruptionSpec parse(const std::string& text);

    friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

inline constexpr double kChunkFraction = 0.2;
/// Foreground masking removes the Otsu-detected bright class, clamped at this level.
inline constexpr double kBoneFloor = 0.75;

std::string to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(const std::string& name);

/// Throws ValidationError if `spec.param` is outside the kind's legal set.
void validate(const CorruptionSpec& spec);

Volume apply_corruption(const Volume& v, const CorruptionSpec& spec);

/// Slab [begin, end) of axis-0 indices removed by chunk_remove.
std::pair<std::uint32_t, std::uint32_t> chunk_bounds(std::uint32_t extent, ChunkLocation location);

/// Otsu threshold over the non-zero voxels (256-bin histogram on [0, 1]).
double otsu_threshold(const Volume& v);

/// The 14 default specs: 3 noise levels, 3 background values, 3 flips, 2 chunks, foreground mask, 2 scalings.
std::vector<CorruptionSpec> standard_suite(std::uint64_t seed = 0);

/// Apply every spec to every entry; outputs go to `root/<name>/` and the manifest to `root/<name>.json`.
/// Stochastic specs are reseeded per entry so each volume gets its own noise.
/// Entries are ordered (input entry, spec) whatever the worker count.
DatasetManifest corrupt_dataset(const DatasetManifest& manifest, const std::vector<CorruptionSpec>& specs,
                                const std::filesystem::path& root, const std::string& name, std::size_t workers = 1);

}  // namespace ldmood
