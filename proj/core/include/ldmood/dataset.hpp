#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "ldmood/synthetic.hpp"
#include "ldmood/volume.hpp"

namespace ldmood {

inline constexpr const char* kIdLabel = "id";

struct ManifestEntry {
    std::string id;
    /// Relative to the manifest's directory, so manifests are relocatable.
    std::string path;
    /// "id" or "ood:<class>".
    std::string label;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    std::string split;
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> entries;
    /// Directory the entry paths are relative to. Not serialized.
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.path; }
    std::size_t size() const noexcept { return entries.size(); }
};

/// Class name of an "ood:<class>" label, or "id".
std::string label_class(const std::string& label);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct DatasetSpec {
    std::string name;
    SyntheticFamily family;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    SplitRatios ratios;
    Dims dims{32, 32, 32};
    std::string label = kIdLabel;
};

/// Generated splits, in train/val/test order; empty splits are omitted.
struct DatasetSplits {
    std::vector<DatasetManifest> manifests;
    const DatasetManifest* find(const std::string& split) const;
};

/// Counts per split: val and test rounded, train takes the remainder.
std::array<std::size_t, 3> split_counts(std::size_t count, const SplitRatios& ratios);

/// Generate `spec.count` volumes under `root/<name>/<split>/` and persist one manifest per split
/// as `root/<name>_<split>.json`. `claimed` tracks output paths across calls; a collision is an error.
DatasetSplits make_dataset(const DatasetSpec& spec, const std::filesystem::path& root,
                           std::set<std::filesystem::path>& claimed);

}  // namespace ldmood
