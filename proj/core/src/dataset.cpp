#include "ldmood/dataset.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ldmood/error.hpp"
#include "ldmood/rng.hpp"

namespace ldmood {

using nlohmann::json;

std::string label_class(const std::string& label) {
    constexpr std::string_view prefix = "ood:";
    if (label.rfind(prefix, 0) == 0) return label.substr(prefix.size());
    return label;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    json doc;
    doc["format"] = "ldmood-manifest/1";
    doc["split"] = manifest.split;
    doc["seed"] = manifest.seed;
    doc["entries"] = json::array();
    for (const auto& e : manifest.entries) {
        doc["entries"].push_back({{"id", e.id}, {"path", e.path}, {"label", e.label}});
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write manifest " + path.string());
    out << doc.dump(2) << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    DatasetManifest m;
    try {
        const json doc = json::parse(in);
        m.split = doc.at("split").get<std::string>();
        m.seed = doc.at("seed").get<std::uint64_t>();
        for (const auto& e : doc.at("entries")) {
            m.entries.push_back({e.at("id").get<std::string>(), e.at("path").get<std::string>(),
                                 e.at("label").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + path.string() + ": " + e.what());
    }
    m.base_dir = path.parent_path();
    return m;
}

const DatasetManifest* DatasetSplits::find(const std::string& split) const {
    for (const auto& m : manifests)
        if (m.split == split) return &m;
    return nullptr;
}

std::array<std::size_t, 3> split_counts(std::size_t count, const SplitRatios& ratios) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0) throw ValidationError("split ratios must be >= 0");
    const double total = ratios.train + ratios.val + ratios.test;
    if (!(total > 0)) throw ValidationError("split ratios sum to zero");
    const auto n_val = static_cast<std::size_t>(std::llround(count * ratios.val / total));
    const auto n_test = static_cast<std::size_t>(std::llround(count * ratios.test / total));
    if (n_val + n_test > count) throw ValidationError("split ratios exceed dataset size");
    return {count - n_val - n_test, n_val, n_test};
}

DatasetSplits make_dataset(const DatasetSpec& spec, const std::filesystem::path& root,
                           std::set<std::filesystem::path>& claimed) {
    if (spec.count == 0) throw ValidationError("dataset '" + spec.name + "' requests zero volumes");
    if (spec.name.empty()) throw ValidationError("dataset name must not be empty");
    const auto counts = split_counts(spec.count, spec.ratios);
    // Training data without validation data leaves z-scoring undefined downstream.
    if (counts[0] > 0 && counts[1] == 0) {
        throw ValidationError("dataset '" + spec.name + "' has training volumes but zero validation volumes");
    }

    static constexpr std::array<const char*, 3> kSplits = {"train", "val", "test"};
    DatasetSplits result;
    std::size_t index = 0;
    for (int s = 0; s < 3; ++s) {
        if (counts[s] == 0) continue;
        DatasetManifest m;
        m.split = kSplits[s];
        m.seed = spec.seed;
        m.base_dir = root;
        const auto manifest_path = root / (spec.name + "_" + m.split + ".json");
        if (!claimed.insert(manifest_path.lexically_normal()).second) {
            throw ValidationError("output path already claimed: " + manifest_path.string());
        }
        for (std::size_t i = 0; i < counts[s]; ++i, ++index) {
            std::ostringstream id;
            id << spec.name << '_' << m.split << '_' << std::setw(4) << std::setfill('0') << i;
            const std::string rel = spec.name + "/" + m.split + "/" + id.str() + ".vol";
            if (!claimed.insert((root / rel).lexically_normal()).second) {
                throw ValidationError("output path already claimed: " + (root / rel).string());
            }
            const Volume v = synth_volume(spec.family, derive_seed(spec.seed, index), spec.dims);
            save_volume(v, root / rel);
            m.entries.push_back({id.str(), rel, spec.label});
        }
        save_manifest(m, manifest_path);
        result.manifests.push_back(std::move(m));
    }
    return result;
}

}  // namespace ldmood
