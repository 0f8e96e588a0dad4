#include "ldmood/corruptions.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <random>

#include "ldmood/error.hpp"
#include "ldmood/parallel.hpp"
#include "ldmood/rng.hpp"

namespace ldmood {

namespace {

std::string format_number(double x) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), end);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return parts;
}

std::string param_text(const CorruptionSpec& spec) {
    switch (spec.kind) {
        case CorruptionKind::Flip: return std::to_string(static_cast<int>(spec.param));
        case CorruptionKind::ChunkRemove:
            return static_cast<int>(spec.param) == static_cast<int>(ChunkLocation::Top) ? "top" : "middle";
        case CorruptionKind::ForegroundMask: return "0";
        default: return format_number(spec.param);
    }
}

}  // namespace

std::string to_string(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::GaussianNoise: return "gaussian_noise";
        case CorruptionKind::BackgroundValue: return "background_value";
        case CorruptionKind::Flip: return "flip";
        case CorruptionKind::ChunkRemove: return "chunk_remove";
        case CorruptionKind::ForegroundMask: return "foreground_mask";
        case CorruptionKind::IntensityScale: return "intensity_scale";
    }
    return "unknown";
}

CorruptionKind parse_corruption_kind(const std::string& name) {
    for (auto k : {CorruptionKind::GaussianNoise, CorruptionKind::BackgroundValue, CorruptionKind::Flip,
                   CorruptionKind::ChunkRemove, CorruptionKind::ForegroundMask, CorruptionKind::IntensityScale}) {
        if (to_string(k) == name) return k;
    }
    throw ValidationError("unknown corruption kind '" + name + "'");
}

std::string CorruptionSpec::class_name() const { return ldmood::to_string(kind) + ":" + param_text(*this); }

std::string CorruptionSpec::to_string() const { return class_name() + ":" + std::to_string(seed); }

CorruptionSpec CorruptionSpec::parse(const std::string& text) {
    const auto parts = split(text, ':');
    if (parts.size() < 2 || parts.size() > 3) throw ValidationError("corruption spec '" + text + "' is not kind:param[:seed]");
    CorruptionSpec spec;
    spec.kind = parse_corruption_kind(parts[0]);
    const std::string& p = parts[1];
    if (spec.kind == CorruptionKind::ChunkRemove && (p == "top" || p == "middle")) {
        spec.param = p == "top" ? 0.0 : 1.0;
    } else {
        const char* end = p.data() + p.size();
        auto [ptr, ec] = std::from_chars(p.data(), end, spec.param);
        if (ec != std::errc() || ptr != end) throw ValidationError("bad corruption parameter '" + p + "'");
    }
    if (parts.size() == 3) {
        const char* end = parts[2].data() + parts[2].size();
        auto [ptr, ec] = std::from_chars(parts[2].data(), end, spec.seed);
        if (ec != std::errc() || ptr != end) throw ValidationError("bad corruption seed '" + parts[2] + "'");
    }
    validate(spec);
    return spec;
}

void validate(const CorruptionSpec& spec) {
    const double p = spec.param;
    auto fail = [&](const char* what) {
        throw ValidationError(ldmood::to_string(spec.kind) + ": " + what + " (got " + format_number(p) + ")");
    };
    switch (spec.kind) {
        case CorruptionKind::GaussianNoise:
            if (!(p > 0.0 && p <= 1.0)) fail("sigma must lie in (0, 1]");
            break;
        case CorruptionKind::BackgroundValue:
            if (!(p > 0.0 && p <= 1.0)) fail("background level must lie in (0, 1]");
            break;
        case CorruptionKind::Flip:
            if (p != 0.0 && p != 1.0 && p != 2.0) fail("axis must be 0, 1, or 2");
            break;
        case CorruptionKind::ChunkRemove:
            if (p != 0.0 && p != 1.0) fail("location must be top or middle");
            break;
        case CorruptionKind::ForegroundMask:
            if (p != 0.0) fail("takes no parameter");
            break;
        case CorruptionKind::IntensityScale:
            if (!(p > 0.0 && p <= 1.0)) fail("scale factor must lie in (0, 1]");
            break;
    }
}

std::pair<std::uint32_t, std::uint32_t> chunk_bounds(std::uint32_t extent, ChunkLocation location) {
    const auto thickness = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(kChunkFraction * extent)));
    if (thickness >= extent) {
        throw ValidationError("chunk thickness " + std::to_string(thickness) + " covers the full extent " +
                              std::to_string(extent));
    }
    const std::uint32_t begin = location == ChunkLocation::Top ? extent - thickness : (extent - thickness) / 2;
    return {begin, begin + thickness};
}

double otsu_threshold(const Volume& v) {
    constexpr int kBins = 256;
    std::array<double, kBins> hist{};
    double total = 0.0;
    for (float x : v.data()) {
        if (x == 0.0f) continue;
        const int bin = std::clamp(static_cast<int>(std::clamp(x, 0.0f, 1.0f) * kBins), 0, kBins - 1);
        hist[bin] += 1.0;
        total += 1.0;
    }
    if (total == 0.0) return 1.0;
    double sum_all = 0.0;
    for (int i = 0; i < kBins; ++i) sum_all += i * hist[i];

    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_bin = kBins - 1;
    for (int k = 0; k < kBins - 1; ++k) {
        w0 += hist[k];
        sum0 += k * hist[k];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = k;
        }
    }
    return static_cast<double>(best_bin + 1) / kBins;
}

Volume apply_corruption(const Volume& v, const CorruptionSpec& spec) {
    validate(spec);
    Volume out = v;
    auto data = out.data();
    switch (spec.kind) {
        case CorruptionKind::GaussianNoise: {
            // Not re-clipped to [0, 1]; clipping would partially undo the corruption.
            Rng rng(spec.seed);
            std::normal_distribution<double> noise(0.0, spec.param);
            for (float& x : data) x = static_cast<float>(x + noise(rng));
            break;
        }
        case CorruptionKind::BackgroundValue:
            for (float& x : data)
                if (x == 0.0f) x = static_cast<float>(spec.param);
            break;
        case CorruptionKind::Flip:
            out = flip(v, static_cast<int>(spec.param));
            break;
        case CorruptionKind::ChunkRemove: {
            const auto [begin, end] = chunk_bounds(v.dims().h, static_cast<ChunkLocation>(static_cast<int>(spec.param)));
            const std::size_t plane = static_cast<std::size_t>(v.dims().w) * v.dims().d;
            std::fill(data.begin() + begin * plane, data.begin() + end * plane, 0.0f);
            break;
        }
        case CorruptionKind::ForegroundMask: {
            const double tau = otsu_threshold(v);
            double bright_sum = 0.0;
            std::size_t bright_n = 0;
            for (float x : data)
                if (x > tau) {
                    bright_sum += x;
                    ++bright_n;
                }
            // No bright shell class: nothing to strip. The clamp at kBoneFloor keeps this idempotent.
            if (bright_n == 0 || bright_sum / bright_n <= kBoneFloor) break;
            const double cut = std::min(tau, kBoneFloor);
            for (float& x : data)
                if (x > cut) x = 0.0f;
            break;
        }
        case CorruptionKind::IntensityScale:
            for (float& x : data) x = static_cast<float>(x * spec.param);
            break;
    }
    return out;
}

std::vector<CorruptionSpec> standard_suite(std::uint64_t seed) {
    using K = CorruptionKind;
    std::vector<CorruptionSpec> specs;
    for (double sigma : {0.01, 0.1, 0.2}) specs.push_back({K::GaussianNoise, sigma, seed});
    for (double level : {0.3, 0.6, 1.0}) specs.push_back({K::BackgroundValue, level, 0});
    for (int axis : {0, 1, 2}) specs.push_back({K::Flip, static_cast<double>(axis), 0});
    specs.push_back({K::ChunkRemove, static_cast<double>(ChunkLocation::Top), 0});
    specs.push_back({K::ChunkRemove, static_cast<double>(ChunkLocation::Middle), 0});
    specs.push_back({K::ForegroundMask, 0.0, 0});
    for (double f : {0.01, 0.1}) specs.push_back({K::IntensityScale, f, 0});
    return specs;
}

DatasetManifest corrupt_dataset(const DatasetManifest& manifest, const std::vector<CorruptionSpec>& specs,
                                const std::filesystem::path& root, const std::string& name, std::size_t workers) {
    DatasetManifest out;
    out.split = name;
    out.seed = manifest.seed;
    out.base_dir = root;
    for (const auto& spec : specs) validate(spec);
    out.entries.resize(manifest.size() * specs.size());
    parallel_for(manifest.size(), workers, [&](std::size_t, std::size_t i) {
        const auto& entry = manifest.entries[i];
        const Volume v = load_volume(manifest.resolve(entry));
        for (std::size_t k = 0; k < specs.size(); ++k) {
            const auto& spec = specs[k];
            CorruptionSpec local = spec;
            if (spec.kind == CorruptionKind::GaussianNoise) local.seed = derive_seed(spec.seed, hash_string(entry.id));
            std::string dir = spec.class_name();
            std::replace(dir.begin(), dir.end(), ':', '_');
            const std::string rel = name + "/" + dir + "/" + entry.id + ".vol";
            save_volume(apply_corruption(v, local), root / rel);
            out.entries[i * specs.size() + k] = {entry.id + "__" + dir, rel, "ood:" + spec.class_name()};
        }
    });
    save_manifest(out, root / (name + ".json"));
    return out;
}

}  // namespace ldmood
