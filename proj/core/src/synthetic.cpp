#include "ldmood/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "ldmood/error.hpp"
#include "ldmood/rng.hpp"

namespace ldmood {

namespace {

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

struct Blob {
    std::array<double, 3> center;
    double sigma;
    double amplitude;
};

// Hounsfield-like synthesis: air outside, a bone shell, soft tissue inside.
Volume head_like(const SyntheticFamily& fam, Rng& rng, Dims dims) {
    constexpr double kAir = -1000.0;
    std::array<double, 3> center{};
    std::array<double, 3> radius{};
    for (int a = 0; a < 3; ++a) {
        center[a] = 0.5 * (dims[a] - 1) + uniform(rng, -1.0, 1.0);
        radius[a] = dims[a] * uniform(rng, fam.radius_range.first, fam.radius_range.second);
    }
    const double mean_radius = (radius[0] + radius[1] + radius[2]) / 3.0;
    const double shell_voxels = uniform(rng, 1.5, 2.5);
    const double bone = uniform(rng, 600.0, 1200.0);
    const double tissue = uniform(rng, 25.0, 40.0);

    const int n_blobs = uniform_int(rng, fam.blob_count.first, fam.blob_count.second);
    std::vector<Blob> blobs;
    for (int i = 0; i < n_blobs; ++i) {
        Blob b{};
        // Rejection sample a point well inside the ellipsoid.
        for (;;) {
            double rho2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                const double u = uniform(rng, -0.65, 0.65);
                b.center[a] = center[a] + u * radius[a];
                rho2 += u * u;
            }
            if (rho2 < 0.65 * 0.65) break;
        }
        b.sigma = uniform(rng, 2.0, 4.0);
        b.amplitude = uniform(rng, -12.0, 12.0);
        blobs.push_back(b);
    }

    const double edge = 1.0 / mean_radius;  // one voxel, in normalized radius units
    const double inner = 1.0 - shell_voxels / mean_radius;
    Volume raw(dims, static_cast<float>(kAir));
    for (std::uint32_t h = 0; h < dims.h; ++h)
        for (std::uint32_t w = 0; w < dims.w; ++w)
            for (std::uint32_t d = 0; d < dims.d; ++d) {
                const std::array<double, 3> p{double(h), double(w), double(d)};
                double rho2 = 0.0;
                for (int a = 0; a < 3; ++a) {
                    const double u = (p[a] - center[a]) / radius[a];
                    rho2 += u * u;
                }
                const double rho = std::sqrt(rho2);
                if (rho >= 1.0 + edge) continue;

                double soft = tissue;
                for (const auto& b : blobs) {
                    double r2 = 0.0;
                    for (int a = 0; a < 3; ++a) r2 += (p[a] - b.center[a]) * (p[a] - b.center[a]);
                    soft += b.amplitude * std::exp(-0.5 * r2 / (b.sigma * b.sigma));
                }
                double value;
                if (rho > 1.0) {
                    const double frac = (1.0 + edge - rho) / edge;
                    value = kAir + frac * (bone - kAir);
                } else if (rho >= inner) {
                    value = bone;
                } else if (rho > inner - edge) {
                    const double frac = (inner - rho) / edge;
                    value = bone + frac * (soft - bone);
                } else {
                    value = soft;
                }
                raw.at(h, w, d) = static_cast<float>(value);
            }
    return preprocess_ct(raw);
}

Volume cuboid_field(const SyntheticFamily& fam, Rng& rng, Dims dims) {
    Volume raw(dims, 0.0f);
    const int n = uniform_int(rng, std::max(2, fam.blob_count.first), std::max(3, fam.blob_count.second + 2));
    for (int i = 0; i < n; ++i) {
        std::array<std::uint32_t, 3> lo{};
        std::array<std::uint32_t, 3> hi{};
        for (int a = 0; a < 3; ++a) {
            const auto extent = static_cast<int>(dims[a]);
            const int len = uniform_int(rng, std::max(2, extent / 6), std::max(3, extent / 2));
            const int start = uniform_int(rng, 0, extent - len);
            lo[a] = static_cast<std::uint32_t>(start);
            hi[a] = static_cast<std::uint32_t>(start + len);
        }
        const auto level = static_cast<float>(uniform(rng, 0.2, 1.0));
        for (auto h = lo[0]; h < hi[0]; ++h)
            for (auto w = lo[1]; w < hi[1]; ++w)
                for (auto d = lo[2]; d < hi[2]; ++d) raw.at(h, w, d) = level;
    }
    raw.at(0, 0, 0) = 0.0f;  // guarantee a non-degenerate range
    raw.at(dims.h - 1, dims.w - 1, dims.d - 1) = std::max(raw.at(dims.h - 1, dims.w - 1, dims.d - 1), 0.5f);
    return rescale_minmax(raw);
}

Volume sphere_grid(const SyntheticFamily& fam, Rng& rng, Dims dims) {
    const double spacing = uniform_int(rng, 6, 9);
    const double radius = uniform(rng, std::max(1.2, fam.radius_range.first), std::max(2.0, fam.radius_range.second));
    std::array<double, 3> phase{};
    for (auto& p : phase) p = uniform(rng, 0.0, spacing);
    const double base = uniform(rng, 0.4, 1.0);
    const double tilt = uniform(rng, -0.02, 0.02);

    Volume raw(dims, 0.0f);
    for (std::uint32_t h = 0; h < dims.h; ++h)
        for (std::uint32_t w = 0; w < dims.w; ++w)
            for (std::uint32_t d = 0; d < dims.d; ++d) {
                const std::array<double, 3> p{double(h), double(w), double(d)};
                double r2 = 0.0;
                for (int a = 0; a < 3; ++a) {
                    const double local = std::fmod(p[a] + phase[a], spacing) - 0.5 * spacing;
                    r2 += local * local;
                }
                if (r2 <= radius * radius) raw.at(h, w, d) = static_cast<float>(base + tilt * (p[0] + p[1] + p[2]));
            }
    raw.at(dims.h / 2, dims.w / 2, dims.d / 2) = static_cast<float>(base);
    return rescale_minmax(raw);
}

Volume stripe_texture(const SyntheticFamily& fam, Rng& rng, Dims dims) {
    std::array<double, 3> dir{};
    double norm = 0.0;
    for (auto& c : dir) {
        c = uniform(rng, -1.0, 1.0);
        norm += c * c;
    }
    norm = std::sqrt(std::max(norm, 1e-6));
    for (auto& c : dir) c /= norm;
    const double freq = uniform(rng, fam.texture_frequency.first, fam.texture_frequency.second);
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double mod_freq = uniform(rng, 0.01, 0.04);

    Volume raw(dims);
    for (std::uint32_t h = 0; h < dims.h; ++h)
        for (std::uint32_t w = 0; w < dims.w; ++w)
            for (std::uint32_t d = 0; d < dims.d; ++d) {
                const double s = dir[0] * h + dir[1] * w + dir[2] * d;
                const double carrier = std::sin(2.0 * std::numbers::pi * freq * s + phase);
                const double envelope = 0.75 + 0.25 * std::cos(2.0 * std::numbers::pi * mod_freq * (h + d));
                raw.at(h, w, d) = static_cast<float>(carrier * envelope);
            }
    return rescale_minmax(raw);
}

}  // namespace

SyntheticFamily SyntheticFamily::defaults(FamilyId id) {
    SyntheticFamily f;
    f.id = id;
    switch (id) {
        case FamilyId::HeadLike: break;
        case FamilyId::CuboidField: f.blob_count = {4, 8}; break;
        case FamilyId::SphereGrid: f.radius_range = {1.5, 2.8}; break;
        case FamilyId::StripeTexture: break;
    }
    return f;
}

std::string_view to_string(FamilyId id) noexcept {
    switch (id) {
        case FamilyId::HeadLike: return "head_like";
        case FamilyId::CuboidField: return "cuboid_field";
        case FamilyId::SphereGrid: return "sphere_grid";
        case FamilyId::StripeTexture: return "stripe_texture";
    }
    return "unknown";
}

FamilyId parse_family(std::string_view name) {
    for (auto id : {FamilyId::HeadLike, FamilyId::CuboidField, FamilyId::SphereGrid, FamilyId::StripeTexture}) {
        if (to_string(id) == name) return id;
    }
    throw ValidationError("unknown synthetic family '" + std::string(name) + "'");
}

std::vector<FamilyId> far_ood_families() {
    return {FamilyId::CuboidField, FamilyId::SphereGrid, FamilyId::StripeTexture};
}

Volume synth_volume(const SyntheticFamily& family, std::uint64_t seed, Dims dims, std::uint32_t granularity) {
    if (granularity == 0 || !dims.positive() || dims.h % granularity || dims.w % granularity || dims.d % granularity) {
        throw ValidationError("synth_volume dims " + to_string(dims) + " must be positive multiples of " +
                              std::to_string(granularity));
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(family.id)));
    switch (family.id) {
        case FamilyId::HeadLike: return head_like(family, rng, dims);
        case FamilyId::CuboidField: return cuboid_field(family, rng, dims);
        case FamilyId::SphereGrid: return sphere_grid(family, rng, dims);
        case FamilyId::StripeTexture: return stripe_texture(family, rng, dims);
    }
    throw ValidationError("unknown synthetic family");
}

}  // namespace ldmood
