#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ldmood {

/// Grid extents in (H, W, D) order; D is the fastest-varying index.
struct Dims {
    std::uint32_t h = 0;
    std::uint32_t w = 0;
    std::uint32_t d = 0;

    std::size_t voxels() const noexcept {
        return static_cast<std::size_t>(h) * w * d;
    }
    std::uint32_t operator[](int axis) const noexcept { return axis == 0 ? h : axis == 1 ? w : d; }
    bool positive() const noexcept { return h > 0 && w > 0 && d > 0; }
    friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& dims);

/// Dense scalar field on a 3D grid. Values are always finite.
class Volume {
public:
    Volume() = default;
    explicit Volume(Dims dims, float fill = 0.0f);
    Volume(Dims dims, std::vector<float> data);

    const Dims& dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::size_t index(std::size_t h, std::size_t w, std::size_t d) const noexcept {
        return (h * dims_.w + w) * dims_.d + d;
    }
    float& at(std::size_t h, std::size_t w, std::size_t d) noexcept { return data_[index(h, w, d)]; }
    float at(std::size_t h, std::size_t w, std::size_t d) const noexcept { return data_[index(h, w, d)]; }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    bool all_finite() const noexcept;

    friend bool operator==(const Volume&, const Volume&) = default;

private:
    Dims dims_{};
    std::vector<float> data_;
};

/// Size in bytes of the fixed volume file header ("VOL1", version, three u32 dims).
inline constexpr std::size_t kVolumeHeaderBytes = 4 + 1 + 3 * 4;

Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& volume, const std::filesystem::path& path);

/// Serialize to the on-disk byte layout (header + little-endian float32 payload).
std::vector<std::uint8_t> encode_volume(const Volume& volume);
Volume decode_volume(std::span<const std::uint8_t> bytes);

/// Clamp to [lo, hi] then map affinely onto [0, 1].
Volume preprocess_ct(const Volume& raw, double lo = -15.0, double hi = 100.0);

/// Affine map with min -> 0 and max -> 1. Throws on constant input.
Volume rescale_minmax(const Volume& raw);

/// Centered crop where the input is larger, symmetric zero pad where smaller.
Volume pad_crop(const Volume& v, Dims target);

/// Mirror the grid through the plane orthogonal to `axis` (0, 1, or 2).
Volume flip(const Volume& v, int axis);

}  // namespace ldmood
