#include "ldmood/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "ldmood/error.hpp"

namespace ldmood {

namespace {

constexpr char kMagic[4] = {'V', 'O', 'L', '1'};
constexpr std::uint8_t kVersion = 0x01;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
    return v;
}

}  // namespace

std::string to_string(const Dims& dims) {
    return std::to_string(dims.h) + "x" + std::to_string(dims.w) + "x" + std::to_string(dims.d);
}

Volume::Volume(Dims dims, float fill) : dims_(dims), data_(dims.voxels(), fill) {
    if (!dims.positive()) throw ValidationError("volume dims must be positive, got " + to_string(dims));
}

Volume::Volume(Dims dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
    if (!dims.positive()) throw ValidationError("volume dims must be positive, got " + to_string(dims));
    if (data_.size() != dims.voxels()) {
        throw ValidationError("volume data length " + std::to_string(data_.size()) +
                              " does not match dims " + to_string(dims));
    }
}

bool Volume::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float x) { return std::isfinite(x); });
}

std::vector<std::uint8_t> encode_volume(const Volume& volume) {
    if (!volume.all_finite()) throw ValidationError("refusing to serialize a volume with NaN/Inf values");
    std::vector<std::uint8_t> out;
    out.reserve(kVolumeHeaderBytes + 4 * volume.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    out.push_back(kVersion);
    put_u32(out, volume.dims().h);
    put_u32(out, volume.dims().w);
    put_u32(out, volume.dims().d);
    for (float x : volume.data()) put_u32(out, std::bit_cast<std::uint32_t>(x));
    return out;
}

Volume decode_volume(std::span<const std::uint8_t> bytes) {
    using Kind = FormatError::Kind;
    if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin(),
                                        [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
        throw FormatError(Kind::BadMagic, "expected \"VOL1\"");
    }
    if (bytes.size() < kVolumeHeaderBytes) throw FormatError(Kind::Truncated, "header shorter than 17 bytes");
    if (bytes[4] != kVersion) throw FormatError(Kind::BadVersion, "version " + std::to_string(bytes[4]));

    const Dims dims{get_u32(bytes, 5), get_u32(bytes, 9), get_u32(bytes, 13)};
    if (!dims.positive()) throw FormatError(Kind::DimensionOverflow, "zero extent in " + to_string(dims));
    // Checked multiplication: a hostile header must not wrap size_t.
    constexpr auto kMax = std::numeric_limits<std::size_t>::max() / 4;
    std::size_t count = dims.h;
    if (count > kMax / dims.w) throw FormatError(Kind::DimensionOverflow, to_string(dims));
    count *= dims.w;
    if (count > kMax / dims.d) throw FormatError(Kind::DimensionOverflow, to_string(dims));
    count *= dims.d;

    const std::size_t payload = bytes.size() - kVolumeHeaderBytes;
    if (payload < 4 * count) {
        throw FormatError(Kind::Truncated, "payload holds " + std::to_string(payload) + " bytes, need " +
                                               std::to_string(4 * count));
    }
    if (payload > 4 * count) throw FormatError(Kind::Corrupt, "trailing bytes after payload");

    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        data[i] = std::bit_cast<float>(get_u32(bytes, kVolumeHeaderBytes + 4 * i));
        if (!std::isfinite(data[i])) throw FormatError(Kind::Corrupt, "non-finite voxel value");
    }
    return Volume(dims, std::move(data));
}

Volume load_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open volume file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_volume(bytes);
    } catch (const FormatError& e) {
        throw FormatError(e.kind(), path.string() + ": " + e.what());
    }
}

void save_volume(const Volume& volume, const std::filesystem::path& path) {
    const auto bytes = encode_volume(volume);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write volume file " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write on " + path.string());
}

Volume preprocess_ct(const Volume& raw, double lo, double hi) {
    if (!(lo < hi)) throw ValidationError("preprocess_ct requires lo < hi");
    Volume out = raw;
    const double range = hi - lo;
    for (float& x : out.data()) x = static_cast<float>((std::clamp(static_cast<double>(x), lo, hi) - lo) / range);
    return out;
}

Volume rescale_minmax(const Volume& raw) {
    const auto [mn, mx] = std::minmax_element(raw.data().begin(), raw.data().end());
    if (mn == raw.data().end() || !(*mx > *mn)) throw ValidationError("rescale_minmax: volume is constant");
    const double lo = *mn;
    const double range = static_cast<double>(*mx) - lo;
    Volume out = raw;
    for (float& x : out.data()) x = static_cast<float>((x - lo) / range);
    return out;
}

Volume pad_crop(const Volume& v, Dims target) {
    if (!target.positive()) throw ValidationError("pad_crop target must be positive, got " + to_string(target));
    Volume out(target, 0.0f);
    // Per axis: source offset (crop) and destination offset (pad); one of them is zero.
    std::int64_t src_off[3];
    std::int64_t dst_off[3];
    std::int64_t extent[3];
    for (int a = 0; a < 3; ++a) {
        const std::int64_t s = v.dims()[a];
        const std::int64_t t = target[a];
        src_off[a] = s > t ? (s - t) / 2 : 0;
        dst_off[a] = t > s ? (t - s) / 2 : 0;
        extent[a] = std::min(s, t);
    }
    for (std::int64_t h = 0; h < extent[0]; ++h)
        for (std::int64_t w = 0; w < extent[1]; ++w)
            for (std::int64_t d = 0; d < extent[2]; ++d)
                out.at(h + dst_off[0], w + dst_off[1], d + dst_off[2]) =
                    v.at(h + src_off[0], w + src_off[1], d + src_off[2]);
    return out;
}

Volume flip(const Volume& v, int axis) {
    if (axis < 0 || axis > 2) throw ValidationError("flip axis must be 0, 1, or 2");
    const Dims& n = v.dims();
    Volume out(n);
    for (std::size_t h = 0; h < n.h; ++h)
        for (std::size_t w = 0; w < n.w; ++w)
            for (std::size_t d = 0; d < n.d; ++d) {
                const std::size_t sh = axis == 0 ? n.h - 1 - h : h;
                const std::size_t sw = axis == 1 ? n.w - 1 - w : w;
                const std::size_t sd = axis == 2 ? n.d - 1 - d : d;
                out.at(h, w, d) = v.at(sh, sw, sd);
            }
    return out;
}

}  // namespace ldmood
