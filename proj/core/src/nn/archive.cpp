#include "ldmood/nn/archive.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "ldmood/error.hpp"

namespace ldmood::nn {

namespace {

using Kind = FormatError::Kind;
constexpr char kMagic[4] = {'N', 'T', 'A', '1'};

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::size_t limit) : bytes_(bytes), limit_(limit) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }
    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void need(std::size_t n) const {
        if (pos_ + n > limit_) throw FormatError(Kind::Truncated, "archive ends inside an entry");
    }
    std::size_t pos() const noexcept { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t limit_;
    std::size_t pos_ = 0;
};

}  // namespace

void TensorArchive::add(std::string name, Tensor<float> tensor) {
    if (find(name)) throw ValidationError("archive already has an entry named '" + name + "'");
    entries.push_back({std::move(name), std::move(tensor)});
}

const Tensor<float>* TensorArchive::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e.tensor;
    return nullptr;
}

const Tensor<float>& TensorArchive::at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw DataError("archive has no entry named '" + name + "'");
}

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.entries.size()));
    for (const auto& e : archive.entries) {
        if (e.name.size() > 0xffff) throw ValidationError("archive entry name too long");
        if (e.tensor.rank() > 0xff) throw ValidationError("archive entry rank too large");
        if (!e.tensor.all_finite()) throw NumericalError("archive entry '" + e.name + "' holds NaN/Inf");
        put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(static_cast<std::uint8_t>(e.tensor.rank()));
        for (std::size_t extent : e.tensor.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(extent));
        for (float x : e.tensor.values()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
    }
    const auto footer_offset = static_cast<std::uint64_t>(out.size());
    out.insert(out.end(), archive.footer.begin(), archive.footer.end());
    put<std::uint64_t>(out, footer_offset);
    return out;
}

TensorArchive decode_archive(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin(),
                                        [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
        throw FormatError(Kind::BadMagic, "expected \"NTA1\"");
    }
    if (bytes.size() < 4 + 4 + 8) throw FormatError(Kind::Truncated, "archive too short");
    Reader tail(bytes.subspan(bytes.size() - 8), 8);
    const auto footer_offset = tail.get<std::uint64_t>();
    if (footer_offset < 8 || footer_offset > bytes.size() - 8) {
        throw FormatError(Kind::Corrupt, "footer offset out of range");
    }

    TensorArchive archive;
    Reader r(bytes, static_cast<std::size_t>(footer_offset));
    r.text(4);
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.get<std::uint16_t>();
        std::string name = r.text(name_len);
        const auto rank = r.get<std::uint8_t>();
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& extent : shape) {
            extent = r.get<std::uint32_t>();
            if (extent != 0 && n > (footer_offset / 4) / extent) {
                throw FormatError(Kind::DimensionOverflow, "entry '" + name + "' is larger than the file");
            }
            n *= extent;
        }
        r.need(4 * n);
        std::vector<float> values(n);
        for (auto& x : values) x = std::bit_cast<float>(r.get<std::uint32_t>());
        archive.entries.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(values))});
    }
    if (r.pos() != footer_offset) throw FormatError(Kind::Corrupt, "unexpected bytes before footer");
    archive.footer.assign(reinterpret_cast<const char*>(bytes.data() + footer_offset),
                          bytes.size() - 8 - static_cast<std::size_t>(footer_offset));
    return archive;
}

void save_archive(const TensorArchive& archive, const std::filesystem::path& path) {
    const auto bytes = encode_archive(archive);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write archive " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("short write on " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

TensorArchive load_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open archive " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_archive(bytes);
    } catch (const FormatError& e) {
        throw FormatError(e.kind(), path.string() + ": " + e.what());
    }
}

template <typename T>
void store_parameters(TensorArchive& archive, const ParameterStore<T>& params, const std::string& prefix) {
    for (const auto& [name, p] : params.entries()) archive.add(prefix + name, p->value.template cast<float>());
}

template <typename T>
void load_parameters(const TensorArchive& archive, ParameterStore<T>& params, const std::string& prefix) {
    for (const auto& [name, p] : params.entries()) {
        const Tensor<float>& t = archive.at(prefix + name);
        if (t.shape() != p->value.shape()) {
            throw DataError("checkpoint entry '" + prefix + name + "' has shape " + to_string(t.shape()) +
                            ", model expects " + to_string(p->value.shape()));
        }
        p->value = t.template cast<T>();
        p->zero_grad();
    }
}

template <typename T>
void store_adam(TensorArchive& archive, const AdamState<T>& state, const std::string& prefix) {
    for (std::size_t i = 0; i < state.names.size(); ++i) {
        archive.add(prefix + ".m/" + state.names[i], state.m[i].template cast<float>());
        archive.add(prefix + ".v/" + state.names[i], state.v[i].template cast<float>());
    }
}

template <typename T>
bool load_adam(const TensorArchive& archive, AdamState<T>& state, const ParameterStore<T>& params,
               std::uint64_t step, const std::string& prefix) {
    if (params.entries().empty() || !archive.find(prefix + ".m/" + params.entries().front().first)) return false;
    AdamState<T> loaded;
    for (const auto& [name, p] : params.entries()) {
        loaded.names.push_back(name);
        loaded.m.push_back(archive.at(prefix + ".m/" + name).template cast<T>());
        loaded.v.push_back(archive.at(prefix + ".v/" + name).template cast<T>());
        if (loaded.m.back().shape() != p->value.shape()) throw DataError("optimizer state shape mismatch for " + name);
    }
    loaded.step = step;
    state = std::move(loaded);
    return true;
}

template void store_parameters<float>(TensorArchive&, const ParameterStore<float>&, const std::string&);
template void store_parameters<double>(TensorArchive&, const ParameterStore<double>&, const std::string&);
template void load_parameters<float>(const TensorArchive&, ParameterStore<float>&, const std::string&);
template void load_parameters<double>(const TensorArchive&, ParameterStore<double>&, const std::string&);
template void store_adam<float>(TensorArchive&, const AdamState<float>&, const std::string&);
template void store_adam<double>(TensorArchive&, const AdamState<double>&, const std::string&);
template bool load_adam<float>(const TensorArchive&, AdamState<float>&, const ParameterStore<float>&, std::uint64_t,
                               const std::string&);
template bool load_adam<double>(const TensorArchive&, AdamState<double>&, const ParameterStore<double>&, std::uint64_t,
                                const std::string&);

}  // namespace ldmood::nn
