#include "ldmood/vqvae/model.hpp"

#include <cmath>
#include <limits>

#include "ldmood/error.hpp"

namespace ldmood::vq {

nn::Tensor<float> volume_to_tensor(const Volume& v) {
    const Dims& n = v.dims();
    return nn::Tensor<float>({1, n.h, n.w, n.d}, std::vector<float>(v.data().begin(), v.data().end()));
}

Volume tensor_to_volume(const nn::Tensor<float>& t) {
    if (t.rank() != 4 || t.extent(0) != 1) throw ValidationError("expected a [1, H, W, D] tensor");
    const Dims dims{static_cast<std::uint32_t>(t.extent(1)), static_cast<std::uint32_t>(t.extent(2)),
                    static_cast<std::uint32_t>(t.extent(3))};
    return Volume(dims, std::vector<float>(t.values().begin(), t.values().end()));
}

namespace {

template <typename T>
nn::Tensor<T> to_tensor(const Volume& v) {
    const Dims& n = v.dims();
    return nn::Tensor<T>({1, n.h, n.w, n.d}, std::vector<T>(v.data().begin(), v.data().end()));
}

template <typename T>
Volume to_volume(const nn::Tensor<T>& t) {
    const Dims dims{static_cast<std::uint32_t>(t.extent(1)), static_cast<std::uint32_t>(t.extent(2)),
                    static_cast<std::uint32_t>(t.extent(3))};
    return Volume(dims, std::vector<float>(t.values().begin(), t.values().end()));
}

}  // namespace

// ---- Encoder ----------------------------------------------------------------

template <typename T>
Encoder<T>::Encoder(const VQConfig& c) {
    c.validate();
    std::size_t prev = 1;
    for (int i = 0; i < c.levels; ++i) {
        const std::size_t ch = c.channels[static_cast<std::size_t>(i)];
        down_.emplace_back(prev, ch, 3, 2, 1);
        blocks_.emplace_back();
        for (std::size_t b = 0; b < c.res_blocks; ++b) blocks_.back().emplace_back(ch, ch, c.groups);
        prev = ch;
    }
    out_norm_ = nn::GroupNorm<T>(nn::group_count(prev, c.groups), prev);
    out_conv_ = nn::Conv3d<T>(prev, c.embedding_dim, 1);
}

template <typename T>
nn::Tensor<T> Encoder<T>::forward(const nn::Tensor<T>& x) {
    nn::Tensor<T> h = x;
    for (std::size_t i = 0; i < down_.size(); ++i) {
        h = down_[i].forward(h);
        for (auto& b : blocks_[i]) h = b.forward(h);
    }
    return out_conv_.forward(out_act_.forward(out_norm_.forward(h)));
}

template <typename T>
nn::Tensor<T> Encoder<T>::backward(const nn::Tensor<T>& dz) {
    nn::Tensor<T> g = out_norm_.backward(out_act_.backward(out_conv_.backward(dz)));
    for (std::size_t i = down_.size(); i-- > 0;) {
        for (std::size_t b = blocks_[i].size(); b-- > 0;) g = blocks_[i][b].backward(g);
        g = down_[i].backward(g);
    }
    return g;
}

template <typename T>
void Encoder<T>::init(Rng& rng) {
    for (std::size_t i = 0; i < down_.size(); ++i) {
        down_[i].init(rng);
        for (auto& b : blocks_[i]) b.init(rng);
    }
    out_norm_.init();
    out_conv_.init(rng);
}

template <typename T>
void Encoder<T>::collect(nn::ParameterStore<T>& store, const std::string& prefix) {
    for (std::size_t i = 0; i < down_.size(); ++i) {
        const std::string level = prefix + ".level" + std::to_string(i);
        down_[i].collect(store, level + ".down");
        for (std::size_t b = 0; b < blocks_[i].size(); ++b) blocks_[i][b].collect(store, level + ".res" + std::to_string(b));
    }
    out_norm_.collect(store, prefix + ".out_norm");
    out_conv_.collect(store, prefix + ".out_conv");
}

// ---- Decoder ----------------------------------------------------------------

template <typename T>
Decoder<T>::Decoder(const VQConfig& c) {
    c.validate();
    const auto L = static_cast<std::size_t>(c.levels);
    in_conv_ = nn::Conv3d<T>(c.embedding_dim, c.channels[L - 1], 3, 1, 1);
    blocks_.resize(L);
    up_.resize(L);
    up_conv_.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        const std::size_t ch = c.channels[i];
        for (std::size_t b = 0; b < c.res_blocks; ++b) blocks_[i].emplace_back(ch, ch, c.groups);
        if (i > 0) up_conv_[i] = nn::Conv3d<T>(ch, c.channels[i - 1], 3, 1, 1);
    }
    out_norm_ = nn::GroupNorm<T>(nn::group_count(c.channels[0], c.groups), c.channels[0]);
    out_conv_ = nn::Conv3d<T>(c.channels[0], 8, 3, 1, 1);
}

template <typename T>
nn::Tensor<T> Decoder<T>::forward(const nn::Tensor<T>& z) {
    nn::Tensor<T> h = in_conv_.forward(z);
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        for (auto& b : blocks_[i]) h = b.forward(h);
        if (i > 0) h = up_[i].forward(up_conv_[i].forward(h));
    }
    return out_sigmoid_.forward(out_shuffle_.forward(out_conv_.forward(out_act_.forward(out_norm_.forward(h)))));
}

template <typename T>
nn::Tensor<T> Decoder<T>::backward(const nn::Tensor<T>& dx) {
    nn::Tensor<T> g = out_norm_.backward(
        out_act_.backward(out_conv_.backward(out_shuffle_.backward(out_sigmoid_.backward(dx)))));
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (i > 0) g = up_conv_[i].backward(up_[i].backward(g));
        for (std::size_t b = blocks_[i].size(); b-- > 0;) g = blocks_[i][b].backward(g);
    }
    return in_conv_.backward(g);
}

template <typename T>
void Decoder<T>::init(Rng& rng) {
    in_conv_.init(rng);
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        for (auto& b : blocks_[i]) b.init(rng);
        if (i > 0) up_conv_[i].init(rng);
    }
    out_norm_.init();
    out_conv_.init(rng);
}

template <typename T>
void Decoder<T>::collect(nn::ParameterStore<T>& store, const std::string& prefix) {
    in_conv_.collect(store, prefix + ".in_conv");
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        const std::string level = prefix + ".level" + std::to_string(i);
        for (std::size_t b = 0; b < blocks_[i].size(); ++b) blocks_[i][b].collect(store, level + ".res" + std::to_string(b));
        if (i > 0) up_conv_[i].collect(store, level + ".up_conv");
    }
    out_norm_.collect(store, prefix + ".out_norm");
    out_conv_.collect(store, prefix + ".out_conv");
}

// ---- Codebook ---------------------------------------------------------------

template <typename T>
Codebook<T>::Codebook(std::size_t size, std::size_t dim)
    : embeddings({size, dim}), size_(size), dim_(dim), usage_(size, 0) {
    if (size == 0 || dim == 0) throw ValidationError("codebook must be nonempty");
}

template <typename T>
void Codebook<T>::init(Rng& rng) {
    embeddings.init_uniform(rng, 1.0 / static_cast<double>(size_));
    reset_usage();
}

template <typename T>
void Codebook<T>::collect(nn::ParameterStore<T>& store, const std::string& prefix) {
    store.add(prefix + ".embeddings", embeddings);
}

template <typename T>
void Codebook<T>::set_entry(std::size_t k, const std::vector<T>& vec) {
    if (k >= size_ || vec.size() != dim_) throw ValidationError("codebook entry out of range");
    std::copy(vec.begin(), vec.end(), embeddings.value.data() + k * dim_);
}

template <typename T>
QuantizeResult<T> Codebook<T>::quantize(const nn::Tensor<T>& z, bool count_usage) {
    if (size_ == 0) throw ValidationError("quantize: empty codebook");
    if (z.rank() != 4 || z.extent(0) != dim_) {
        throw ValidationError("quantize: expected [" + std::to_string(dim_) + ", h, w, d], got " + nn::to_string(z.shape()));
    }
    const std::size_t positions = nn::spatial_size(z);
    QuantizeResult<T> r;
    r.codes.dims = {static_cast<std::uint32_t>(z.extent(1)), static_cast<std::uint32_t>(z.extent(2)),
                    static_cast<std::uint32_t>(z.extent(3))};
    r.codes.indices.resize(positions);
    r.dequantized = nn::Tensor<T>(z.shape());
    const T* e = embeddings.value.data();
    double sq = 0.0;
    std::vector<T> vec(dim_);
    for (std::size_t p = 0; p < positions; ++p) {
        for (std::size_t c = 0; c < dim_; ++c) vec[c] = z[c * positions + p];
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < size_; ++k) {
            double dist = 0.0;
            for (std::size_t c = 0; c < dim_; ++c) {
                const double diff = static_cast<double>(vec[c]) - e[k * dim_ + c];
                dist += diff * diff;
            }
            if (dist < best_d) {
                best_d = dist;
                best = k;
            }
        }
        r.codes.indices[p] = static_cast<std::uint32_t>(best);
        for (std::size_t c = 0; c < dim_; ++c) r.dequantized[c * positions + p] = e[best * dim_ + c];
        sq += best_d;
        if (count_usage) ++usage_[best];
    }
    r.vq_loss = sq / static_cast<double>(z.size());
    r.commit_loss = r.vq_loss;
    return r;
}

template <typename T>
void Codebook<T>::accumulate_vq_grad(const nn::Tensor<T>& z, const QuantizeResult<T>& q, double weight) {
    const std::size_t positions = nn::spatial_size(z);
    const double scale = 2.0 * weight / static_cast<double>(z.size());
    for (std::size_t p = 0; p < positions; ++p) {
        const std::size_t k = q.codes.indices[p];
        for (std::size_t c = 0; c < dim_; ++c) {
            embeddings.grad[k * dim_ + c] +=
                static_cast<T>(scale * (static_cast<double>(q.dequantized[c * positions + p]) - z[c * positions + p]));
        }
    }
}

// ---- VQModel ----------------------------------------------------------------

template <typename T>
VQModel<T>::VQModel(const VQConfig& config)
    : config_(config), encoder_(config), codebook_(config.codebook_size, config.embedding_dim), decoder_(config) {
    init(config.seed);
}

template <typename T>
void VQModel<T>::init(std::uint64_t seed) {
    Rng rng(seed);
    encoder_.init(rng);
    codebook_.init(rng);
    decoder_.init(rng);
}

template <typename T>
nn::ParameterStore<T> VQModel<T>::parameters() {
    nn::ParameterStore<T> store;
    encoder_.collect(store, "encoder");
    codebook_.collect(store, "codebook");
    decoder_.collect(store, "decoder");
    return store;
}

template <typename T>
void VQModel<T>::check_input(Dims dims) const {
    config_.latent_dims(dims);
}

template <typename T>
nn::Tensor<T> VQModel<T>::encode(const Volume& v) {
    check_input(v.dims());
    return encoder_.forward(to_tensor<T>(v));
}

template <typename T>
Volume VQModel<T>::decode(const nn::Tensor<T>& z) {
    if (z.rank() != 4 || z.extent(0) != config_.embedding_dim) {
        throw ValidationError("decode: latent shape " + nn::to_string(z.shape()) + " does not match embedding dim " +
                              std::to_string(config_.embedding_dim));
    }
    return to_volume(decoder_.forward(z));
}

template <typename T>
Volume VQModel<T>::reconstruct(const Volume& v) {
    return decode(quantize(encode(v)).dequantized);
}

template <typename T>
StepLosses VQModel<T>::accumulate_gradients(const Volume& v, double weight, bool count_usage) {
    check_input(v.dims());
    const nn::Tensor<T> x = to_tensor<T>(v);
    const nn::Tensor<T> z = encoder_.forward(x);
    const QuantizeResult<T> q = codebook_.quantize(z, count_usage);
    const nn::Tensor<T> x_hat = decoder_.forward(q.dequantized);

    StepLosses losses;
    nn::Tensor<T> dx_hat(x_hat.shape());
    const double n = static_cast<double>(x.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double diff = static_cast<double>(x_hat[i]) - x[i];
        sq += diff * diff;
        dx_hat[i] = static_cast<T>(2.0 * weight * diff / n);
    }
    losses.reconstruction = sq / n;
    losses.vq = q.vq_loss;
    losses.commitment = q.commit_loss;
    losses.total = losses.reconstruction + losses.vq + config_.commitment * losses.commitment;

    // Straight-through: decoder gradient passes to the encoder output unchanged.
    nn::Tensor<T> dz = decoder_.backward(dx_hat);
    const double commit_scale = 2.0 * weight * config_.commitment / static_cast<double>(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        dz[i] += static_cast<T>(commit_scale * (static_cast<double>(z[i]) - q.dequantized[i]));
    }
    codebook_.accumulate_vq_grad(z, q, weight);
    encoder_.backward(dz);
    return losses;
}

template class Encoder<float>;
template class Encoder<double>;
template class Decoder<float>;
template class Decoder<double>;
template class Codebook<float>;
template class Codebook<double>;
template class VQModel<float>;
template class VQModel<double>;

}  // namespace ldmood::vq
