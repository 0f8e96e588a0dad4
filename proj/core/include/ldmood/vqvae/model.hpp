#pragma once

#include <cstdint>
#include <vector>

#include "ldmood/nn/layers.hpp"
#include "ldmood/vqvae/config.hpp"
#include "ldmood/volume.hpp"

namespace ldmood::vq {

/// Continuous latent field, stored channels-first as [n, h, w, d].
using LatentTensor = nn::Tensor<float>;

/// Codebook index per latent position, (h, w, d) row-major.
struct QuantizedLatent {
    Dims dims{};
    std::vector<std::uint32_t> indices;

    friend bool operator==(const QuantizedLatent&, const QuantizedLatent&) = default;
};

template <typename T>
struct QuantizeResult {
    QuantizedLatent codes;
    nn::Tensor<T> dequantized;  // codebook[codes], same shape as the input latent
    double vq_loss = 0.0;       // mean ||sg(z) - e||^2
    double commit_loss = 0.0;   // mean ||z - sg(e)||^2
};

template <typename T>
class Encoder {
public:
    Encoder() = default;
    explicit Encoder(const VQConfig& config);

    nn::Tensor<T> forward(const nn::Tensor<T>& x);
    nn::Tensor<T> backward(const nn::Tensor<T>& dz);
    void init(Rng& rng);
    void collect(nn::ParameterStore<T>& store, const std::string& prefix);

private:
    std::vector<nn::Conv3d<T>> down_;
    std::vector<std::vector<nn::ResBlock<T>>> blocks_;
    nn::GroupNorm<T> out_norm_;
    nn::SiLU<T> out_act_;
    nn::Conv3d<T> out_conv_;
};

template <typename T>
class Decoder {
public:
    Decoder() = default;
    explicit Decoder(const VQConfig& config);

    nn::Tensor<T> forward(const nn::Tensor<T>& z);
    nn::Tensor<T> backward(const nn::Tensor<T>& dx);
    void init(Rng& rng);
    void collect(nn::ParameterStore<T>& store, const std::string& prefix);

private:
    nn::Conv3d<T> in_conv_;
    std::vector<std::vector<nn::ResBlock<T>>> blocks_;  // indexed by level
    std::vector<nn::Conv3d<T>> up_conv_;  // level i > 0: c_i -> c_{i-1}, then upsample
    std::vector<nn::Upsample2x<T>> up_;
    nn::GroupNorm<T> out_norm_;
    nn::SiLU<T> out_act_;
    nn::Conv3d<T> out_conv_;  // c_0 -> 8, shuffled up to full resolution
    nn::PixelShuffle3d<T> out_shuffle_;
    nn::Sigmoid<T> out_sigmoid_;
};

/// K embedding vectors of dimension n, with per-entry usage counters.
template <typename T>
class Codebook {
public:
    Codebook() = default;
    Codebook(std::size_t size, std::size_t dim);

    /// Euclidean-nearest entry per position (ties -> lowest index).
    QuantizeResult<T> quantize(const nn::Tensor<T>& z, bool count_usage = false);
    /// Gradient of vq_loss w.r.t. the embeddings, scaled by `weight`.
    void accumulate_vq_grad(const nn::Tensor<T>& z, const QuantizeResult<T>& q, double weight);

    void init(Rng& rng);
    void collect(nn::ParameterStore<T>& store, const std::string& prefix);

    std::size_t size() const noexcept { return size_; }
    std::size_t dim() const noexcept { return dim_; }
    const T* entry(std::size_t k) const { return embeddings.value.data() + k * dim_; }
    void set_entry(std::size_t k, const std::vector<T>& vec);

    std::vector<std::uint64_t>& usage() noexcept { return usage_; }
    const std::vector<std::uint64_t>& usage() const noexcept { return usage_; }
    void reset_usage() { usage_.assign(size_, 0); }

    nn::Parameter<T> embeddings;  // [K, n]

private:
    std::size_t size_ = 0, dim_ = 0;
    std::vector<std::uint64_t> usage_;
};

struct StepLosses {
    double reconstruction = 0.0;
    double vq = 0.0;
    double commitment = 0.0;
    double total = 0.0;
};

/// Encoder E, codebook, decoder G.
template <typename T>
class VQModel {
public:
    VQModel() = default;
    explicit VQModel(const VQConfig& config);

    const VQConfig& config() const noexcept { return config_; }

    /// E(x) as a [n, h, w, d] latent.
    nn::Tensor<T> encode(const Volume& v);
    QuantizeResult<T> quantize(const nn::Tensor<T>& z) { return codebook_.quantize(z); }
    /// G(z): the decoder ends in a sigmoid, so voxels lie in [0, 1].
    Volume decode(const nn::Tensor<T>& z);
    /// decode(dequantize(quantize(encode(v)))).
    Volume reconstruct(const Volume& v);

    /// Forward + backward of ||x - x_hat||^2 + vq + beta * commit on one volume,
    /// gradients scaled by `weight` and accumulated into the parameters.
    StepLosses accumulate_gradients(const Volume& v, double weight, bool count_usage = true);

    nn::ParameterStore<T> parameters();
    void init(std::uint64_t seed);

    Encoder<T>& encoder() noexcept { return encoder_; }
    Decoder<T>& decoder() noexcept { return decoder_; }
    Codebook<T>& codebook() noexcept { return codebook_; }
    const Codebook<T>& codebook() const noexcept { return codebook_; }

private:
    void check_input(Dims dims) const;

    VQConfig config_;
    Encoder<T> encoder_;
    Codebook<T> codebook_;
    Decoder<T> decoder_;
};

nn::Tensor<float> volume_to_tensor(const Volume& v);
Volume tensor_to_volume(const nn::Tensor<float>& t);

extern template class Encoder<float>;
extern template class Encoder<double>;
extern template class Decoder<float>;
extern template class Decoder<double>;
extern template class Codebook<float>;
extern template class Codebook<double>;
extern template class VQModel<float>;
extern template class VQModel<double>;

}  // namespace ldmood::vq
