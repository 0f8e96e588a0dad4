#include "ldmood/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Core>

#include "ldmood/error.hpp"

namespace ldmood::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_spatial(const Shape& s, std::size_t channels, const char* who) {
    if (s.size() != 4 || s[0] != channels) {
        throw ValidationError(std::string(who) + ": expected [" + std::to_string(channels) + ", H, W, D], got " +
                              to_string(s));
    }
}

// Output indices o in [lo, hi) whose input o*s - p + k lands inside [0, n).
std::pair<std::size_t, std::size_t> valid_range(std::size_t outputs, std::size_t n, std::ptrdiff_t s, std::ptrdiff_t p,
                                                std::size_t k) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - p;
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
    std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(n) - 1 - off) / s + 1;
    if (static_cast<std::ptrdiff_t>(n) - 1 - off < 0) hi = 0;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(outputs));
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

// ---- Parameter / ParameterStore --------------------------------------------

template <typename T>
void Parameter<T>::init_uniform(Rng& rng, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : value.values()) x = static_cast<T>(dist(rng));
    zero_grad();
}

template <typename T>
void ParameterStore<T>::add(const std::string& name, Parameter<T>& p) {
    if (contains(name)) throw ValidationError("duplicate parameter name '" + name + "'");
    entries_.emplace_back(name, &p);
}

template <typename T>
Parameter<T>& ParameterStore<T>::get(const std::string& name) const {
    for (const auto& [n, p] : entries_)
        if (n == name) return *p;
    throw ValidationError("no parameter named '" + name + "'");
}

template <typename T>
bool ParameterStore<T>::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second->value.size();
    return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
    for (auto& e : entries_) e.second->zero_grad();
}

// ---- Conv3d -----------------------------------------------------------------

template <typename T>
Conv3d<T>::Conv3d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                  std::size_t padding)
    : weight({out_channels, in_channels, kernel, kernel, kernel}),
      bias({out_channels}),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding) {
    if (in_channels == 0 || out_channels == 0 || kernel == 0) throw ValidationError("conv3d: zero-sized layer");
    if (stride != 1 && stride != 2) throw ValidationError("conv3d: stride must be 1 or 2");
}

template <typename T>
Shape Conv3d<T>::output_shape(const Shape& input) const {
    require_spatial(input, in_, "conv3d");
    Shape out{out_, 0, 0, 0};
    for (int a = 1; a <= 3; ++a) {
        const std::size_t padded = input[a] + 2 * padding_;
        if (padded < kernel_) throw ValidationError("conv3d: kernel larger than padded input " + to_string(input));
        out[a] = (padded - kernel_) / stride_ + 1;
    }
    return out;
}

template <typename T>
void Conv3d<T>::init(Rng& rng) {
    const double fan_in = static_cast<double>(in_ * kernel_ * kernel_ * kernel_);
    weight.init_uniform(rng, 1.0 / std::sqrt(fan_in));
    bias.init_uniform(rng, 1.0 / std::sqrt(fan_in));
}

template <typename T>
void Conv3d<T>::zero_init() {
    weight.value.fill(T{0});
    bias.value.fill(T{0});
}

template <typename T>
void Conv3d<T>::collect(ParameterStore<T>& store, const std::string& prefix) {
    store.add(prefix + ".weight", weight);
    store.add(prefix + ".bias", bias);
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& x) {
    const Shape out_shape = output_shape(x.shape());
    in_shape_ = x.shape();
    const std::size_t H = x.extent(1), W = x.extent(2), D = x.extent(3);
    const std::size_t Ho = out_shape[1], Wo = out_shape[2], Do = out_shape[3];
    const std::size_t k = kernel_, k3 = k * k * k;
    const std::size_t rows = in_ * k3;
    const std::size_t cols = Ho * Wo * Do;
    const auto p = static_cast<std::ptrdiff_t>(padding_);
    const auto s = static_cast<std::ptrdiff_t>(stride_);

    if (kernel_ == 1 && stride_ == 1 && padding_ == 0) {
        cols_.assign(x.data(), x.data() + x.size());
    } else {
        // Every entry is written below, so the buffer is reused without clearing.
        cols_.resize(rows * cols);
        for (std::size_t c = 0; c < in_; ++c) {
            const T* src = x.data() + c * H * W * D;
            for (std::size_t kh = 0; kh < k; ++kh)
                for (std::size_t kw = 0; kw < k; ++kw)
                    for (std::size_t kd = 0; kd < k; ++kd) {
                        T* row = cols_.data() + ((c * k + kh) * k + kw) * k * cols + kd * cols;
                        const auto [lo, hi] = valid_range(Do, D, s, p, kd);
                        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kd) - p;
                        for (std::size_t oh = 0; oh < Ho; ++oh) {
                            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * s - p + static_cast<std::ptrdiff_t>(kh);
                            const bool row_ok = ih >= 0 && ih < static_cast<std::ptrdiff_t>(H);
                            for (std::size_t ow = 0; ow < Wo; ++ow) {
                                T* dst = row + (oh * Wo + ow) * Do;
                                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * s - p + static_cast<std::ptrdiff_t>(kw);
                                if (!row_ok || iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) {
                                    std::fill(dst, dst + Do, T{0});
                                    continue;
                                }
                                const T* line = src + (static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * D;
                                std::fill(dst, dst + lo, T{0});
                                if (s == 1) {
                                    std::copy(line + static_cast<std::ptrdiff_t>(lo) + shift, line + static_cast<std::ptrdiff_t>(hi) + shift, dst + lo);
                                } else {
                                    for (std::size_t od = lo; od < hi; ++od) dst[od] = line[static_cast<std::ptrdiff_t>(od) * s + shift];
                                }
                                std::fill(dst + hi, dst + Do, T{0});
                            }
                        }
                    }
        }
    }

    Tensor<T> y(out_shape);
    ConstMatMap<T> w(weight.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(rows));
    ConstMatMap<T> col(cols_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    MatMap<T> out(y.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(cols));
    out.noalias() = w * col;
    for (std::size_t o = 0; o < out_; ++o) out.row(static_cast<Eigen::Index>(o)).array() += bias.value[o];
    return y;
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const Tensor<T>& dy) {
    const Shape out_shape = output_shape(in_shape_);
    if (dy.shape() != out_shape) throw ValidationError("conv3d backward: gradient shape " + to_string(dy.shape()));
    const std::size_t H = in_shape_[1], W = in_shape_[2], D = in_shape_[3];
    const std::size_t Ho = out_shape[1], Wo = out_shape[2], Do = out_shape[3];
    const std::size_t k = kernel_, k3 = k * k * k;
    const std::size_t rows = in_ * k3;
    const std::size_t cols = Ho * Wo * Do;
    const auto p = static_cast<std::ptrdiff_t>(padding_);
    const auto s = static_cast<std::ptrdiff_t>(stride_);

    ConstMatMap<T> g(dy.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(cols));
    ConstMatMap<T> col(cols_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    MatMap<T> gw(weight.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(rows));
    gw.noalias() += g * col.transpose();
    for (std::size_t o = 0; o < out_; ++o) bias.grad[o] += g.row(static_cast<Eigen::Index>(o)).sum();

    ConstMatMap<T> w(weight.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(rows));
    Tensor<T> dx(in_shape_);
    if (kernel_ == 1 && stride_ == 1 && padding_ == 0) {
        MatMap<T>(dx.data(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(cols)).noalias() = w.transpose() * g;
        return dx;
    }
    RowMat<T> dcols = w.transpose() * g;
    for (std::size_t c = 0; c < in_; ++c) {
        T* dst = dx.data() + c * H * W * D;
        for (std::size_t kh = 0; kh < k; ++kh)
            for (std::size_t kw = 0; kw < k; ++kw)
                for (std::size_t kd = 0; kd < k; ++kd) {
                    const T* row = dcols.data() + (((c * k + kh) * k + kw) * k + kd) * cols;
                    const auto [lo, hi] = valid_range(Do, D, s, p, kd);
                    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kd) - p;
                    for (std::size_t oh = 0; oh < Ho; ++oh) {
                        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * s - p + static_cast<std::ptrdiff_t>(kh);
                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t ow = 0; ow < Wo; ++ow) {
                            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * s - p + static_cast<std::ptrdiff_t>(kw);
                            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                            T* line = dst + (static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * D;
                            const T* src = row + (oh * Wo + ow) * Do;
                            T* base = line + shift;
                            if (s == 1) {
                                for (std::size_t od = lo; od < hi; ++od) base[od] += src[od];
                            } else {
                                for (std::size_t od = lo; od < hi; ++od) base[static_cast<std::ptrdiff_t>(od) * s] += src[od];
                            }
                        }
                    }
                }
    }
    return dx;
}

// ---- GroupNorm --------------------------------------------------------------

std::size_t group_count(std::size_t channels, std::size_t preferred) {
    for (std::size_t g = std::min(preferred, channels); g > 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

template <typename T>
GroupNorm<T>::GroupNorm(std::size_t groups, std::size_t channels)
    : scale({channels}), shift({channels}), groups_(groups), channels_(channels) {
    if (groups == 0 || channels % groups != 0) {
        throw ValidationError("group_norm: " + std::to_string(channels) + " channels not divisible into " +
                              std::to_string(groups) + " groups");
    }
    init();
}

template <typename T>
void GroupNorm<T>::init() {
    scale.value.fill(T{1});
    shift.value.fill(T{0});
    scale.zero_grad();
    shift.zero_grad();
}

template <typename T>
void GroupNorm<T>::collect(ParameterStore<T>& store, const std::string& prefix) {
    store.add(prefix + ".scale", scale);
    store.add(prefix + ".shift", shift);
}

template <typename T>
Tensor<T> GroupNorm<T>::forward(const Tensor<T>& x) {
    if (x.rank() < 2 || x.extent(0) != channels_) {
        throw ValidationError("group_norm: expected " + std::to_string(channels_) + " channels, got " +
                              to_string(x.shape()));
    }
    const std::size_t plane = spatial_size(x);
    const std::size_t per_group = channels_ / groups_;
    const std::size_t n = per_group * plane;
    normalized_ = Tensor<T>(x.shape());
    inv_std_.assign(groups_, 0.0);
    Tensor<T> y(x.shape());
    for (std::size_t g = 0; g < groups_; ++g) {
        const T* src = x.data() + g * n;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += src[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + kEps);
        inv_std_[g] = inv;
        T* xhat = normalized_.data() + g * n;
        T* dst = y.data() + g * n;
        for (std::size_t c = 0; c < per_group; ++c) {
            const std::size_t ch = g * per_group + c;
            const T a = scale.value[ch];
            const T b = shift.value[ch];
            for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
                xhat[i] = static_cast<T>((src[i] - mean) * inv);
                dst[i] = a * xhat[i] + b;
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> GroupNorm<T>::backward(const Tensor<T>& dy) {
    if (dy.shape() != normalized_.shape()) throw ValidationError("group_norm backward: shape mismatch");
    const std::size_t plane = spatial_size(dy);
    const std::size_t per_group = channels_ / groups_;
    const std::size_t n = per_group * plane;
    Tensor<T> dx(dy.shape());
    std::vector<double> dxhat(n);
    for (std::size_t g = 0; g < groups_; ++g) {
        const T* gy = dy.data() + g * n;
        const T* xhat = normalized_.data() + g * n;
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t c = 0; c < per_group; ++c) {
            const std::size_t ch = g * per_group + c;
            double ds = 0.0, db = 0.0;
            for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
                ds += static_cast<double>(gy[i]) * xhat[i];
                db += gy[i];
                dxhat[i] = static_cast<double>(gy[i]) * scale.value[ch];
                sum_d += dxhat[i];
                sum_dx += dxhat[i] * xhat[i];
            }
            scale.grad[ch] += static_cast<T>(ds);
            shift.grad[ch] += static_cast<T>(db);
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        T* out = dx.data() + g * n;
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = static_cast<T>(inv_std_[g] * (dxhat[i] - inv_n * sum_d - xhat[i] * inv_n * sum_dx));
        }
    }
    return dx;
}

// ---- Activations --------------------------------------------------------------

namespace {
template <typename T>
T sigmoid(T x) {
    return x >= 0 ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
}
}  // namespace

template <typename T>
Tensor<T> SiLU<T>::forward(const Tensor<T>& x) {
    input_ = x;
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
    return y;
}

template <typename T>
Tensor<T> SiLU<T>::backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
        const T s = sigmoid(input_[i]);
        dx[i] = dy[i] * s * (T{1} + input_[i] * (T{1} - s));
    }
    return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x) {
    output_ = Tensor<T>(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) output_[i] = sigmoid(x[i]);
    return output_;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * output_[i] * (T{1} - output_[i]);
    return dx;
}

// ---- Linear -----------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features)
    : weight({out_features, in_features}), bias({out_features}), in_(in_features), out_(out_features) {}

template <typename T>
void Linear<T>::init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    weight.init_uniform(rng, bound);
    bias.init_uniform(rng, bound);
}

template <typename T>
void Linear<T>::collect(ParameterStore<T>& store, const std::string& prefix) {
    store.add(prefix + ".weight", weight);
    store.add(prefix + ".bias", bias);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
    if (x.size() != in_) throw ValidationError("linear: expected " + std::to_string(in_) + " inputs");
    input_ = x;
    Tensor<T> y({out_});
    for (std::size_t o = 0; o < out_; ++o) {
        T acc = bias.value[o];
        for (std::size_t i = 0; i < in_; ++i) acc += weight.value[o * in_ + i] * x[i];
        y[o] = acc;
    }
    return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
    Tensor<T> dx(input_.shape());
    for (std::size_t o = 0; o < out_; ++o) {
        bias.grad[o] += dy[o];
        for (std::size_t i = 0; i < in_; ++i) {
            weight.grad[o * in_ + i] += dy[o] * input_[i];
            dx[i] += weight.value[o * in_ + i] * dy[o];
        }
    }
    return dx;
}

// ---- Upsample2x -------------------------------------------------------------

template <typename T>
Tensor<T> Upsample2x<T>::forward(const Tensor<T>& x) {
    if (x.rank() != 4) throw ValidationError("upsample: expected [C, H, W, D], got " + to_string(x.shape()));
    in_shape_ = x.shape();
    const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2), D = x.extent(3);
    Tensor<T> y({C, 2 * H, 2 * W, 2 * D});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t h = 0; h < 2 * H; ++h)
            for (std::size_t w = 0; w < 2 * W; ++w) {
                const T* src = x.data() + ((c * H + h / 2) * W + w / 2) * D;
                T* dst = y.data() + ((c * 2 * H + h) * 2 * W + w) * 2 * D;
                for (std::size_t d = 0; d < 2 * D; ++d) dst[d] = src[d / 2];
            }
    return y;
}

template <typename T>
Tensor<T> Upsample2x<T>::backward(const Tensor<T>& dy) {
    const std::size_t C = in_shape_[0], H = in_shape_[1], W = in_shape_[2], D = in_shape_[3];
    Tensor<T> dx(in_shape_);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t h = 0; h < 2 * H; ++h)
            for (std::size_t w = 0; w < 2 * W; ++w) {
                T* dst = dx.data() + ((c * H + h / 2) * W + w / 2) * D;
                const T* src = dy.data() + ((c * 2 * H + h) * 2 * W + w) * 2 * D;
                for (std::size_t d = 0; d < 2 * D; ++d) dst[d / 2] += src[d];
            }
    return dx;
}

// ---- PixelShuffle3d ---------------------------------------------------------

template <typename T>
Tensor<T> PixelShuffle3d<T>::forward(const Tensor<T>& x) {
    if (x.rank() != 4 || x.extent(0) % 8 != 0) {
        throw ValidationError("pixel shuffle: expected [8C, H, W, D], got " + to_string(x.shape()));
    }
    in_shape_ = x.shape();
    const std::size_t C = x.extent(0) / 8, H = x.extent(1), W = x.extent(2), D = x.extent(3);
    Tensor<T> y({C, 2 * H, 2 * W, 2 * D});
    const T* src = x.data();
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t sub = 0; sub < 8; ++sub) {
            const std::size_t a = sub >> 2, b = (sub >> 1) & 1, e = sub & 1;
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    T* dst = y.data() + ((c * 2 * H + 2 * h + a) * 2 * W + 2 * w + b) * 2 * D + e;
                    for (std::size_t d = 0; d < D; ++d) dst[2 * d] = *src++;
                }
        }
    return y;
}

template <typename T>
Tensor<T> PixelShuffle3d<T>::backward(const Tensor<T>& dy) {
    const std::size_t C = in_shape_.at(0) / 8, H = in_shape_[1], W = in_shape_[2], D = in_shape_[3];
    if (dy.shape() != Shape{C, 2 * H, 2 * W, 2 * D}) throw ValidationError("pixel shuffle backward: shape mismatch");
    Tensor<T> dx(in_shape_);
    T* out = dx.data();
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t sub = 0; sub < 8; ++sub) {
            const std::size_t a = sub >> 2, b = (sub >> 1) & 1, e = sub & 1;
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    const T* src = dy.data() + ((c * 2 * H + 2 * h + a) * 2 * W + 2 * w + b) * 2 * D + e;
                    for (std::size_t d = 0; d < D; ++d) *out++ = src[2 * d];
                }
        }
    return dx;
}

// ---- ResBlock ---------------------------------------------------------------

template <typename T>
ResBlock<T>::ResBlock(std::size_t in_channels, std::size_t out_channels, std::size_t groups, std::size_t time_dim)
    : in_(in_channels),
      out_(out_channels),
      norm1_(group_count(in_channels, groups), in_channels),
      norm2_(group_count(out_channels, groups), out_channels),
      conv1_(in_channels, out_channels, 3, 1, 1),
      conv2_(out_channels, out_channels, 3, 1, 1) {
    if (in_channels != out_channels) skip_.emplace(in_channels, out_channels, 1);
    if (time_dim > 0) time_proj_.emplace(time_dim, out_channels);
}

template <typename T>
void ResBlock<T>::init(Rng& rng) {
    norm1_.init();
    norm2_.init();
    conv1_.init(rng);
    conv2_.init(rng);
    if (skip_) skip_->init(rng);
    if (time_proj_) time_proj_->init(rng);
}

template <typename T>
void ResBlock<T>::collect(ParameterStore<T>& store, const std::string& prefix) {
    norm1_.collect(store, prefix + ".norm1");
    conv1_.collect(store, prefix + ".conv1");
    if (time_proj_) time_proj_->collect(store, prefix + ".time_proj");
    norm2_.collect(store, prefix + ".norm2");
    conv2_.collect(store, prefix + ".conv2");
    if (skip_) skip_->collect(store, prefix + ".skip");
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x, const Tensor<T>* time_embedding) {
    Tensor<T> h = conv1_.forward(act1_.forward(norm1_.forward(x)));
    if (time_proj_) {
        if (!time_embedding) throw ValidationError("time-conditioned ResBlock called without an embedding");
        const Tensor<T> shift = time_proj_->forward(act_time_.forward(*time_embedding));
        const std::size_t plane = spatial_size(h);
        for (std::size_t c = 0; c < out_; ++c)
            for (std::size_t i = 0; i < plane; ++i) h[c * plane + i] += shift[c];
    }
    h = conv2_.forward(act2_.forward(norm2_.forward(h)));
    if (skip_) {
        h += skip_->forward(x);
    } else {
        h += x;
    }
    return h;
}

template <typename T>
Tensor<T> ResBlock<T>::backward(const Tensor<T>& dy, Tensor<T>* d_time_embedding) {
    Tensor<T> dh = norm2_.backward(act2_.backward(conv2_.backward(dy)));
    if (time_proj_) {
        const std::size_t plane = spatial_size(dh);
        Tensor<T> dshift({out_});
        for (std::size_t c = 0; c < out_; ++c) {
            T acc{0};
            for (std::size_t i = 0; i < plane; ++i) acc += dh[c * plane + i];
            dshift[c] = acc;
        }
        Tensor<T> dt = act_time_.backward(time_proj_->backward(dshift));
        if (d_time_embedding) {
            if (d_time_embedding->empty()) *d_time_embedding = Tensor<T>(dt.shape());
            *d_time_embedding += dt;
        }
    }
    Tensor<T> dx = norm1_.backward(act1_.backward(conv1_.backward(dh)));
    if (skip_) {
        dx += skip_->backward(dy);
    } else {
        dx += dy;
    }
    return dx;
}

#define LDMOOD_INSTANTIATE(L)   \
    template class L<float>;    \
    template class L<double>;
LDMOOD_INSTANTIATE(Parameter)
LDMOOD_INSTANTIATE(ParameterStore)
LDMOOD_INSTANTIATE(Conv3d)
LDMOOD_INSTANTIATE(GroupNorm)
LDMOOD_INSTANTIATE(SiLU)
LDMOOD_INSTANTIATE(Sigmoid)
LDMOOD_INSTANTIATE(Linear)
LDMOOD_INSTANTIATE(Upsample2x)
LDMOOD_INSTANTIATE(PixelShuffle3d)
LDMOOD_INSTANTIATE(ResBlock)
#undef LDMOOD_INSTANTIATE

}  // namespace ldmood::nn
