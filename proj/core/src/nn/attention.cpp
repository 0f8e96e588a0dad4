#include "ldmood/nn/attention.hpp"

#include <cmath>

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
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
}  // namespace

template <typename T>
SelfAttention3d<T>::SelfAttention3d(std::size_t channels, std::size_t groups, std::size_t max_positions)
    : channels_(channels),
      cap_(max_positions),
      norm_(group_count(channels, groups), channels),
      wq_({channels, channels}), bq_({channels}),
      wk_({channels, channels}), bk_({channels}),
      wv_({channels, channels}), bv_({channels}),
      wo_({channels, channels}), bo_({channels}) {}

template <typename T>
void SelfAttention3d<T>::init(Rng& rng, bool zero_output) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels_));
    norm_.init();
    for (auto* p : {&wq_, &bq_, &wk_, &bk_, &wv_, &bv_, &wo_, &bo_}) p->init_uniform(rng, bound);
    if (zero_output) {
        wo_.value.fill(T{0});
        bo_.value.fill(T{0});
    }
}

template <typename T>
void SelfAttention3d<T>::collect(ParameterStore<T>& store, const std::string& prefix) {
    norm_.collect(store, prefix + ".norm");
    store.add(prefix + ".q.weight", wq_);
    store.add(prefix + ".q.bias", bq_);
    store.add(prefix + ".k.weight", wk_);
    store.add(prefix + ".k.bias", bk_);
    store.add(prefix + ".v.weight", wv_);
    store.add(prefix + ".v.bias", bv_);
    store.add(prefix + ".out.weight", wo_);
    store.add(prefix + ".out.bias", bo_);
}

template <typename T>
Tensor<T> SelfAttention3d<T>::forward(const Tensor<T>& x) {
    if (x.rank() != 4 || x.extent(0) != channels_) {
        throw ValidationError("self_attention_3d: expected [" + std::to_string(channels_) + ", h, w, d], got " +
                              to_string(x.shape()));
    }
    const std::size_t n = spatial_size(x);
    if (n > cap_) {
        throw ValidationError("self_attention_3d: " + std::to_string(n) + " positions exceed the cap of " +
                              std::to_string(cap_));
    }
    shape_ = x.shape();
    const auto C = static_cast<Eigen::Index>(channels_);
    const auto N = static_cast<Eigen::Index>(n);

    const Tensor<T> normed = norm_.forward(x);
    h_.assign(normed.values().begin(), normed.values().end());
    ConstMatMap<T> H(h_.data(), C, N);

    auto project = [&](const Parameter<T>& w, const Parameter<T>& b, AlignedVector<T>& dst) {
        dst.resize(channels_ * n);
        MatMap<T> out(dst.data(), C, N);
        out.noalias() = ConstMatMap<T>(w.value.data(), C, C) * H;
        out.colwise() += Eigen::Map<const ColVec<T>>(b.value.data(), C);
    };
    project(wq_, bq_, q_);
    project(wk_, bk_, k_);
    project(wv_, bv_, v_);

    attn_.resize(n * n);
    MatMap<T> A(attn_.data(), N, N);
    const T inv_sqrt_c = T{1} / std::sqrt(static_cast<T>(channels_));
    A.noalias() = ConstMatMap<T>(q_.data(), C, N).transpose() * ConstMatMap<T>(k_.data(), C, N);
    A *= inv_sqrt_c;
    for (Eigen::Index i = 0; i < N; ++i) {
        auto row = A.row(i);
        const T mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
    }

    o_.resize(channels_ * n);
    MatMap<T> O(o_.data(), C, N);
    O.noalias() = ConstMatMap<T>(v_.data(), C, N) * A.transpose();

    Tensor<T> y = x;
    MatMap<T> Y(y.data(), C, N);
    Y.noalias() += ConstMatMap<T>(wo_.value.data(), C, C) * O;
    Y.colwise() += Eigen::Map<const ColVec<T>>(bo_.value.data(), C);
    return y;
}

template <typename T>
Tensor<T> SelfAttention3d<T>::backward(const Tensor<T>& dy) {
    if (dy.shape() != shape_) throw ValidationError("self_attention_3d backward: shape mismatch");
    const auto C = static_cast<Eigen::Index>(channels_);
    const auto N = static_cast<Eigen::Index>(spatial_size(dy));
    ConstMatMap<T> dY(dy.data(), C, N);
    ConstMatMap<T> H(h_.data(), C, N);
    ConstMatMap<T> Q(q_.data(), C, N);
    ConstMatMap<T> K(k_.data(), C, N);
    ConstMatMap<T> V(v_.data(), C, N);
    ConstMatMap<T> A(attn_.data(), N, N);
    ConstMatMap<T> O(o_.data(), C, N);

    MatMap<T>(wo_.grad.data(), C, C).noalias() += dY * O.transpose();
    Eigen::Map<ColVec<T>>(bo_.grad.data(), C) += dY.rowwise().sum();
    const RowMat<T> dO = ConstMatMap<T>(wo_.value.data(), C, C).transpose() * dY;

    const RowMat<T> dV = dO * A;
    const RowMat<T> dA = dO.transpose() * V;
    RowMat<T> dS = dA;
    for (Eigen::Index i = 0; i < N; ++i) {
        const T inner = (dA.row(i).array() * A.row(i).array()).sum();
        dS.row(i) = A.row(i).array() * (dA.row(i).array() - inner);
    }
    const T inv_sqrt_c = T{1} / std::sqrt(static_cast<T>(channels_));
    const RowMat<T> dQ = (K * dS.transpose()) * inv_sqrt_c;
    const RowMat<T> dK = (Q * dS) * inv_sqrt_c;

    RowMat<T> dH = RowMat<T>::Zero(C, N);
    auto accumulate = [&](Parameter<T>& w, Parameter<T>& b, const RowMat<T>& dP) {
        MatMap<T>(w.grad.data(), C, C).noalias() += dP * H.transpose();
        Eigen::Map<ColVec<T>>(b.grad.data(), C) += dP.rowwise().sum();
        dH.noalias() += ConstMatMap<T>(w.value.data(), C, C).transpose() * dP;
    };
    accumulate(wq_, bq_, dQ);
    accumulate(wk_, bk_, dK);
    accumulate(wv_, bv_, dV);

    Tensor<T> dh(shape_, std::vector<T>(dH.data(), dH.data() + dH.size()));
    Tensor<T> dx = norm_.backward(dh);
    dx += dy;
    return dx;
}

template class SelfAttention3d<float>;
template class SelfAttention3d<double>;

}  // namespace ldmood::nn
