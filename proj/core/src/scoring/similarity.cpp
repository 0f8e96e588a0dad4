#include "ldmood/scoring/similarity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "ldmood/error.hpp"

namespace ldmood::scoring {

namespace {

void require_same(const Volume& a, const Volume& b, const char* who) {
    if (a.dims() != b.dims()) {
        throw ValidationError(std::string(who) + ": dims " + to_string(a.dims()) + " vs " + to_string(b.dims()));
    }
}

constexpr std::array<double, 5> kScaleWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> w(size);
    const double center = (static_cast<double>(size) - 1.0) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double x = static_cast<double>(i) - center;
        w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (auto& x : w) x /= sum;
    return w;
}

/// Separable "valid" Gaussian filter of a rows x cols image.
std::vector<double> filter(const std::vector<double>& img, std::size_t rows, std::size_t cols,
                           const std::vector<double>& w) {
    const std::size_t k = w.size(), orows = rows - k + 1, ocols = cols - k + 1;
    std::vector<double> tmp(rows * ocols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ocols; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += w[i] * img[r * cols + c + i];
            tmp[r * ocols + c] = acc;
        }
    std::vector<double> out(orows * ocols);
    for (std::size_t r = 0; r < orows; ++r)
        for (std::size_t c = 0; c < ocols; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += w[i] * tmp[(r + i) * ocols + c];
            out[r * ocols + c] = acc;
        }
    return out;
}

struct SsimTerms {
    double ssim;  // mean luminance * contrast-structure
    double cs;    // mean contrast-structure
};

SsimTerms ssim_terms(const std::vector<double>& a, const std::vector<double>& b, std::size_t rows, std::size_t cols,
                     const std::vector<double>& w, const SsimOptions& o) {
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter(a, rows, cols, w), mu_b = filter(b, rows, cols, w);
    const auto s_aa = filter(aa, rows, cols, w), s_bb = filter(bb, rows, cols, w), s_ab = filter(ab, rows, cols, w);
    double ssim = 0.0, cs = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = s_aa[i] - mu_a[i] * mu_a[i];
        const double vb = s_bb[i] - mu_b[i] * mu_b[i];
        const double cov = s_ab[i] - mu_a[i] * mu_b[i];
        const double c = (2.0 * cov + o.c2) / (va + vb + o.c2);
        const double l = (2.0 * mu_a[i] * mu_b[i] + o.c1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + o.c1);
        cs += c;
        ssim += l * c;
    }
    const double n = static_cast<double>(mu_a.size());
    return {ssim / n, cs / n};
}

std::vector<double> pool2(const std::vector<double>& img, std::size_t rows, std::size_t cols) {
    const std::size_t r2 = rows / 2, c2 = cols / 2;
    std::vector<double> out(r2 * c2);
    for (std::size_t r = 0; r < r2; ++r)
        for (std::size_t c = 0; c < c2; ++c) {
            out[r * c2 + c] = 0.25 * (img[2 * r * cols + 2 * c] + img[2 * r * cols + 2 * c + 1] +
                                      img[(2 * r + 1) * cols + 2 * c] + img[(2 * r + 1) * cols + 2 * c + 1]);
        }
    return out;
}

void check_options(const SsimOptions& o, std::size_t rows, std::size_t cols) {
    if (o.scales < 1 || o.scales > kScaleWeights.size()) throw ValidationError("ms-ssim: scales must be in [1, 5]");
    if (o.window == 0 || !(o.sigma > 0)) throw ValidationError("ms-ssim: bad window");
    const std::size_t shrink = std::size_t{1} << (o.scales - 1);
    if (rows / shrink < o.window || cols / shrink < o.window) {
        throw ValidationError("ms-ssim: " + std::to_string(rows) + "x" + std::to_string(cols) + " slice is smaller than the " +
                              std::to_string(o.window) + "-pixel window at scale " + std::to_string(o.scales));
    }
}

}  // namespace

double mse(const Volume& a, const Volume& b) {
    require_same(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data().size());
}

Volume mae_map(const Volume& a, const Volume& b) {
    require_same(a, b, "mae_map");
    Volume out(a.dims());
    for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = std::fabs(a.data()[i] - b.data()[i]);
    return out;
}

double ms_ssim_2d(const float* a, const float* b, std::size_t rows, std::size_t cols, const SsimOptions& o) {
    check_options(o, rows, cols);
    const auto w = gaussian_window(o.window, o.sigma);
    double weight_sum = 0.0;
    for (std::size_t j = 0; j < o.scales; ++j) weight_sum += kScaleWeights[j];

    std::vector<double> x(a, a + rows * cols), y(b, b + rows * cols);
    double result = 1.0;
    for (std::size_t j = 0; j < o.scales; ++j) {
        const SsimTerms t = ssim_terms(x, y, rows, cols, w, o);
        const double weight = kScaleWeights[j] / weight_sum;
        const bool last = j + 1 == o.scales;
        result *= std::pow(std::max(last ? t.ssim : t.cs, 0.0), weight);
        if (!last) {
            x = pool2(x, rows, cols);
            y = pool2(y, rows, cols);
            rows /= 2;
            cols /= 2;
        }
    }
    return result;
}

double perceptual_proxy(const Volume& a, const Volume& b, const SsimOptions& o) {
    require_same(a, b, "perceptual_proxy");
    const Dims n = a.dims();
    std::vector<float> sa, sb;
    double total = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
        // Slice plane spanned by the two remaining axes, in index order.
        const std::size_t slices = n[axis];
        const int ax1 = axis == 0 ? 1 : 0, ax2 = axis == 2 ? 1 : 2;
        const std::size_t rows = n[ax1], cols = n[ax2];
        sa.resize(rows * cols);
        sb.resize(rows * cols);
        double axis_sum = 0.0;
        for (std::size_t s = 0; s < slices; ++s) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) {
                    std::array<std::size_t, 3> idx{};
                    idx[static_cast<std::size_t>(axis)] = s;
                    idx[static_cast<std::size_t>(ax1)] = r;
                    idx[static_cast<std::size_t>(ax2)] = c;
                    const std::size_t i = a.index(idx[0], idx[1], idx[2]);
                    sa[r * cols + c] = std::clamp(a.data()[i], 0.0f, 1.0f);
                    sb[r * cols + c] = std::clamp(b.data()[i], 0.0f, 1.0f);
                }
            axis_sum += 1.0 - ms_ssim_2d(sa.data(), sb.data(), rows, cols, o);
        }
        total += axis_sum / static_cast<double>(slices);
    }
    return total / 3.0;
}

}  // namespace ldmood::scoring
