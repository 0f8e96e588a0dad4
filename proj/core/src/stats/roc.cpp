#include "ldmood/stats/roc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ldmood/error.hpp"

namespace ldmood::stats {

std::size_t LabeledScores::positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t LabeledScores::negatives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 0));
}

void LabeledScores::validate() const {
    if (scores.size() != labels.size()) {
        throw ValidationError("scores/labels length mismatch: " + std::to_string(scores.size()) + " vs " +
                              std::to_string(labels.size()));
    }
    if (!ids.empty() && ids.size() != scores.size()) throw ValidationError("ids/scores length mismatch");
    for (int l : labels)
        if (l != 0 && l != 1) throw ValidationError("labels must be 0 or 1");
    for (double s : scores)
        if (!std::isfinite(s)) throw ValidationError("non-finite score");
}

namespace {

void require_both_classes(const LabeledScores& s) {
    s.validate();
    if (s.positives() == 0 || s.negatives() == 0) {
        throw ValidationError("AUC needs both classes (positives " + std::to_string(s.positives()) + ", negatives " +
                              std::to_string(s.negatives()) + ")");
    }
}

double sample_covariance(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    if (x.size() < 2) return 0.0;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - mx) * (y[i] - my);
    return acc / (n - 1.0);
}

}  // namespace

StructuralComponents structural_components(const LabeledScores& s) {
    require_both_classes(s);
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < s.scores.size(); ++i) (s.labels[i] == 1 ? pos : neg).push_back(s.scores[i]);
    StructuralComponents c;
    c.v10.assign(pos.size(), 0.0);
    c.v01.assign(neg.size(), 0.0);
    for (std::size_t i = 0; i < pos.size(); ++i)
        for (std::size_t j = 0; j < neg.size(); ++j) {
            const double k = psi(pos[i], neg[j]);
            c.v10[i] += k;
            c.v01[j] += k;
        }
    for (auto& v : c.v10) v /= static_cast<double>(neg.size());
    for (auto& v : c.v01) v /= static_cast<double>(pos.size());
    return c;
}

double auc(const LabeledScores& s) {
    require_both_classes(s);
    // Count in half-wins so the sum is an exact integer and the result is a single rounding.
    std::uint64_t half_wins = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        if (s.labels[i] != 1) continue;
        for (std::size_t j = 0; j < s.scores.size(); ++j) {
            if (s.labels[j] != 0) continue;
            half_wins += s.scores[i] > s.scores[j] ? 2 : s.scores[i] == s.scores[j] ? 1 : 0;
        }
    }
    return static_cast<double>(half_wins) / (2.0 * static_cast<double>(s.positives()) * static_cast<double>(s.negatives()));
}

double delong_variance(const LabeledScores& s) {
    const StructuralComponents c = structural_components(s);
    return sample_covariance(c.v10, c.v10) / static_cast<double>(c.v10.size()) +
           sample_covariance(c.v01, c.v01) / static_cast<double>(c.v01.size());
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double two_sided_p(double z) { return std::min(1.0, std::erfc(std::fabs(z) / std::sqrt(2.0))); }

PairedComparison delong_test(const LabeledScores& a, const LabeledScores& b) {
    require_both_classes(a);
    require_both_classes(b);
    if (a.labels != b.labels) throw ValidationError("delong: the two models were scored on different label sets");
    if (!a.ids.empty() && !b.ids.empty() && a.ids != b.ids) throw ValidationError("delong: sample ids differ between models");

    const StructuralComponents ca = structural_components(a), cb = structural_components(b);
    const double m = static_cast<double>(ca.v10.size()), n = static_cast<double>(ca.v01.size());
    PairedComparison r;
    r.auc_a = auc(a);
    r.auc_b = auc(b);
    r.var_a = sample_covariance(ca.v10, ca.v10) / m + sample_covariance(ca.v01, ca.v01) / n;
    r.var_b = sample_covariance(cb.v10, cb.v10) / m + sample_covariance(cb.v01, cb.v01) / n;
    r.covariance = sample_covariance(ca.v10, cb.v10) / m + sample_covariance(ca.v01, cb.v01) / n;
    const double var = r.var_a + r.var_b - 2.0 * r.covariance;
    if (!(var > 1e-15)) {
        r.degenerate = true;
        r.z = 0.0;
        r.p_value = 1.0;
        return r;
    }
    r.z = (r.auc_a - r.auc_b) / std::sqrt(var);
    r.p_value = two_sided_p(r.z);
    return r;
}

std::vector<double> zscore_column(const std::vector<double>& values, double mean, double std) {
    if (!(std > 0)) throw ValidationError("zscore: std must be > 0");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / std;
    return out;
}

}  // namespace ldmood::stats
