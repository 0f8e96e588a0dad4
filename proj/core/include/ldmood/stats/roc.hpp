#pragma once

#include <string>
#include <vector>

namespace ldmood::stats {

/// Scores with binary labels (1 = OOD positive), plus optional sample ids used
/// to check that two models were evaluated on the same samples.
struct LabeledScores {
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<std::string> ids;
    std::string model;
    std::string dataset;

    std::size_t positives() const;
    std::size_t negatives() const;
    /// Throws ValidationError on length mismatch, non-binary labels or non-finite scores.
    void validate() const;
};

/// Mann-Whitney estimate: fraction of (positive, negative) pairs ranked
/// correctly, ties counted as one half. Requires both classes.
double auc(const LabeledScores& s);

/// Heaviside kernel of the U-statistic: 1, 0.5 or 0.
inline double psi(double positive, double negative) {
    return positive > negative ? 1.0 : positive == negative ? 0.5 : 0.0;
}

/// Per-sample structural components of one model's AUC.
struct StructuralComponents {
    std::vector<double> v10;  // per positive: mean psi over negatives
    std::vector<double> v01;  // per negative: mean psi over positives
};

StructuralComponents structural_components(const LabeledScores& s);

/// Single-model DeLong variance of the AUC estimate.
double delong_variance(const LabeledScores& s);

struct PairedComparison {
    double auc_a = 0.0, auc_b = 0.0;
    double var_a = 0.0, var_b = 0.0, covariance = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    /// Var(A - B) is zero (e.g. a model against itself): z and p are not defined.
    bool degenerate = false;
};

/// DeLong test for two correlated AUCs on identical samples.
PairedComparison delong_test(const LabeledScores& a, const LabeledScores& b);

/// Standard normal CDF.
double normal_cdf(double x);
/// Two-sided tail probability 2 * (1 - Phi(|z|)).
double two_sided_p(double z);

/// (v - mean) / std elementwise; std must be positive.
std::vector<double> zscore_column(const std::vector<double>& values, double mean, double std);

}  // namespace ldmood::stats
