#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ldmood/scoring/scorer.hpp"
#include "ldmood/stats/roc.hpp"

namespace ldmood::stats {

/// All reports one model produced: ID test inputs plus every OOD class.
struct ModelReports {
    std::string model;
    std::vector<scoring::OODScoreReport> reports;
};

struct TableCell {
    std::string model;
    double auc = 0.0;
    std::size_t positives = 0, negatives = 0;
};

struct TableRow {
    std::string ood_class;
    std::vector<TableCell> cells;  // one per model, in input order
    /// First model vs second, when exactly two models are given.
    std::optional<PairedComparison> comparison;
};

struct ResultsTable {
    std::vector<std::string> models;
    std::vector<TableRow> rows;
    std::size_t failed_reports = 0;  // excluded from every AUC

    /// Aligned plain text; AUC x 100 with "*" for p < 0.05 and "**" for p < 0.001
    /// on the higher of the two compared AUCs.
    std::string render() const;
    /// One record per (class, model) cell.
    nlohmann::json records() const;
};

/// Significance marker for a p-value: "", "*" or "**".
std::string significance_marker(double p);

/// AUC per (model, OOD class) with the ID reports as negatives. Rows follow the
/// order in which classes first appear in the first model's reports.
ResultsTable results_table(const std::vector<ModelReports>& models);

}  // namespace ldmood::stats
