#include "ldmood/stats/table.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ldmood/dataset.hpp"
#include "ldmood/error.hpp"

namespace ldmood::stats {

std::string significance_marker(double p) {
    if (p < 0.001) return "**";
    if (p < 0.05) return "*";
    return "";
}

namespace {

LabeledScores class_scores(const ModelReports& m, const std::string& cls) {
    LabeledScores s;
    s.model = m.model;
    s.dataset = cls;
    for (const auto& r : m.reports) {
        if (r.failed) continue;
        const std::string c = label_class(r.label);
        if (c != kIdLabel && c != cls) continue;
        s.scores.push_back(r.score);
        s.labels.push_back(c == kIdLabel ? 0 : 1);
        s.ids.push_back(r.id);
    }
    return s;
}

std::string format_auc(double auc) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", auc * 100.0);
    return buf;
}

}  // namespace

ResultsTable results_table(const std::vector<ModelReports>& models) {
    if (models.empty()) throw ValidationError("results table: no models");
    ResultsTable t;
    std::vector<std::string> classes;
    for (const auto& m : models) {
        t.models.push_back(m.model);
        bool has_id = false;
        for (const auto& r : m.reports) {
            if (r.failed) {
                ++t.failed_reports;
                continue;
            }
            const std::string c = label_class(r.label);
            if (c == kIdLabel) {
                has_id = true;
            } else if (&m == &models.front() && std::find(classes.begin(), classes.end(), c) == classes.end()) {
                classes.push_back(c);
            }
        }
        if (!has_id) throw ValidationError("results table: model '" + m.model + "' has no ID test reports");
    }
    for (const auto& cls : classes) {
        TableRow row;
        row.ood_class = cls;
        std::vector<LabeledScores> per_model;
        for (const auto& m : models) {
            per_model.push_back(class_scores(m, cls));
            const auto& s = per_model.back();
            row.cells.push_back({m.model, auc(s), s.positives(), s.negatives()});
        }
        if (models.size() == 2) row.comparison = delong_test(per_model[0], per_model[1]);
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::string ResultsTable::render() const {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"OOD class"};
    header.insert(header.end(), models.begin(), models.end());
    const bool paired = models.size() == 2;
    if (paired) header.push_back("p");
    grid.push_back(header);
    for (const auto& row : rows) {
        std::vector<std::string> line{row.ood_class};
        for (std::size_t i = 0; i < row.cells.size(); ++i) {
            std::string cell = format_auc(row.cells[i].auc);
            if (row.comparison && !row.comparison->degenerate) {
                const double other = row.cells[1 - i].auc;
                if (row.cells[i].auc > other) cell += significance_marker(row.comparison->p_value);
            }
            line.push_back(cell);
        }
        if (paired) {
            char buf[32];
            if (row.comparison && !row.comparison->degenerate) {
                std::snprintf(buf, sizeof buf, "%.3g", row.comparison->p_value);
            } else {
                std::snprintf(buf, sizeof buf, "-");
            }
            line.push_back(buf);
        }
        grid.push_back(line);
    }
    std::vector<std::size_t> width(grid.front().size(), 0);
    for (const auto& line : grid)
        for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    std::ostringstream out;
    for (std::size_t r = 0; r < grid.size(); ++r) {
        for (std::size_t c = 0; c < grid[r].size(); ++c) {
            const std::string& s = grid[r][c];
            if (c == 0) {
                out << s << std::string(width[c] - s.size(), ' ');
            } else {
                out << "  " << std::string(width[c] - s.size(), ' ') << s;
            }
        }
        out << '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
            out << std::string(total, '-') << '\n';
        }
    }
    if (failed_reports) out << failed_reports << " failed report(s) excluded\n";
    return out.str();
}

nlohmann::json ResultsTable::records() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& row : rows) {
        for (const auto& cell : row.cells) {
            nlohmann::json rec{{"ood_class", row.ood_class},
                               {"model", cell.model},
                               {"auc", cell.auc},
                               {"auc_percent", cell.auc * 100.0},
                               {"positives", cell.positives},
                               {"negatives", cell.negatives}};
            if (row.comparison) {
                rec["comparison"] = {{"z", row.comparison->z},
                                     {"p_value", row.comparison->p_value},
                                     {"degenerate", row.comparison->degenerate}};
            }
            out.push_back(std::move(rec));
        }
    }
    return out;
}

}  // namespace ldmood::stats
