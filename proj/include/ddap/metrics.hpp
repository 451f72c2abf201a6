#pragma once

// Classification, regression and clustering scores over the standard
// TP/FP/FN/TN confusion layout, plus the comparison report used to line up a
// pipeline's scores against a reference study.

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "ddap/artifacts.hpp"
#include "ddap/errors.hpp"

namespace ddap::metrics {

struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

/// `degenerate` is set when a denominator was zero and the value is a
/// convention rather than a ratio.
struct MetricValue {
    double value = 0.0;
    bool degenerate = false;
};

template <typename Label>
ConfusionMatrix confusion_counts(std::span<const Label> y_true, std::span<const Label> y_pred,
                                 const Label& positive) {
    if (y_true.size() != y_pred.size()) {
        throw InputError(fmt::format("length mismatch: {} true labels, {} predictions",
                                     y_true.size(), y_pred.size()));
    }
    if (y_true.empty()) throw InputError("at least one sample is required");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const bool actual = y_true[i] == positive;
        const bool predicted = y_pred[i] == positive;
        if (actual && predicted) {
            ++cm.tp;
        } else if (!actual && predicted) {
            ++cm.fp;
        } else if (actual) {
            ++cm.fn;
        } else {
            ++cm.tn;
        }
    }
    return cm;
}

template <typename Label>
ConfusionMatrix confusion_counts(const std::vector<Label>& y_true, const std::vector<Label>& y_pred,
                                 const Label& positive) {
    return confusion_counts(std::span<const Label>(y_true), std::span<const Label>(y_pred),
                            positive);
}

/// Throws InputError when the matrix is empty.
MetricValue accuracy(const ConfusionMatrix& cm);
MetricValue precision(const ConfusionMatrix& cm);
MetricValue recall(const ConfusionMatrix& cm);
/// Harmonic mean. Both inputs must lie in [0, 1].
MetricValue f1(double precision_value, double recall_value);

struct LabelScores {
    MetricValue precision;
    MetricValue recall;
    MetricValue f1;
};

template <typename Label>
struct MacroScores {
    std::vector<std::pair<Label, LabelScores>> per_label;
    MetricValue precision;
    MetricValue recall;
    MetricValue f1;
};

/// One-vs-rest per label, unweighted mean across `labels`.
template <typename Label>
MacroScores<Label> macro_scores(std::span<const Label> y_true, std::span<const Label> y_pred,
                                std::span<const Label> labels) {
    if (labels.empty()) throw InputError("labels must be nonempty");
    MacroScores<Label> out;
    double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
    bool p_deg = false, r_deg = false, f_deg = false;
    for (const auto& label : labels) {
        const auto cm = confusion_counts(y_true, y_pred, label);
        LabelScores s;
        s.precision = precision(cm);
        s.recall = recall(cm);
        s.f1 = f1(s.precision.value, s.recall.value);
        p_sum += s.precision.value;
        r_sum += s.recall.value;
        f_sum += s.f1.value;
        p_deg = p_deg || s.precision.degenerate;
        r_deg = r_deg || s.recall.degenerate;
        f_deg = f_deg || s.f1.degenerate;
        out.per_label.emplace_back(label, s);
    }
    const auto n = static_cast<double>(labels.size());
    out.precision = {p_sum / n, p_deg};
    out.recall = {r_sum / n, r_deg};
    out.f1 = {f_sum / n, f_deg};
    return out;
}

template <typename Label>
MacroScores<Label> macro_scores(const std::vector<Label>& y_true, const std::vector<Label>& y_pred,
                                const std::vector<Label>& labels) {
    return macro_scores(std::span<const Label>(y_true), std::span<const Label>(y_pred),
                        std::span<const Label>(labels));
}

/// Mean absolute error. Throws InputError on length mismatch or empty input.
MetricValue mae(std::span<const double> y_true, std::span<const double> y_pred);

enum class Distance { euclidean, manhattan, chebyshev };

std::optional<Distance> distance_from_string(std::string_view name);
double distance(std::span<const double> a, std::span<const double> b, Distance metric);

using Points = std::vector<std::vector<double>>;

/// Mean silhouette over all samples. `cluster_ids` are dense ids in
/// [0, cluster_count). Samples in singleton clusters contribute 0 and set the
/// degenerate flag.
MetricValue silhouette_by_id(const Points& points, std::span<const std::size_t> cluster_ids,
                             Distance metric = Distance::euclidean);

template <typename Label>
MetricValue silhouette(const Points& points, std::span<const Label> labels,
                       Distance metric = Distance::euclidean) {
    std::vector<std::size_t> ids;
    ids.reserve(labels.size());
    std::vector<Label> seen;
    for (const auto& l : labels) {
        auto it = std::find(seen.begin(), seen.end(), l);
        if (it == seen.end()) {
            ids.push_back(seen.size());
            seen.push_back(l);
        } else {
            ids.push_back(static_cast<std::size_t>(it - seen.begin()));
        }
    }
    return silhouette_by_id(points, ids, metric);
}

template <typename Label>
MetricValue silhouette(const Points& points, const std::vector<Label>& labels,
                       Distance metric = Distance::euclidean) {
    return silhouette(points, std::span<const Label>(labels), metric);
}

// --- reports ---------------------------------------------------------------

/// metric name -> value
using MetricSet = std::map<std::string, double>;
/// pipeline name -> metrics
using ResultTable = std::map<std::string, MetricSet>;

struct ReportRow {
    std::string pipeline;
    std::string metric;
    double value = 0.0;
    std::optional<double> baseline;
};

struct Report {
    std::vector<ReportRow> rows;

    Document to_json() const;
    /// Aligned plain-text table; absent baselines render as an em dash.
    std::string to_text() const;
};

Report emit_report(const ResultTable& results, const std::optional<ResultTable>& baseline = {});

/// Fixed six decimals with trailing zeros trimmed, keeping at least one.
std::string format_metric(double value);

// --- CSV prediction input ----------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Throws InputError when the column is absent.
    std::size_t column(std::string_view name) const;
};

CsvTable read_csv(std::istream& in);

/// Columns `y_true`, `y_pred`. Binary scores when `positive` is given,
/// otherwise accuracy plus macro precision/recall/F1.
MetricSet evaluate_classification(const CsvTable& table, const std::optional<std::string>& positive);
/// Columns `y_true`, `y_pred` parsed as numbers.
MetricSet evaluate_regression(const CsvTable& table);
/// Every column except `label_column` is a numeric feature.
MetricSet evaluate_clustering(const CsvTable& table, const std::string& label_column = "label",
                              Distance metric = Distance::euclidean);

}  // namespace ddap::metrics
