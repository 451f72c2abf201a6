#include "ddap/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>

namespace ddap::metrics {

namespace {

MetricValue ratio_or_zero(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return {0.0, true};
    return {static_cast<double>(num) / static_cast<double>(den), false};
}

void check_unit(double x, std::string_view what) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw InputError(fmt::format("{} must lie in [0, 1], got {}", what, x));
    }
}

}  // namespace

MetricValue accuracy(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw InputError("accuracy of an empty confusion matrix");
    return {static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total()), false};
}

MetricValue precision(const ConfusionMatrix& cm) { return ratio_or_zero(cm.tp, cm.tp + cm.fp); }

MetricValue recall(const ConfusionMatrix& cm) { return ratio_or_zero(cm.tp, cm.tp + cm.fn); }

MetricValue f1(double precision_value, double recall_value) {
    check_unit(precision_value, "precision");
    check_unit(recall_value, "recall");
    const double sum = precision_value + recall_value;
    if (sum == 0.0) return {0.0, true};
    return {2.0 * precision_value * recall_value / sum, false};
}

MetricValue mae(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw InputError(fmt::format("length mismatch: {} true values, {} predictions",
                                     y_true.size(), y_pred.size()));
    }
    if (y_true.empty()) throw InputError("at least one sample is required");
    double sum = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (!std::isfinite(y_true[i]) || !std::isfinite(y_pred[i])) {
            throw InputError(fmt::format("non-finite value at row {}", i));
        }
        sum += std::abs(y_true[i] - y_pred[i]);
    }
    return {sum / static_cast<double>(y_true.size()), false};
}

std::optional<Distance> distance_from_string(std::string_view name) {
    if (name == "euclidean") return Distance::euclidean;
    if (name == "manhattan") return Distance::manhattan;
    if (name == "chebyshev") return Distance::chebyshev;
    return std::nullopt;
}

double distance(std::span<const double> a, std::span<const double> b, Distance metric) {
    double acc = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double diff = std::abs(a[d] - b[d]);
        switch (metric) {
            case Distance::euclidean: acc += diff * diff; break;
            case Distance::manhattan: acc += diff; break;
            case Distance::chebyshev: acc = std::max(acc, diff); break;
        }
    }
    return metric == Distance::euclidean ? std::sqrt(acc) : acc;
}

MetricValue silhouette_by_id(const Points& points, std::span<const std::size_t> cluster_ids,
                             Distance metric) {
    const std::size_t n = points.size();
    if (cluster_ids.size() != n) {
        throw InputError(fmt::format("{} points but {} labels", n, cluster_ids.size()));
    }
    if (n < 2) throw InputError("silhouette needs at least two samples");
    const std::size_t dim = points.front().size();
    if (dim == 0) throw InputError("points must have at least one coordinate");
    for (std::size_t i = 0; i < n; ++i) {
        if (points[i].size() != dim) {
            throw InputError(fmt::format("point {} has {} coordinates, expected {}", i,
                                         points[i].size(), dim));
        }
        for (double x : points[i]) {
            if (!std::isfinite(x)) throw InputError(fmt::format("non-finite coordinate in point {}", i));
        }
    }

    const std::size_t k = *std::max_element(cluster_ids.begin(), cluster_ids.end()) + 1;
    std::vector<std::size_t> sizes(k, 0);
    for (auto id : cluster_ids) ++sizes[id];
    const auto populated = std::count_if(sizes.begin(), sizes.end(), [](auto s) { return s > 0; });
    if (populated < 2) throw InputError("silhouette needs at least two distinct clusters");

    // Row i of `sums` holds the total distance from sample i to each cluster.
    std::vector<double> sums(n * k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = distance(points[i], points[j], metric);
            sums[i * k + cluster_ids[j]] += d;
            sums[j * k + cluster_ids[i]] += d;
        }
    }

    double total = 0.0;
    bool degenerate = false;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = cluster_ids[i];
        if (sizes[own] == 1) {
            degenerate = true;
            continue;
        }
        const double a = sums[i * k + own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || sizes[c] == 0) continue;
            b = std::min(b, sums[i * k + c] / static_cast<double>(sizes[c]));
        }
        const double denom = std::max(a, b);
        if (denom == 0.0) {
            degenerate = true;
            continue;
        }
        total += (b - a) / denom;
    }
    return {total / static_cast<double>(n), degenerate};
}

// --- reports ---------------------------------------------------------------

std::string format_metric(double value) {
    auto s = fmt::format("{:.6f}", value);
    auto dot = s.find('.');
    if (dot == std::string::npos) return s;
    auto last = s.find_last_not_of('0');
    if (last == dot) last = dot + 1;
    s.erase(last + 1);
    return s;
}

Report emit_report(const ResultTable& results, const std::optional<ResultTable>& baseline) {
    if (results.empty()) throw InputError("report needs at least one pipeline result");
    Report report;
    for (const auto& [pipeline, metrics] : results) {
        const MetricSet* base = nullptr;
        if (baseline) {
            if (auto it = baseline->find(pipeline); it != baseline->end()) base = &it->second;
        }
        for (const auto& [metric, value] : metrics) {
            ReportRow row{pipeline, metric, value, std::nullopt};
            if (base) {
                if (auto it = base->find(metric); it != base->end()) row.baseline = it->second;
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

Document Report::to_json() const {
    Document rows_json = Document::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"pipeline", r.pipeline},
                             {"metric", r.metric},
                             {"value", r.value},
                             {"baseline", r.baseline ? Document(*r.baseline) : Document(nullptr)}});
    }
    return {{"columns", {"pipeline", "metric", "value", "baseline"}}, {"rows", rows_json}};
}

namespace {

std::size_t display_width(std::string_view s) {
    // Count code points; continuation bytes do not advance the column.
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string pad(std::string_view s, std::size_t width) {
    std::string out(s);
    out.append(width - std::min(width, display_width(s)), ' ');
    return out;
}

}  // namespace

std::string Report::to_text() const {
    const std::array<std::string, 4> header{"Pipeline", "Metric", "Our Result", "Baseline"};
    std::vector<std::array<std::string, 4>> cells;
    std::string previous;
    for (const auto& r : rows) {
        cells.push_back({r.pipeline == previous ? std::string() : r.pipeline, r.metric,
                         format_metric(r.value),
                         r.baseline ? format_metric(*r.baseline) : std::string("—")});
        previous = r.pipeline;
    }
    std::array<std::size_t, 4> width{};
    for (std::size_t c = 0; c < 4; ++c) {
        width[c] = display_width(header[c]);
        for (const auto& row : cells) width[c] = std::max(width[c], display_width(row[c]));
    }
    auto line = [&](const std::array<std::string, 4>& row) {
        std::string out;
        for (std::size_t c = 0; c < 4; ++c) {
            if (c > 0) out += " | ";
            out += c == 3 ? std::string(row[c]) : pad(row[c], width[c]);
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return out + "\n";
    };
    std::string text = line(header);
    std::string rule;
    for (std::size_t c = 0; c < 4; ++c) {
        if (c > 0) rule += "-+-";
        rule.append(width[c], '-');
    }
    text += rule + "\n";
    for (const auto& row : cells) text += line(row);
    return text;
}

// --- CSV -------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw InputError("unterminated quoted CSV field");
    out.push_back(std::move(cur));
    return out;
}

double to_number(const std::string& s, std::size_t row, std::string_view column) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InputError(fmt::format("row {}: column '{}' is not a number: '{}'", row + 1, column, s));
    }
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw InputError(fmt::format("CSV has no '{}' column", name));
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (first) {
            table.header = std::move(fields);
            first = false;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw InputError(fmt::format("CSV row {} has {} fields, header has {}",
                                         table.rows.size() + 1, fields.size(), table.header.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    if (first) throw InputError("CSV input is empty");
    if (table.rows.empty()) throw InputError("CSV input has no data rows");
    return table;
}

MetricSet evaluate_classification(const CsvTable& table, const std::optional<std::string>& positive) {
    const auto ti = table.column("y_true");
    const auto pi = table.column("y_pred");
    std::vector<std::string> y_true, y_pred;
    for (const auto& row : table.rows) {
        y_true.push_back(row[ti]);
        y_pred.push_back(row[pi]);
    }
    MetricSet out;
    if (positive) {
        const auto cm = confusion_counts(y_true, y_pred, *positive);
        const auto p = precision(cm);
        const auto r = recall(cm);
        out["accuracy"] = accuracy(cm).value;
        out["precision"] = p.value;
        out["recall"] = r.value;
        out["f1"] = f1(p.value, r.value).value;
        return out;
    }
    std::set<std::string> label_set(y_true.begin(), y_true.end());
    label_set.insert(y_pred.begin(), y_pred.end());
    const std::vector<std::string> labels(label_set.begin(), label_set.end());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) correct += y_true[i] == y_pred[i] ? 1 : 0;
    const auto macro = macro_scores(y_true, y_pred, labels);
    out["accuracy"] = static_cast<double>(correct) / static_cast<double>(y_true.size());
    out["precision"] = macro.precision.value;
    out["recall"] = macro.recall.value;
    out["f1"] = macro.f1.value;
    return out;
}

MetricSet evaluate_regression(const CsvTable& table) {
    const auto ti = table.column("y_true");
    const auto pi = table.column("y_pred");
    std::vector<double> y_true, y_pred;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        y_true.push_back(to_number(table.rows[r][ti], r, "y_true"));
        y_pred.push_back(to_number(table.rows[r][pi], r, "y_pred"));
    }
    return {{"mae", mae(y_true, y_pred).value}};
}

MetricSet evaluate_clustering(const CsvTable& table, const std::string& label_column,
                              Distance metric) {
    const auto li = table.column(label_column);
    Points points;
    std::vector<std::string> labels;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        std::vector<double> p;
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            if (c == li) continue;
            p.push_back(to_number(table.rows[r][c], r, table.header[c]));
        }
        points.push_back(std::move(p));
        labels.push_back(table.rows[r][li]);
    }
    return {{"silhouette", silhouette(points, labels, metric).value}};
}

}  // namespace ddap::metrics
