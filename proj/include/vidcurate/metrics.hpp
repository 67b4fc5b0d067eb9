#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace vidcurate {

struct ClassMetrics {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Binary classification report. Metrics with a zero denominator are absent.
struct EvalReport {
    double threshold = 0.5;
    ConfusionCounts counts;
    ClassMetrics positive;
    ClassMetrics negative;
    double accuracy = 0.0;
    std::optional<double> macro_f1;
    std::vector<std::pair<double, double>> roc_points;  // (fpr, tpr)
    std::optional<double> auc;
};

inline ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
    ClassMetrics m;
    if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (m.precision && m.recall && *m.precision + *m.recall > 0)
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    else if (m.precision && m.recall)
        m.f1 = 0.0;
    return m;
}

/// ROC curve with tied scores collapsed into one step, anchored at (0,0) and (1,1), and
/// the matching AUC counted in exact half-units: P(score_pos > score_neg) + P(tie)/2.
inline std::pair<std::vector<std::pair<double, double>>, std::optional<double>> roc_curve(std::span<const double> scores,
                                                                                          std::span<const int> y) {
    std::size_t P = 0;
    for (int v : y) P += v ? 1 : 0;
    const std::size_t N = y.size() - P;
    if (P == 0 || N == 0) return {{}, std::nullopt};

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<std::pair<double, double>> points{{0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    double concordant_halves = 0.0;  // twice the concordance count, exact in double for n < 2^26
    for (std::size_t k = 0; k < order.size();) {
        std::size_t gpos = 0, gneg = 0;
        const double s = scores[order[k]];
        for (; k < order.size() && scores[order[k]] == s; ++k) (y[order[k]] ? gpos : gneg)++;
        concordant_halves += static_cast<double>(gneg) * (2.0 * static_cast<double>(tp) + static_cast<double>(gpos));
        tp += gpos;
        fp += gneg;
        points.emplace_back(static_cast<double>(fp) / static_cast<double>(N), static_cast<double>(tp) / static_cast<double>(P));
    }
    const double auc = concordant_halves / (2.0 * static_cast<double>(P) * static_cast<double>(N));
    return {std::move(points), auc};
}

/// Scores >= threshold predict the positive class.
inline EvalReport evaluate(std::span<const double> scores, std::span<const int> y, double threshold = 0.5) {
    if (scores.size() != y.size()) throw UsageError("evaluate: scores and labels differ in length");
    if (scores.empty()) throw UsageError("evaluate: no examples");
    EvalReport r;
    r.threshold = threshold;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 0 && y[i] != 1) throw UsageError("labels must be 0 or 1");
        const bool pred = scores[i] >= threshold;
        if (pred && y[i]) ++r.counts.tp;
        else if (pred) ++r.counts.fp;
        else if (y[i]) ++r.counts.fn;
        else ++r.counts.tn;
    }
    const auto& c = r.counts;
    r.positive = class_metrics(c.tp, c.fp, c.fn);
    r.negative = class_metrics(c.tn, c.fn, c.fp);
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(y.size());
    if (r.positive.f1 && r.negative.f1) r.macro_f1 = 0.5 * (*r.positive.f1 + *r.negative.f1);
    auto [points, auc] = roc_curve(scores, y);
    r.roc_points = std::move(points);
    r.auc = auc;
    return r;
}

inline EvalReport evaluate(const std::vector<double>& scores, const std::vector<int>& y, double threshold = 0.5) {
    return evaluate(std::span<const double>(scores), std::span<const int>(y), threshold);
}

inline nlohmann::json to_json(const EvalReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    auto cls = [&](const ClassMetrics& m) {
        return nlohmann::json{{"precision", opt(m.precision)}, {"recall", opt(m.recall)}, {"f1", opt(m.f1)}};
    };
    nlohmann::json roc = nlohmann::json::array();
    for (const auto& [f, t] : r.roc_points) roc.push_back({f, t});
    return {{"threshold", r.threshold},
            {"tp", r.counts.tp},
            {"fp", r.counts.fp},
            {"tn", r.counts.tn},
            {"fn", r.counts.fn},
            {"positive", cls(r.positive)},
            {"negative", cls(r.negative)},
            {"accuracy", r.accuracy},
            {"macro_f1", opt(r.macro_f1)},
            {"auc", opt(r.auc)},
            {"roc", roc}};
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
    auto opt = [](const nlohmann::json& v) { return v.is_null() ? std::optional<double>{} : std::optional<double>{v.get<double>()}; };
    auto cls = [&](const nlohmann::json& m) { return ClassMetrics{opt(m.at("precision")), opt(m.at("recall")), opt(m.at("f1"))}; };
    EvalReport r;
    r.threshold = j.at("threshold").get<double>();
    r.counts = {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(), j.at("tn").get<std::size_t>(),
                j.at("fn").get<std::size_t>()};
    r.positive = cls(j.at("positive"));
    r.negative = cls(j.at("negative"));
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_f1 = opt(j.at("macro_f1"));
    r.auc = opt(j.at("auc"));
    for (const auto& p : j.at("roc")) r.roc_points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    return r;
}

}  // namespace vidcurate
