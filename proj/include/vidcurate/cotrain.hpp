#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "features.hpp"
#include "forest.hpp"
#include "logreg.hpp"
#include "metrics.hpp"
#include "textmeasure.hpp"

namespace vidcurate {

enum class Dimension { med, und };

inline const char* to_string(Dimension d) { return d == Dimension::med ? "MED" : "UND"; }

inline Dimension parse_dimension(std::string_view s) {
    if (s == "MED" || s == "med") return Dimension::med;
    if (s == "UND" || s == "und") return Dimension::und;
    throw UsageError("unknown dimension '" + std::string(s) + "' (expected MED or UND)");
}

inline Binary parse_binary(std::string_view s) {
    if (s == "high") return Binary::high;
    if (s == "low") return Binary::low;
    throw UsageError("unknown label '" + std::string(s) + "' (expected high or low)");
}

inline int to_int(Binary b) { return b == Binary::high ? 1 : 0; }

struct CoTrainConfig {
    Dimension target = Dimension::med;
    int k_pos = 10;
    int k_neg = 10;
    double tau = 0.9;
    double epsilon = 0.002;  // plateau: validation macro-F1 gain below this ...
    int patience = 3;        // ... for this many consecutive rounds
    int max_rounds = 50;
    std::uint64_t seed = 0;
    double decision_threshold = 0.5;
    LogRegOptions logreg{};
    ForestParams forest{};
};

inline void validate(const CoTrainConfig& c) {
    if (c.k_pos < 1 || c.k_neg < 1) throw UsageError("k_pos and k_neg must be >= 1");
    if (!(c.tau > 0.5 && c.tau < 1.0)) throw UsageError("tau must lie in (0.5, 1)");
    if (c.epsilon < 0) throw UsageError("epsilon must be >= 0");
    if (c.patience < 1) throw UsageError("patience must be >= 1");
    if (c.max_rounds < 0) throw UsageError("max_rounds must be >= 0");
}

struct LabeledItem {
    Binary label = Binary::low;
    LabelSource source = LabelSource::human;
    std::optional<int> round;
};

enum class ReviewStatus { pending, resolved };

struct ReviewItem {
    std::string video_id;
    Dimension target = Dimension::med;
    double f1_proba = 0.0;
    double f2_proba = 0.0;
    int created_round = 0;
    ReviewStatus status = ReviewStatus::pending;
    std::optional<Binary> resolved_label;
    std::optional<std::string> resolver;
    /// Bumped on every change; clients must echo it back when submitting.
    std::uint64_t revision = 1;
};

struct Pools {
    std::set<std::string> p1, n1, p2, n2;
    /// Classifier probabilities for every id in U at selection time.
    std::map<std::string, std::pair<double, double>> proba;
    bool selected = false;
};

enum class Disposition { auto_positive, auto_negative, review, single_view, unselected };

inline const char* to_string(Disposition d) {
    switch (d) {
        case Disposition::auto_positive: return "auto_positive";
        case Disposition::auto_negative: return "auto_negative";
        case Disposition::review: return "review";
        case Disposition::single_view: return "single_view";
        default: return "unselected";
    }
}

struct RoundEntry {
    std::string video_id;
    int round = 0;
    Disposition disposition = Disposition::unselected;
    double f1_proba = 0.0;
    double f2_proba = 0.0;
};

struct RoundReport {
    Dimension target = Dimension::med;
    int round = 0;
    std::vector<RoundEntry> entries;  // every id that was in U when the pools were selected
    std::size_t labeled = 0;          // |L| after the round
    std::size_t unlabeled = 0;        // |U| after the round
    std::size_t pending = 0;          // pending review items after the round
    std::optional<EvalReport> validation;
};

struct CoTrainState {
    CoTrainConfig config;
    std::map<std::string, ViewPair> views;  // every corpus item
    std::map<std::string, LabeledItem> labeled;
    std::set<std::string> unlabeled;
    std::vector<ReviewItem> review_queue;  // resolved items stay, with status resolved
    std::set<std::string> discarded;
    LogRegModel f1;
    ForestModel f2;
    bool models_stale = false;
    int round = 0;
    Pools pools;
    std::vector<std::pair<ViewPair, Binary>> validation;
    std::vector<EvalReport> history;

    std::size_t pending_count() const {
        return static_cast<std::size_t>(std::count_if(review_queue.begin(), review_queue.end(),
                                                      [](const ReviewItem& r) { return r.status == ReviewStatus::pending; }));
    }

    const ReviewItem* find_review(const std::string& id) const {
        for (const auto& r : review_queue)
            if (r.video_id == id) return &r;
        return nullptr;
    }
};

namespace cotrain_detail {

inline void refit(CoTrainState& s) {
    std::vector<FeatureVector> x1, x2;
    std::vector<int> y;
    for (const auto& [id, item] : s.labeled) {
        const auto& v = s.views.at(id);
        x1.push_back(v.metadata_view);
        x2.push_back(v.content_view);
        y.push_back(to_int(item.label));
    }
    s.f1 = fit_logreg(x1, y, s.config.logreg);
    ForestParams fp = s.config.forest;
    fp.seed = mix_seed(s.config.seed, static_cast<std::uint64_t>(s.round));
    s.f2 = fit_forest(x2, y, fp);
    s.models_stale = false;
}

inline std::pair<double, double> predict(const CoTrainState& s, const ViewPair& v) {
    return {predict_proba_logreg(s.f1, v.metadata_view), predict_proba_forest(s.f2, v.content_view)};
}

}  // namespace cotrain_detail

/// Ensemble score: mean of the two view classifiers' positive probabilities.
inline double ensemble_proba(const CoTrainState& s, const ViewPair& v) {
    auto [a, b] = cotrain_detail::predict(s, v);
    return 0.5 * (a + b);
}

inline std::optional<EvalReport> validate_models(const CoTrainState& s) {
    if (s.validation.empty()) return std::nullopt;
    std::vector<double> scores;
    std::vector<int> y;
    for (const auto& [v, label] : s.validation) {
        scores.push_back(ensemble_proba(s, v));
        y.push_back(to_int(label));
    }
    return evaluate(scores, y, s.config.decision_threshold);
}

/// Fits F1 on the metadata views and F2 on the content views of the seed labels.
inline CoTrainState init_state(const std::vector<std::pair<ViewPair, Binary>>& labeled,
                               const std::vector<ViewPair>& unlabeled, const CoTrainConfig& config,
                               std::vector<std::pair<ViewPair, Binary>> validation = {}) {
    validate(config);
    CoTrainState s;
    s.config = config;
    bool has_high = false, has_low = false;
    for (const auto& [v, label] : labeled) {
        if (!s.views.emplace(v.video_id, v).second) throw DataError("duplicate video id " + v.video_id);
        s.labeled[v.video_id] = LabeledItem{label, LabelSource::human, std::nullopt};
        (label == Binary::high ? has_high : has_low) = true;
    }
    if (!(has_high && has_low)) throw DataError("degenerate labels: seed set needs both classes");
    for (const auto& v : unlabeled) {
        if (!s.views.emplace(v.video_id, v).second) throw DataError("duplicate video id " + v.video_id);
        s.unlabeled.insert(v.video_id);
    }
    s.validation = std::move(validation);
    cotrain_detail::refit(s);
    if (auto r = validate_models(s)) s.history.push_back(*r);
    return s;
}

/// Top-k confident positives/negatives per classifier among U (proba >= tau, resp.
/// 1 - proba >= tau); ties broken by video id.
inline const Pools& select_pools(CoTrainState& s) {
    if (s.models_stale) cotrain_detail::refit(s);
    Pools pools;
    std::vector<std::tuple<double, double, std::string>> scored;  // (f1, f2, id)
    for (const auto& id : s.unlabeled) {
        auto [a, b] = cotrain_detail::predict(s, s.views.at(id));
        pools.proba[id] = {a, b};
        scored.emplace_back(a, b, id);
    }
    const double tau = s.config.tau;
    auto take = [&](auto confidence, std::size_t k, std::set<std::string>& out) {
        std::vector<std::pair<double, std::string>> c;
        for (const auto& e : scored) {
            const double conf = confidence(e);
            if (conf >= tau) c.emplace_back(conf, std::get<2>(e));
        }
        std::sort(c.begin(), c.end(), [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first > y.first : x.second < y.second;
        });
        for (std::size_t i = 0; i < std::min(k, c.size()); ++i) out.insert(c[i].second);
    };
    const auto kp = static_cast<std::size_t>(s.config.k_pos), kn = static_cast<std::size_t>(s.config.k_neg);
    take([](const auto& e) { return std::get<0>(e); }, kp, pools.p1);
    take([](const auto& e) { return 1.0 - std::get<0>(e); }, kn, pools.n1);
    take([](const auto& e) { return std::get<1>(e); }, kp, pools.p2);
    take([](const auto& e) { return 1.0 - std::get<1>(e); }, kn, pools.n2);
    pools.selected = true;
    s.pools = std::move(pools);
    return s.pools;
}

/// Applies the selected pools: consistent ids are auto-labeled into L, conflicting ids
/// go to the review queue, everything else stays in U. Then refits and validates.
inline RoundReport commit_round(CoTrainState& s) {
    const int r = s.round + 1;
    RoundReport report;
    report.target = s.config.target;
    report.round = r;
    const Pools& p = s.pools;
    for (const auto& [id, proba] : p.proba) {
        if (!s.unlabeled.contains(id)) continue;
        const bool ip1 = p.p1.contains(id), in1 = p.n1.contains(id), ip2 = p.p2.contains(id), in2 = p.n2.contains(id);
        RoundEntry e{id, r, Disposition::unselected, proba.first, proba.second};
        if (ip1 && ip2) {
            e.disposition = Disposition::auto_positive;
            s.labeled[id] = LabeledItem{Binary::high, LabelSource::auto_cotrain, r};
        } else if (in1 && in2) {
            e.disposition = Disposition::auto_negative;
            s.labeled[id] = LabeledItem{Binary::low, LabelSource::auto_cotrain, r};
        } else if ((ip1 && in2) || (in1 && ip2)) {
            e.disposition = Disposition::review;
            s.review_queue.push_back(ReviewItem{id, s.config.target, proba.first, proba.second, r, ReviewStatus::pending,
                                                std::nullopt, std::nullopt, 1});
        } else if (ip1 || in1 || ip2 || in2) {
            e.disposition = Disposition::single_view;
        }
        if (e.disposition == Disposition::auto_positive || e.disposition == Disposition::auto_negative ||
            e.disposition == Disposition::review) {
            s.unlabeled.erase(id);
            if (e.disposition != Disposition::review) s.models_stale = true;
        }
        report.entries.push_back(std::move(e));
    }
    s.pools = Pools{};
    s.round = r;
    if (s.models_stale) cotrain_detail::refit(s);
    report.validation = validate_models(s);
    if (report.validation) s.history.push_back(*report.validation);
    report.labeled = s.labeled.size();
    report.unlabeled = s.unlabeled.size();
    report.pending = s.pending_count();
    return report;
}

/// Human decision for a pending conflict. Re-resolving with the same label is a no-op.
inline void resolve_review(CoTrainState& s, const std::string& video_id, Binary label, const std::string& resolver) {
    auto it = std::find_if(s.review_queue.begin(), s.review_queue.end(),
                           [&](const ReviewItem& r) { return r.video_id == video_id; });
    if (it == s.review_queue.end()) throw DataError("no review item for " + video_id);
    if (it->status == ReviewStatus::resolved) {
        if (it->resolved_label == label) return;
        throw StateError("conflicting resolution for " + video_id);
    }
    if (resolver.empty()) throw UsageError("resolver name required");
    it->status = ReviewStatus::resolved;
    it->resolved_label = label;
    it->resolver = resolver;
    ++it->revision;
    s.labeled[video_id] = LabeledItem{label, LabelSource::human, it->created_round};
    s.models_stale = true;
}

enum class StopReason { depleted, plateau, max_rounds };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::depleted: return "depleted";
        case StopReason::plateau: return "plateau";
        default: return "max_rounds";
    }
}

struct StopDecision {
    bool stop = false;
    std::vector<StopReason> reasons;
};

inline double plateau_metric(const EvalReport& r) { return r.macro_f1.value_or(0.0); }

inline StopDecision should_stop(const CoTrainState& s) {
    StopDecision d;
    if (s.unlabeled.empty() && s.pending_count() == 0) d.reasons.push_back(StopReason::depleted);
    const auto R = static_cast<std::size_t>(s.config.patience);
    if (s.history.size() >= R + 1) {
        bool flat = true;
        for (std::size_t i = s.history.size() - R; i < s.history.size(); ++i)
            if (plateau_metric(s.history[i]) - plateau_metric(s.history[i - 1]) >= s.config.epsilon) flat = false;
        if (flat) d.reasons.push_back(StopReason::plateau);
    }
    if (s.round >= s.config.max_rounds) d.reasons.push_back(StopReason::max_rounds);
    d.stop = !d.reasons.empty();
    return d;
}

/// L, U, pending-review and discarded ids partition the corpus.
inline bool partition_holds(const CoTrainState& s) {
    std::multiset<std::string> all;
    for (const auto& [id, _] : s.labeled) all.insert(id);
    for (const auto& id : s.unlabeled) all.insert(id);
    for (const auto& r : s.review_queue)
        if (r.status == ReviewStatus::pending) all.insert(r.video_id);
    for (const auto& id : s.discarded) all.insert(id);
    if (all.size() != s.views.size()) return false;
    auto it = all.begin();
    for (const auto& [id, _] : s.views)
        if (*it++ != id) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const RoundEntry& e, Dimension target) {
    return {{"video_id", e.video_id}, {"dimension", to_string(target)}, {"round", e.round},
            {"disposition", to_string(e.disposition)}, {"f1_proba", e.f1_proba}, {"f2_proba", e.f2_proba}};
}

/// One audit line per id.
inline void append_audit(std::ostream& out, const RoundReport& r) {
    for (const auto& e : r.entries) out << to_json(e, r.target).dump() << '\n';
}

inline nlohmann::json to_json(const RoundReport& r) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries) entries.push_back(to_json(e, r.target));
    nlohmann::json j{{"dimension", to_string(r.target)}, {"round", r.round},     {"labeled", r.labeled},
                     {"unlabeled", r.unlabeled},       {"pending", r.pending}, {"entries", entries}};
    j["validation"] = r.validation ? to_json(*r.validation) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const ReviewItem& r) {
    nlohmann::json j{{"video_id", r.video_id},
                     {"dimension", to_string(r.target)},
                     {"f1_proba", r.f1_proba},
                     {"f2_proba", r.f2_proba},
                     {"created_round", r.created_round},
                     {"status", r.status == ReviewStatus::pending ? "pending" : "resolved"},
                     {"revision", r.revision}};
    j["resolved_label"] = r.resolved_label ? nlohmann::json(to_string(*r.resolved_label)) : nlohmann::json(nullptr);
    j["resolver"] = r.resolver ? nlohmann::json(*r.resolver) : nlohmann::json(nullptr);
    return j;
}

inline ReviewItem review_item_from_json(const nlohmann::json& j) {
    ReviewItem r;
    r.video_id = j.at("video_id").get<std::string>();
    r.target = parse_dimension(j.at("dimension").get<std::string>());
    r.f1_proba = j.at("f1_proba").get<double>();
    r.f2_proba = j.at("f2_proba").get<double>();
    r.created_round = j.at("created_round").get<int>();
    r.status = j.at("status").get<std::string>() == "pending" ? ReviewStatus::pending : ReviewStatus::resolved;
    r.revision = j.at("revision").get<std::uint64_t>();
    if (!j.at("resolved_label").is_null()) r.resolved_label = parse_binary(j.at("resolved_label").get<std::string>());
    if (!j.at("resolver").is_null()) r.resolver = j.at("resolver").get<std::string>();
    return r;
}

inline nlohmann::json to_json(const CoTrainConfig& c) {
    const auto& f = c.forest;
    return {{"target", to_string(c.target)},
            {"k_pos", c.k_pos},
            {"k_neg", c.k_neg},
            {"tau", c.tau},
            {"epsilon", c.epsilon},
            {"patience", c.patience},
            {"max_rounds", c.max_rounds},
            {"seed", c.seed},
            {"decision_threshold", c.decision_threshold},
            {"logreg", {{"l2_lambda", c.logreg.l2_lambda}, {"tol", c.logreg.tol}, {"max_iter", c.logreg.max_iter}}},
            {"forest",
             {{"n_trees", f.n_trees},
              {"max_depth", f.max_depth},
              {"mtry", f.mtry},
              {"min_leaf", f.min_leaf},
              {"bootstrap", f.bootstrap}}}};
}

/// Reads a config object; absent keys keep the defaults in `base`.
inline CoTrainConfig cotrain_config_from_json(const nlohmann::json& j, CoTrainConfig base = {}) {
    auto get = [&](const nlohmann::json& obj, const char* key, auto& into) {
        if (auto it = obj.find(key); it != obj.end()) into = it->get<std::remove_reference_t<decltype(into)>>();
    };
    if (auto it = j.find("target"); it != j.end()) base.target = parse_dimension(it->get<std::string>());
    get(j, "k_pos", base.k_pos);
    get(j, "k_neg", base.k_neg);
    get(j, "tau", base.tau);
    get(j, "epsilon", base.epsilon);
    get(j, "patience", base.patience);
    get(j, "max_rounds", base.max_rounds);
    get(j, "seed", base.seed);
    get(j, "decision_threshold", base.decision_threshold);
    if (auto it = j.find("logreg"); it != j.end()) {
        get(*it, "l2_lambda", base.logreg.l2_lambda);
        get(*it, "tol", base.logreg.tol);
        get(*it, "max_iter", base.logreg.max_iter);
    }
    if (auto it = j.find("forest"); it != j.end()) {
        get(*it, "n_trees", base.forest.n_trees);
        get(*it, "max_depth", base.forest.max_depth);
        get(*it, "mtry", base.forest.mtry);
        get(*it, "min_leaf", base.forest.min_leaf);
        get(*it, "bootstrap", base.forest.bootstrap);
    }
    validate(base);
    return base;
}

inline nlohmann::json to_json(const ViewPair& v) {
    return {{"video_id", v.video_id}, {"metadata", to_json(v.metadata_view)}, {"content", to_json(v.content_view)}};
}

inline ViewPair view_pair_from_json(const nlohmann::json& j) {
    return {j.at("video_id").get<std::string>(), feature_vector_from_json(j.at("metadata")),
            feature_vector_from_json(j.at("content"))};
}

/// Full snapshot: data, sets, queue, models (bit-exact text form) and history.
inline nlohmann::json to_json(const CoTrainState& s) {
    using nlohmann::json;
    json views = json::array();
    for (const auto& [id, v] : s.views) views.push_back(to_json(v));
    json labeled = json::array();
    for (const auto& [id, item] : s.labeled) {
        json e{{"video_id", id}, {"label", to_string(item.label)}, {"source", item.source}};
        e["round"] = item.round ? json(*item.round) : json(nullptr);
        labeled.push_back(e);
    }
    json queue = json::array();
    for (const auto& r : s.review_queue) queue.push_back(to_json(r));
    json validation = json::array();
    for (const auto& [v, label] : s.validation) validation.push_back({{"view", to_json(v)}, {"label", to_string(label)}});
    json history = json::array();
    for (const auto& h : s.history) history.push_back(to_json(h));
    json pools = nullptr;
    if (s.pools.selected) {
        json proba = json::object();
        for (const auto& [id, pr] : s.pools.proba) proba[id] = {pr.first, pr.second};
        pools = {{"p1", s.pools.p1}, {"n1", s.pools.n1}, {"p2", s.pools.p2}, {"n2", s.pools.n2}, {"proba", proba}};
    }
    return {{"format", "vidcurate-cotrain-state"},
            {"version", 1},
            {"config", to_json(s.config)},
            {"round", s.round},
            {"views", views},
            {"labeled", labeled},
            {"unlabeled", s.unlabeled},
            {"review_queue", queue},
            {"discarded", s.discarded},
            {"models_stale", s.models_stale},
            {"f1", serialize(s.f1)},
            {"f2", serialize(s.f2)},
            {"pools", pools},
            {"validation", validation},
            {"history", history}};
}

inline CoTrainState cotrain_state_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "vidcurate-cotrain-state" || j.value("version", 0) != 1)
        throw DataError("not a co-training checkpoint (format/version mismatch)");
    try {
        CoTrainState s;
        s.config = cotrain_config_from_json(j.at("config"));
        s.round = j.at("round").get<int>();
        for (const auto& v : j.at("views")) {
            auto vp = view_pair_from_json(v);
            s.views.emplace(vp.video_id, std::move(vp));
        }
        for (const auto& e : j.at("labeled")) {
            LabeledItem item{parse_binary(e.at("label").get<std::string>()), e.at("source").get<LabelSource>(), std::nullopt};
            if (!e.at("round").is_null()) item.round = e.at("round").get<int>();
            s.labeled[e.at("video_id").get<std::string>()] = item;
        }
        s.unlabeled = j.at("unlabeled").get<std::set<std::string>>();
        for (const auto& r : j.at("review_queue")) s.review_queue.push_back(review_item_from_json(r));
        s.discarded = j.at("discarded").get<std::set<std::string>>();
        s.models_stale = j.at("models_stale").get<bool>();
        {
            std::istringstream in(j.at("f1").get<std::string>());
            s.f1 = read_logreg(in);
            s.f1.l2_lambda = s.config.logreg.l2_lambda;
        }
        {
            std::istringstream in(j.at("f2").get<std::string>());
            s.f2 = read_forest(in);
            s.f2.params.threads = s.config.forest.threads;
        }
        if (const auto& p = j.at("pools"); !p.is_null()) {
            s.pools.p1 = p.at("p1").get<std::set<std::string>>();
            s.pools.n1 = p.at("n1").get<std::set<std::string>>();
            s.pools.p2 = p.at("p2").get<std::set<std::string>>();
            s.pools.n2 = p.at("n2").get<std::set<std::string>>();
            for (const auto& [id, pr] : p.at("proba").items()) s.pools.proba[id] = {pr.at(0).get<double>(), pr.at(1).get<double>()};
            s.pools.selected = true;
        }
        for (const auto& v : j.at("validation"))
            s.validation.emplace_back(view_pair_from_json(v.at("view")), parse_binary(v.at("label").get<std::string>()));
        for (const auto& h : j.at("history")) s.history.push_back(eval_report_from_json(h));
        if (!partition_holds(s)) throw DataError("checkpoint violates the L/U/review/discarded partition");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt co-training checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const CoTrainState& s, const std::filesystem::path& path) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write checkpoint " + tmp);
        out << to_json(s).dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
}

inline CoTrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    return cotrain_state_from_json(j);
}

// ---------------------------------------------------------------------------
// Driver

/// Answers pending conflicts. Returning nullopt or throwing means "no answer now";
/// the run then checkpoints and stops resumably.
class ReviewResolver {
public:
    virtual ~ReviewResolver() = default;
    virtual std::optional<Binary> resolve(const ReviewItem& item, const CoTrainState& state) = 0;
    virtual std::string name() const = 0;
};

/// Replays recorded decisions keyed by (video_id, dimension).
class TranscriptResolver final : public ReviewResolver {
public:
    TranscriptResolver(std::map<std::pair<std::string, Dimension>, Binary> answers, std::string name = "transcript")
        : answers_(std::move(answers)), name_(std::move(name)) {}

    /// CSV rows `video_id,dimension,label` with an optional header.
    static TranscriptResolver load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open resolver transcript " + path.string());
        std::map<std::pair<std::string, Dimension>, Binary> answers;
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto cells = csv_split(line);
            if (std::exchange(first, false) && !cells.empty() && cells[0] == "video_id") continue;
            if (cells.size() < 3) throw DataError("resolver transcript: expected video_id,dimension,label");
            answers[{cells[0], parse_dimension(cells[1])}] = parse_binary(cells[2]);
        }
        return TranscriptResolver(std::move(answers));
    }

    std::optional<Binary> resolve(const ReviewItem& item, const CoTrainState&) override {
        auto it = answers_.find({item.video_id, item.target});
        if (it == answers_.end()) return std::nullopt;
        return it->second;
    }

    std::string name() const override { return name_; }

private:
    std::map<std::pair<std::string, Dimension>, Binary> answers_;
    std::string name_;
};

/// Thrown when the resolver cannot answer; the state was checkpointed to `checkpoint`.
class ResumableStop : public std::runtime_error {
public:
    ResumableStop(const std::string& what, std::filesystem::path checkpoint)
        : std::runtime_error(what), checkpoint(std::move(checkpoint)) {}
    std::filesystem::path checkpoint;
};

struct RunOptions {
    /// Directory receiving one checkpoint per round plus `latest` on interruption; empty = none.
    std::filesystem::path checkpoint_dir;
    /// Called with each round report (e.g. to append the audit log).
    std::function<void(const RoundReport&)> on_round;
    /// Called after every state transition (for invariant checks in tests).
    std::function<void(const CoTrainState&)> on_step;
};

struct RunResult {
    std::vector<LabelSet> labels;
    std::vector<EvalReport> history;
    std::vector<RoundReport> rounds;
    std::vector<std::string> discarded;
    StopDecision stop;
};

inline std::vector<LabelSet> export_labels(const CoTrainState& s) {
    std::vector<LabelSet> out;
    for (const auto& [id, item] : s.labeled) {
        LabelSet l;
        l.video_id = id;
        const Level lv = item.label == Binary::high ? Level::high : Level::low;
        (s.config.target == Dimension::med ? l.med : l.und) = lv;
        l.source = item.source;
        l.round = item.round;
        out.push_back(l);
    }
    return out;
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, Dimension d, const std::string& tag) {
    return dir / ("checkpoint_" + std::string(to_string(d)) + "_" + tag + ".json");
}

/// select_pools -> commit_round -> drain review queue, until should_stop. Ids still in U
/// at the end are discarded, never labeled.
inline RunResult run(CoTrainState& s, ReviewResolver& resolver, const RunOptions& opt = {}) {
    RunResult result;
    auto step = [&] {
        if (opt.on_step) opt.on_step(s);
    };
    auto drain = [&] {
        for (std::size_t i = 0; i < s.review_queue.size(); ++i) {
            if (s.review_queue[i].status != ReviewStatus::pending) continue;
            const ReviewItem item = s.review_queue[i];
            std::optional<Binary> answer;
            std::string failure;
            try {
                answer = resolver.resolve(item, s);
            } catch (const std::exception& e) {
                failure = e.what();
            }
            if (!answer) {
                std::filesystem::path cp;
                if (!opt.checkpoint_dir.empty()) {
                    cp = checkpoint_path(opt.checkpoint_dir, s.config.target, "latest");
                    save_checkpoint(s, cp);
                }
                throw ResumableStop("resolver gave no answer for " + item.video_id +
                                        (failure.empty() ? std::string() : ": " + failure),
                                    cp);
            }
            resolve_review(s, item.video_id, *answer, resolver.name());
            step();
        }
    };
    step();
    // a fresh run leaves its starting point behind; the review service can start from it
    if (!opt.checkpoint_dir.empty() && s.round == 0)
        save_checkpoint(s, checkpoint_path(opt.checkpoint_dir, s.config.target, "round0"));
    while (true) {
        drain();
        result.stop = should_stop(s);
        if (result.stop.stop) break;
        if (!s.unlabeled.empty()) select_pools(s);
        auto report = commit_round(s);
        step();
        if (opt.on_round) opt.on_round(report);
        if (!opt.checkpoint_dir.empty())
            save_checkpoint(s, checkpoint_path(opt.checkpoint_dir, s.config.target, "round" + std::to_string(s.round)));
        result.rounds.push_back(std::move(report));
    }
    for (const auto& id : s.unlabeled) s.discarded.insert(id);
    result.discarded.assign(s.unlabeled.begin(), s.unlabeled.end());
    s.unlabeled.clear();
    if (s.models_stale) cotrain_detail::refit(s);
    step();
    result.labels = export_labels(s);
    result.history = s.history;
    return result;
}

}  // namespace vidcurate
