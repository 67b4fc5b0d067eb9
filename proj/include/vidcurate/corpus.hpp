#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "jsonl.hpp"

namespace vidcurate {

using json = nlohmann::json;
using Timestamp = std::chrono::sys_seconds;

enum class Definition { sd, hd };
enum class Gender { male, female, unknown };
enum class AgeBracket { under20, b20_30, b30_40, b40_50, over50, unknown };
enum class DetectionSource { face, speech, manual };
enum class Level { high, low, unlabeled };
enum class LabelSource { human, auto_cotrain };

NLOHMANN_JSON_SERIALIZE_ENUM(Definition, {{Definition::sd, "sd"}, {Definition::hd, "hd"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Gender, {{Gender::unknown, "unknown"},
                                      {Gender::male, "male"},
                                      {Gender::female, "female"}})
NLOHMANN_JSON_SERIALIZE_ENUM(AgeBracket, {{AgeBracket::unknown, "unknown"},
                                          {AgeBracket::under20, "under20"},
                                          {AgeBracket::b20_30, "b20_30"},
                                          {AgeBracket::b30_40, "b30_40"},
                                          {AgeBracket::b40_50, "b40_50"},
                                          {AgeBracket::over50, "over50"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DetectionSource, {{DetectionSource::face, "face"},
                                               {DetectionSource::speech, "speech"},
                                               {DetectionSource::manual, "manual"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Level, {{Level::unlabeled, "unlabeled"},
                                     {Level::high, "high"},
                                     {Level::low, "low"}})
NLOHMANN_JSON_SERIALIZE_ENUM(LabelSource, {{LabelSource::human, "human"},
                                           {LabelSource::auto_cotrain, "auto_cotrain"}})

inline const char* to_string(Level l) {
    switch (l) {
        case Level::high: return "high";
        case Level::low: return "low";
        default: return "unlabeled";
    }
}

inline const char* to_string(Gender g) {
    switch (g) {
        case Gender::male: return "male";
        case Gender::female: return "female";
        default: return "unknown";
    }
}

inline const char* to_string(AgeBracket a) {
    switch (a) {
        case AgeBracket::under20: return "under20";
        case AgeBracket::b20_30: return "b20_30";
        case AgeBracket::b30_40: return "b30_40";
        case AgeBracket::b40_50: return "b40_50";
        case AgeBracket::over50: return "over50";
        default: return "unknown";
    }
}

// ---------------------------------------------------------------------------
// Timestamps: ISO-8601 UTC, "YYYY-MM-DDTHH:MM:SS[.fff]Z".

inline Timestamp parse_timestamp(std::string_view text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    const std::string buf(text);
    int consumed = 0;
    if (std::sscanf(buf.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s, &consumed) != 6)
        throw DataError("bad timestamp '" + buf + "'");
    std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
    if (!rest.empty() && rest.front() == '.') {
        rest.remove_prefix(1);
        while (!rest.empty() && rest.front() >= '0' && rest.front() <= '9') rest.remove_prefix(1);
    }
    if (rest != "Z") throw DataError("timestamp must be UTC ('Z'): '" + buf + "'");
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60) throw DataError("bad timestamp '" + buf + "'");
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

inline std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const auto days = floor<std::chrono::days>(t);
    const year_month_day ymd{days};
    const hh_mm_ss hms{t - days};
    char out[64];
    std::snprintf(out, sizeof out, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return out;
}

// ---------------------------------------------------------------------------
// Records

struct SearchRank {
    std::string search_term;
    int rank = 1;  // 1..50

    bool operator==(const SearchRank&) const = default;
};

struct VideoRecord {
    std::string video_id;
    std::string channel_id;
    Timestamp publish_time{};
    std::string title;
    std::string description;
    std::vector<std::string> tags;
    std::int64_t duration_seconds = 0;
    Definition definition = Definition::sd;
    bool captions_available = false;
    std::optional<double> rating;
    std::int64_t view_count = 0;
    std::int64_t like_count = 0;
    std::int64_t dislike_count = 0;
    std::int64_t comment_count = 0;
    std::optional<std::string> language;
    std::optional<SearchRank> search_rank;
    /// Channel-level subscriber count; optional, never imputed.
    std::optional<std::int64_t> subscriber_count;
    /// Fields not modelled above, preserved verbatim on round-trip.
    json extra = json::object();

    bool operator==(const VideoRecord&) const = default;
};

inline constexpr int kMaxSearchRank = 50;

inline void validate(const VideoRecord& r) {
    if (r.video_id.empty()) throw DataError("video record with empty video_id");
    if (r.duration_seconds < 0 || r.view_count < 0 || r.like_count < 0 || r.dislike_count < 0 ||
        r.comment_count < 0)
        throw DataError("video " + r.video_id + ": negative count");
    if (r.search_rank && (r.search_rank->rank < 1 || r.search_rank->rank > kMaxSearchRank))
        throw DataError("video " + r.video_id + ": search rank outside [1, 50]");
    if (r.subscriber_count && *r.subscriber_count < 0)
        throw DataError("video " + r.video_id + ": negative subscriber_count");
}

namespace detail {

inline const std::unordered_set<std::string>& video_fields() {
    static const std::unordered_set<std::string> f{
        "video_id",      "channel_id",    "publish_time", "title",         "description",
        "tags",          "duration_seconds", "definition", "captions_available", "rating",
        "view_count",    "like_count",    "dislike_count", "comment_count", "language",
        "search_rank",   "subscriber_count"};
    return f;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    return it->get<T>();
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

}  // namespace detail

inline json to_json(const VideoRecord& r) {
    json j = json::object();
    j["video_id"] = r.video_id;
    j["channel_id"] = r.channel_id;
    j["publish_time"] = format_timestamp(r.publish_time);
    j["title"] = r.title;
    j["description"] = r.description;
    j["tags"] = r.tags;
    j["duration_seconds"] = r.duration_seconds;
    j["definition"] = r.definition;
    j["captions_available"] = r.captions_available;
    if (r.rating) j["rating"] = *r.rating;
    j["view_count"] = r.view_count;
    j["like_count"] = r.like_count;
    j["dislike_count"] = r.dislike_count;
    j["comment_count"] = r.comment_count;
    if (r.language) j["language"] = *r.language;
    if (r.search_rank)
        j["search_rank"] = {{"search_term", r.search_rank->search_term}, {"rank", r.search_rank->rank}};
    if (r.subscriber_count) j["subscriber_count"] = *r.subscriber_count;
    for (const auto& [k, v] : r.extra.items()) j[k] = v;
    return j;
}

inline VideoRecord video_from_json(const json& j) {
    using detail::get_opt;
    using detail::get_or;
    try {
        VideoRecord r;
        r.video_id = j.at("video_id").get<std::string>();
        r.channel_id = get_or<std::string>(j, "channel_id", "");
        if (auto t = get_opt<std::string>(j, "publish_time")) r.publish_time = parse_timestamp(*t);
        r.title = get_or<std::string>(j, "title", "");
        r.description = get_or<std::string>(j, "description", "");
        r.tags = get_or<std::vector<std::string>>(j, "tags", {});
        r.duration_seconds = get_or<std::int64_t>(j, "duration_seconds", 0);
        r.definition = get_or<Definition>(j, "definition", Definition::sd);
        r.captions_available = get_or<bool>(j, "captions_available", false);
        r.rating = get_opt<double>(j, "rating");
        r.view_count = get_or<std::int64_t>(j, "view_count", 0);
        r.like_count = get_or<std::int64_t>(j, "like_count", 0);
        r.dislike_count = get_or<std::int64_t>(j, "dislike_count", 0);
        r.comment_count = get_or<std::int64_t>(j, "comment_count", 0);
        r.language = get_opt<std::string>(j, "language");
        if (auto it = j.find("search_rank"); it != j.end() && !it->is_null())
            r.search_rank = SearchRank{it->at("search_term").get<std::string>(), it->at("rank").get<int>()};
        r.subscriber_count = get_opt<std::int64_t>(j, "subscriber_count");
        for (const auto& [k, v] : j.items())
            if (!detail::video_fields().contains(k)) r.extra[k] = v;
        validate(r);
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed video record: ") + e.what());
    }
}

struct ActorAnnotation {
    std::string video_id;
    int actor_count = 0;
    bool face_visible = false;
    Gender gender = Gender::unknown;
    AgeBracket age_bracket = AgeBracket::unknown;
    DetectionSource detection_source = DetectionSource::manual;
    /// Upstream screening flags consumed by the fairness exclusion funnel.
    std::optional<bool> off_topic;
    bool readable = true;
    bool narration = true;

    bool operator==(const ActorAnnotation&) const = default;
};

inline void validate(const ActorAnnotation& a) {
    if (a.video_id.empty()) throw DataError("annotation with empty video_id");
    if (a.actor_count < 0) throw DataError("annotation " + a.video_id + ": negative actor_count");
    if (a.actor_count == 0 && a.face_visible)
        throw DataError("annotation " + a.video_id + ": face_visible with zero actors");
    // Unknown attributes are allowed only when the detection modality cannot observe them
    // (age via speech) or when the video was flagged unreadable.
    if (a.readable && a.actor_count <= 1) {
        if (a.gender == Gender::unknown)
            throw DataError("annotation " + a.video_id + ": gender unknown for readable video");
        if (a.detection_source != DetectionSource::speech && a.age_bracket == AgeBracket::unknown)
            throw DataError("annotation " + a.video_id + ": age unknown although observable via " +
                            json(a.detection_source).get<std::string>());
    }
}

inline json to_json(const ActorAnnotation& a) {
    json j{{"video_id", a.video_id},       {"actor_count", a.actor_count},
           {"face_visible", a.face_visible}, {"gender", a.gender},
           {"age_bracket", a.age_bracket},   {"detection_source", a.detection_source},
           {"readable", a.readable},         {"narration", a.narration}};
    if (a.off_topic) j["off_topic"] = *a.off_topic;
    return j;
}

inline ActorAnnotation annotation_from_json(const json& j) {
    using detail::get_opt;
    using detail::get_or;
    try {
        ActorAnnotation a;
        a.video_id = j.at("video_id").get<std::string>();
        a.actor_count = j.at("actor_count").get<int>();
        a.face_visible = get_or<bool>(j, "face_visible", false);
        a.gender = get_or<Gender>(j, "gender", Gender::unknown);
        a.age_bracket = get_or<AgeBracket>(j, "age_bracket", AgeBracket::unknown);
        a.detection_source = get_or<DetectionSource>(j, "detection_source", DetectionSource::manual);
        a.off_topic = get_opt<bool>(j, "off_topic");
        a.readable = get_or<bool>(j, "readable", true);
        a.narration = get_or<bool>(j, "narration", true);
        validate(a);
        return a;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed annotation: ") + e.what());
    }
}

/// Labels for one video. A video may carry several LabelSet records when its two
/// dimensions were labeled with different provenance (e.g. MED auto, UND human);
/// merge_labels() folds them together.
struct LabelSet {
    std::string video_id;
    Level med = Level::unlabeled;
    Level und = Level::unlabeled;
    std::optional<LabelSource> source;
    std::optional<int> round;

    bool operator==(const LabelSet&) const = default;
};

inline void validate(const LabelSet& l) {
    if (l.video_id.empty()) throw DataError("label with empty video_id");
    const bool any = l.med != Level::unlabeled || l.und != Level::unlabeled;
    if (!any && l.source) throw DataError("label " + l.video_id + ": source on an unlabeled record");
    if (any && !l.source) throw DataError("label " + l.video_id + ": labeled record without source");
    if (l.source == LabelSource::auto_cotrain && !l.round)
        throw DataError("label " + l.video_id + ": auto_cotrain label without round");
}

inline json to_json(const LabelSet& l) {
    json j{{"video_id", l.video_id}, {"med", l.med}, {"und", l.und}};
    if (l.source) j["source"] = *l.source;
    if (l.round) j["round"] = *l.round;
    return j;
}

inline LabelSet label_from_json(const json& j) {
    try {
        LabelSet l;
        l.video_id = j.at("video_id").get<std::string>();
        l.med = detail::get_or<Level>(j, "med", Level::unlabeled);
        l.und = detail::get_or<Level>(j, "und", Level::unlabeled);
        l.source = detail::get_opt<LabelSource>(j, "source");
        l.round = detail::get_opt<int>(j, "round");
        validate(l);
        return l;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed label: ") + e.what());
    }
}

struct MergedLabel {
    Level med = Level::unlabeled;
    Level und = Level::unlabeled;
};

/// Per-video view of a label list; conflicting values for one dimension are an error.
inline std::map<std::string, MergedLabel> merge_labels(const std::vector<LabelSet>& labels) {
    std::map<std::string, MergedLabel> out;
    auto fold = [](Level& into, Level from, const std::string& id, const char* dim) {
        if (from == Level::unlabeled) return;
        if (into != Level::unlabeled && into != from)
            throw DataError("conflicting " + std::string(dim) + " labels for " + id);
        into = from;
    };
    for (const auto& l : labels) {
        auto& m = out[l.video_id];
        fold(m.med, l.med, l.video_id, "MED");
        fold(m.und, l.und, l.video_id, "UND");
    }
    return out;
}

// ---------------------------------------------------------------------------
// File IO

inline std::vector<VideoRecord> read_corpus(const std::filesystem::path& path) {
    std::vector<VideoRecord> out;
    for (const auto& j : jsonl::read_file(path)) out.push_back(video_from_json(j));
    return out;
}

inline void write_corpus(const std::filesystem::path& path, const std::vector<VideoRecord>& records) {
    std::vector<json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back(to_json(r));
    jsonl::write_file(path, rows);
}

inline std::vector<ActorAnnotation> read_annotations(const std::filesystem::path& path) {
    std::vector<ActorAnnotation> out;
    for (const auto& j : jsonl::read_file(path)) out.push_back(annotation_from_json(j));
    return out;
}

inline void write_annotations(const std::filesystem::path& path, const std::vector<ActorAnnotation>& v) {
    std::vector<json> rows;
    for (const auto& a : v) rows.push_back(to_json(a));
    jsonl::write_file(path, rows);
}

inline std::vector<LabelSet> read_labels(const std::filesystem::path& path) {
    std::vector<LabelSet> out;
    for (const auto& j : jsonl::read_file(path)) out.push_back(label_from_json(j));
    return out;
}

inline void write_labels(const std::filesystem::path& path, const std::vector<LabelSet>& v) {
    std::vector<json> rows;
    for (const auto& l : v) rows.push_back(to_json(l));
    jsonl::write_file(path, rows);
}

// ---------------------------------------------------------------------------
// Ingestion

/// Ranked search against a video catalog. Results are returned best-first.
class CatalogClient {
public:
    virtual ~CatalogClient() = default;
    virtual std::vector<VideoRecord> search(const std::string& term, int max_results) = 0;
};

/// File name used for a search term inside a fixture directory.
inline std::string term_slug(std::string_view term) {
    std::string slug;
    for (char c : term) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) slug.push_back(static_cast<char>(std::tolower(u)));
        else if (slug.empty() || slug.back() != '_') slug.push_back('_');
    }
    while (!slug.empty() && slug.back() == '_') slug.pop_back();
    return slug;
}

/// Reads `<dir>/<term_slug(term)>.jsonl`, one video record per line in rank order.
class FixtureCatalogClient final : public CatalogClient {
public:
    explicit FixtureCatalogClient(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::vector<VideoRecord> search(const std::string& term, int max_results) override {
        const auto path = dir_ / (term_slug(term) + ".jsonl");
        if (!std::filesystem::exists(path)) throw DataError("no fixture results for term '" + term + "'");
        auto records = read_corpus(path);
        if (records.size() > static_cast<std::size_t>(max_results)) records.resize(static_cast<std::size_t>(max_results));
        return records;
    }

private:
    std::filesystem::path dir_;
};

struct IngestFailure {
    std::string term;
    std::string message;
};

struct IngestResult {
    std::vector<VideoRecord> records;
    std::vector<IngestFailure> failures;
};

/// Queries every term, stamping each result with (term, rank). Terms are queried
/// concurrently when `parallel` is set; output is always merged in term order.
inline IngestResult ingest_search(const std::vector<std::string>& terms, int per_term, CatalogClient& client,
                                  bool parallel = false) {
    if (per_term < 1 || per_term > kMaxSearchRank) throw UsageError("per_term must be in [1, 50]");
    using Outcome = std::pair<std::vector<VideoRecord>, std::optional<std::string>>;
    auto query = [&](const std::string& term) -> Outcome {
        try {
            auto found = client.search(term, per_term);
            if (found.size() > static_cast<std::size_t>(per_term)) found.resize(static_cast<std::size_t>(per_term));
            for (std::size_t i = 0; i < found.size(); ++i)
                found[i].search_rank = SearchRank{term, static_cast<int>(i + 1)};
            return {std::move(found), std::nullopt};
        } catch (const std::exception& e) {
            return {{}, std::string(e.what())};
        }
    };
    std::vector<Outcome> outcomes(terms.size());
    if (parallel) {
        std::vector<std::future<Outcome>> jobs;
        jobs.reserve(terms.size());
        for (const auto& t : terms) jobs.push_back(std::async(std::launch::async, query, std::cref(t)));
        for (std::size_t i = 0; i < jobs.size(); ++i) outcomes[i] = jobs[i].get();
    } else {
        for (std::size_t i = 0; i < terms.size(); ++i) outcomes[i] = query(terms[i]);
    }
    IngestResult result;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (outcomes[i].second) result.failures.push_back({terms[i], *outcomes[i].second});
        for (auto& r : outcomes[i].first) result.records.push_back(std::move(r));
    }
    return result;
}

/// Keeps one record per video_id: the occurrence with the best (lowest) search rank,
/// ties broken by input order. Output follows the input position of each kept record.
inline std::vector<VideoRecord> dedupe(const std::vector<VideoRecord>& records) {
    auto rank_of = [](const VideoRecord& r) {
        return r.search_rank ? r.search_rank->rank : std::numeric_limits<int>::max();
    };
    std::unordered_map<std::string, std::size_t> best;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto [it, inserted] = best.try_emplace(records[i].video_id, i);
        if (!inserted && rank_of(records[i]) < rank_of(records[it->second])) it->second = i;
    }
    std::vector<VideoRecord> out;
    out.reserve(best.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        if (best.at(records[i].video_id) == i) out.push_back(records[i]);
    return out;
}

/// Fraction of code points in `text` that are ASCII. Invalid UTF-8 bytes count as non-ASCII.
inline double ascii_ratio(std::string_view text) {
    std::size_t total = 0, ascii = 0;
    for (std::size_t i = 0; i < text.size();) {
        const auto c = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        if (c >= 0xF0) len = 4;
        else if (c >= 0xE0) len = 3;
        else if (c >= 0xC0) len = 2;
        if (c < 0x80) ++ascii;
        ++total;
        i += std::min(len, text.size() - i);
    }
    return total == 0 ? 0.0 : static_cast<double>(ascii) / static_cast<double>(total);
}

inline bool language_matches(std::string_view tag, std::string_view keep) {
    auto primary = [](std::string_view s) {
        std::string out;
        for (char c : s) {
            if (c == '-' || c == '_') break;
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
        return out;
    };
    return !tag.empty() && primary(tag) == primary(keep);
}

/// Keeps records tagged with `keep` (primary subtag, case-insensitive). Untagged records
/// pass when title + description reach `ascii_threshold` (English only).
inline std::vector<VideoRecord> filter_language(const std::vector<VideoRecord>& records, std::string_view keep,
                                                double ascii_threshold = 0.9) {
    if (keep.empty()) throw UsageError("language tag to keep must be non-empty");
    std::vector<VideoRecord> out;
    for (const auto& r : records) {
        if (r.language && !r.language->empty()) {
            if (language_matches(*r.language, keep)) out.push_back(r);
        } else if (language_matches("en", keep) &&
                   ascii_ratio(r.title + " " + r.description) >= ascii_threshold) {
            out.push_back(r);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Summary statistics

struct SummaryRow {
    std::string axis;   // "MED" | "UND"
    std::string level;  // "low" | "high"
    std::size_t count = 0;
    std::optional<double> mean_views;
    std::optional<double> mean_subscribers;
    std::size_t subscriber_n = 0;
};

struct SummaryTable {
    std::vector<SummaryRow> rows;  // MED low, MED high, UND low, UND high
    std::size_t med_labeled = 0;
    std::size_t und_labeled = 0;

    const SummaryRow& row(std::string_view axis, std::string_view level) const {
        for (const auto& r : rows)
            if (r.axis == axis && r.level == level) return r;
        throw UsageError("no summary row");
    }
};

inline SummaryTable summarize(const std::vector<VideoRecord>& records, const std::vector<LabelSet>& labels) {
    std::unordered_map<std::string, const VideoRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.video_id, &r);
    for (const auto& l : labels)
        if (!by_id.contains(l.video_id)) throw DataError("label references unknown video_id " + l.video_id);
    const auto merged = merge_labels(labels);

    struct Acc {
        std::size_t n = 0;
        double views = 0;
        double subs = 0;
        std::size_t subs_n = 0;
    };
    Acc acc[2][2];  // [axis][0 = low, 1 = high]
    for (const auto& [id, m] : merged) {
        const VideoRecord& r = *by_id.at(id);
        const Level lv[2] = {m.med, m.und};
        for (int axis = 0; axis < 2; ++axis) {
            if (lv[axis] == Level::unlabeled) continue;
            Acc& a = acc[axis][lv[axis] == Level::high ? 1 : 0];
            ++a.n;
            a.views += static_cast<double>(r.view_count);
            if (r.subscriber_count) {
                a.subs += static_cast<double>(*r.subscriber_count);
                ++a.subs_n;
            }
        }
    }
    SummaryTable t;
    const char* axes[2] = {"MED", "UND"};
    const char* levels[2] = {"low", "high"};
    for (int axis = 0; axis < 2; ++axis) {
        for (int lv = 0; lv < 2; ++lv) {
            const Acc& a = acc[axis][lv];
            SummaryRow row{axes[axis], levels[lv], a.n, std::nullopt, std::nullopt, a.subs_n};
            if (a.n > 0) row.mean_views = a.views / static_cast<double>(a.n);
            if (a.subs_n > 0) row.mean_subscribers = a.subs / static_cast<double>(a.subs_n);
            t.rows.push_back(row);
        }
        (axis == 0 ? t.med_labeled : t.und_labeled) = acc[axis][0].n + acc[axis][1].n;
    }
    return t;
}

}  // namespace vidcurate
