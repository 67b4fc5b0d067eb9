#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "format.hpp"

namespace vidcurate {

// ---------------------------------------------------------------------------
// Tokenization

struct Token {
    std::size_t start = 0;  // byte offsets into the source text
    std::size_t end = 0;
    std::string text;       // lowercased

    bool operator==(const Token&) const = default;
};

namespace detail {

inline bool is_ascii_separator(unsigned char c) {
    return std::isspace(c) || std::ispunct(c);
}

/// Length of the UTF-8 sequence starting at text[i], and whether it decodes to a code
/// point treated as whitespace or punctuation (NBSP, general punctuation block, etc.).
inline std::pair<std::size_t, bool> utf8_separator(std::string_view text, std::size_t i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) return {1, is_ascii_separator(c)};
    std::size_t len = c >= 0xF0 ? 4 : c >= 0xE0 ? 3 : c >= 0xC0 ? 2 : 1;
    len = std::min(len, text.size() - i);
    char32_t cp = 0;
    if (len == 2) cp = ((c & 0x1Fu) << 6) | (static_cast<unsigned char>(text[i + 1]) & 0x3Fu);
    else if (len == 3)
        cp = ((c & 0x0Fu) << 12) | ((static_cast<unsigned char>(text[i + 1]) & 0x3Fu) << 6) |
             (static_cast<unsigned char>(text[i + 2]) & 0x3Fu);
    const bool sep = cp == 0x00A0 || cp == 0x00A1 || cp == 0x00AB || cp == 0x00BB || cp == 0x00BF ||
                     cp == 0x1680 || (cp >= 0x2000 && cp <= 0x206F) || cp == 0x3000 || cp == 0x3001 ||
                     cp == 0x3002 || cp == 0xFEFF;
    return {len, sep};
}

}  // namespace detail

/// Splits on Unicode whitespace and punctuation; ASCII letters are lowercased.
inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    constexpr auto none = std::string_view::npos;
    std::size_t open = none;
    auto close = [&](std::size_t at) {
        if (open == none) return;
        Token t{open, at, {}};
        t.text.reserve(at - open);
        for (std::size_t k = open; k < at; ++k)
            t.text.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[k]))));
        tokens.push_back(std::move(t));
        open = none;
    };
    while (i < text.size()) {
        auto [len, sep] = detail::utf8_separator(text, i);
        if (sep) close(i);
        else if (open == none) open = i;
        i += len;
    }
    close(text.size());
    return tokens;
}

/// Lowercased tokens joined by single spaces: the canonical form of a term.
inline std::string normalize_term(std::string_view text) {
    std::string out;
    for (const auto& t : tokenize(text)) {
        if (!out.empty()) out += ' ';
        out += t.text;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lexicon

enum class SemType { disease, treatment, test, procedure, medical_device, medical_professional };

inline const char* to_string(SemType t) {
    switch (t) {
        case SemType::disease: return "disease";
        case SemType::treatment: return "treatment";
        case SemType::test: return "test";
        case SemType::procedure: return "procedure";
        case SemType::medical_device: return "medical_device";
        default: return "medical_professional";
    }
}

inline std::optional<SemType> parse_semtype(std::string_view s) {
    for (auto t : {SemType::disease, SemType::treatment, SemType::test, SemType::procedure,
                   SemType::medical_device, SemType::medical_professional})
        if (s == to_string(t)) return t;
    return std::nullopt;
}

/// Normalized term -> semantic type. Stand-in for a UMLS extract.
class Lexicon {
public:
    Lexicon() = default;

    void add(std::string_view term, SemType type) {
        const std::string key = normalize_term(term);
        if (key.empty()) throw DataError("empty lexicon term '" + std::string(term) + "'");
        const std::size_t words = static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ')) + 1;
        max_words_ = std::max(max_words_, words);
        entries_[key] = type;
    }

    std::optional<SemType> find(const std::string& normalized) const {
        auto it = entries_.find(normalized);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t max_words() const { return max_words_; }
    const std::map<std::string, SemType>& entries() const { return entries_; }

private:
    std::map<std::string, SemType> entries_;
    std::size_t max_words_ = 0;
};

/// `term<TAB>semtype` per line; '#' starts a comment line.
inline Lexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon " + path.string());
    Lexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected term<TAB>semtype");
        const auto type = parse_semtype(line.substr(tab + 1));
        if (!type)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown semantic type '" +
                            line.substr(tab + 1) + "'");
        lex.add(line.substr(0, tab), *type);
    }
    return lex;
}

// ---------------------------------------------------------------------------
// Term extraction

struct TermHit {
    std::size_t start = 0;  // byte span [start, end)
    std::size_t end = 0;
    std::string surface;
    std::string canonical;
    SemType semtype = SemType::disease;
    std::size_t tokens = 0;  // number of tokens covered

    bool operator==(const TermHit&) const = default;
};

/// Leftmost-longest, token-aligned, case-insensitive dictionary matching.
inline std::vector<TermHit> extract_terms(std::string_view text, const Lexicon& lexicon) {
    if (lexicon.empty()) throw UsageError("extract_terms requires a non-empty lexicon");
    const auto tokens = tokenize(text);
    std::vector<TermHit> hits;
    std::size_t i = 0;
    while (i < tokens.size()) {
        const std::size_t longest = std::min(lexicon.max_words(), tokens.size() - i);
        bool matched = false;
        for (std::size_t len = longest; len >= 1; --len) {
            std::string key = tokens[i].text;
            for (std::size_t k = 1; k < len; ++k) key += ' ' + tokens[i + k].text;
            if (auto type = lexicon.find(key)) {
                const std::size_t b = tokens[i].start, e = tokens[i + len - 1].end;
                hits.push_back({b, e, std::string(text.substr(b, e - b)), key, *type, len});
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return hits;
}

/// Share of tokens in `text` covered by `hits`; 0 for text with no tokens.
inline double med_score(std::span<const TermHit> hits, std::string_view text) {
    const auto total = tokenize(text).size();
    if (total == 0) return 0.0;
    std::size_t covered = 0;
    for (const auto& h : hits) covered += h.tokens;
    return static_cast<double>(covered) / static_cast<double>(total);
}

enum class Binary { high, low };

inline const char* to_string(Binary b) { return b == Binary::high ? "high" : "low"; }

inline constexpr double kDefaultMedThreshold = 0.05;
inline constexpr double kDefaultUndThreshold = 0.70;

/// Scores at the threshold classify high.
inline Binary classify_med(double score, double threshold = kDefaultMedThreshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("MED threshold must lie in (0, 1)");
    return score >= threshold ? Binary::high : Binary::low;
}

inline Binary classify_und(double score, double threshold = kDefaultUndThreshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("UND threshold must lie in (0, 1)");
    return score >= threshold ? Binary::high : Binary::low;
}

// ---------------------------------------------------------------------------
// PEMAT understandability

enum class Response { agree, disagree, na };

inline std::optional<Response> parse_response(std::string_view s) {
    if (s == "agree" || s == "1") return Response::agree;
    if (s == "disagree" || s == "0") return Response::disagree;
    if (s == "na" || s == "NA" || s == "N/A") return Response::na;
    return std::nullopt;
}

struct PematItem {
    std::string criterion_id;
    Response response = Response::na;
};

struct PematRubric {
    std::vector<PematItem> items;
};

inline void validate(const PematRubric& r) {
    if (r.items.empty()) throw DataError("PEMAT rubric has no items");
    std::set<std::string> seen;
    for (const auto& it : r.items)
        if (!seen.insert(it.criterion_id).second)
            throw DataError("duplicate PEMAT criterion '" + it.criterion_id + "'");
}

/// Agree count over non-NA item count.
inline double pemat_score(const PematRubric& rubric) {
    validate(rubric);
    std::size_t agree = 0, applicable = 0;
    for (const auto& it : rubric.items) {
        if (it.response == Response::na) continue;
        ++applicable;
        if (it.response == Response::agree) ++agree;
    }
    if (applicable == 0) throw DataError("undefined score: every PEMAT item is N/A");
    return static_cast<double>(agree) / static_cast<double>(applicable);
}

/// Rows `video_id,criterion_id,response`; an optional header row is skipped.
/// Returns rubrics keyed by video id, items in file order.
inline std::map<std::string, PematRubric> load_rubrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open rubric file " + path.string());
    std::map<std::string, PematRubric> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line.front() == '#') continue;
        auto cells = csv_split(line);
        if (lineno == 1 && !cells.empty() && cells[0] == "video_id") continue;
        if (cells.size() != 3)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
        const auto response = parse_response(cells[2]);
        if (!response)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad response '" + cells[2] + "'");
        out[cells[0]].items.push_back({cells[1], *response});
    }
    for (const auto& [id, r] : out) validate(r);
    return out;
}

// ---------------------------------------------------------------------------
// Inter-rater agreement

/// Cohen's kappa for two raters over the same items. Returns 1 when both raters use a
/// single identical category (p_e = p_o = 1).
template <class Label>
double cohen_kappa(std::span<const Label> a, std::span<const Label> b) {
    if (a.size() != b.size()) throw UsageError("cohen_kappa: rating vectors differ in length");
    if (a.empty()) throw UsageError("cohen_kappa: no ratings");
    const double n = static_cast<double>(a.size());
    std::map<Label, std::pair<std::size_t, std::size_t>> marginals;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) ++agree;
        ++marginals[a[i]].first;
        ++marginals[b[i]].second;
    }
    const double p_o = static_cast<double>(agree) / n;
    double p_e = 0.0;
    for (const auto& [label, counts] : marginals)
        p_e += (static_cast<double>(counts.first) / n) * (static_cast<double>(counts.second) / n);
    if (p_e >= 1.0) return 1.0;
    return (p_o - p_e) / (1.0 - p_e);
}

template <class Label>
double cohen_kappa(const std::vector<Label>& a, const std::vector<Label>& b) {
    return cohen_kappa(std::span<const Label>(a), std::span<const Label>(b));
}

}  // namespace vidcurate
