#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "textmeasure.hpp"

namespace vidcurate {

/// Sparse real vector with a fixed dimension. Entries are kept sorted by index and
/// never store explicit zeros.
class FeatureVector {
public:
    using Entry = std::pair<std::uint32_t, double>;

    FeatureVector() = default;
    explicit FeatureVector(std::size_t dimension) : dimension_(dimension) {}

    static FeatureVector from_dense(std::span<const double> values) {
        FeatureVector v(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            if (values[i] != 0.0) v.entries_.emplace_back(static_cast<std::uint32_t>(i), values[i]);
        return v;
    }

    /// Entries may arrive in any order; duplicate indices are summed.
    static FeatureVector from_entries(std::size_t dimension, std::vector<Entry> entries) {
        std::sort(entries.begin(), entries.end(),
                  [](const Entry& a, const Entry& b) { return a.first < b.first; });
        FeatureVector v(dimension);
        for (const auto& [i, w] : entries) {
            if (i >= dimension) throw UsageError("feature index out of range");
            if (!std::isfinite(w)) throw DataError("non-finite feature weight");
            if (!v.entries_.empty() && v.entries_.back().first == i) v.entries_.back().second += w;
            else v.entries_.emplace_back(i, w);
        }
        std::erase_if(v.entries_, [](const Entry& e) { return e.second == 0.0; });
        return v;
    }

    std::size_t dimension() const { return dimension_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t nnz() const { return entries_.size(); }

    double at(std::size_t index) const {
        auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                                   [](const Entry& e, std::size_t i) { return e.first < i; });
        return it != entries_.end() && it->first == index ? it->second : 0.0;
    }

    std::vector<double> to_dense() const {
        std::vector<double> out(dimension_, 0.0);
        for (const auto& [i, w] : entries_) out[i] = w;
        return out;
    }

    double norm() const {
        double s = 0.0;
        for (const auto& e : entries_) s += e.second * e.second;
        return std::sqrt(s);
    }

    template <class Dense>
    double dot(const Dense& dense) const {
        double s = 0.0;
        for (const auto& [i, w] : entries_) s += w * dense[i];
        return s;
    }

    /// [this, tail] with tail's indices shifted by this->dimension().
    FeatureVector concat(const FeatureVector& tail) const {
        FeatureVector v(dimension_ + tail.dimension_);
        v.entries_ = entries_;
        for (const auto& [i, w] : tail.entries_)
            v.entries_.emplace_back(static_cast<std::uint32_t>(i + dimension_), w);
        return v;
    }

    bool operator==(const FeatureVector&) const = default;

private:
    std::size_t dimension_ = 0;
    std::vector<Entry> entries_;
};

inline nlohmann::json to_json(const FeatureVector& v) {
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
    for (const auto& [i, w] : v.entries()) {
        idx.push_back(i);
        val.push_back(w);
    }
    return {{"dim", v.dimension()}, {"idx", idx}, {"val", val}};
}

inline FeatureVector feature_vector_from_json(const nlohmann::json& j) {
    const auto idx = j.at("idx").get<std::vector<std::uint32_t>>();
    const auto val = j.at("val").get<std::vector<double>>();
    if (idx.size() != val.size()) throw DataError("feature vector: idx/val length mismatch");
    std::vector<FeatureVector::Entry> e;
    for (std::size_t k = 0; k < idx.size(); ++k) e.emplace_back(idx[k], val[k]);
    return FeatureVector::from_entries(j.at("dim").get<std::size_t>(), std::move(e));
}

// ---------------------------------------------------------------------------
// Vocabulary and tf-idf

struct VocabEntry {
    std::size_t index = 0;
    std::size_t document_frequency = 0;
};

struct Vocab {
    std::map<std::string, VocabEntry> terms;
    std::size_t n_docs = 0;

    std::size_t size() const { return terms.size(); }
};

/// Terms with document frequency >= min_df, indexed in lexicographic order.
inline Vocab fit_vocab(std::span<const std::string> texts, std::size_t min_df = 1) {
    if (min_df < 1) throw UsageError("min_df must be >= 1");
    std::map<std::string, std::size_t> df;
    for (const auto& text : texts) {
        std::set<std::string> seen;
        for (auto& t : tokenize(text)) seen.insert(std::move(t.text));
        for (const auto& t : seen) ++df[t];
    }
    Vocab v;
    v.n_docs = texts.size();
    std::size_t next = 0;
    for (const auto& [term, count] : df)
        if (count >= min_df) v.terms.emplace(term, VocabEntry{next++, count});
    return v;
}

inline Vocab fit_vocab(const std::vector<std::string>& texts, std::size_t min_df = 1) {
    return fit_vocab(std::span<const std::string>(texts), min_df);
}

inline double smoothed_idf(std::size_t n_docs, std::size_t df) {
    return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df))) + 1.0;
}

/// tf x smoothed idf over in-vocabulary tokens, L2-normalized (zero vector if none).
inline FeatureVector tfidf(std::string_view text, const Vocab& vocab) {
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> counts;  // index -> (tf, df)
    for (const auto& tok : tokenize(text)) {
        auto it = vocab.terms.find(tok.text);
        if (it == vocab.terms.end()) continue;
        auto& c = counts[it->second.index];
        ++c.first;
        c.second = it->second.document_frequency;
    }
    std::vector<FeatureVector::Entry> entries;
    double sq = 0.0;
    for (const auto& [index, c] : counts) {
        const double w = static_cast<double>(c.first) * smoothed_idf(vocab.n_docs, c.second);
        entries.emplace_back(static_cast<std::uint32_t>(index), w);
        sq += w * w;
    }
    const double norm = std::sqrt(sq);
    for (auto& e : entries) e.second /= norm;
    return FeatureVector::from_entries(vocab.size(), std::move(entries));
}

// ---------------------------------------------------------------------------
// Views

struct ViewPair {
    std::string video_id;
    FeatureVector metadata_view;
    FeatureVector content_view;

    bool operator==(const ViewPair&) const = default;
};

struct MetadataViewOptions {
    /// Append ln(1 + view_count) to the numeric block.
    bool include_view_count = true;
};

/// Title, description and tags as one text.
inline std::string metadata_text(const VideoRecord& r) {
    std::string text = r.title;
    text += '\n';
    text += r.description;
    for (const auto& tag : r.tags) {
        text += '\n';
        text += tag;
    }
    return text;
}

inline std::size_t metadata_numeric_width(const MetadataViewOptions& opt) { return opt.include_view_count ? 4 : 3; }

/// tfidf(metadata_text) followed by [ln(1+duration), captions, hd, ln(1+views)].
inline FeatureVector build_metadata_view(const VideoRecord& record, const Vocab& vocab,
                                         const MetadataViewOptions& opt = {}) {
    std::vector<double> numeric{std::log1p(static_cast<double>(record.duration_seconds)),
                                record.captions_available ? 1.0 : 0.0,
                                record.definition == Definition::hd ? 1.0 : 0.0};
    if (opt.include_view_count) numeric.push_back(std::log1p(static_cast<double>(record.view_count)));
    return tfidf(metadata_text(record), vocab).concat(FeatureVector::from_dense(numeric));
}

/// tfidf(transcript) over the content vocabulary, followed by a visual block of width
/// `visual_dim` (zero when no visual features are supplied).
inline FeatureVector build_content_view(const VideoRecord& record, const std::optional<std::string>& transcript,
                                        const std::optional<FeatureVector>& visual, const Vocab& content_vocab,
                                        std::size_t visual_dim = 0) {
    if (!transcript && !visual) throw DataError("content view unavailable for " + record.video_id);
    if (visual && visual->dimension() != visual_dim)
        throw DataError("visual features for " + record.video_id + " have dimension " +
                        std::to_string(visual->dimension()) + ", expected " + std::to_string(visual_dim));
    const FeatureVector text_block = transcript ? tfidf(*transcript, content_vocab) : FeatureVector(content_vocab.size());
    return text_block.concat(visual ? *visual : FeatureVector(visual_dim));
}

// ---------------------------------------------------------------------------
// Side-input files

/// `video_id<TAB>text` per line.
inline std::map<std::string, std::string> load_transcripts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open transcripts " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected video_id<TAB>text");
        out[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return out;
}

struct VisualFeatures {
    std::size_t dimension = 0;
    std::map<std::string, FeatureVector> by_video;
};

/// Header `dimension<TAB>N`, then `video_id<TAB>x_1<TAB>...<TAB>x_N` rows.
inline VisualFeatures load_visual_features(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open visual features " + path.string());
    VisualFeatures vf;
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": missing dimension header");
    {
        const auto tab = line.find('\t');
        if (line.rfind("dimension", 0) != 0 || tab == std::string::npos)
            throw DataError(path.string() + ": header must be 'dimension<TAB>N'");
        vf.dimension = std::stoul(line.substr(tab + 1));
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t pos = 0;
        while (true) {
            const auto tab = line.find('\t', pos);
            cells.push_back(line.substr(pos, tab - pos));
            if (tab == std::string::npos) break;
            pos = tab + 1;
        }
        if (cells.size() != vf.dimension + 1)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(vf.dimension) + " values");
        std::vector<double> values;
        for (std::size_t k = 1; k < cells.size(); ++k) values.push_back(std::stod(cells[k]));
        vf.by_video[cells[0]] = FeatureVector::from_dense(values);
    }
    return vf;
}

}  // namespace vidcurate
