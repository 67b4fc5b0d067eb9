#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "cotrain.hpp"
#include "error.hpp"
#include "fairness.hpp"
#include "features.hpp"
#include "format.hpp"
#include "jsonl.hpp"
#include "metrics.hpp"
#include "random.hpp"
#include "textmeasure.hpp"

namespace vidcurate {

// File-level pipeline stages behind the CLI subcommands. Every stage reads its inputs
// from paths in PipelineConfig and writes fixed-name artifacts into `out`.

namespace fs = std::filesystem;

struct FairnessSettings {
    Attribute attribute = Attribute::gender;
    double delta = 0.2;
    std::size_t top_k = 10;
    std::vector<double> lambda_grid{0.0, 0.001, 0.005, 0.01, 0.02, 0.038, 0.05, 0.1, 0.2, 0.5};
    int cv_folds = 5;
    double train_fraction = 0.7;
    GlmFamily family = GlmFamily::gaussian_log_views;
    bool include_med_und = false;
};

struct PipelineConfig {
    std::optional<fs::path> corpus, lexicon, transcripts, visual, annotations, rubrics, out, catalog, terms, resolver,
        views, scores, second_rater, truth, state, checkpoint;
    std::vector<fs::path> labels;
    std::optional<std::uint64_t> seed;

    int per_term = 50;
    std::string language = "en";
    double ascii_threshold = 0.9;

    double threshold_med = kDefaultMedThreshold;
    double threshold_und = kDefaultUndThreshold;

    std::size_t min_df = 1;
    double validation_fraction = 0.25;
    std::map<Dimension, CoTrainConfig> cotrain;

    FairnessSettings fairness;

    CoTrainConfig cotrain_for(Dimension d) const {
        CoTrainConfig c;
        if (auto it = cotrain.find(d); it != cotrain.end()) c = it->second;
        c.target = d;
        if (seed) c.seed = *seed;
        return c;
    }
};

/// Reads a JSON config file. Relative paths resolve against the file's directory.
inline PipelineConfig load_pipeline_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open config " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("config " + file.string() + ": " + e.what());
    }
    const fs::path base = file.parent_path();
    PipelineConfig c;
    try {
        auto path = [&](const nlohmann::json& v) {
            fs::path p = v.get<std::string>();
            return p.is_absolute() ? p : base / p;
        };
        if (auto it = j.find("seed"); it != j.end()) c.seed = it->get<std::uint64_t>();
        if (auto p = j.find("paths"); p != j.end()) {
            const std::map<std::string, std::optional<fs::path>*> slots{
                {"corpus", &c.corpus},       {"lexicon", &c.lexicon},   {"transcripts", &c.transcripts},
                {"visual", &c.visual},       {"annotations", &c.annotations}, {"rubrics", &c.rubrics},
                {"out", &c.out},             {"catalog", &c.catalog},   {"terms", &c.terms},
                {"resolver", &c.resolver},   {"views", &c.views},       {"scores", &c.scores},
                {"second_rater", &c.second_rater}, {"truth", &c.truth}, {"state", &c.state},
                {"checkpoint", &c.checkpoint}};
            for (const auto& [key, value] : p->items()) {
                if (key == "labels") {
                    for (const auto& l : value) c.labels.push_back(path(l));
                    continue;
                }
                auto slot = slots.find(key);
                if (slot == slots.end()) throw UsageError("config: unknown path key '" + key + "'");
                *slot->second = path(value);
            }
        }
        if (auto g = j.find("ingest"); g != j.end()) {
            c.per_term = g->value("per_term", c.per_term);
            c.language = g->value("language", c.language);
            c.ascii_threshold = g->value("ascii_threshold", c.ascii_threshold);
        }
        if (auto t = j.find("thresholds"); t != j.end()) {
            c.threshold_med = t->value("med", c.threshold_med);
            c.threshold_und = t->value("und", c.threshold_und);
        }
        if (auto f = j.find("features"); f != j.end()) c.min_df = f->value("min_df", c.min_df);
        if (auto ct = j.find("cotrain"); ct != j.end()) {
            c.validation_fraction = ct->value("validation_fraction", c.validation_fraction);
            for (auto d : {Dimension::med, Dimension::und}) {
                CoTrainConfig base;
                base.target = d;
                if (auto shared = ct->find("defaults"); shared != ct->end()) base = cotrain_config_from_json(*shared, base);
                if (auto it = ct->find(to_string(d)); it != ct->end()) base = cotrain_config_from_json(*it, base);
                base.target = d;
                c.cotrain[d] = base;
            }
        }
        if (auto f = j.find("fairness"); f != j.end()) {
            auto& s = c.fairness;
            if (auto a = f->find("attribute"); a != f->end()) s.attribute = parse_attribute(a->get<std::string>());
            s.delta = f->value("delta", s.delta);
            s.top_k = f->value("top_k", s.top_k);
            if (auto g = f->find("lambda_grid"); g != f->end()) s.lambda_grid = g->get<std::vector<double>>();
            s.cv_folds = f->value("cv_folds", s.cv_folds);
            s.train_fraction = f->value("train_fraction", s.train_fraction);
            s.include_med_und = f->value("include_med_und", s.include_med_und);
            if (auto fam = f->find("family"); fam != f->end()) {
                const auto name = fam->get<std::string>();
                if (name == "gaussian") s.family = GlmFamily::gaussian_log_views;
                else if (name == "poisson") s.family = GlmFamily::poisson;
                else throw UsageError("config: family must be gaussian or poisson");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config " + file.string() + ": " + e.what());
    }
    return c;
}

namespace pipeline_detail {

inline const fs::path& need(const std::optional<fs::path>& p, const char* flag) {
    if (!p) throw UsageError(std::string("missing required path --") + flag);
    if (!fs::exists(*p)) throw DataError(std::string("--") + flag + ": no such file " + p->string());
    return *p;
}

/// An explicit path, or else the file an earlier step left in --out.
inline fs::path input(const PipelineConfig& c, const std::optional<fs::path>& p, const char* name,
                      const char* flag) {
    if (!p && c.out && fs::exists(*c.out / name)) return *c.out / name;
    return need(p, flag);
}

inline fs::path out_dir(const PipelineConfig& c) {
    if (!c.out) throw UsageError("missing required path --out");
    fs::create_directories(*c.out);
    return *c.out;
}

inline std::uint64_t need_seed(const PipelineConfig& c) {
    if (!c.seed) throw UsageError("--seed is required for this step");
    return *c.seed;
}

inline std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
}

/// Explicit --labels, or else whichever of `names` exist in --out.
inline std::vector<fs::path> label_files(const PipelineConfig& c, std::initializer_list<const char*> names) {
    if (!c.labels.empty() || !c.out) return c.labels;
    std::vector<fs::path> found;
    for (const char* n : names)
        if (fs::exists(*c.out / n)) found.push_back(*c.out / n);
    return found;
}

inline std::vector<LabelSet> read_all_labels(const std::vector<fs::path>& files) {
    if (files.empty()) throw UsageError("missing required path --labels");
    std::vector<LabelSet> out;
    for (const auto& f : files) {
        if (!fs::exists(f)) throw DataError("--labels: no such file " + f.string());
        auto part = read_labels(f);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

inline std::vector<ViewPair> read_views(const fs::path& p) {
    std::vector<ViewPair> out;
    for (const auto& j : jsonl::read_file(p)) {
        try {
            out.push_back(view_pair_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("malformed view pair in " + p.string() + ": " + e.what());
        }
    }
    return out;
}

inline std::string level_name(Level l) { return to_string(l); }

}  // namespace pipeline_detail

// ---------------------------------------------------------------------------
// ingest

inline std::vector<std::string> read_terms(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open terms file " + p.string());
    std::vector<std::string> terms;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        terms.push_back(line);
    }
    if (terms.empty()) throw DataError("terms file " + p.string() + " lists no search terms");
    return terms;
}

struct IngestSummary {
    std::size_t retrieved = 0, unique = 0, kept = 0, failures = 0;
};

/// corpus.jsonl (deduplicated, language-filtered) and ingest_report.csv.
inline IngestSummary run_ingest(const PipelineConfig& c, CatalogClient& client) {
    using namespace pipeline_detail;
    const auto terms = read_terms(need(c.terms, "terms"));
    const auto out = out_dir(c);
    auto result = ingest_search(terms, c.per_term, client);
    const auto unique = dedupe(result.records);
    const auto kept = filter_language(unique, c.language, c.ascii_threshold);
    write_corpus(out / "corpus.jsonl", kept);

    auto rep = open_out(out / "ingest_report.csv");
    rep << "term,retrieved,status,message\n";
    std::map<std::string, std::size_t> per_term;
    for (const auto& r : result.records) ++per_term[r.search_rank->search_term];
    std::map<std::string, std::string> failed;
    for (const auto& f : result.failures) failed[f.term] = f.message;
    for (const auto& t : terms) {
        auto f = failed.find(t);
        rep << csv_row({t, std::to_string(per_term[t]), f == failed.end() ? "ok" : "failed",
                        f == failed.end() ? "" : f->second});
    }
    return {result.records.size(), unique.size(), kept.size(), result.failures.size()};
}

// ---------------------------------------------------------------------------
// measure

struct VideoScore {
    std::string video_id;
    std::size_t tokens = 0;
    std::size_t covered = 0;
    std::size_t hits = 0;
    double med_score = 0.0;
    Binary med_level = Binary::low;
    std::optional<double> und_score;
    std::optional<Binary> und_level;
    std::string text_source;  // transcript | metadata
};

inline std::size_t covered_tokens(const std::vector<TermHit>& hits) {
    std::size_t n = 0;
    for (const auto& h : hits) n += h.tokens;
    return n;
}

/// scores.csv, terms.jsonl, seed_labels.jsonl (videos with a PEMAT rubric), and
/// agreement.csv when a second rater's labels are supplied.
inline std::vector<VideoScore> run_measure(const PipelineConfig& c) {
    using namespace pipeline_detail;
    const auto records = read_corpus(input(c, c.corpus, "corpus.jsonl", "corpus"));
    const auto lexicon = load_lexicon(need(c.lexicon, "lexicon"));
    std::map<std::string, std::string> transcripts;
    if (c.transcripts) transcripts = load_transcripts(need(c.transcripts, "transcripts"));
    std::map<std::string, PematRubric> rubrics;
    if (c.rubrics) rubrics = load_rubrics(need(c.rubrics, "rubrics"));
    const auto out = out_dir(c);

    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.video_id);
    for (const auto& [id, _] : rubrics)
        if (!ids.contains(id)) throw DataError("rubric references unknown video_id " + id);

    std::vector<VideoScore> scores;
    std::vector<nlohmann::json> term_rows;
    std::vector<LabelSet> seeds;
    for (const auto& r : records) {
        VideoScore s;
        s.video_id = r.video_id;
        auto t = transcripts.find(r.video_id);
        const std::string text = t != transcripts.end() ? t->second : r.title + "\n" + r.description;
        s.text_source = t != transcripts.end() ? "transcript" : "metadata";
        const auto hits = extract_terms(text, lexicon);
        s.tokens = tokenize(text).size();
        s.covered = covered_tokens(hits);
        s.hits = hits.size();
        s.med_score = med_score(hits, text);
        s.med_level = classify_med(s.med_score, c.threshold_med);
        if (auto rb = rubrics.find(r.video_id); rb != rubrics.end()) {
            s.und_score = pemat_score(rb->second);
            s.und_level = classify_und(*s.und_score, c.threshold_und);
            LabelSet l;
            l.video_id = r.video_id;
            l.med = s.med_level == Binary::high ? Level::high : Level::low;
            l.und = *s.und_level == Binary::high ? Level::high : Level::low;
            l.source = LabelSource::human;
            seeds.push_back(l);
        }
        nlohmann::json hj = nlohmann::json::array();
        for (const auto& h : hits)
            hj.push_back({{"start", h.start}, {"end", h.end}, {"surface", h.surface}, {"canonical", h.canonical},
                          {"semtype", to_string(h.semtype)}});
        term_rows.push_back({{"video_id", r.video_id}, {"source", s.text_source}, {"hits", hj}});
        scores.push_back(std::move(s));
    }

    auto csv = open_out(out / "scores.csv");
    csv << "video_id,tokens,covered_tokens,term_hits,med_score,med_level,und_score,und_level,text_source\n";
    for (const auto& s : scores)
        csv << csv_row({s.video_id, std::to_string(s.tokens), std::to_string(s.covered), std::to_string(s.hits),
                        fmt_num(s.med_score), to_string(s.med_level), fmt_num(s.und_score),
                        s.und_level ? to_string(*s.und_level) : "NA", s.text_source});
    jsonl::write_file(out / "terms.jsonl", term_rows);
    write_labels(out / "seed_labels.jsonl", seeds);

    if (c.second_rater) {
        const auto other = merge_labels(read_labels(need(c.second_rater, "second-rater")));
        auto agree = open_out(out / "agreement.csv");
        agree << "dimension,n,kappa\n";
        for (auto d : {Dimension::med, Dimension::und}) {
            std::vector<int> a, b;
            for (const auto& l : seeds) {
                auto it = other.find(l.video_id);
                if (it == other.end()) continue;
                const Level mine = d == Dimension::med ? l.med : l.und;
                const Level theirs = d == Dimension::med ? it->second.med : it->second.und;
                if (theirs == Level::unlabeled) continue;
                a.push_back(mine == Level::high);
                b.push_back(theirs == Level::high);
            }
            agree << csv_row({to_string(d), std::to_string(a.size()), a.empty() ? "NA" : fmt_num(cohen_kappa(a, b))});
        }
    }
    return scores;
}

// ---------------------------------------------------------------------------
// featurize

inline void write_vocab(const fs::path& p, const Vocab& v) {
    auto out = pipeline_detail::open_out(p);
    out << "# n_docs\t" << v.n_docs << '\n';
    for (const auto& [term, e] : v.terms) out << term << '\t' << e.index << '\t' << e.document_frequency << '\n';
}

/// views.jsonl plus the two fitted vocabularies.
inline std::vector<ViewPair> run_featurize(const PipelineConfig& c) {
    using namespace pipeline_detail;
    const auto records = read_corpus(input(c, c.corpus, "corpus.jsonl", "corpus"));
    std::map<std::string, std::string> transcripts;
    if (c.transcripts) transcripts = load_transcripts(need(c.transcripts, "transcripts"));
    VisualFeatures visual;
    if (c.visual) visual = load_visual_features(need(c.visual, "visual"));
    const auto out = out_dir(c);

    std::vector<std::string> meta_texts, content_texts;
    for (const auto& r : records) {
        meta_texts.push_back(metadata_text(r));
        if (auto t = transcripts.find(r.video_id); t != transcripts.end()) content_texts.push_back(t->second);
    }
    const auto meta_vocab = fit_vocab(meta_texts, c.min_df);
    const auto content_vocab = fit_vocab(content_texts, c.min_df);

    std::vector<ViewPair> views;
    std::vector<nlohmann::json> rows;
    for (const auto& r : records) {
        std::optional<std::string> tr;
        if (auto t = transcripts.find(r.video_id); t != transcripts.end()) tr = t->second;
        std::optional<FeatureVector> vis;
        if (auto v = visual.by_video.find(r.video_id); v != visual.by_video.end()) vis = v->second;
        ViewPair vp{r.video_id, build_metadata_view(r, meta_vocab),
                    build_content_view(r, tr, vis, content_vocab, visual.dimension)};
        rows.push_back(to_json(vp));
        views.push_back(std::move(vp));
    }
    jsonl::write_file(out / "views.jsonl", rows);
    write_vocab(out / "vocab_metadata.tsv", meta_vocab);
    write_vocab(out / "vocab_content.tsv", content_vocab);
    return views;
}

// ---------------------------------------------------------------------------
// cotrain

struct CoTrainOutcome {
    bool paused = false;
    std::string message;
    fs::path checkpoint;
    std::size_t labels = 0;
    std::size_t discarded = 0;
    int rounds = 0;
};

namespace pipeline_detail {

inline std::string prefix(Dimension d) { return std::string("cotrain_") + to_string(d); }

/// Seeded split of the seed labels into training seeds and a held-out validation set.
inline std::pair<std::vector<std::string>, std::vector<std::string>> seed_split(std::vector<std::string> ids,
                                                                                double fraction, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x7661));
    rng.shuffle(ids);
    const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ids.size()) + 1e-9));
    std::vector<std::string> val(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::string> train(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
    return {train, val};
}

inline void write_cotrain_outputs(const fs::path& out, const CoTrainState& s, const RunResult& r,
                                  const std::vector<std::string>& validation_ids,
                                  const std::map<std::string, Binary>& validation_labels) {
    const auto d = s.config.target;
    auto labels = r.labels;
    for (const auto& id : validation_ids) {
        LabelSet l;
        l.video_id = id;
        (d == Dimension::med ? l.med : l.und) = validation_labels.at(id) == Binary::high ? Level::high : Level::low;
        l.source = LabelSource::human;
        labels.push_back(l);
    }
    std::sort(labels.begin(), labels.end(), [](const LabelSet& a, const LabelSet& b) { return a.video_id < b.video_id; });
    write_labels(out / (prefix(d) + "_labels.jsonl"), labels);

    auto hist = open_out(out / (prefix(d) + "_history.csv"));
    hist << "index,accuracy,macro_f1,auc\n";
    for (std::size_t i = 0; i < s.history.size(); ++i)
        hist << csv_row({std::to_string(i), fmt_num(s.history[i].accuracy), fmt_num(s.history[i].macro_f1),
                         fmt_num(s.history[i].auc)});

    auto disc = open_out(out / (prefix(d) + "_discarded.txt"));
    for (const auto& id : s.discarded) disc << id << '\n';

    auto stop = open_out(out / (prefix(d) + "_stop.txt"));
    for (auto reason : r.stop.reasons) stop << to_string(reason) << '\n';
    save_checkpoint(s, out / (prefix(d) + "_state.json"));
}

}  // namespace pipeline_detail

/// Runs co-training for one dimension from seed labels. Writes the label file, audit
/// log, history, final state and per-round checkpoints; pauses resumably when the
/// resolver has no answer.
inline CoTrainOutcome run_cotrain(const PipelineConfig& c, Dimension d, ReviewResolver& resolver) {
    using namespace pipeline_detail;
    const auto seed = need_seed(c);
    const auto views = read_views(input(c, c.views, "views.jsonl", "views"));
    const auto labels = merge_labels(read_all_labels(label_files(c, {"seed_labels.jsonl"})));
    const auto out = out_dir(c);
    const auto cp_dir = out / "checkpoints";
    fs::create_directories(cp_dir);

    std::vector<std::string> seed_ids;
    std::map<std::string, Binary> seed_label;
    std::set<std::string> view_ids;
    for (const auto& v : views) view_ids.insert(v.video_id);
    for (const auto& [id, m] : labels) {
        const Level l = d == Dimension::med ? m.med : m.und;
        if (l == Level::unlabeled) continue;
        if (!view_ids.contains(id)) throw DataError("label references video without views: " + id);
        seed_ids.push_back(id);
        seed_label[id] = l == Level::high ? Binary::high : Binary::low;
    }
    auto [train_ids, val_ids] = seed_split(seed_ids, c.validation_fraction, seed);
    const std::set<std::string> train_set(train_ids.begin(), train_ids.end()), val_set(val_ids.begin(), val_ids.end());
    std::vector<std::pair<ViewPair, Binary>> labeled, validation;
    std::vector<ViewPair> unlabeled;
    for (const auto& v : views) {
        if (train_set.contains(v.video_id)) labeled.emplace_back(v, seed_label.at(v.video_id));
        else if (val_set.contains(v.video_id)) validation.emplace_back(v, seed_label.at(v.video_id));
        else unlabeled.push_back(v);
    }
    auto state = init_state(labeled, unlabeled, c.cotrain_for(d), validation);

    // validation ids travel with the run so resume can restore them
    {
        auto meta = open_out(out / (prefix(d) + "_validation_ids.txt"));
        for (const auto& id : val_ids) meta << id << '\t' << to_string(seed_label.at(id)) << '\n';
    }
    auto audit = open_out(out / (prefix(d) + "_audit.jsonl"));
    RunOptions opt;
    opt.checkpoint_dir = cp_dir;
    opt.on_round = [&](const RoundReport& r) { append_audit(audit, r); };
    CoTrainOutcome outcome;
    try {
        auto result = run(state, resolver, opt);
        std::map<std::string, Binary> vl;
        for (const auto& id : val_ids) vl[id] = seed_label.at(id);
        write_cotrain_outputs(out, state, result, val_ids, vl);
        outcome.labels = result.labels.size() + val_ids.size();
        outcome.discarded = result.discarded.size();
        outcome.rounds = state.round;
    } catch (const ResumableStop& e) {
        outcome.paused = true;
        outcome.message = e.what();
        outcome.checkpoint = e.checkpoint;
    }
    return outcome;
}

/// Continues a paused run from its checkpoint (same output directory).
inline CoTrainOutcome resume_cotrain(const PipelineConfig& c, ReviewResolver& resolver) {
    using namespace pipeline_detail;
    auto state = load_checkpoint(need(c.checkpoint, "checkpoint"));
    const auto out = out_dir(c);
    const auto d = state.config.target;
    std::vector<std::string> val_ids;
    std::map<std::string, Binary> vl;
    {
        std::ifstream in(out / (prefix(d) + "_validation_ids.txt"));
        std::string line;
        while (std::getline(in, line)) {
            const auto tab = line.find('\t');
            if (tab == std::string::npos) continue;
            val_ids.push_back(line.substr(0, tab));
            vl[val_ids.back()] = parse_binary(line.substr(tab + 1));
        }
    }
    std::ofstream audit(out / (prefix(d) + "_audit.jsonl"), std::ios::binary | std::ios::app);
    RunOptions opt;
    opt.checkpoint_dir = out / "checkpoints";
    fs::create_directories(opt.checkpoint_dir);
    opt.on_round = [&](const RoundReport& r) { append_audit(audit, r); };
    CoTrainOutcome outcome;
    try {
        auto result = run(state, resolver, opt);
        write_cotrain_outputs(out, state, result, val_ids, vl);
        outcome.labels = result.labels.size() + val_ids.size();
        outcome.discarded = result.discarded.size();
        outcome.rounds = state.round;
    } catch (const ResumableStop& e) {
        outcome.paused = true;
        outcome.message = e.what();
        outcome.checkpoint = e.checkpoint;
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// evaluate

/// Scores F1, F2 and their mean from a saved state against reference labels.
/// Writes eval_<DIM>.csv and eval_<DIM>.json.
inline std::map<std::string, EvalReport> run_evaluate(const PipelineConfig& c) {
    using namespace pipeline_detail;
    const auto state = load_checkpoint(need(c.state, "state"));
    const auto views = read_views(input(c, c.views, "views.jsonl", "views"));
    const auto labels = merge_labels(read_all_labels(c.labels));
    const auto out = out_dir(c);
    const auto d = state.config.target;
    std::vector<double> s1, s2, se;
    std::vector<int> y;
    for (const auto& v : views) {
        auto it = labels.find(v.video_id);
        if (it == labels.end()) continue;
        const Level l = d == Dimension::med ? it->second.med : it->second.und;
        if (l == Level::unlabeled) continue;
        const double a = predict_proba_logreg(state.f1, v.metadata_view);
        const double b = predict_proba_forest(state.f2, v.content_view);
        s1.push_back(a);
        s2.push_back(b);
        se.push_back(0.5 * (a + b));
        y.push_back(l == Level::high ? 1 : 0);
    }
    if (y.empty()) throw DataError(std::string("no reference labels for ") + to_string(d));
    const double thr = state.config.decision_threshold;
    std::map<std::string, EvalReport> reports{
        {"F1_metadata", evaluate(s1, y, thr)}, {"F2_content", evaluate(s2, y, thr)}, {"ensemble", evaluate(se, y, thr)}};
    const std::string dim = to_string(d);
    auto csv = open_out(out / ("eval_" + dim + ".csv"));
    csv << "model,n,tp,fp,tn,fn,precision_high,recall_high,f1_high,precision_low,recall_low,f1_low,accuracy,macro_f1,auc\n";
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, r] : reports) {
        const auto& k = r.counts;
        csv << csv_row({name, std::to_string(y.size()), std::to_string(k.tp), std::to_string(k.fp), std::to_string(k.tn),
                        std::to_string(k.fn), fmt_num(r.positive.precision), fmt_num(r.positive.recall),
                        fmt_num(r.positive.f1), fmt_num(r.negative.precision), fmt_num(r.negative.recall),
                        fmt_num(r.negative.f1), fmt_num(r.accuracy), fmt_num(r.macro_f1), fmt_num(r.auc)});
        j[name] = to_json(r);
    }
    open_out(out / ("eval_" + dim + ".json")) << j.dump(2) << '\n';
    return reports;
}

// ---------------------------------------------------------------------------
// fairness audit

namespace pipeline_detail {

inline const char* gender_name(int g) { return g ? "male" : "female"; }
inline const char* level01(int v) { return v ? "high" : "low"; }

inline void write_fit(std::ostream& csv, const FitResult& f) {
    csv << "term,estimate,std_error,t_value,p_value\n";
    for (std::size_t i = 0; i < f.names.size(); ++i) {
        auto at = [&](const std::optional<std::vector<double>>& v) {
            return v ? fmt_num((*v)[i]) : std::string("NA");
        };
        csv << csv_row({f.names[i], fmt_num(f.coefficients[i]), at(f.std_errors), at(f.t_values), at(f.p_values)});
    }
}

/// Pads `s` to `w` columns (ASCII layout for the text report).
inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' '); }

}  // namespace pipeline_detail

struct AuditResult {
    RegressionFrame frame;
    FitResult glm;
    FitResult lasso;
    CorrelationMatrix correlations;
};

/// Writes summary.csv, funnel.csv, crosstab.csv, correlations.csv, glm.csv, lasso.csv,
/// lasso_path.csv, fit_summary.csv, slopes.csv, parity_candidates.csv, hypotheses.csv
/// and the text report fairness_report.txt.
inline AuditResult run_fairness_audit(const PipelineConfig& c) {
    using namespace pipeline_detail;
    const auto seed = need_seed(c);
    const auto records = read_corpus(input(c, c.corpus, "corpus.jsonl", "corpus"));
    const auto labels = read_all_labels(label_files(c, {"cotrain_MED_labels.jsonl", "cotrain_UND_labels.jsonl"}));
    const auto annotations = read_annotations(need(c.annotations, "annotations"));
    const auto out = out_dir(c);
    const auto& fs_ = c.fairness;
    const ModelTerms terms{fs_.include_med_und};

    AuditResult res;
    res.frame = build_frame(records, labels, annotations);
    const auto& frame = res.frame;
    const auto& fn = frame.funnel;
    std::ostringstream text;

    {
        const auto table = summarize(records, labels);
        auto csv = open_out(out / "summary.csv");
        csv << "axis,level,count,mean_views,mean_subscribers,subscriber_n\n";
        text << "Table 2. Label strata\n";
        text << pad("axis", 6) << pad("level", 6) << pad("count", 7) << pad("mean views", 16) << "mean subscribers\n";
        for (const auto& r : table.rows) {
            csv << csv_row({r.axis, r.level, std::to_string(r.count), fmt_num(r.mean_views), fmt_num(r.mean_subscribers),
                            std::to_string(r.subscriber_n)});
            text << pad(r.axis, 6) << pad(r.level, 6) << pad(std::to_string(r.count), 7)
                 << pad(fmt_num(r.mean_views, 6), 16) << fmt_num(r.mean_subscribers, 6) << '\n';
        }
        text << '\n';
    }
    {
        auto csv = open_out(out / "funnel.csv");
        csv << "step,removed,remaining\n";
        std::size_t remaining = fn.input;
        text << "Exclusion funnel\n" << pad("input", 16) << fn.input << '\n';
        const std::pair<const char*, std::size_t> steps[] = {{"multi_actor", fn.multi_actor},   {"off_topic", fn.off_topic},
                                                             {"unreadable", fn.unreadable},     {"no_narration", fn.no_narration},
                                                             {"zero_views", fn.zero_views},     {"unlabeled", fn.unlabeled}};
        csv << csv_row({"input", "0", std::to_string(remaining)});
        for (const auto& [name, n] : steps) {
            remaining -= n;
            csv << csv_row({name, std::to_string(n), std::to_string(remaining)});
            text << pad(std::string("- ") + name, 16) << n << '\n';
        }
        text << pad("analyzed", 16) << fn.analyzed << "\n\n";
    }
    if (frame.rows.size() < 3) throw DataError("fairness audit: only " + std::to_string(frame.rows.size()) + " rows survive the exclusions");

    {
        const auto t = crosstab(frame);
        auto csv = open_out(out / "crosstab.csv");
        csv << "med,und,gender,fv,count\n";
        text << "Cross-tabulation (MED x UND x Gender x FV), N = " << t.n << '\n';
        text << pad("MED", 6) << pad("UND", 6) << pad("F/FV0", 7) << pad("F/FV1", 7) << pad("M/FV0", 7) << "M/FV1\n";
        for (int m = 1; m >= 0; --m)
            for (int u = 1; u >= 0; --u) {
                text << pad(level01(m), 6) << pad(level01(u), 6);
                for (int g = 0; g < 2; ++g)
                    for (int f = 0; f < 2; ++f) {
                        csv << csv_row({level01(m), level01(u), gender_name(g), std::to_string(f),
                                        std::to_string(t.cells[m][u][g][f])});
                        text << (g == 1 && f == 1 ? std::to_string(t.cells[m][u][g][f]) + "\n"
                                                  : pad(std::to_string(t.cells[m][u][g][f]), 7));
                    }
            }
        text << "margins: female " << t.margin_gender(0) << ", male " << t.margin_gender(1) << ", FV0 " << t.margin_fv(0)
             << ", FV1 " << t.margin_fv(1) << "\n\n";
    }
    {
        res.correlations = pearson_matrix(frame);
        const auto& m = res.correlations;
        auto csv = open_out(out / "correlations.csv");
        csv << "var_a,var_b,r,p_value,n\n";
        text << "Table 3. Correlation matrix (r, p)\n" << pad("", 10);
        for (const auto* name : kCorrelationColumns) text << pad(name, 22);
        text << '\n';
        for (std::size_t a = 0; a < 5; ++a) {
            text << pad(kCorrelationColumns[a], 10);
            for (std::size_t b = 0; b < 5; ++b) {
                const auto& cell = m.cells[a][b];
                csv << csv_row({kCorrelationColumns[a], kCorrelationColumns[b], fmt_num(cell.r), fmt_num(cell.p),
                                std::to_string(m.n)});
                text << pad(cell.r ? fmt_num(*cell.r, 3) + " (" + fmt_num(*cell.p, 3) + ")" : "undefined", 22);
            }
            text << '\n';
        }
        text << '\n';
    }

    const auto [train, test] = split(frame, fs_.train_fraction, seed);
    res.glm = fit_glm(train, terms, fs_.family);
    res.glm.n_test = test.rows.size();
    res.glm.seed = seed;
    if (!test.rows.empty()) res.glm.test_mse = mean_squared_error(res.glm, test, terms);
    res.lasso = fit_lasso(train, fs_.lambda_grid, fs_.cv_folds, mix_seed(seed, 0x1a55), terms);
    res.lasso.n_test = test.rows.size();
    if (!test.rows.empty()) res.lasso.test_mse = mean_squared_error(res.lasso, test, terms);

    {
        auto csv = open_out(out / "glm.csv");
        write_fit(csv, res.glm);
    }
    {
        auto csv = open_out(out / "lasso.csv");
        const auto orig = original_scale(res.lasso);
        csv << "term,estimate_standardized,estimate\n";
        csv << csv_row({"(Intercept)", fmt_num(res.lasso.intercept), fmt_num(orig.intercept)});
        for (std::size_t i = 0; i < res.lasso.names.size(); ++i)
            csv << csv_row({res.lasso.names[i], fmt_num(res.lasso.coefficients[i]), fmt_num(orig.coefficients[i])});
        auto path = open_out(out / "lasso_path.csv");
        std::vector<std::string> header{"lambda", "cv_mse"};
        header.insert(header.end(), res.lasso.names.begin(), res.lasso.names.end());
        path << csv_row(header);
        for (std::size_t l = 0; l < res.lasso.lambdas.size(); ++l) {
            std::vector<std::string> row{fmt_num(res.lasso.lambdas[l]), fmt_num(res.lasso.cv_mse[l])};
            for (double b : res.lasso.path[l]) row.push_back(fmt_num(b));
            path << csv_row(row);
        }
    }
    {
        auto csv = open_out(out / "fit_summary.csv");
        csv << "model,n_train,n_test,test_mse,sigma2,df_residual,best_lambda,seed\n";
        csv << csv_row({res.glm.method, std::to_string(res.glm.n_train), std::to_string(res.glm.n_test),
                        fmt_num(res.glm.test_mse), fmt_num(res.glm.sigma2), std::to_string(res.glm.df_residual), "NA",
                        std::to_string(seed)});
        csv << csv_row({res.lasso.method, std::to_string(res.lasso.n_train), std::to_string(res.lasso.n_test),
                        fmt_num(res.lasso.test_mse), "NA", "NA", fmt_num(res.lasso.best_lambda), std::to_string(seed)});
    }

    text << "Table 4. Regression results (train n = " << train.rows.size() << ", test n = " << test.rows.size()
         << ", seed " << seed << ")\n";
    const auto lasso_orig = original_scale(res.lasso);
    text << pad("term", 12) << pad("GLM", 14) << pad("p", 12) << pad("LASSO", 14) << "LASSO (standardized)\n";
    for (std::size_t i = 0; i < res.glm.names.size(); ++i) {
        const auto li = res.lasso.index_of(res.glm.names[i]);
        const bool icpt = res.glm.names[i] == "(Intercept)";
        const std::string raw = li ? fmt_num(lasso_orig.coefficients[*li], 4) : icpt ? fmt_num(lasso_orig.intercept, 4) : "";
        const std::string std_ = li ? fmt_num(res.lasso.coefficients[*li], 4) : icpt ? fmt_num(res.lasso.intercept, 4) : "";
        text << pad(res.glm.names[i], 12) << pad(fmt_num(res.glm.coefficients[i], 4), 14)
             << pad(fmt_num((*res.glm.p_values)[i], 3), 12) << pad(raw, 14) << std_ << '\n';
    }
    text << "best lambda = " << fmt_num(res.lasso.best_lambda) << ", GLM test MSE = " << fmt_num(res.glm.test_mse, 6)
         << ", LASSO test MSE = " << fmt_num(res.lasso.test_mse, 6) << "\n\n";

    const auto glm_slopes = simple_slopes(res.glm);
    const auto lasso_slopes = simple_slopes(res.lasso);
    {
        auto csv = open_out(out / "slopes.csv");
        csv << "model,gender,slope,std_error\n";
        text << "Simple slopes of FV\n";
        for (const auto& [name, sl] : {std::pair{"GLM", glm_slopes}, std::pair{"LASSO", lasso_slopes}})
            for (const auto& s : sl) {
                csv << csv_row({name, gender_name(s.gender), fmt_num(s.slope), fmt_num(s.std_error)});
                text << pad(name, 7) << pad(gender_name(s.gender), 8) << fmt_num(s.slope, 4) << '\n';
            }
        text << '\n';
    }
    {
        auto csv = open_out(out / "hypotheses.csv");
        csv << "hypothesis,term,estimate,p_value,alpha,supported\n";
        const double alpha = 0.05;
        auto row = [&](const char* h, const char* term, bool direction, const char* wrong_way) {
            const auto i = *res.glm.index_of(term);
            const double p = (*res.glm.p_values)[i];
            const bool ok = p < alpha && direction;
            csv << csv_row({h, term, fmt_num(res.glm.coefficients[i]), fmt_num(p), fmt_num(alpha), ok ? "yes" : "no"});
            text << h << " (" << term << "): " << (ok ? "supported" : "not supported") << " (p = " << fmt_num(p, 3);
            if (p < alpha && !direction) text << "; " << wrong_way;
            text << ")\n";
        };
        text << "Hypotheses (GLM, alpha 0.05)\n";
        row("H1", "FV", true, "");
        row("H2", "Gender", true, "");
        // H3 predicts a stronger FV effect for male presenters
        row("H3", "FV:Gender", std::abs(glm_slopes[1].slope) > std::abs(glm_slopes[0].slope),
            "significant, but the FV slope is steeper for female presenters");
        text << '\n';
    }
    {
        std::vector<std::string> cands;
        for (const auto& r : frame.rows)
            if (r.med == 1 && r.und == 1) cands.push_back(r.video_id);
        auto csv = open_out(out / "parity_candidates.csv");
        csv << "attribute,group,population_share,candidate_share,ratio\n";
        text << "Representation of high-MED and high-UND videos (" << cands.size() << " of " << frame.rows.size() << ")\n";
        if (!cands.empty()) {
            text << pad("attribute", 12) << pad("group", 9) << pad("analyzed", 10) << pad("high/high", 10) << "ratio\n";
            for (auto a : {Attribute::gender, Attribute::fv, Attribute::age_bracket}) {
                const auto rep = parity_report(cands, frame, a);
                for (const auto& r : rep.rows) {
                    csv << csv_row({to_string(a), r.group, fmt_num(r.population_share), fmt_num(r.recommended_share),
                                    fmt_num(r.ratio)});
                    text << pad(to_string(a), 12) << pad(r.group, 9) << pad(fmt_num(r.population_share, 4), 10)
                         << pad(fmt_num(r.recommended_share, 4), 10) << fmt_num(r.ratio, 4) << '\n';
                }
            }
        }
    }
    open_out(out / "fairness_report.txt") << text.str();
    return res;
}

// ---------------------------------------------------------------------------
// recommend

inline std::map<std::string, CandidateScores> read_scores(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open scores " + p.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("scores file is empty");
    const auto header = csv_split(line);
    auto col = [&](const char* name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError(std::string("scores file lacks column ") + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto id_c = col("video_id"), med_c = col("med_score"), und_c = col("und_score");
    std::map<std::string, CandidateScores> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = csv_split(line);
        if (cells.size() != header.size()) throw DataError("scores file: ragged row");
        // a missing PEMAT score ranks below every scored video
        auto num = [](const std::string& s) { return s == "NA" ? -1.0 : detail::parse_double(s); };
        out[cells[id_c]] = {num(cells[und_c]), num(cells[med_c])};
    }
    return out;
}

/// recommendations.csv, recommendation_parity.csv and recommendation_notes.txt.
inline Recommendation run_recommend(const PipelineConfig& c) {
    using namespace pipeline_detail;
    const auto records = read_corpus(input(c, c.corpus, "corpus.jsonl", "corpus"));
    const auto labels = read_all_labels(label_files(c, {"cotrain_MED_labels.jsonl", "cotrain_UND_labels.jsonl"}));
    const auto annotations = read_annotations(need(c.annotations, "annotations"));
    const auto scores = read_scores(input(c, c.scores, "scores.csv", "scores"));
    const auto out = out_dir(c);
    const auto frame = build_frame(records, labels, annotations);
    const FairnessConfig fc{c.fairness.attribute, c.fairness.delta};
    auto rec = recommend(frame, scores, fc, c.fairness.top_k);

    std::map<std::string, const FrameRow*> rows;
    for (const auto& r : frame.rows) rows[r.video_id] = &r;
    std::map<std::string, std::size_t> base_rank;
    for (std::size_t i = 0; i < rec.base_ranking.size(); ++i) base_rank[rec.base_ranking[i]] = i + 1;
    const auto groups = attribute_groups(fc.attribute);
    auto csv = open_out(out / "recommendations.csv");
    csv << "rank,video_id,group,und_score,med_score,view_count,base_rank\n";
    for (std::size_t i = 0; i < rec.ranked.size(); ++i) {
        const auto& id = rec.ranked[i];
        const auto* r = rows.at(id);
        const int g = group_of(*r, fc.attribute);
        const auto s = scores.contains(id) ? scores.at(id) : CandidateScores{-1.0, -1.0};
        csv << csv_row({std::to_string(i + 1), id, g < 0 ? "unknown" : groups[static_cast<std::size_t>(g)],
                        s.und_score < 0 ? "NA" : fmt_num(s.und_score), s.med_score < 0 ? "NA" : fmt_num(s.med_score),
                        std::to_string(r->view_count), std::to_string(base_rank.at(id))});
    }
    auto par = open_out(out / "recommendation_parity.csv");
    par << "prefix,group,population_share,recommended_share,ratio\n";
    for (std::size_t k = 1; k <= rec.ranked.size(); ++k) {
        const std::vector<std::string> prefix(rec.ranked.begin(), rec.ranked.begin() + static_cast<std::ptrdiff_t>(k));
        const auto rep = parity_report(prefix, frame, fc.attribute);
        for (const auto& r : rep.rows)
            par << csv_row({std::to_string(k), r.group, fmt_num(r.population_share), fmt_num(r.recommended_share),
                            fmt_num(r.ratio)});
    }
    auto notes = open_out(out / "recommendation_notes.txt");
    notes << "attribute " << to_string(fc.attribute) << ", delta " << fmt_num(fc.max_ratio_gap) << ", k " << c.fairness.top_k
          << ", candidates " << rec.base_ranking.size() << '\n';
    if (rec.note) notes << "note: " << *rec.note << '\n';
    for (const auto& [k, why] : rec.infeasible) notes << "infeasible prefix " << k << ": " << why << '\n';
    return rec;
}

}  // namespace vidcurate
