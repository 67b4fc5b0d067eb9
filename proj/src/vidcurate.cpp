// vidcurate: command-line driver for the curation pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error. Errors are reported on stderr as
// a single line `vidcurate: error kind=<usage|data> msg=<json string>`.

#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include <vidcurate/pipeline.hpp>
#include <vidcurate/service.hpp>
#include <vidcurate/live_catalog.hpp>

namespace vc = vidcurate;
namespace fs = std::filesystem;

namespace {

/// Flag values; unset flags leave the config file's values alone.
struct Flags {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> corpus, lexicon, transcripts, visual, annotations, rubrics, out, catalog, terms, resolver,
        views, scores, second_rater, state, checkpoint, dimension, attribute;
    std::vector<std::string> labels;
    std::optional<double> threshold_med, threshold_und, delta, validation_fraction;
    std::optional<std::string> lambda_grid;
    std::optional<int> cv_folds, per_term;
    std::optional<std::size_t> top_k;
    std::optional<std::string> language;
    bool live = false;

    // review serve
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::string> state_dir, term_hits;
    std::vector<std::string> checkpoints;
};

std::vector<double> parse_grid(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto comma = s.find(',', pos);
        const auto cell = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!cell.empty()) {
            try {
                out.push_back(vc::detail::parse_double(cell));
            } catch (const vc::DataError&) {
                throw vc::UsageError("--lambda-grid: bad number '" + cell + "'");
            }
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw vc::UsageError("--lambda-grid is empty");
    return out;
}

vc::PipelineConfig resolve(const Flags& f) {
    vc::PipelineConfig c = f.config ? vc::load_pipeline_config(*f.config) : vc::PipelineConfig{};
    auto set = [](std::optional<fs::path>& into, const std::optional<std::string>& v) {
        if (v) into = fs::path(*v);
    };
    set(c.corpus, f.corpus);
    set(c.lexicon, f.lexicon);
    set(c.transcripts, f.transcripts);
    set(c.visual, f.visual);
    set(c.annotations, f.annotations);
    set(c.rubrics, f.rubrics);
    set(c.out, f.out);
    set(c.catalog, f.catalog);
    set(c.terms, f.terms);
    set(c.resolver, f.resolver);
    set(c.views, f.views);
    set(c.scores, f.scores);
    set(c.second_rater, f.second_rater);
    set(c.state, f.state);
    set(c.checkpoint, f.checkpoint);
    if (!f.labels.empty()) c.labels.assign(f.labels.begin(), f.labels.end());
    if (f.seed) c.seed = *f.seed;
    if (f.threshold_med) c.threshold_med = *f.threshold_med;
    if (f.threshold_und) c.threshold_und = *f.threshold_und;
    if (f.validation_fraction) c.validation_fraction = *f.validation_fraction;
    if (f.per_term) c.per_term = *f.per_term;
    if (f.language) c.language = *f.language;
    if (f.delta) c.fairness.delta = *f.delta;
    if (f.top_k) c.fairness.top_k = *f.top_k;
    if (f.cv_folds) c.fairness.cv_folds = *f.cv_folds;
    if (f.lambda_grid) c.fairness.lambda_grid = parse_grid(*f.lambda_grid);
    if (f.attribute) c.fairness.attribute = vc::parse_attribute(*f.attribute);
    return c;
}

void add_common(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON config file; flags override its values");
    app->add_option("--out", f.out, "Output directory");
}

std::unique_ptr<vc::ReviewResolver> make_resolver(const vc::PipelineConfig& c) {
    if (c.resolver) return std::make_unique<vc::TranscriptResolver>(vc::TranscriptResolver::load(*c.resolver));
    // no transcript: every conflict pauses the run for the review service
    return std::make_unique<vc::TranscriptResolver>(std::map<std::pair<std::string, vc::Dimension>, vc::Binary>{});
}

std::vector<vc::Dimension> dimensions(const Flags& f) {
    if (!f.dimension || *f.dimension == "both") return {vc::Dimension::med, vc::Dimension::und};
    return {vc::parse_dimension(*f.dimension)};
}

void report_cotrain(vc::Dimension d, const vc::CoTrainOutcome& o) {
    if (o.paused)
        std::cout << "cotrain " << vc::to_string(d) << " status=paused checkpoint=" << o.checkpoint.string()
                  << " reason=" << nlohmann::json(o.message).dump() << '\n';
    else
        std::cout << "cotrain " << vc::to_string(d) << " status=done rounds=" << o.rounds << " labels=" << o.labels
                  << " discarded=" << o.discarded << '\n';
}

std::map<std::string, nlohmann::json> video_details(const vc::PipelineConfig& c, const Flags& f) {
    std::map<std::string, nlohmann::json> out;
    if (!c.corpus) return out;
    for (const auto& r : vc::read_corpus(*c.corpus)) {
        auto j = vc::to_json(r);
        j["term_hits"] = nlohmann::json::array();
        out[r.video_id] = j;
    }
    if (f.term_hits)
        for (const auto& row : vc::jsonl::read_file(*f.term_hits))
            if (auto it = out.find(row.at("video_id").get<std::string>()); it != out.end())
                it->second["term_hits"] = row.at("hits");
    return out;
}

int serve(const vc::PipelineConfig& c, const Flags& f) {
    if (!f.state_dir) throw vc::UsageError("review serve needs --state-dir");
    std::map<vc::Dimension, vc::CoTrainState> initial;
    for (const auto& p : f.checkpoints) {
        auto s = vc::load_checkpoint(p);
        const auto d = s.config.target;
        initial.emplace(d, std::move(s));
    }
    // SIGINT/SIGTERM are consumed by sigwait below for a graceful, snapshotting shutdown.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    vc::SessionStore store(*f.state_dir, std::move(initial));
    vc::ServiceOptions opt;
    opt.host = f.host;
    opt.port = f.port;
    opt.videos = video_details(c, f);
    vc::ReviewService service(store, std::move(opt));
    const int port = service.bind();
    std::cout << "serving http://" << f.host << ":" << port << " seq=" << store.last_seq() << std::endl;
    std::thread listener([&] { service.listen(); });
    int sig = 0;
    sigwait(&signals, &sig);
    service.shutdown();
    listener.join();
    std::cout << "stopped; snapshot at seq=" << store.last_seq() << std::endl;
    return 0;
}

void fail(const char* kind, const std::string& msg) {
    std::cerr << "vidcurate: error kind=" << kind << " msg=" << nlohmann::json(msg).dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vidcurate: health-education video curation pipeline"};
    app.require_subcommand(1);
    Flags f;

    auto* ingest = app.add_subcommand("ingest", "Search the catalog, deduplicate and language-filter");
    add_common(ingest, f);
    ingest->add_option("--terms", f.terms, "Search terms, one per line");
    ingest->add_option("--catalog", f.catalog, "Fixture catalog directory (<slug>.jsonl per term)");
    ingest->add_flag("--live", f.live, "Query the live catalog API (key from VIDCURATE_API_KEY)");
    ingest->add_option("--per-term", f.per_term, "Results per term (1..50)");
    ingest->add_option("--language", f.language, "Language tag to keep");

    auto* measure = app.add_subcommand("measure", "Medical-term coverage and PEMAT scores");
    add_common(measure, f);
    measure->add_option("--corpus", f.corpus, "Corpus JSONL");
    measure->add_option("--lexicon", f.lexicon, "Lexicon TSV (term<TAB>semtype)");
    measure->add_option("--transcripts", f.transcripts, "Transcripts TSV");
    measure->add_option("--rubrics", f.rubrics, "PEMAT rubric CSV");
    measure->add_option("--second-rater", f.second_rater, "Second rater's labels (JSONL) for Cohen's kappa");
    measure->add_option("--threshold-med", f.threshold_med, "MED threshold on term coverage");
    measure->add_option("--threshold-und", f.threshold_und, "UND threshold on the PEMAT score");

    auto* featurize = app.add_subcommand("featurize", "Build metadata and content views");
    add_common(featurize, f);
    featurize->add_option("--corpus", f.corpus, "Corpus JSONL");
    featurize->add_option("--transcripts", f.transcripts, "Transcripts TSV");
    featurize->add_option("--visual", f.visual, "Visual features TSV");

    auto* cotrain = app.add_subcommand("cotrain", "Two-view co-training");
    cotrain->require_subcommand(1);
    auto* ct_run = cotrain->add_subcommand("run", "Start from seed labels");
    add_common(ct_run, f);
    ct_run->add_option("--seed", f.seed, "Random seed (required)");
    ct_run->add_option("--views", f.views, "views.jsonl from featurize");
    ct_run->add_option("--labels", f.labels, "Seed label files (JSONL)");
    ct_run->add_option("--resolver", f.resolver, "Resolver transcript CSV (video_id,dimension,label)");
    ct_run->add_option("--dimension", f.dimension, "MED, UND or both");
    ct_run->add_option("--validation-fraction", f.validation_fraction, "Share of seeds held out for validation");
    auto* ct_resume = cotrain->add_subcommand("resume", "Continue a paused run");
    add_common(ct_resume, f);
    ct_resume->add_option("--checkpoint", f.checkpoint, "Checkpoint written when the run paused")->required();
    ct_resume->add_option("--resolver", f.resolver, "Resolver transcript CSV");

    auto* review = app.add_subcommand("review", "Human review service");
    review->require_subcommand(1);
    auto* rv_serve = review->add_subcommand("serve", "Serve the review HTTP API");
    rv_serve->add_option("--config", f.config, "JSON config file");
    rv_serve->add_option("--state-dir", f.state_dir, "Session directory (snapshot + event log)")->required();
    rv_serve->add_option("--checkpoint", f.checkpoints, "Co-training checkpoints to start a fresh session from");
    rv_serve->add_option("--corpus", f.corpus, "Corpus JSONL for video details");
    rv_serve->add_option("--term-hits", f.term_hits, "terms.jsonl from measure");
    rv_serve->add_option("--host", f.host, "Bind address");
    rv_serve->add_option("--port", f.port, "Port (0 picks a free one)");

    auto* evaluate = app.add_subcommand("evaluate", "Score saved classifiers against reference labels");
    add_common(evaluate, f);
    evaluate->add_option("--state", f.state, "Co-training state JSON");
    evaluate->add_option("--views", f.views, "views.jsonl");
    evaluate->add_option("--labels", f.labels, "Reference label files");

    auto* fairness = app.add_subcommand("fairness", "Representativeness analyses");
    fairness->require_subcommand(1);
    auto* audit = fairness->add_subcommand("audit", "Funnel, cross-tabs, correlations, GLM, LASSO, parity");
    add_common(audit, f);
    audit->add_option("--seed", f.seed, "Random seed (required)");
    audit->add_option("--corpus", f.corpus, "Corpus JSONL");
    audit->add_option("--labels", f.labels, "Label files (JSONL)");
    audit->add_option("--annotations", f.annotations, "Actor annotations JSONL");
    audit->add_option("--lambda-grid", f.lambda_grid, "Comma-separated LASSO lambdas");
    audit->add_option("--cv-folds", f.cv_folds, "Cross-validation folds");

    auto* recommend = app.add_subcommand("recommend", "Fairness-constrained top-k list");
    add_common(recommend, f);
    recommend->add_option("--corpus", f.corpus, "Corpus JSONL");
    recommend->add_option("--labels", f.labels, "Label files (JSONL)");
    recommend->add_option("--annotations", f.annotations, "Actor annotations JSONL");
    recommend->add_option("--scores", f.scores, "scores.csv from measure");
    recommend->add_option("--attribute", f.attribute, "Gender, age_bracket or FV");
    recommend->add_option("--delta", f.delta, "Allowed parity-ratio deviation (inf disables)");
    recommend->add_option("--top-k", f.top_k, "List length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail("usage", e.what());
        std::cerr << app.help();
        return 1;
    }

    try {
        const auto c = resolve(f);
        if (*ingest) {
            std::unique_ptr<vc::CatalogClient> client;
            if (f.live) client = std::make_unique<vc::LiveCatalogClient>(vc::LiveCatalogClient::from_env());
            else if (c.catalog) client = std::make_unique<vc::FixtureCatalogClient>(*c.catalog);
            else throw vc::UsageError("ingest needs --catalog or --live");
            const auto s = vc::run_ingest(c, *client);
            std::cout << "ingest retrieved=" << s.retrieved << " unique=" << s.unique << " kept=" << s.kept
                      << " failed_terms=" << s.failures << '\n';
        } else if (*measure) {
            const auto scores = vc::run_measure(c);
            std::cout << "measure videos=" << scores.size() << '\n';
        } else if (*featurize) {
            const auto views = vc::run_featurize(c);
            std::cout << "featurize videos=" << views.size() << '\n';
        } else if (*ct_run) {
            auto resolver = make_resolver(c);
            for (auto d : dimensions(f)) report_cotrain(d, vc::run_cotrain(c, d, *resolver));
        } else if (*ct_resume) {
            auto resolver = make_resolver(c);
            const auto o = vc::resume_cotrain(c, *resolver);
            report_cotrain(vc::load_checkpoint(*c.checkpoint).config.target, o);
        } else if (*rv_serve) {
            return serve(c, f);
        } else if (*evaluate) {
            const auto reports = vc::run_evaluate(c);
            for (const auto& [name, r] : reports)
                std::cout << "evaluate " << name << " accuracy=" << vc::fmt_num(r.accuracy, 4)
                          << " macro_f1=" << vc::fmt_num(r.macro_f1, 4) << '\n';
        } else if (*audit) {
            const auto r = vc::run_fairness_audit(c);
            std::cout << "fairness analyzed=" << r.frame.rows.size() << " best_lambda=" << vc::fmt_num(r.lasso.best_lambda)
                      << '\n';
        } else if (*recommend) {
            const auto r = vc::run_recommend(c);
            std::cout << "recommend listed=" << r.ranked.size() << " infeasible_prefixes=" << r.infeasible.size() << '\n';
        }
        return 0;
    } catch (const vc::UsageError& e) {
        fail("usage", e.what());
        return 1;
    } catch (const std::exception& e) {
        fail("data", e.what());
        return 2;
    }
}
