// Acceptance run: one PASS/FAIL line per primary criterion. Exits non-zero if any line
// is FAIL. Each check collects its problems as text, so a FAIL line says what broke.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pipeline_run.hpp"
#include "service_driver.hpp"
#include "support.hpp"
#include "synthetic.hpp"
#include "vidcurate/fairness.hpp"
#include "vidcurate/metrics.hpp"
#include "vidcurate/textmeasure.hpp"

using namespace vidcurate;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = VIDCURATE_FIXTURES;
const fs::path kGolden = VIDCURATE_GOLDEN;
const fs::path kCli = VIDCURATE_CLI;

struct Outcome {
    std::vector<std::string> problems;
    std::string detail;  // summary printed after the timing
    double limit_seconds = std::numeric_limits<double>::infinity();

    void expect(bool ok, const std::string& what) {
        if (!ok) problems.push_back(what);
    }
};

std::string num(double v, int prec = 3) {
    std::ostringstream o;
    o.precision(prec);
    o << v;
    return o.str();
}

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o.problems.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= o.limit_seconds) o.problems.push_back("took " + num(secs) + " s, limit " + num(o.limit_seconds) + " s");
    const bool pass = o.problems.empty();
    failures += !pass;
    std::printf("%s %s (%.2f s) %s\n", pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
    for (std::size_t i = 0; i < o.problems.size() && i < 10; ++i) std::printf("    %s\n", o.problems[i].c_str());
    if (o.problems.size() > 10) std::printf("    ... %zu more\n", o.problems.size() - 10);
    std::fflush(stdout);
}

// ---------------------------------------------------------------------------

Outcome formula_oracles() {
    Outcome o;
    o.limit_seconds = 5;
    std::size_t pemat_cases = 0, med_cases = 0, prf_cases = 0, kappa_cases = 0;

    // PEMAT: count agree / disagree straight from the fixture CSV
    std::map<std::string, std::pair<int, int>> counts;
    std::istringstream rubric_csv(testing_support::slurp(kFixtures / "rubrics.csv"));
    std::string line;
    std::getline(rubric_csv, line);  // header
    while (std::getline(rubric_csv, line)) {
        if (line.empty()) continue;
        const auto cells = csv_split(line);
        auto& [agree, disagree] = counts[cells.at(0)];
        if (cells.at(2) == "agree" || cells.at(2) == "1") ++agree;
        else if (cells.at(2) == "disagree" || cells.at(2) == "0") ++disagree;
    }
    const auto rubrics = load_rubrics(kFixtures / "rubrics.csv");
    o.expect(rubrics.size() == counts.size(), "rubric video count");
    for (const auto& [id, c] : counts) {
        if (c.first + c.second == 0) continue;
        const double expected = static_cast<double>(c.first) / static_cast<double>(c.first + c.second);
        o.expect(pemat_score(rubrics.at(id)) == expected, "pemat " + id);
        ++pemat_cases;
    }

    // MED score: fixture lexicon terms (plain words only) separated by filler words, so the
    // covered token count is known by construction
    std::vector<std::pair<std::string, std::size_t>> terms;
    std::istringstream lex_tsv(testing_support::slurp(kFixtures / "lexicon.tsv"));
    while (std::getline(lex_tsv, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto term = line.substr(0, line.find('\t'));
        if (term.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789 ") != std::string::npos) continue;
        terms.emplace_back(term, static_cast<std::size_t>(std::count(term.begin(), term.end(), ' ')) + 1);
    }
    const auto lexicon = load_lexicon(kFixtures / "lexicon.tsv");
    Rng rng(20);
    for (int c = 0; c < 40; ++c) {
        std::string text;
        std::size_t covered = 0, total = 0;
        const std::size_t pieces = rng.uniform_index(12);
        for (std::size_t p = 0; p < pieces; ++p) {
            const auto& [term, words] = terms[rng.uniform_index(terms.size())];
            const std::size_t filler = 1 + rng.uniform_index(3);
            for (std::size_t f = 0; f < filler; ++f) text += (p + f ? " " : "") + std::string("qzx");
            text += " " + term;
            covered += words;
            total += filler + words;
        }
        const double expected = total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0;
        o.expect(med_score(extract_terms(text, lexicon), text) == expected, "med case " + std::to_string(c));
        ++med_cases;
    }

    // precision / recall / F1 from a planted confusion matrix
    for (int c = 0; c < 40; ++c) {
        const std::size_t tp = rng.uniform_index(20), fp = rng.uniform_index(20), fn = rng.uniform_index(20),
                          tn = 1 + rng.uniform_index(20);
        std::vector<double> s;
        std::vector<int> y;
        auto add = [&](std::size_t n, double score, int label) {
            for (std::size_t i = 0; i < n; ++i) s.push_back(score), y.push_back(label);
        };
        add(tp, 0.9, 1), add(fp, 0.7, 0), add(fn, 0.2, 1), add(tn, 0.1, 0);
        const auto r = evaluate(s, y);
        auto same = [](const std::optional<double>& got, std::optional<double> want) {
            return got.has_value() == want.has_value() && (!want || std::abs(*got - *want) <= 1e-15);
        };
        const std::optional<double> p = tp + fp ? std::optional(double(tp) / double(tp + fp)) : std::nullopt;
        const std::optional<double> rc = tp + fn ? std::optional(double(tp) / double(tp + fn)) : std::nullopt;
        const std::optional<double> f1 = p && rc ? std::optional(tp ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0)
                                                 : std::nullopt;
        const std::string tag = "prf case " + std::to_string(c);
        o.expect(same(r.positive.precision, p), tag + " precision");
        o.expect(same(r.positive.recall, rc), tag + " recall");
        o.expect(same(r.positive.f1, f1), tag + " f1");
        o.expect(r.accuracy == double(tp + tn) / double(tp + fp + fn + tn), tag + " accuracy");
        ++prf_cases;
    }

    // kappa over every pair of binary label vectors of length <= 8, in exact integers
    double worst = 0;
    for (int n = 1; n <= 8; ++n)
        for (unsigned ma = 0; ma < (1u << n); ++ma)
            for (unsigned mb = 0; mb < (1u << n); ++mb) {
                std::vector<int> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
                long agree = 0, a1 = 0, b1 = 0;
                for (int i = 0; i < n; ++i) {
                    const auto k = static_cast<std::size_t>(i);
                    a[k] = (ma >> i) & 1, b[k] = (mb >> i) & 1;
                    agree += a[k] == b[k], a1 += a[k], b1 += b[k];
                }
                const long chance = a1 * b1 + (n - a1) * (n - b1);
                const long numer = n * agree - chance, den = static_cast<long>(n) * n - chance;
                const double expected = den == 0 ? 1.0 : static_cast<double>(numer) / static_cast<double>(den);
                worst = std::max(worst, std::abs(cohen_kappa(a, b) - expected));
                ++kappa_cases;
            }
    o.expect(worst <= 1e-12, "kappa max error " + num(worst));
    o.detail = "pemat=" + std::to_string(pemat_cases) + " med=" + std::to_string(med_cases) +
               " prf=" + std::to_string(prf_cases) + " kappa=" + std::to_string(kappa_cases) + " max_kappa_err=" + num(worst);
    o.expect(pemat_cases >= 20 && med_cases >= 20 && prf_cases >= 20, "fewer than 20 cases");
    return o;
}

Outcome auc_pairs() {
    Outcome o;
    o.limit_seconds = 10;
    Rng rng(2024);
    double worst = 0;
    int instances = 0;
    while (instances < 200) {
        const std::size_t n = 2 + rng.uniform_index(99);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = instances % 2 ? static_cast<double>(rng.uniform_index(5)) : rng.uniform01();
            y[i] = static_cast<int>(rng.bernoulli(0.4));
        }
        if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0) continue;
        const auto r = evaluate(s, y);
        if (!r.auc) {
            o.problems.push_back("auc missing on instance " + std::to_string(instances));
        } else {
            worst = std::max(worst, std::abs(*r.auc - oracle::auc_pairs(s, y)));
        }
        ++instances;
    }
    o.expect(worst <= 1e-12, "max error " + num(worst));
    o.detail = "instances=200 max_err=" + num(worst);
    return o;
}

Outcome logistic_regression() {
    Outcome o;
    double worst_coef = 0, worst_grad = 0, worst_norm = 0;
    int problems = 0;
    for (const auto& p : oracle::tiny_logreg_problems()) {
        LogRegOptions opt;
        opt.l2_lambda = p.lambda;
        opt.tol = 1e-10;
        const auto m = fit_logreg(oracle::to_vectors(p.rows), p.y, opt);
        o.expect(m.converged && m.gradient_sup_norm <= opt.tol,
                 "problem " + std::to_string(problems) + " gradient " + num(m.gradient_sup_norm));
        worst_norm = std::max(worst_norm, m.gradient_sup_norm);
        const auto theta = oracle::logreg_newton(p);
        for (std::size_t j = 0; j < m.weights.size(); ++j) worst_coef = std::max(worst_coef, std::abs(m.weights[j] - theta[j]));
        worst_coef = std::max(worst_coef, std::abs(m.bias - theta.back()));
        ++problems;
    }
    o.expect(problems >= 10, "fewer than 10 problems");
    o.expect(worst_coef <= 1e-6, "coefficients off by " + num(worst_coef));

    Rng rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 4 + rng.uniform_index(12), d = 1 + rng.uniform_index(5);
        oracle::LogRegProblem p;
        p.lambda = rng.uniform(0.0, 0.5);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row(d);
            for (auto& v : row) v = rng.normal();
            p.rows.push_back(row);
            p.y.push_back(static_cast<int>(rng.bernoulli(0.5)));
        }
        const Eigen::MatrixXd A = logreg::design(oracle::to_vectors(p.rows), d);
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) y[static_cast<Eigen::Index>(i)] = p.y[i];
        Eigen::VectorXd theta(static_cast<Eigen::Index>(d + 1));
        for (auto& v : theta) v = rng.normal();
        const Eigen::VectorXd g = logreg::gradient(A, y, p.lambda, theta);
        Eigen::VectorXd fd(theta.size());
        const double h = 1e-5;
        for (Eigen::Index j = 0; j < theta.size(); ++j) {
            std::vector<double> up(theta.data(), theta.data() + theta.size()), dn = up;
            up[static_cast<std::size_t>(j)] += h;
            dn[static_cast<std::size_t>(j)] -= h;
            fd[j] = (oracle::logreg_objective(p, up) - oracle::logreg_objective(p, dn)) / (2 * h);
        }
        worst_grad = std::max(worst_grad, (g - fd).norm() / g.norm());
    }
    o.expect(worst_grad <= 1e-6, "finite-difference gradient off by " + num(worst_grad));
    o.detail = "problems=" + std::to_string(problems) + " max_grad_norm=" + num(worst_norm) +
               " max_coef_err=" + num(worst_coef) + " max_fd_rel_err=" + num(worst_grad);
    return o;
}

Outcome random_forest() {
    Outcome o;
    {
        const auto [X, y] = oracle::xor_data(200, 3);
        ForestParams p;
        p.n_trees = 30;
        p.seed = 42;
        const auto a = fit_forest(X, y, p);
        const auto b = fit_forest(X, y, p);
        p.threads = 4;
        const auto c = fit_forest(X, y, p);
        o.expect(serialize(a) == serialize(b), "two sequential fits differ");
        o.expect(serialize(a) == serialize(c), "parallel fit differs from sequential");
        const auto [T, ty] = oracle::xor_data(100, 4);
        for (const auto& x : T) {
            const double pa = predict_proba_forest(a, x), pb = predict_proba_forest(b, x), pc = predict_proba_forest(c, x);
            o.expect(std::memcmp(&pa, &pb, sizeof pa) == 0 && std::memcmp(&pa, &pc, sizeof pa) == 0, "prediction bits differ");
        }
    }
    const auto [X, y] = oracle::xor_data(400, 11);
    const std::size_t n_train = 300;
    ForestParams p;
    p.seed = 1;
    const auto m = fit_forest(std::span(X).first(n_train), std::span<const int>(y).first(n_train), p);
    std::size_t correct = 0;
    for (std::size_t i = n_train; i < X.size(); ++i) correct += (predict_proba_forest(m, X[i]) >= 0.5) == (y[i] == 1);
    const double acc = static_cast<double>(correct) / static_cast<double>(X.size() - n_train);
    o.expect(acc >= 0.9, "xor accuracy " + num(acc));
    o.detail = "xor_test_accuracy=" + num(acc) + " (400 samples, 300/100 split) bit-identical runs and threads";
    return o;
}

// --- fairness helpers -------------------------------------------------------

FrameRow frame_row(const std::string& id, int fv, int gender, std::int64_t views) {
    return FrameRow{id, fv, gender, 1, 1, views, std::log(static_cast<double>(views)), AgeBracket::unknown};
}

/// y = 2 + 0.5 FV - 0.3 Gender + 0.4 FV:Gender + noise, all four cells present.
RegressionFrame synthetic_frame(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    RegressionFrame f;
    for (std::size_t i = 0; i < n; ++i) {
        const int fv = i < 4 ? static_cast<int>(i % 2) : static_cast<int>(rng.bernoulli(0.5));
        const int g = i < 4 ? static_cast<int>(i / 2) : static_cast<int>(rng.bernoulli(0.5));
        auto r = frame_row("r" + std::to_string(i), fv, g, 1);
        r.y = 2 + 0.5 * fv - 0.3 * g + 0.4 * fv * g + 0.3 * rng.normal();
        f.rows.push_back(r);
    }
    return f;
}

oracle::Matrix design_of(const RegressionFrame& f) {
    oracle::Matrix X;
    for (const auto& r : f.rows)
        X.push_back({1.0, double(r.fv), double(r.gender), double(r.fv * r.gender)});
    return X;
}

std::vector<double> ys_of(const RegressionFrame& f) {
    std::vector<double> y;
    for (const auto& r : f.rows) y.push_back(r.y);
    return y;
}

Outcome lasso() {
    Outcome o;
    Rng rng(77);
    double worst_kkt = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 20 + static_cast<Eigen::Index>(rng.uniform_index(30)),
                           p = 2 + static_cast<Eigen::Index>(rng.uniform_index(6));
        Eigen::MatrixXd X(n, p);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) X(i, j) = rng.normal();
            y[i] = X(i, 0) - 0.5 * X(i, p - 1) + rng.normal();
        }
        const auto s = standardize(X, y);
        const std::vector<double> grid{0.0, 0.001, 0.01, 0.05, 0.1, 0.3, 1.0, 5.0};
        const auto path = lasso_path(s.X, s.y, grid);
        for (std::size_t l = 0; l < grid.size(); ++l) {
            const Eigen::VectorXd r = s.y - s.X * path[l];
            for (Eigen::Index j = 0; j < p; ++j) {
                const double g = s.X.col(j).dot(r) / static_cast<double>(n);
                const double gap = path[l][j] == 0.0 ? std::max(0.0, std::abs(g) - grid[l])
                                                     : std::abs(g - grid[l] * (path[l][j] > 0 ? 1.0 : -1.0));
                worst_kkt = std::max(worst_kkt, gap);
            }
        }
    }
    o.expect(worst_kkt <= 1e-8, "KKT violation " + num(worst_kkt));

    double worst_ols = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto f = synthetic_frame(seed, 40);
        const auto orig = original_scale(fit_lasso(f, {0.0}, 4, 1));
        const auto beta = oracle::ols(design_of(f), ys_of(f));
        worst_ols = std::max(worst_ols, std::abs(orig.intercept - beta[0]));
        for (std::size_t k = 0; k < 3; ++k) worst_ols = std::max(worst_ols, std::abs(orig.coefficients[k] - beta[k + 1]));
    }
    o.expect(worst_ols <= 1e-8, "lambda=0 differs from OLS by " + num(worst_ols));

    // x has mean 0 and mean square 1, y = 2x: the solution is S(2, lambda)
    Eigen::MatrixXd X(4, 1);
    X << -1, -1, 1, 1;
    const Eigen::VectorXd y = 2.0 * X.col(0);
    for (double lambda : {0.0, 0.25, 0.5, 1.0, 1.75, 2.0, 3.0}) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(1);
        lasso_cd(X, y, lambda, b);
        o.expect(b[0] == std::max(0.0, 2.0 - lambda), "soft threshold at lambda " + num(lambda) + " gave " + num(b[0], 17));
    }
    o.detail = "problems=20 max_kkt_gap=" + num(worst_kkt) + " max_ols_err=" + num(worst_ols) + " soft_threshold=exact";
    return o;
}

Outcome glm() {
    Outcome o;
    double worst_coef = 0, worst_p = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto f = synthetic_frame(seed, 30 + 3 * seed);
        const auto fit = fit_glm(f);
        const auto X = design_of(f);
        const auto y = ys_of(f);
        const auto beta = oracle::ols(X, y);
        double rss = 0;
        for (std::size_t i = 0; i < X.size(); ++i) {
            double pred = 0;
            for (std::size_t k = 0; k < 4; ++k) pred += X[i][k] * beta[k];
            rss += (y[i] - pred) * (y[i] - pred);
        }
        const int dof = static_cast<int>(X.size()) - 4;
        const double sigma2 = rss / dof;
        oracle::Matrix G(4, std::vector<double>(4, 0.0));
        for (const auto& r : X)
            for (std::size_t a = 0; a < 4; ++a)
                for (std::size_t b = 0; b < 4; ++b) G[a][b] += r[a] * r[b];
        for (std::size_t k = 0; k < 4; ++k) {
            worst_coef = std::max(worst_coef, std::abs(fit.coefficients[k] - beta[k]));
            std::vector<double> e(4, 0.0);
            e[k] = 1.0;
            const double se = std::sqrt(sigma2 * oracle::solve(G, e)[k]);
            worst_p = std::max(worst_p, std::abs((*fit.p_values)[k] - oracle::t_two_tailed(beta[k] / se, dof)));
        }
    }
    o.expect(worst_coef <= 1e-8, "coefficients off by " + num(worst_coef));
    o.expect(worst_p <= 1e-9, "p-values off by " + num(worst_p));
    o.detail = "frames=10 max_coef_err=" + num(worst_coef) + " max_p_err=" + num(worst_p);
    return o;
}

// --- co-training --------------------------------------------------------------

/// L, U, pending and discarded ids are pairwise disjoint and cover the corpus.
std::string partition_problem(const CoTrainState& s) {
    std::map<std::string, int> seen;
    for (const auto& [id, _] : s.labeled) ++seen[id];
    for (const auto& id : s.unlabeled) ++seen[id];
    for (const auto& r : s.review_queue)
        if (r.status == ReviewStatus::pending) ++seen[r.video_id];
    for (const auto& id : s.discarded) ++seen[id];
    for (const auto& [id, c] : seen) {
        if (c != 1) return id + " is in " + std::to_string(c) + " sets";
        if (!s.views.contains(id)) return id + " is not in the corpus";
    }
    if (seen.size() != s.views.size())
        return std::to_string(s.views.size() - seen.size()) + " corpus ids are in no set (round " + std::to_string(s.round) + ")";
    return {};
}

CoTrainConfig lift_config(std::uint64_t seed) {
    CoTrainConfig c;
    c.k_pos = c.k_neg = 80;
    c.tau = 0.8;
    c.max_rounds = 30;
    c.seed = seed;
    c.forest.n_trees = 50;
    c.forest.max_depth = 8;
    c.forest.min_leaf = 2;
    c.logreg.l2_lambda = 0.01;
    return c;
}

std::size_t partition_checks = 0;
std::vector<std::string> partition_failures;

/// Partition check on every step; with `audit`, also the pool audit of every round.
RunOptions checked(Outcome* audit = nullptr, const CoTrainConfig& c = {}, std::size_t* audited = nullptr) {
    RunOptions opt;
    opt.on_step = [](const CoTrainState& s) {
        ++partition_checks;
        if (auto p = partition_problem(s); !p.empty()) partition_failures.push_back(p);
    };
    if (audit)
        opt.on_round = [audit, c, audited](const RoundReport& r) {
            ++*audited;
            for (const auto& bad : synthetic::audit_round(r, c))
                audit->problems.push_back("round " + std::to_string(r.round) + " " + bad);
        };
    return opt;
}

Outcome cotrain_lift() {
    Outcome o;
    o.limit_seconds = 120;
    synthetic::TwoViewParams tp;  // 40 seeds, 1000 unlabeled, 500 test
    double base = 0, final = 0;
    std::size_t audited = 0, autos = 0, reviews = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto d = synthetic::two_view(seed, tp);
        auto s = init_state(d.seed, d.unlabeled, lift_config(seed));
        base += synthetic::test_macro_f1(s, d.test);
        synthetic::TruthResolver truth(d.truth);
        run(s, truth, checked(&o, lift_config(seed), &audited));
        final += synthetic::test_macro_f1(s, d.test);
        for (const auto& [id, item] : s.labeled) autos += item.source == LabelSource::auto_cotrain;
        reviews += static_cast<std::size_t>(truth.calls);
    }
    base /= 10, final /= 10;
    o.expect(final - base >= 0.05, "mean lift " + num(final - base, 4) + " < 0.05");
    o.expect(audited > 0 && autos > 0 && reviews > 0, "audit saw no auto-labels or no reviews");
    o.detail = "seeds=10 baseline=" + num(base, 4) + " final=" + num(final, 4) + " lift=" + num(final - base, 4) +
               " rounds_audited=" + std::to_string(audited) + " auto_labels=" + std::to_string(autos) +
               " reviews=" + std::to_string(reviews);
    return o;
}

/// Runs that end in every way a run can end, then reports every partition check made so far.
Outcome partition_invariant() {
    Outcome o;
    synthetic::TwoViewParams tp;
    tp.n_seed = 30, tp.n_unlabeled = 200, tp.n_test = 10, tp.shift = 0.6;
    const auto d = synthetic::two_view(6, tp);
    for (int max_rounds : {0, 1, 3, 50}) {
        auto c = lift_config(6);
        c.k_pos = c.k_neg = 20, c.tau = 0.75, c.max_rounds = max_rounds, c.forest.n_trees = 20;
        auto s = init_state(d.seed, d.unlabeled, c);
        synthetic::TruthResolver truth(d.truth);
        run(s, truth, checked());
        if (auto p = partition_problem(s); !p.empty()) partition_failures.push_back("final: " + p);
    }
    {
        // a resolver that never answers: the run stops with items pending
        struct Silent final : ReviewResolver {
            std::optional<Binary> resolve(const ReviewItem&, const CoTrainState&) override { return std::nullopt; }
            std::string name() const override { return "silent"; }
        } silent;
        auto c = lift_config(6);
        c.k_pos = c.k_neg = 20, c.tau = 0.75, c.forest.n_trees = 20;
        auto s = init_state(d.seed, d.unlabeled, c);
        try {
            run(s, silent, checked());
        } catch (const ResumableStop&) {
        }
        if (auto p = partition_problem(s); !p.empty()) partition_failures.push_back("paused: " + p);
        o.expect(s.pending_count() > 0, "the silent run never paused");
    }
    for (const auto& f : partition_failures) o.problems.push_back(f);
    o.expect(partition_checks > 0, "no checks ran");
    o.detail = "checks=" + std::to_string(partition_checks) + " (every state transition of every scripted run here and in the lift runs)";
    return o;
}

Outcome end_to_end() {
    Outcome o;
    o.limit_seconds = 120;  // two full runs; each must finish in under 60 s
    testing_support::TempDir a, b;
    const auto ra = pipeline_run::run_pipeline(kCli, kFixtures, a.path());
    o.expect(ra.ok, "first run: " + ra.log);
    const auto rb = pipeline_run::run_pipeline(kCli, kFixtures, b.path());
    o.expect(rb.ok, "second run: " + rb.log);
    o.expect(ra.seconds < 60 && rb.seconds < 60, "run took " + num(std::max(ra.seconds, rb.seconds)) + " s");
    if (!ra.ok || !rb.ok) return o;
    for (const auto& d : pipeline_run::tree_diff(a.path(), b.path())) o.problems.push_back("determinism: " + d);
    for (const auto& d : pipeline_run::golden_diff(kGolden, a.path())) o.problems.push_back("golden: " + d);
    std::size_t goldens = 0;
    for (const auto& e : fs::directory_iterator(kGolden)) goldens += e.path().extension() == ".csv";
    o.detail = "files=" + std::to_string(pipeline_run::files_under(a.path()).size()) + " run_seconds=" + num(ra.seconds) +
               "," + num(rb.seconds) + " byte-identical; " + std::to_string(goldens) + " golden reports within 1e-10";
    return o;
}

/// Brute force over the output: every prefix's parity ratios, and whether any composition
/// of that length could have met the bounds at all.
Outcome reranker() {
    Outcome o;
    RegressionFrame f;
    std::map<std::string, CandidateScores> scores;
    // 60% male pool; the 12 best-scoring candidates are all male
    for (int i = 0; i < 20; ++i) {
        const std::string id = "c" + std::to_string(100 + i);
        f.rows.push_back(frame_row(id, 0, i < 12 ? 1 : 0, 10));
        scores[id] = {1.0 - 0.01 * i, 0.0};
    }
    FairnessConfig cfg;
    cfg.max_ratio_gap = 0.2;
    const auto rec = recommend(f, scores, cfg, 10);
    o.expect(rec.ranked.size() == 10, "ranked " + std::to_string(rec.ranked.size()));
    std::set<std::size_t> reported;
    for (const auto& [len, _] : rec.infeasible) reported.insert(len);
    std::vector<std::size_t> out_of_bounds, impossible;
    auto within = [](double r) { return r >= 0.8 - 1e-12 && r <= 1.2 + 1e-12; };
    std::size_t male = 0;
    for (std::size_t len = 1; len <= rec.ranked.size(); ++len) {
        male += rec.ranked[len - 1] < "c112";
        const double rm = (double(male) / double(len)) / 0.6, rf = (double(len - male) / double(len)) / 0.4;
        const bool ok = within(rm) && within(rf);
        bool any = false;
        for (std::size_t m = 0; m <= len; ++m)
            any = any || (within((double(m) / double(len)) / 0.6) && within((double(len - m) / double(len)) / 0.4));
        if (!ok) out_of_bounds.push_back(len);
        if (!any) impossible.push_back(len);
        if (any && !ok) o.problems.push_back("prefix " + std::to_string(len) + " was attainable but is out of bounds");
        if (reported.contains(len) == ok) o.problems.push_back("prefix " + std::to_string(len) + " infeasibility misreported");
    }
    // the criterion asks for every prefix; a prefix no composition can satisfy fails it
    for (auto len : out_of_bounds)
        o.problems.push_back("prefix " + std::to_string(len) + " ratios outside [0.8, 1.2]" +
                             (std::find(impossible.begin(), impossible.end(), len) != impossible.end()
                                  ? ": no male/female split of this length meets both bounds"
                                  : ""));

    cfg.max_ratio_gap = std::numeric_limits<double>::infinity();
    const auto inf = recommend(f, scores, cfg, 20);
    o.expect(inf.ranked == inf.base_ranking && inf.infeasible.empty(), "delta=inf changed the base ranking");
    std::string bad;
    for (auto len : out_of_bounds) bad += (bad.empty() ? "" : ",") + std::to_string(len);
    const bool forced = std::all_of(out_of_bounds.begin(), out_of_bounds.end(), [&](std::size_t len) {
        return std::find(impossible.begin(), impossible.end(), len) != impossible.end();
    });
    o.detail = "prefixes=10 out_of_bounds={" + bad + "}" +
               (forced ? " each unattainable by any composition" : " some of them attainable") +
               "; delta=inf " + (inf.ranked == inf.base_ranking ? "reproduces" : "changes") + " the base ranking";
    return o;
}

Outcome service_equivalence() {
    Outcome o;
    synthetic::TwoViewParams tp;
    tp.n_seed = 30, tp.n_unlabeled = 200, tp.n_test = 10, tp.shift = 0.6;
    const auto d = synthetic::two_view(6, tp);
    CoTrainConfig c;
    c.k_pos = c.k_neg = 20, c.tau = 0.75, c.max_rounds = 6, c.seed = 3, c.forest.n_trees = 20, c.forest.max_depth = 6;
    auto initial = [&] {
        std::map<Dimension, CoTrainState> m;
        m.emplace(Dimension::med, init_state(d.seed, d.unlabeled, c));
        return m;
    };
    auto offline = init_state(d.seed, d.unlabeled, c);
    synthetic::TruthResolver truth(d.truth);
    const auto res = run(offline, truth);
    o.expect(truth.calls > 0, "scenario has no conflicts to review");
    nlohmann::json want = nlohmann::json::array();
    for (const auto& l : res.labels) want.push_back(to_json(l));
    const auto answer = [&](const std::string& id) { return d.truth.at(id); };

    testing_support::TempDir one, two, crashed;
    {
        service_driver::Live live(one.path(), initial());
        const int rounds = service_driver::play(live, Dimension::med, answer);
        o.expect(static_cast<std::size_t>(rounds) == res.rounds.size(), "round count differs");
        o.expect(live.get("/api/labels?dimension=MED")["labels"] == want, "served labels differ from offline run");
    }
    std::string replay_note;
    {
        service_driver::Live live(two.path(), initial());
        service_driver::play(live, Dimension::med, answer, 2);
        live.store.snapshot();
        service_driver::play(live, Dimension::med, answer, 1);
        for (const auto* f : {SessionStore::kSnapshotFile, SessionStore::kEventFile})
            fs::copy_file(two / f, crashed / f);
        SessionStore replayed(crashed.path());
        o.expect(replayed.last_seq() == live.store.last_seq(), "replayed seq differs");
        o.expect(to_json(*replayed.state(Dimension::med)).dump() == to_json(*live.store.state(Dimension::med)).dump(),
                 "replayed state differs");
        replay_note = "replayed_events=" + std::to_string(live.store.events().size());
    }
    service_driver::Live restarted(crashed.path());
    service_driver::play(restarted, Dimension::med, answer);
    o.expect(restarted.get("/api/labels")["labels"] == want, "restarted session labels differ from offline run");
    o.detail = "labels=" + std::to_string(res.labels.size()) + " rounds=" + std::to_string(res.rounds.size()) +
               " reviews=" + std::to_string(truth.calls) + " " + replay_note + " restart finishes identically";
    return o;
}

}  // namespace

int main() {
    report("formula-oracles", formula_oracles);
    report("auc", auc_pairs);
    report("logistic-regression", logistic_regression);
    report("random-forest", random_forest);
    report("lasso", lasso);
    report("glm", glm);
    report("cotrain-lift", cotrain_lift);
    report("partition-invariant", partition_invariant);
    report("end-to-end", end_to_end);
    report("fairness-reranker", reranker);
    report("service-equivalence", service_equivalence);
    std::printf("%d of 11 criteria failed\n", failures);
    return failures ? 1 : 0;
}
