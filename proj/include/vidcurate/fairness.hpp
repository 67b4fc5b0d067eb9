#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "random.hpp"

namespace vidcurate {

// ---------------------------------------------------------------------------
// Regression frame

struct FrameRow {
    std::string video_id;
    int fv = 0;
    int gender = 0;  // 0 = female, 1 = male
    int med = 0;
    int und = 0;
    std::int64_t view_count = 1;
    double y = 0.0;  // ln(view_count)
    AgeBracket age = AgeBracket::unknown;
};

/// Counts removed at each exclusion step, in application order.
struct ExclusionFunnel {
    std::size_t input = 0;
    std::size_t multi_actor = 0;
    std::size_t off_topic = 0;
    std::size_t unreadable = 0;
    std::size_t no_narration = 0;
    std::size_t zero_views = 0;
    std::size_t unlabeled = 0;
    std::size_t analyzed = 0;
};

struct RegressionFrame {
    std::vector<FrameRow> rows;
    ExclusionFunnel funnel;

    std::size_t size() const { return rows.size(); }
};

/// Applies, in order: multi-actor, off-topic, unreadable (including missing annotation or
/// undetermined gender), no narration, zero views, and missing MED/UND label.
inline RegressionFrame build_frame(const std::vector<VideoRecord>& records, const std::vector<LabelSet>& labels,
                                   const std::vector<ActorAnnotation>& annotations) {
    std::unordered_map<std::string, const ActorAnnotation*> ann;
    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.video_id);
    for (const auto& a : annotations) {
        if (!ids.contains(a.video_id)) throw DataError("annotation references unknown video_id " + a.video_id);
        if (!ann.emplace(a.video_id, &a).second) throw DataError("duplicate annotation for " + a.video_id);
    }
    for (const auto& l : labels)
        if (!ids.contains(l.video_id)) throw DataError("label references unknown video_id " + l.video_id);
    const auto merged = merge_labels(labels);

    RegressionFrame frame;
    auto& f = frame.funnel;
    f.input = records.size();
    for (const auto& r : records) {
        const auto it = ann.find(r.video_id);
        const ActorAnnotation* a = it == ann.end() ? nullptr : it->second;
        if (a && a->actor_count > 1) { ++f.multi_actor; continue; }
        if (a && a->off_topic.value_or(false)) { ++f.off_topic; continue; }
        if (!a || !a->readable || a->gender == Gender::unknown) { ++f.unreadable; continue; }
        if (!a->narration) { ++f.no_narration; continue; }
        if (r.view_count <= 0) { ++f.zero_views; continue; }
        const auto m = merged.find(r.video_id);
        if (m == merged.end() || m->second.med == Level::unlabeled || m->second.und == Level::unlabeled) {
            ++f.unlabeled;
            continue;
        }
        frame.rows.push_back(FrameRow{r.video_id, a->face_visible ? 1 : 0, a->gender == Gender::male ? 1 : 0,
                                      m->second.med == Level::high ? 1 : 0, m->second.und == Level::high ? 1 : 0,
                                      r.view_count, std::log(static_cast<double>(r.view_count)), a->age_bracket});
    }
    f.analyzed = frame.rows.size();
    return frame;
}

// ---------------------------------------------------------------------------
// Cross-tabulation

/// Counts indexed [med][und][gender][fv].
struct CrossTab {
    std::array<std::array<std::array<std::array<std::size_t, 2>, 2>, 2>, 2> cells{};
    std::size_t n = 0;

    std::size_t margin_med(int v) const { return sum([&](int m, int, int, int) { return m == v; }); }
    std::size_t margin_und(int v) const { return sum([&](int, int u, int, int) { return u == v; }); }
    std::size_t margin_gender(int v) const { return sum([&](int, int, int g, int) { return g == v; }); }
    std::size_t margin_fv(int v) const { return sum([&](int, int, int, int f) { return f == v; }); }

private:
    template <class Pred>
    std::size_t sum(Pred p) const {
        std::size_t s = 0;
        for (int m = 0; m < 2; ++m)
            for (int u = 0; u < 2; ++u)
                for (int g = 0; g < 2; ++g)
                    for (int f = 0; f < 2; ++f)
                        if (p(m, u, g, f)) s += cells[m][u][g][f];
        return s;
    }
};

inline CrossTab crosstab(const RegressionFrame& frame) {
    if (frame.rows.empty()) throw DataError("crosstab: empty frame");
    CrossTab t;
    for (const auto& r : frame.rows) ++t.cells[r.med][r.und][r.gender][r.fv];
    t.n = frame.rows.size();
    return t;
}

// ---------------------------------------------------------------------------
// Correlation

inline constexpr std::array<const char*, 5> kCorrelationColumns{"FV", "Gender", "MED", "UND", "viewCount"};

struct Correlation {
    std::optional<double> r;
    std::optional<double> p;
};

struct CorrelationMatrix {
    std::array<std::array<Correlation, 5>, 5> cells{};
    std::size_t n = 0;
};

/// Two-tailed p-value of a Pearson correlation via t = r sqrt((n-2)/(1-r^2)), df = n-2.
inline double pearson_p_value(double r, std::size_t n) {
    if (std::abs(r) >= 1.0) return 0.0;
    const double df = static_cast<double>(n) - 2.0;
    const double t = r * std::sqrt(df / (1.0 - r * r));
    const boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

/// Pearson r; nullopt when either column has zero variance.
inline std::optional<double> pearson_r(std::span<const double> x, std::span<const double> z) {
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double mz = std::accumulate(z.begin(), z.end(), 0.0) / n;
    double sxz = 0, sxx = 0, szz = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxz += (x[i] - mx) * (z[i] - mz);
        sxx += (x[i] - mx) * (x[i] - mx);
        szz += (z[i] - mz) * (z[i] - mz);
    }
    if (sxx == 0.0 || szz == 0.0) return std::nullopt;
    return std::clamp(sxz / std::sqrt(sxx * szz), -1.0, 1.0);
}

inline std::array<std::vector<double>, 5> frame_columns(const RegressionFrame& frame) {
    std::array<std::vector<double>, 5> cols;
    for (const auto& r : frame.rows) {
        cols[0].push_back(r.fv);
        cols[1].push_back(r.gender);
        cols[2].push_back(r.med);
        cols[3].push_back(r.und);
        cols[4].push_back(static_cast<double>(r.view_count));
    }
    return cols;
}

inline CorrelationMatrix pearson_matrix(const RegressionFrame& frame) {
    if (frame.rows.size() < 3) throw DataError("pearson_matrix needs at least 3 rows");
    const auto cols = frame_columns(frame);
    CorrelationMatrix m;
    m.n = frame.rows.size();
    for (std::size_t a = 0; a < 5; ++a) {
        for (std::size_t b = a; b < 5; ++b) {
            Correlation c;
            if (a == b) {
                if (pearson_r(cols[a], cols[a])) c = {1.0, 0.0};
            } else if (auto r = pearson_r(cols[a], cols[b])) {
                c = {*r, pearson_p_value(*r, m.n)};
            }
            m.cells[a][b] = m.cells[b][a] = c;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Regression

struct ModelTerms {
    /// Adds MED and UND as covariates next to FV, Gender and FV:Gender.
    bool include_med_und = false;
};

enum class GlmFamily { gaussian_log_views, poisson };

struct FitResult {
    std::string method;  // "GLM" | "LASSO"
    std::vector<std::string> names;
    std::vector<double> coefficients;
    std::optional<std::vector<double>> std_errors;
    std::optional<std::vector<double>> t_values;
    std::optional<std::vector<double>> p_values;
    std::optional<std::vector<std::vector<double>>> covariance;
    std::optional<double> sigma2;
    std::size_t df_residual = 0;

    // LASSO only (coefficients on the standardized predictor scale).
    std::vector<double> lambdas;
    std::vector<std::vector<double>> path;  // path[i] = coefficients at lambdas[i]
    std::vector<double> cv_mse;
    std::optional<double> best_lambda;
    double intercept = 0.0;
    std::vector<double> means, scales;

    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::optional<double> test_mse;
    std::uint64_t seed = 0;

    std::optional<std::size_t> index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        return std::nullopt;
    }
};

/// Predictor columns (no intercept) and their names.
inline std::pair<Eigen::MatrixXd, std::vector<std::string>> predictors(const RegressionFrame& frame, const ModelTerms& terms) {
    std::vector<std::string> names{"FV", "Gender", "FV:Gender"};
    if (terms.include_med_und) {
        names.push_back("MED");
        names.push_back("UND");
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(frame.rows.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < frame.rows.size(); ++i) {
        const auto& r = frame.rows[i];
        const auto row = static_cast<Eigen::Index>(i);
        X(row, 0) = r.fv;
        X(row, 1) = r.gender;
        X(row, 2) = r.fv * r.gender;
        if (terms.include_med_und) {
            X(row, 3) = r.med;
            X(row, 4) = r.und;
        }
    }
    return {X, names};
}

inline Eigen::VectorXd response(const RegressionFrame& frame) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(frame.rows.size()));
    for (std::size_t i = 0; i < frame.rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = frame.rows[i].y;
    return y;
}

/// Ordinary least squares with classical standard errors and two-tailed t-test p-values.
/// `names` labels the columns of X (X must already include any intercept column).
inline FitResult fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::string> names) {
    const auto n = X.rows(), p = X.cols();
    if (n <= p) throw DataError("need more rows (" + std::to_string(n) + ") than parameters (" + std::to_string(p) + ")");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        // columns beyond the numerical rank in pivot order are the collinear ones
        std::string cols;
        const auto perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < p; ++k) cols += (cols.empty() ? "" : ", ") + names[static_cast<std::size_t>(perm[k])];
        throw DataError("design matrix is rank deficient; collinear column(s): " + cols);
    }
    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd resid = y - X * beta;
    const double df = static_cast<double>(n - p);
    const double sigma2 = resid.squaredNorm() / df;
    const Eigen::MatrixXd xtx_inv = (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd cov = sigma2 * xtx_inv;

    FitResult f;
    f.method = "GLM";
    f.names = std::move(names);
    f.sigma2 = sigma2;
    f.df_residual = static_cast<std::size_t>(n - p);
    std::vector<double> se, tv, pv;
    const boost::math::students_t dist(df);
    for (Eigen::Index k = 0; k < p; ++k) {
        f.coefficients.push_back(beta[k]);
        const double s = std::sqrt(std::max(0.0, cov(k, k)));
        se.push_back(s);
        if (s > 0) {
            const double t = beta[k] / s;
            tv.push_back(t);
            pv.push_back(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
        } else {
            tv.push_back(beta[k] == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), beta[k]));
            pv.push_back(beta[k] == 0.0 ? 1.0 : 0.0);
        }
    }
    f.std_errors = se;
    f.t_values = tv;
    f.p_values = pv;
    std::vector<std::vector<double>> c(static_cast<std::size_t>(p), std::vector<double>(static_cast<std::size_t>(p)));
    for (Eigen::Index a = 0; a < p; ++a)
        for (Eigen::Index b = 0; b < p; ++b) c[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = cov(a, b);
    f.covariance = c;
    f.n_train = static_cast<std::size_t>(n);
    return f;
}

/// Poisson regression with log link on the raw view counts, fitted by IRLS; Wald z p-values.
inline FitResult fit_poisson(const Eigen::MatrixXd& X, const Eigen::VectorXd& counts, std::vector<std::string> names,
                             int max_iter = 100, double tol = 1e-12) {
    const auto n = X.rows(), p = X.cols();
    if (n <= p) throw DataError("need more rows than parameters");
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    beta[0] = std::log(std::max(counts.mean(), 1e-12));
    Eigen::MatrixXd info;
    bool converged = false;
    for (int it = 0; it < max_iter && !converged; ++it) {
        const Eigen::VectorXd eta = X * beta;
        const Eigen::VectorXd mu = eta.array().exp();
        const Eigen::VectorXd z = eta.array() + (counts - mu).array() / mu.array();
        info = X.transpose() * mu.asDiagonal() * X;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success) throw DataError("Poisson IRLS: singular information matrix");
        const Eigen::VectorXd next = ldlt.solve(X.transpose() * mu.asDiagonal() * z);
        converged = (next - beta).lpNorm<Eigen::Infinity>() < tol * (1.0 + beta.lpNorm<Eigen::Infinity>());
        beta = next;
    }
    if (!converged) throw ConvergenceError("Poisson IRLS did not converge");
    const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    FitResult f;
    f.method = "GLM-Poisson";
    f.names = std::move(names);
    f.df_residual = static_cast<std::size_t>(n - p);
    std::vector<double> se, zv, pv;
    const boost::math::normal normal;
    for (Eigen::Index k = 0; k < p; ++k) {
        f.coefficients.push_back(beta[k]);
        se.push_back(std::sqrt(cov(k, k)));
        zv.push_back(beta[k] / se.back());
        pv.push_back(2.0 * boost::math::cdf(boost::math::complement(normal, std::abs(zv.back()))));
    }
    f.std_errors = se;
    f.t_values = zv;
    f.p_values = pv;
    std::vector<std::vector<double>> c(static_cast<std::size_t>(p), std::vector<double>(static_cast<std::size_t>(p)));
    for (Eigen::Index a = 0; a < p; ++a)
        for (Eigen::Index b = 0; b < p; ++b) c[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = cov(a, b);
    f.covariance = c;
    f.n_train = static_cast<std::size_t>(n);
    return f;
}

/// Views regression: y = ln(viewCount) ~ 1 + FV + Gender + FV:Gender [+ MED + UND]
/// (Gaussian, identity link), or the Poisson/log alternative on raw counts.
inline FitResult fit_glm(const RegressionFrame& frame, const ModelTerms& terms = {},
                         GlmFamily family = GlmFamily::gaussian_log_views) {
    auto [P, pnames] = predictors(frame, terms);
    Eigen::MatrixXd X(P.rows(), P.cols() + 1);
    X.col(0).setOnes();
    X.rightCols(P.cols()) = P;
    std::vector<std::string> names{"(Intercept)"};
    names.insert(names.end(), pnames.begin(), pnames.end());
    if (family == GlmFamily::poisson) {
        Eigen::VectorXd counts(P.rows());
        for (std::size_t i = 0; i < frame.rows.size(); ++i)
            counts[static_cast<Eigen::Index>(i)] = static_cast<double>(frame.rows[i].view_count);
        return fit_poisson(X, counts, std::move(names));
    }
    return fit_ols(X, response(frame), std::move(names));
}

// ---- LASSO ----------------------------------------------------------------

struct Standardized {
    Eigen::MatrixXd X;  // columns with mean 0 and (1/n) sum x^2 = 1; constant columns left at 0
    Eigen::VectorXd y;  // centered
    std::vector<double> means, scales;
    double y_mean = 0.0;
};

inline Standardized standardize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Standardized s;
    const auto n = static_cast<double>(X.rows());
    s.X = X;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double mean = X.col(j).mean();
        const double var = (X.col(j).array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        s.means.push_back(mean);
        s.scales.push_back(sd);
        if (sd > 0) s.X.col(j) = (X.col(j).array() - mean) / sd;
        else s.X.col(j).setZero();
    }
    s.y_mean = y.mean();
    s.y = y.array() - s.y_mean;
    return s;
}

struct LassoOptions {
    double tol = 1e-13;      // max coefficient change over a full sweep
    int max_sweeps = 200000;
};

/// Cyclic coordinate descent for (1/2n)|y - X b|^2 + lambda |b|_1 on standardized X and
/// centered y, warm-started from `beta`.
inline void lasso_cd(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, Eigen::VectorXd& beta,
                     const LassoOptions& opt = {}) {
    const auto n = static_cast<double>(X.rows());
    Eigen::VectorXd col_sq(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) col_sq[j] = X.col(j).squaredNorm() / n;
    Eigen::VectorXd r = y - X * beta;
    for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            if (col_sq[j] == 0.0) continue;
            const double rho = X.col(j).dot(r) / n + col_sq[j] * beta[j];
            const double soft = std::copysign(std::max(std::abs(rho) - lambda, 0.0), rho) / col_sq[j];
            const double delta = soft - beta[j];
            if (delta != 0.0) {
                r -= delta * X.col(j);
                beta[j] = soft;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        if (max_delta < opt.tol) {
            // refresh the residual to shed accumulated rounding before reporting
            r = y - X * beta;
            return;
        }
    }
    throw ConvergenceError("LASSO coordinate descent did not converge at lambda=" + std::to_string(lambda) + " within " +
                           std::to_string(opt.max_sweeps) + " sweeps");
}

/// Coefficients for each lambda (any order), warm-started along the decreasing path.
inline std::vector<Eigen::VectorXd> lasso_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                               const std::vector<double>& lambdas, const LassoOptions& opt = {}) {
    std::vector<std::size_t> order(lambdas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lambdas[a] > lambdas[b]; });
    std::vector<Eigen::VectorXd> out(lambdas.size());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    for (std::size_t k : order) {
        lasso_cd(X, y, lambdas[k], beta, opt);
        out[k] = beta;
    }
    return out;
}

/// Fold id per row from a seeded permutation: the i-th permuted row goes to fold i mod k.
inline std::vector<int> cv_fold_ids(std::size_t n, int folds, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(perm);
    std::vector<int> fold(n);
    for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    return fold;
}

/// LASSO over `lambda_grid` with k-fold cross-validated lambda choice (ties favour the
/// larger lambda). Coefficients are reported on the standardized predictor scale.
inline FitResult fit_lasso(const RegressionFrame& frame, const std::vector<double>& lambda_grid, int cv_folds,
                           std::uint64_t seed, const ModelTerms& terms = {}, const LassoOptions& opt = {}) {
    if (lambda_grid.empty()) throw UsageError("lambda grid is empty");
    for (double l : lambda_grid)
        if (!(l >= 0.0)) throw UsageError("lambda values must be >= 0");
    const std::size_t n = frame.rows.size();
    if (cv_folds < 2 || static_cast<std::size_t>(cv_folds) > n) throw UsageError("cv_folds must lie in [2, n]");
    auto [X, names] = predictors(frame, terms);
    const Eigen::VectorXd y = response(frame);

    FitResult f;
    f.method = "LASSO";
    f.names = names;
    f.lambdas = lambda_grid;
    f.seed = seed;
    f.n_train = n;

    const auto fold = cv_fold_ids(n, cv_folds, seed);
    std::vector<double> sse(lambda_grid.size(), 0.0);
    for (int k = 0; k < cv_folds; ++k) {
        std::vector<Eigen::Index> tr, te;
        for (std::size_t i = 0; i < n; ++i) (fold[i] == k ? te : tr).push_back(static_cast<Eigen::Index>(i));
        const auto s = standardize(X(tr, Eigen::all), y(tr));
        const auto path = lasso_path(s.X, s.y, lambda_grid, opt);
        for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
            for (auto i : te) {
                double pred = s.y_mean;
                for (Eigen::Index j = 0; j < X.cols(); ++j)
                    if (s.scales[static_cast<std::size_t>(j)] > 0)
                        pred += (X(i, j) - s.means[static_cast<std::size_t>(j)]) / s.scales[static_cast<std::size_t>(j)] * path[l][j];
                sse[l] += (y[i] - pred) * (y[i] - pred);
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
        f.cv_mse.push_back(sse[l] / static_cast<double>(n));
        if (f.cv_mse[l] < f.cv_mse[best] || (f.cv_mse[l] == f.cv_mse[best] && lambda_grid[l] > lambda_grid[best])) best = l;
    }
    f.best_lambda = lambda_grid[best];

    const auto s = standardize(X, y);
    const auto path = lasso_path(s.X, s.y, lambda_grid, opt);
    for (const auto& b : path) f.path.emplace_back(b.data(), b.data() + b.size());
    f.coefficients = f.path[best];
    f.intercept = s.y_mean;
    f.means = s.means;
    f.scales = s.scales;
    return f;
}

/// Predictions of a fitted model for the rows of `frame`.
inline std::vector<double> predict(const FitResult& fit, const RegressionFrame& frame, const ModelTerms& terms = {}) {
    auto [X, names] = predictors(frame, terms);
    std::vector<double> out;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double v = 0.0;
        if (fit.method == "LASSO") {
            v = fit.intercept;
            for (Eigen::Index j = 0; j < X.cols(); ++j)
                if (fit.scales[static_cast<std::size_t>(j)] > 0)
                    v += (X(i, j) - fit.means[static_cast<std::size_t>(j)]) / fit.scales[static_cast<std::size_t>(j)] *
                         fit.coefficients[static_cast<std::size_t>(j)];
        } else {
            v = fit.coefficients[0];
            for (Eigen::Index j = 0; j < X.cols(); ++j) v += X(i, j) * fit.coefficients[static_cast<std::size_t>(j + 1)];
            if (fit.method == "GLM-Poisson") v = std::exp(v);
        }
        out.push_back(v);
    }
    return out;
}

inline double mean_squared_error(const FitResult& fit, const RegressionFrame& frame, const ModelTerms& terms = {}) {
    const auto pred = predict(fit, frame, terms);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double target = fit.method == "GLM-Poisson" ? static_cast<double>(frame.rows[i].view_count) : frame.rows[i].y;
        s += (target - pred[i]) * (target - pred[i]);
    }
    return pred.empty() ? 0.0 : s / static_cast<double>(pred.size());
}

// ---- Simple slopes ----------------------------------------------------------

struct SimpleSlope {
    int gender = 0;
    double slope = 0.0;
    std::optional<double> std_error;
};

/// LASSO coefficients mapped back to the predictors' own units, with the matching
/// intercept. Constant columns get 0.
struct OriginalScale {
    double intercept = 0.0;
    std::vector<double> coefficients;
};

inline OriginalScale original_scale(const FitResult& fit) {
    if (fit.method != "LASSO") throw UsageError("original_scale applies to LASSO fits");
    OriginalScale o{fit.intercept, std::vector<double>(fit.coefficients.size(), 0.0)};
    for (std::size_t j = 0; j < fit.coefficients.size(); ++j) {
        if (fit.scales[j] <= 0) continue;
        o.coefficients[j] = fit.coefficients[j] / fit.scales[j];
        o.intercept -= fit.means[j] * o.coefficients[j];
    }
    return o;
}

/// Slope of FV at Gender = 0 (female) and Gender = 1 (male), in log-view units.
inline std::array<SimpleSlope, 2> simple_slopes(const FitResult& fit) {
    const auto fv = fit.index_of("FV");
    const auto inter = fit.index_of("FV:Gender");
    if (!fv || !inter) throw DataError("simple_slopes needs FV and FV:Gender terms in the fit");
    const auto beta = fit.method == "LASSO" ? original_scale(fit).coefficients : fit.coefficients;
    std::array<SimpleSlope, 2> out;
    for (int g = 0; g < 2; ++g) {
        out[static_cast<std::size_t>(g)].gender = g;
        out[static_cast<std::size_t>(g)].slope = beta[*fv] + g * beta[*inter];
        if (fit.covariance) {
            const auto& c = *fit.covariance;
            const double var = c[*fv][*fv] + g * g * c[*inter][*inter] + 2.0 * g * c[*fv][*inter];
            out[static_cast<std::size_t>(g)].std_error = std::sqrt(std::max(0.0, var));
        }
    }
    return out;
}

// ---- Train/test split -------------------------------------------------------

/// Seeded permutation split; the train part has ceil(fraction * n) rows. Both parts keep
/// the frame's row order.
inline std::pair<RegressionFrame, RegressionFrame> split(const RegressionFrame& frame, double train_fraction,
                                                         std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train fraction must lie in (0, 1)");
    const std::size_t n = frame.rows.size();
    const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-9));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(perm);
    std::vector<bool> in_train(n, false);
    for (std::size_t i = 0; i < n_train; ++i) in_train[perm[i]] = true;
    RegressionFrame train, test;
    train.funnel = test.funnel = frame.funnel;
    for (std::size_t i = 0; i < n; ++i) (in_train[i] ? train : test).rows.push_back(frame.rows[i]);
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Group parity and fairness-aware ranking

enum class Attribute { gender, age_bracket, fv };

inline const char* to_string(Attribute a) {
    switch (a) {
        case Attribute::gender: return "Gender";
        case Attribute::age_bracket: return "age_bracket";
        default: return "FV";
    }
}

inline Attribute parse_attribute(std::string_view s) {
    if (s == "Gender" || s == "gender") return Attribute::gender;
    if (s == "age_bracket" || s == "age") return Attribute::age_bracket;
    if (s == "FV" || s == "fv") return Attribute::fv;
    throw UsageError("unknown attribute '" + std::string(s) + "'");
}

/// Group labels of an attribute, in report order.
inline std::vector<std::string> attribute_groups(Attribute a) {
    switch (a) {
        case Attribute::gender: return {"female", "male"};
        case Attribute::fv: return {"0", "1"};
        default: return {"under20", "b20_30", "b30_40", "b40_50", "over50"};
    }
}

/// Index into attribute_groups(), or -1 when the group is unknown.
inline int group_of(const FrameRow& r, Attribute a) {
    switch (a) {
        case Attribute::gender: return r.gender;
        case Attribute::fv: return r.fv;
        default: return r.age == AgeBracket::unknown ? -1 : static_cast<int>(r.age);
    }
}

struct ParityRow {
    std::string group;
    double population_share = 0.0;
    double recommended_share = 0.0;
    std::optional<double> ratio;  // absent when the group is absent from the population
};

struct ParityReport {
    Attribute attribute = Attribute::gender;
    std::vector<ParityRow> rows;
    std::size_t population_known = 0;
    std::size_t recommended_known = 0;
};

inline ParityReport parity_report(const std::vector<std::string>& recommended, const RegressionFrame& population,
                                  Attribute attribute) {
    if (recommended.empty()) throw DataError("parity_report: empty recommendation set");
    std::unordered_map<std::string, const FrameRow*> by_id;
    for (const auto& r : population.rows) by_id.emplace(r.video_id, &r);
    const auto groups = attribute_groups(attribute);
    std::vector<std::size_t> pop(groups.size(), 0), rec(groups.size(), 0);
    ParityReport rep;
    rep.attribute = attribute;
    for (const auto& r : population.rows)
        if (int g = group_of(r, attribute); g >= 0) {
            ++pop[static_cast<std::size_t>(g)];
            ++rep.population_known;
        }
    std::set<std::string> seen;
    for (const auto& id : recommended) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("recommended id " + id + " is not in the population");
        if (!seen.insert(id).second) throw DataError("recommended id " + id + " listed twice");
        if (int g = group_of(*it->second, attribute); g >= 0) {
            ++rec[static_cast<std::size_t>(g)];
            ++rep.recommended_known;
        }
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
        ParityRow row{groups[g], 0.0, 0.0, std::nullopt};
        if (rep.population_known) row.population_share = static_cast<double>(pop[g]) / static_cast<double>(rep.population_known);
        if (rep.recommended_known) row.recommended_share = static_cast<double>(rec[g]) / static_cast<double>(rep.recommended_known);
        if (row.population_share > 0) row.ratio = row.recommended_share / row.population_share;
        rep.rows.push_back(row);
    }
    return rep;
}

struct FairnessConfig {
    Attribute attribute = Attribute::gender;
    /// Allowed relative deviation of every prefix's parity ratio from 1; infinity disables.
    double max_ratio_gap = 0.2;
};

struct CandidateScores {
    double und_score = 0.0;
    double med_score = 0.0;
};

struct Recommendation {
    std::vector<std::string> ranked;
    std::vector<std::string> base_ranking;
    /// Prefix lengths (1-based) whose parity bounds could not be met, with the cause.
    std::vector<std::pair<std::size_t, std::string>> infeasible;
    std::optional<std::string> note;
};

namespace fairness_detail {

/// Whether integer group counts with the given known-prefix size can meet every bound.
inline bool composition_exists(const std::vector<double>& shares, std::size_t known, double delta) {
    // Each group needs a count in [ceil(lo), floor(hi)]; a composition exists iff every
    // interval is non-empty and the interval sums bracket `known`.
    long lo_sum = 0, hi_sum = 0;
    for (double p : shares) {
        if (p <= 0) continue;
        const double lo = (1.0 - delta) * p * static_cast<double>(known);
        const double hi = (1.0 + delta) * p * static_cast<double>(known);
        const long l = static_cast<long>(std::ceil(lo - 1e-9));
        const long h = std::isinf(hi) ? static_cast<long>(known) : static_cast<long>(std::floor(hi + 1e-9));
        if (std::max(l, 0L) > std::min(h, static_cast<long>(known))) return false;
        lo_sum += std::max(l, 0L);
        hi_sum += std::min(h, static_cast<long>(known));
    }
    return lo_sum <= static_cast<long>(known) && static_cast<long>(known) <= hi_sum;
}

/// Sum of bound violations for the given counts (0 = all ratios within [1-delta, 1+delta]).
inline double violation(const std::vector<std::size_t>& counts, const std::vector<double>& shares, std::size_t known,
                        double delta) {
    if (known == 0) return 0.0;
    double v = 0.0;
    for (std::size_t g = 0; g < shares.size(); ++g) {
        if (shares[g] <= 0) continue;
        const double ratio = (static_cast<double>(counts[g]) / static_cast<double>(known)) / shares[g];
        if (ratio < 1.0 - delta - 1e-12) v += (1.0 - delta) - ratio;
        if (ratio > 1.0 + delta + 1e-12) v += ratio - (1.0 + delta);
    }
    return v;
}

}  // namespace fairness_detail

/// Candidates are frame rows labeled high-MED and high-UND, base-ranked by UND score,
/// MED score, then view count (descending; id ascending on ties). The greedy re-ranker
/// fills each position with the best-ranked remaining candidate that keeps the prefix's
/// parity ratios inside [1 - delta, 1 + delta]; prefixes where no choice can satisfy the
/// bounds are reported in `infeasible` and filled with the least-violating choice.
inline Recommendation recommend(const RegressionFrame& frame, const std::map<std::string, CandidateScores>& scores,
                                const FairnessConfig& config, std::size_t k) {
    if (k < 1) throw UsageError("k must be >= 1");
    if (config.max_ratio_gap < 0) throw UsageError("max_ratio_gap must be >= 0");
    Recommendation out;
    std::vector<const FrameRow*> cands;
    for (const auto& r : frame.rows)
        if (r.med == 1 && r.und == 1) cands.push_back(&r);
    if (cands.empty()) {
        out.note = "no candidates: no analyzed video is labeled high-MED and high-UND";
        return out;
    }
    auto score = [&](const FrameRow* r) {
        auto it = scores.find(r->video_id);
        return it == scores.end() ? CandidateScores{} : it->second;
    };
    std::stable_sort(cands.begin(), cands.end(), [&](const FrameRow* a, const FrameRow* b) {
        const auto sa = score(a), sb = score(b);
        if (sa.und_score != sb.und_score) return sa.und_score > sb.und_score;
        if (sa.med_score != sb.med_score) return sa.med_score > sb.med_score;
        if (a->view_count != b->view_count) return a->view_count > b->view_count;
        return a->video_id < b->video_id;
    });
    for (const auto* c : cands) out.base_ranking.push_back(c->video_id);

    const auto groups = attribute_groups(config.attribute);
    std::vector<double> shares(groups.size(), 0.0);
    {
        std::size_t known = 0;
        for (const auto& r : frame.rows)
            if (int g = group_of(r, config.attribute); g >= 0) {
                shares[static_cast<std::size_t>(g)] += 1.0;
                ++known;
            }
        for (auto& s : shares) s = known ? s / static_cast<double>(known) : 0.0;
    }
    const double delta = config.max_ratio_gap;
    std::vector<bool> used(cands.size(), false);
    std::vector<std::size_t> counts(groups.size(), 0);
    std::size_t known = 0;
    const std::size_t limit = std::min(k, cands.size());
    bool single_group = true;
    {
        int first = -2;
        for (const auto* c : cands) {
            const int g = group_of(*c, config.attribute);
            if (g < 0) continue;
            if (first == -2) first = g;
            else if (g != first) single_group = false;
        }
    }
    for (std::size_t pos = 0; pos < limit; ++pos) {
        // best-ranked remaining candidate of each group (index groups.size() = unknown group)
        std::vector<std::optional<std::size_t>> next(groups.size() + 1);
        for (std::size_t i = 0; i < cands.size(); ++i) {
            if (used[i]) continue;
            const int g = group_of(*cands[i], config.attribute);
            auto& slot = next[g < 0 ? groups.size() : static_cast<std::size_t>(g)];
            if (!slot) slot = i;
        }
        std::optional<std::size_t> pick;
        double pick_violation = std::numeric_limits<double>::infinity();
        bool feasible_found = false;
        for (std::size_t g = 0; g <= groups.size(); ++g) {
            if (!next[g]) continue;
            auto c = counts;
            std::size_t kn = known;
            if (g < groups.size()) {
                ++c[g];
                ++kn;
            }
            const double v = fairness_detail::violation(c, shares, kn, delta);
            const bool better = v < pick_violation || (v == pick_violation && *next[g] < *pick);
            if (better) {
                pick = next[g];
                pick_violation = v;
            }
            if (v == 0.0) feasible_found = true;
        }
        used[*pick] = true;
        const int g = group_of(*cands[*pick], config.attribute);
        if (g >= 0) {
            ++counts[static_cast<std::size_t>(g)];
            ++known;
        }
        out.ranked.push_back(cands[*pick]->video_id);
        if (!feasible_found) {
            const bool arithmetic = !fairness_detail::composition_exists(shares, known, delta);
            out.infeasible.emplace_back(pos + 1, arithmetic ? "no integer group composition of this prefix length meets "
                                                              "the bounds"
                                                            : "candidate pool lacks members of an under-represented group");
        }
    }
    if (single_group) out.note = "all candidates belong to one group; parity bounds cannot be met";
    return out;
}

}  // namespace vidcurate
