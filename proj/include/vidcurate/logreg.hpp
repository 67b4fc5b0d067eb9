#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "features.hpp"
#include "format.hpp"

namespace vidcurate {

struct LogRegModel {
    std::vector<double> weights;
    double bias = 0.0;
    double l2_lambda = 0.0;

    // Fit diagnostics; not part of the decision function.
    bool converged = false;
    int iterations = 0;
    double gradient_sup_norm = 0.0;
    std::vector<double> objective_trace;  // objective after each accepted iteration

    std::size_t dimension() const { return weights.size(); }
};

struct LogRegOptions {
    double l2_lambda = 1e-2;
    double tol = 1e-8;
    int max_iter = 100;
};

namespace logreg {

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Dense design matrix with a trailing all-ones column for the bias.
inline Eigen::MatrixXd design(std::span<const FeatureVector> X, std::size_t dim) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(X.size()), static_cast<Eigen::Index>(dim + 1));
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (X[i].dimension() != dim) throw DataError("inconsistent feature dimensions in training data");
        for (const auto& [j, w] : X[i].entries()) A(static_cast<Eigen::Index>(i), j) = w;
        A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(dim)) = 1.0;
    }
    return A;
}

/// Mean negative log-likelihood plus (lambda/2)|w|^2; the bias (last entry of theta) is unpenalized.
inline double objective(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, double lambda, const Eigen::VectorXd& theta) {
    const Eigen::VectorXd z = A * theta;
    double nll = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) nll += softplus(z[i]) - y[i] * z[i];
    const auto d = theta.size() - 1;
    return nll / static_cast<double>(A.rows()) + 0.5 * lambda * theta.head(d).squaredNorm();
}

inline Eigen::VectorXd gradient(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, double lambda,
                                const Eigen::VectorXd& theta) {
    Eigen::VectorXd r = A * theta;
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = sigmoid(r[i]) - y[i];
    Eigen::VectorXd g = A.transpose() * r / static_cast<double>(A.rows());
    const auto d = theta.size() - 1;
    g.head(d) += lambda * theta.head(d);
    return g;
}

inline Eigen::MatrixXd hessian(const Eigen::MatrixXd& A, double lambda, const Eigen::VectorXd& theta) {
    const Eigen::VectorXd z = A * theta;
    Eigen::VectorXd w(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double p = sigmoid(z[i]);
        w[i] = p * (1.0 - p);
    }
    Eigen::MatrixXd H = A.transpose() * w.asDiagonal() * A / static_cast<double>(A.rows());
    const auto d = theta.size() - 1;
    H.diagonal().head(d).array() += lambda;
    return H;
}

inline void check_training_set(std::span<const FeatureVector> X, std::span<const int> y) {
    if (X.size() != y.size()) throw UsageError("feature and label counts differ");
    if (X.size() < 2) throw DataError("need at least two training examples");
    bool has0 = false, has1 = false;
    for (int v : y) {
        if (v != 0 && v != 1) throw UsageError("labels must be 0 or 1");
        (v ? has1 : has0) = true;
    }
    if (!(has0 && has1)) throw DataError("degenerate labels: training set has a single class");
}

}  // namespace logreg

/// L2-regularized logistic regression by damped Newton (gradient step when the Hessian
/// is not positive definite), with Armijo backtracking so the objective never increases.
inline LogRegModel fit_logreg(std::span<const FeatureVector> X, std::span<const int> y, const LogRegOptions& opt = {}) {
    logreg::check_training_set(X, y);
    if (opt.l2_lambda < 0) throw UsageError("l2_lambda must be >= 0");
    const std::size_t dim = X.front().dimension();
    const Eigen::MatrixXd A = logreg::design(X, dim);
    Eigen::VectorXd yy(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) yy[static_cast<Eigen::Index>(i)] = y[i];

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim + 1));
    double f = logreg::objective(A, yy, opt.l2_lambda, theta);
    Eigen::VectorXd g = logreg::gradient(A, yy, opt.l2_lambda, theta);

    LogRegModel model;
    model.l2_lambda = opt.l2_lambda;
    model.objective_trace.push_back(f);
    int it = 0;
    for (; it < opt.max_iter && g.lpNorm<Eigen::Infinity>() > opt.tol; ++it) {
        Eigen::VectorXd step;
        Eigen::LLT<Eigen::MatrixXd> llt(logreg::hessian(A, opt.l2_lambda, theta));
        if (llt.info() == Eigen::Success) step = -llt.solve(g);
        if (step.size() == 0 || !step.allFinite() || step.dot(g) >= 0) step = -g;

        const double slope = step.dot(g);
        // Near the optimum the predicted decrease drops below what f can resolve and Armijo
        // stalls on rounding noise; there the full step is judged by the gradient instead.
        if (-slope <= 1e-13 * std::max(1.0, std::abs(f))) {
            const Eigen::VectorXd cand = theta + step;
            const Eigen::VectorXd gc = logreg::gradient(A, yy, opt.l2_lambda, cand);
            if (gc.lpNorm<Eigen::Infinity>() < g.lpNorm<Eigen::Infinity>()) {
                theta = cand;
                f = logreg::objective(A, yy, opt.l2_lambda, theta);
                g = gc;
                model.objective_trace.push_back(f);
                continue;
            }
        }
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            const Eigen::VectorXd cand = theta + t * step;
            const double fc = logreg::objective(A, yy, opt.l2_lambda, cand);
            if (fc <= f + 1e-4 * t * slope) {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;  // no representable decrease left
        g = logreg::gradient(A, yy, opt.l2_lambda, theta);
        model.objective_trace.push_back(f);
    }
    model.iterations = it;
    model.gradient_sup_norm = g.lpNorm<Eigen::Infinity>();
    model.converged = model.gradient_sup_norm <= opt.tol;
    model.weights.assign(theta.data(), theta.data() + dim);
    model.bias = theta[static_cast<Eigen::Index>(dim)];
    return model;
}

inline LogRegModel fit_logreg(const std::vector<FeatureVector>& X, const std::vector<int>& y,
                              const LogRegOptions& opt = {}) {
    return fit_logreg(std::span<const FeatureVector>(X), std::span<const int>(y), opt);
}

inline double predict_proba_logreg(const LogRegModel& model, const FeatureVector& x) {
    if (x.dimension() != model.dimension())
        throw UsageError("feature dimension " + std::to_string(x.dimension()) + " does not match model dimension " +
                         std::to_string(model.dimension()));
    return logreg::sigmoid(x.dot(model.weights) + model.bias);
}

// ---------------------------------------------------------------------------
// Serialization: "vidcurate-logreg 1" header, then key/value lines; doubles use the
// shortest round-trip representation so write/read is bit-exact.

namespace detail {

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw DataError("bad number '" + s + "'");
    return v;
}

inline void expect_word(std::istream& in, const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) throw DataError("model file: expected '" + word + "', got '" + got + "'");
}

inline double read_double(std::istream& in) {
    std::string s;
    if (!(in >> s)) throw DataError("model file: truncated");
    return parse_double(s);
}

}  // namespace detail

inline void write_logreg(std::ostream& out, const LogRegModel& m) {
    out << "vidcurate-logreg 1\n";
    out << "dimension " << m.dimension() << '\n';
    out << "l2_lambda " << fmt_exact(m.l2_lambda) << '\n';
    out << "bias " << fmt_exact(m.bias) << '\n';
    out << "weights\n";
    for (double w : m.weights) out << fmt_exact(w) << '\n';
}

inline LogRegModel read_logreg(std::istream& in) {
    detail::expect_word(in, "vidcurate-logreg");
    int version = 0;
    if (!(in >> version) || version != 1) throw DataError("unsupported logreg model version");
    LogRegModel m;
    detail::expect_word(in, "dimension");
    std::size_t dim = 0;
    if (!(in >> dim)) throw DataError("model file: bad dimension");
    detail::expect_word(in, "l2_lambda");
    m.l2_lambda = detail::read_double(in);
    detail::expect_word(in, "bias");
    m.bias = detail::read_double(in);
    detail::expect_word(in, "weights");
    m.weights.resize(dim);
    for (auto& w : m.weights) w = detail::read_double(in);
    m.converged = true;
    return m;
}

inline std::string serialize(const LogRegModel& m) {
    std::ostringstream os;
    write_logreg(os, m);
    return os.str();
}

}  // namespace vidcurate
