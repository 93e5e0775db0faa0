#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "frailty/error.hpp"

namespace frailty {

enum class Ties { efron, breslow };

constexpr std::string_view ties_name(Ties t) noexcept { return t == Ties::efron ? "efron" : "breslow"; }

inline Ties parse_ties(std::string_view s)
{
    if (s == "efron") return Ties::efron;
    if (s == "breslow") return Ties::breslow;
    throw Error(Errc::ConfigError, "ties must be 'efron' or 'breslow', got '" + std::string(s) + "'");
}

struct SurvivalData {
    Eigen::MatrixXd x;
    Eigen::VectorXd time;
    Eigen::VectorXi event;
    Ties ties = Ties::efron;
};

namespace detail {

/// Subjects sorted by descending time, grouped by exactly equal times.
struct RiskOrder {
    std::vector<Eigen::Index> order;
    /// [begin, end) ranges into `order`.
    std::vector<std::pair<std::size_t, std::size_t>> groups;
};

inline RiskOrder risk_order(const Eigen::VectorXd& time)
{
    RiskOrder r;
    r.order.resize(static_cast<std::size_t>(time.size()));
    std::iota(r.order.begin(), r.order.end(), Eigen::Index{0});
    std::stable_sort(r.order.begin(), r.order.end(), [&](Eigen::Index a, Eigen::Index b) { return time(a) > time(b); });
    std::size_t begin = 0;
    while (begin < r.order.size()) {
        std::size_t end = begin + 1;
        while (end < r.order.size() && time(r.order[end]) == time(r.order[begin])) ++end;
        r.groups.emplace_back(begin, end);
        begin = end;
    }
    return r;
}

inline void check_data(const SurvivalData& d, const Eigen::VectorXd& beta)
{
    const auto n = d.x.rows();
    if (d.time.size() != n || d.event.size() != n)
        throw Error(Errc::DimensionMismatch, "x has " + std::to_string(n) + " rows, time " + std::to_string(d.time.size()) +
                                                 ", event " + std::to_string(d.event.size()));
    if (beta.size() != d.x.cols())
        throw Error(Errc::DimensionMismatch, "beta has " + std::to_string(beta.size()) + " entries for " +
                                                 std::to_string(d.x.cols()) + " covariates");
    if (!d.x.allFinite() || !d.time.allFinite()) throw Error(Errc::NonFiniteInput, "survival data has non-finite entries");
    if ((d.event.array() != 0).count() == 0) throw Error(Errc::NoEvents, "no observed events");
}

struct CoxEval {
    double loglik = 0.0;
    Eigen::VectorXd gradient;
    /// Observed information, the negated Hessian.
    Eigen::MatrixXd information;
};

/// One descending-time sweep accumulating the risk-set sums. Breslow is the
/// Efron recursion with the tie fraction held at zero, so the two agree
/// exactly whenever there are no tied event times.
inline CoxEval cox_evaluate(const SurvivalData& d, const Eigen::VectorXd& beta, bool derivatives)
{
    check_data(d, beta);
    const auto p = d.x.cols();
    const Eigen::VectorXd eta = d.x * beta;
    const double shift = eta.maxCoeff();
    const Eigen::VectorXd w = (eta.array() - shift).exp();
    const auto ro = risk_order(d.time);

    CoxEval out;
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
    if (derivatives) {
        out.gradient = Eigen::VectorXd::Zero(p);
        out.information = Eigen::MatrixXd::Zero(p, p);
    }
    Eigen::VectorXd a1(p), mean(p);
    Eigen::MatrixXd a2(p, p);

    for (const auto& [begin, end] : ro.groups) {
        double a0 = 0.0;
        int deaths = 0;
        a1.setZero();
        if (derivatives) a2.setZero();
        for (std::size_t k = begin; k < end; ++k) {
            const auto i = ro.order[k];
            const auto xi = d.x.row(i).transpose();
            s0 += w(i);
            if (derivatives) {
                s1.noalias() += w(i) * xi;
                s2.selfadjointView<Eigen::Upper>().rankUpdate(xi, w(i));
            }
            if (d.event(i) == 0) continue;
            ++deaths;
            a0 += w(i);
            out.loglik += eta(i);
            if (derivatives) {
                a1.noalias() += w(i) * xi;
                a2.selfadjointView<Eigen::Upper>().rankUpdate(xi, w(i));
                out.gradient += xi;
            }
        }
        if (deaths == 0) continue;
        for (int l = 0; l < deaths; ++l) {
            const double frac = d.ties == Ties::efron ? static_cast<double>(l) / deaths : 0.0;
            const double denom = s0 - frac * a0;
            out.loglik -= std::log(denom) + shift;
            if (!derivatives) continue;
            mean = (s1 - frac * a1) / denom;
            out.gradient -= mean;
            out.information.triangularView<Eigen::Upper>() += (s2 - frac * a2) / denom;
            out.information.selfadjointView<Eigen::Upper>().rankUpdate(mean, -1.0);
        }
    }
    if (derivatives) out.information.triangularView<Eigen::StrictlyLower>() = out.information.transpose();
    return out;
}

} // namespace detail

/// Log partial likelihood at `beta` under the data's tie method.
inline double cox_log_partial_likelihood(const SurvivalData& data, const Eigen::VectorXd& beta)
{
    return detail::cox_evaluate(data, beta, false).loglik;
}

struct CoxDerivatives {
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

inline CoxDerivatives cox_gradient_hessian(const SurvivalData& data, const Eigen::VectorXd& beta)
{
    auto e = detail::cox_evaluate(data, beta, true);
    return {std::move(e.gradient), -e.information};
}

/// Two-sided Wald p-value, 2 * (1 - Phi(|z|)), clamped into (0, 1].
inline double wald_pvalue(double z)
{
    if (!std::isfinite(z)) throw Error(Errc::NonFiniteZ, "z statistic is not finite");
    const double p = std::erfc(std::abs(z) / std::numbers::sqrt2);
    return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

struct CoxOptions {
    int max_iter = 50;
    double tol_step = 1e-7;
    double tol_loglik = 1e-9;
    /// Normal quantile for the confidence interval.
    double ci_multiplier = 1.96;
    /// |beta| above this during iteration means the likelihood has no
    /// finite maximum.
    double beta_limit = 50.0;
};

struct CoxFitResult {
    std::vector<std::string> names;
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    Eigen::VectorXd z;
    Eigen::VectorXd hr;
    Eigen::VectorXd ci_low;
    Eigen::VectorXd ci_high;
    Eigen::VectorXd p_value;
    double log_likelihood = 0.0;
    /// Log partial likelihood of every accepted iterate, starting at beta = 0.
    std::vector<double> loglik_path;
    int iterations = 0;
    bool converged = false;
    Ties ties = Ties::efron;
    std::size_t n = 0;
    std::size_t events = 0;
};

namespace detail {

inline Eigen::LDLT<Eigen::MatrixXd> factor_information(const Eigen::MatrixXd& info)
{
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) throw Error(Errc::SingularInformation, "information matrix factorization failed");
    const Eigen::VectorXd diag = ldlt.vectorD();
    const double largest = diag.cwiseAbs().maxCoeff();
    if (!(diag.minCoeff() > 1e-12 * largest) || !(largest > 0.0))
        throw Error(Errc::SingularInformation, "information matrix is singular (collinear or constant covariates)");
    return ldlt;
}

} // namespace detail

/// Newton-Raphson from beta = 0, halving any step that lowers the log
/// partial likelihood. Wald inference from the observed information at the
/// final estimate.
inline CoxFitResult fit_cox(const SurvivalData& data, const CoxOptions& opts = {}, std::vector<std::string> names = {})
{
    const auto n = data.x.rows();
    const auto p = data.x.cols();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    detail::check_data(data, beta);
    if (n <= p) throw Error(Errc::SingularInformation, std::to_string(n) + " subjects for " + std::to_string(p) + " covariates");
    if (!names.empty() && names.size() != static_cast<std::size_t>(p))
        throw Error(Errc::LabelMismatch, std::to_string(names.size()) + " names for " + std::to_string(p) + " covariates");
    for (Eigen::Index j = 0; j < p; ++j) {
        const auto col = data.x.col(j);
        if (col.maxCoeff() == col.minCoeff())
            throw Error(Errc::SingularInformation,
                        "covariate " + (names.empty() ? std::to_string(j) : "'" + names[static_cast<std::size_t>(j)] + "'") +
                            " is constant");
    }

    CoxFitResult res;
    res.names = std::move(names);
    res.ties = data.ties;
    res.n = static_cast<std::size_t>(n);
    res.events = static_cast<std::size_t>((data.event.array() != 0).count());

    auto current = detail::cox_evaluate(data, beta, true);
    res.loglik_path.push_back(current.loglik);
    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        res.iterations = iter;
        const auto ldlt = detail::factor_information(current.information);
        Eigen::VectorXd step = ldlt.solve(current.gradient);
        Eigen::VectorXd candidate = beta + step;
        double cand_ll = detail::cox_evaluate(data, candidate, false).loglik;
        int halvings = 0;
        while (!(cand_ll >= current.loglik) && halvings < 60) {
            step *= 0.5;
            candidate = beta + step;
            cand_ll = detail::cox_evaluate(data, candidate, false).loglik;
            ++halvings;
        }
        if (!(cand_ll >= current.loglik)) {
            // no ascent possible along the Newton direction: at the maximum to machine precision
            res.converged = true;
            break;
        }
        const double delta_ll = cand_ll - current.loglik;
        beta = candidate;
        if (beta.cwiseAbs().maxCoeff() > opts.beta_limit)
            throw Error(Errc::MonotoneLikelihood,
                        "|beta| exceeded " + std::to_string(opts.beta_limit) + " (likelihood increases without bound)");
        current = detail::cox_evaluate(data, beta, true);
        res.loglik_path.push_back(current.loglik);

        const double step_size = step.cwiseAbs().maxCoeff();
        if (step_size < opts.tol_step || std::abs(delta_ll) < opts.tol_loglik) {
            res.converged = true;
            break;
        }
    }
    // Exhausted iterations leave converged == false; callers decide what to do.

    const auto ldlt = detail::factor_information(current.information);
    // Near an interior maximum the remaining Newton step is quadratically
    // small. A step that stays O(1) while the likelihood has gone flat means
    // some coefficient is running off to infinity.
    const Eigen::VectorXd remaining = ldlt.solve(current.gradient);
    const double flat_tol = std::sqrt(opts.tol_loglik);
    for (Eigen::Index j = 0; j < p && res.converged; ++j) {
        if (std::abs(remaining(j)) > flat_tol * std::max(1.0, std::abs(beta(j))))
            throw Error(Errc::MonotoneLikelihood, "coefficient " + std::to_string(j) + " = " + std::to_string(beta(j)) +
                                                      " still moving by " + std::to_string(remaining(j)) +
                                                      " on a flat likelihood (likelihood increases without bound)");
    }
    const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    res.beta = beta;
    res.log_likelihood = current.loglik;
    res.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    res.z.resize(p);
    res.hr.resize(p);
    res.ci_low.resize(p);
    res.ci_high.resize(p);
    res.p_value.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        res.z(j) = beta(j) / res.se(j);
        res.hr(j) = std::exp(beta(j));
        res.ci_low(j) = std::exp(beta(j) - opts.ci_multiplier * res.se(j));
        res.ci_high(j) = std::exp(beta(j) + opts.ci_multiplier * res.se(j));
        res.p_value(j) = wald_pvalue(res.z(j));
    }
    return res;
}

inline nlohmann::json to_json(const CoxFitResult& r)
{
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return nlohmann::json{{"names", r.names},
                          {"beta", vec(r.beta)},
                          {"se", vec(r.se)},
                          {"z", vec(r.z)},
                          {"hr", vec(r.hr)},
                          {"ci_low", vec(r.ci_low)},
                          {"ci_high", vec(r.ci_high)},
                          {"p_value", vec(r.p_value)},
                          {"log_likelihood", r.log_likelihood},
                          {"iterations", r.iterations},
                          {"converged", r.converged},
                          {"ties", ties_name(r.ties)},
                          {"n", r.n},
                          {"events", r.events}};
}

inline CoxFitResult cox_fit_from_json(const nlohmann::json& j)
{
    auto vec = [&](const char* key) {
        const auto v = j.at(key).get<std::vector<double>>();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    CoxFitResult r;
    r.names = j.at("names").get<std::vector<std::string>>();
    r.beta = vec("beta");
    r.se = vec("se");
    r.z = vec("z");
    r.hr = vec("hr");
    r.ci_low = vec("ci_low");
    r.ci_high = vec("ci_high");
    r.p_value = vec("p_value");
    r.log_likelihood = j.at("log_likelihood").get<double>();
    r.iterations = j.at("iterations").get<int>();
    r.converged = j.at("converged").get<bool>();
    r.ties = parse_ties(j.at("ties").get<std::string>());
    r.n = j.value("n", std::size_t{0});
    r.events = j.value("events", std::size_t{0});
    const auto p = r.beta.size();
    if (r.se.size() != p || r.hr.size() != p || r.ci_low.size() != p || r.ci_high.size() != p || r.p_value.size() != p)
        throw Error(Errc::DimensionMismatch, "inconsistent coefficient vectors in fit JSON");
    return r;
}

} // namespace frailty
