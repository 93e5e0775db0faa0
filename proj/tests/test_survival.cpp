#include <gtest/gtest.h>

#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "frailty/survival.hpp"
#include "test_support.hpp"

using namespace frailty;
using frailty::testing::brute_force_max;
using frailty::testing::fd_gradient;
using frailty::testing::naive_loglik;
using frailty::testing::random_continuous_dataset;
using frailty::testing::random_small_dataset;

namespace {

SurvivalData make(std::vector<std::vector<double>> x, std::vector<double> t, std::vector<int> e, Ties ties = Ties::efron)
{
    SurvivalData d;
    d.ties = ties;
    d.x.resize(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(x.at(0).size()));
    d.time.resize(static_cast<Eigen::Index>(t.size()));
    d.event.resize(static_cast<Eigen::Index>(e.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < x[i].size(); ++j) d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[i][j];
        d.time(static_cast<Eigen::Index>(i)) = t[i];
        d.event(static_cast<Eigen::Index>(i)) = e[i];
    }
    return d;
}

Errc code_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return Errc::IoFailure;
}

} // namespace

TEST(PartialLikelihood, ZeroBetaIsMinusSumLogRiskSetSize)
{
    const auto d = make({{0.3}, {-1}, {2}, {0.5}, {1}}, {5, 1, 3, 2, 4}, {1, 1, 0, 1, 1});
    // events at t=1 (5 at risk), 2 (4), 4 (2), 5 (1)
    const double expected = -(std::log(5.0) + std::log(4.0) + std::log(2.0) + std::log(1.0));
    EXPECT_NEAR(cox_log_partial_likelihood(d, Eigen::VectorXd::Zero(1)), expected, 1e-12);
}

TEST(PartialLikelihood, ZeroBetaWithTies)
{
    // three deaths tied at t=1 among 4 at risk
    const auto b = make({{1}, {2}, {3}, {4}}, {1, 1, 1, 2}, {1, 1, 1, 0}, Ties::breslow);
    EXPECT_NEAR(cox_log_partial_likelihood(b, Eigen::VectorXd::Zero(1)), -3.0 * std::log(4.0), 1e-12);
    auto e = b;
    e.ties = Ties::efron;
    EXPECT_NEAR(cox_log_partial_likelihood(e, Eigen::VectorXd::Zero(1)), -(std::log(4.0) + std::log(3.0) + std::log(2.0)), 1e-12);
}

TEST(PartialLikelihood, SingleSubject)
{
    const auto d = make({{1.7, -2}}, {3}, {1});
    Eigen::VectorXd beta(2);
    beta << 0.8, -1.3;
    EXPECT_NEAR(cox_log_partial_likelihood(d, beta), 0.0, 1e-14);
}

TEST(PartialLikelihood, MatchesNaiveOracle)
{
    const auto d = make({{0.5, 1}, {-1, 0}, {2, 1}, {0, 0}, {1.5, 1}, {-0.5, 0}}, {2, 2, 3, 4, 4, 6}, {1, 1, 0, 1, 1, 0});
    Eigen::VectorXd beta(2);
    beta << 0.3, -0.7;
    for (Ties t : {Ties::efron, Ties::breslow}) {
        auto dt = d;
        dt.ties = t;
        EXPECT_NEAR(cox_log_partial_likelihood(dt, beta), naive_loglik(dt, beta), 1e-10) << ties_name(t);
    }

    frailty::Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const auto r = random_small_dataset(rng, 4 + static_cast<Eigen::Index>(rng.index(12)), 3, trial % 2 ? Ties::breslow : Ties::efron);
        Eigen::VectorXd b(3);
        for (int j = 0; j < 3; ++j) b(j) = rng.normal(0, 1);
        EXPECT_NEAR(cox_log_partial_likelihood(r, b), naive_loglik(r, b), 1e-10);
    }
}

TEST(PartialLikelihood, StableForLargeLinearPredictor)
{
    const auto d = make({{400}, {390}, {380}, {0}}, {1, 2, 3, 4}, {1, 1, 1, 1});
    Eigen::VectorXd beta(1);
    beta << 2.0;
    const double ll = cox_log_partial_likelihood(d, beta);
    EXPECT_TRUE(std::isfinite(ll));
    EXPECT_LE(ll, 0.0);
}

TEST(Derivatives, MatchFiniteDifferences)
{
    frailty::Rng rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        const auto d = random_small_dataset(rng, 10, 3, trial % 2 ? Ties::breslow : Ties::efron);
        Eigen::VectorXd beta(3);
        for (int j = 0; j < 3; ++j) beta(j) = rng.normal(0, 0.5);
        const auto der = cox_gradient_hessian(d, beta);
        const auto g = fd_gradient([&](const Eigen::VectorXd& b) { return naive_loglik(d, b); }, beta, 1e-5);
        EXPECT_LT((der.gradient - g).norm() / std::max(1.0, g.norm()), 1e-6);

        Eigen::MatrixXd h(3, 3);
        for (int j = 0; j < 3; ++j)
            h.col(j) = fd_gradient([&](const Eigen::VectorXd& b) { return cox_gradient_hessian(d, b).gradient(j); }, beta, 1e-5);
        EXPECT_LT((der.hessian - h).norm() / std::max(1.0, h.norm()), 1e-6);
        EXPECT_EQ(der.hessian, der.hessian.transpose());
        // the information matrix is positive semidefinite
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(-der.hessian).eigenvalues().minCoeff(), -1e-10);
    }
}

TEST(FitCox, SymmetricTwoSubjectsGiveZero)
{
    for (Ties t : {Ties::efron, Ties::breslow}) {
        const auto d = make({{1}, {-1}}, {2, 2}, {1, 1}, t);
        const auto fit = fit_cox(d);
        EXPECT_TRUE(fit.converged);
        EXPECT_NEAR(fit.beta(0), 0.0, 1e-10);
        EXPECT_NEAR(fit_cox(make({{0}, {1}}, {2, 2}, {1, 1}, t)).beta(0), 0.0, 1e-8);
        EXPECT_NEAR(fit.hr(0), 1.0, 1e-10);
        EXPECT_NEAR(fit.p_value(0), 1.0, 1e-10);
    }
}

TEST(FitCox, Errors)
{
    EXPECT_EQ(code_of([] { fit_cox(make({{1}, {2}}, {1, 2}, {0, 0})); }), Errc::NoEvents);
    EXPECT_EQ(code_of([] { fit_cox(make({{1}, {0}, {0}}, {1, 2, 3}, {1, 0, 0})); }), Errc::MonotoneLikelihood);
    EXPECT_EQ(code_of([] { fit_cox(make({{1, 2}, {0, 0}, {3, 6}}, {1, 2, 3}, {1, 1, 0})); }), Errc::SingularInformation);
    SurvivalData bad = make({{1}, {2}}, {1, 2}, {1, 1});
    bad.time.resize(1);
    EXPECT_EQ(code_of([&] { fit_cox(bad); }), Errc::DimensionMismatch);
    bad = make({{NAN}, {2}}, {1, 2}, {1, 1});
    EXPECT_EQ(code_of([&] { fit_cox(bad); }), Errc::NonFiniteInput);
}

TEST(FitCox, IterationLimitReturnsUnconvergedResult)
{
    frailty::Rng rng(29);
    const auto d = random_continuous_dataset(rng, 50, 2, Ties::efron);
    CoxOptions opts;
    opts.max_iter = 1;
    const auto fit = fit_cox(d, opts);
    EXPECT_FALSE(fit.converged);
    EXPECT_EQ(fit.iterations, 1);
    EXPECT_TRUE(fit.beta.allFinite());
}

TEST(FitCox, SeparationInOneOfTwoCovariates)
{
    // x0 perfectly orders the event times; x1 is noise
    const auto d = make({{3, 0.2}, {2, -0.4}, {1, 0.9}, {0, -0.1}, {-1, 0.5}}, {1, 2, 3, 4, 5}, {1, 1, 1, 1, 0});
    EXPECT_EQ(code_of([&] { fit_cox(d); }), Errc::MonotoneLikelihood);
}

TEST(FitCox, MatchesBruteForceMaximum)
{
    frailty::Rng rng(23);
    int checked = 0;
    for (int trial = 0; checked < 10 && trial < 100; ++trial) {
        const auto d = random_small_dataset(rng, 8, 1, trial % 2 ? Ties::breslow : Ties::efron);
        const auto oracle = brute_force_max(d, 1e-4);
        if (!oracle.interior) continue;
        const auto fit = fit_cox(d);
        EXPECT_NEAR(fit.beta(0), oracle.beta(0), 1e-4);
        EXPECT_NEAR(fit.log_likelihood, oracle.loglik, 1e-8);
        ++checked;
    }
    EXPECT_EQ(checked, 10);
}

TEST(FitCox, InferenceFromInformation)
{
    frailty::Rng rng(24);
    const auto d = random_continuous_dataset(rng, 200, 2, Ties::efron);
    const auto fit = fit_cox(d);
    const auto der = cox_gradient_hessian(d, fit.beta);
    EXPECT_LT(der.gradient.cwiseAbs().maxCoeff(), 1e-6);
    const Eigen::MatrixXd cov = (-der.hessian).inverse();
    for (int j = 0; j < 2; ++j) {
        EXPECT_NEAR(fit.se(j), std::sqrt(cov(j, j)), 1e-9);
        EXPECT_NEAR(fit.z(j), fit.beta(j) / fit.se(j), 1e-12);
        EXPECT_NEAR(fit.hr(j), std::exp(fit.beta(j)), 1e-12);
        EXPECT_NEAR(fit.ci_low(j), std::exp(fit.beta(j) - 1.96 * fit.se(j)), 1e-12);
        EXPECT_NEAR(fit.ci_high(j), std::exp(fit.beta(j) + 1.96 * fit.se(j)), 1e-12);
        EXPECT_LE(fit.ci_low(j), fit.hr(j));
        EXPECT_LE(fit.hr(j), fit.ci_high(j));
    }
    EXPECT_EQ(fit.n, 200u);
    EXPECT_EQ(fit.events, static_cast<std::size_t>((d.event.array() != 0).count()));
}

TEST(WaldPvalue, Values)
{
    using big = boost::multiprecision::cpp_bin_float_50;
    auto oracle = [](double z) { return static_cast<double>(boost::math::erfc(big(std::abs(z)) / boost::multiprecision::sqrt(big(2)))); };
    EXPECT_EQ(wald_pvalue(0.0), 1.0);
    EXPECT_NEAR(wald_pvalue(1.959964), 0.05, 1e-4);
    EXPECT_LT(wald_pvalue(10.0), 1e-20);
    EXPECT_GT(wald_pvalue(10.0), 0.0);
    for (double z : {0.1, 0.5, 1.0, 1.959964, 2.5, -3.0, 5.0, 10.0})
        EXPECT_NEAR(wald_pvalue(z) / oracle(z), 1.0, 1e-12) << z;
    EXPECT_EQ(code_of([] { wald_pvalue(NAN); }), Errc::NonFiniteZ);
}

TEST(Invariances, ScalingSignAndTime)
{
    frailty::Rng rng(25);
    const auto d = random_continuous_dataset(rng, 120, 2, Ties::efron);
    const auto base = fit_cox(d);

    auto scaled = d;
    scaled.x.col(0) *= 4.0;
    const auto fs = fit_cox(scaled);
    EXPECT_NEAR(fs.beta(0) * 4.0, base.beta(0), 1e-8);
    EXPECT_NEAR(fs.beta(1), base.beta(1), 1e-8);
    EXPECT_NEAR(fs.log_likelihood, base.log_likelihood, 1e-8);
    EXPECT_NEAR(fs.p_value(0), base.p_value(0), 1e-8);
    EXPECT_NEAR(std::abs(fs.z(0)), std::abs(base.z(0)), 1e-8);
    EXPECT_NEAR(std::abs(fs.z(1)), std::abs(base.z(1)), 1e-8);

    auto flipped = d;
    flipped.x.col(1) *= -1.0;
    const auto ff = fit_cox(flipped);
    EXPECT_NEAR(ff.beta(1), -base.beta(1), 1e-8);
    EXPECT_NEAR(ff.hr(1) * base.hr(1), 1.0, 1e-8);
    EXPECT_NEAR(std::abs(ff.z(1)), std::abs(base.z(1)), 1e-8);
    EXPECT_NEAR(ff.p_value(1), base.p_value(1), 1e-8);

    auto shifted = d;
    shifted.x.col(0).array() += 7.5;
    EXPECT_NEAR(fit_cox(shifted).beta(0), base.beta(0), 1e-8);

    auto warped = d;
    for (Eigen::Index i = 0; i < warped.time.size(); ++i) warped.time(i) = std::log1p(warped.time(i)) * 3.0 + 1.0;
    const auto fw = fit_cox(warped);
    EXPECT_NEAR(fw.beta(0), base.beta(0), 1e-8);
    EXPECT_NEAR(fw.beta(1), base.beta(1), 1e-8);
    EXPECT_NEAR(fw.z(1), base.z(1), 1e-8);
    EXPECT_NEAR(fw.p_value(0), base.p_value(0), 1e-8);

    // row order does not matter
    auto permuted = d;
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(d.x.rows());
    perm.setIdentity();
    std::reverse(perm.indices().data(), perm.indices().data() + perm.indices().size());
    permuted.x = perm * d.x;
    permuted.time = perm * d.time;
    permuted.event = perm * d.event;
    EXPECT_NEAR(fit_cox(permuted).beta(1), base.beta(1), 1e-8);
}

TEST(Invariances, EfronEqualsBreslowWithoutTies)
{
    frailty::Rng rng(26);
    const auto d = random_continuous_dataset(rng, 80, 2, Ties::efron);
    auto b = d;
    b.ties = Ties::breslow;
    const auto fe = fit_cox(d), fb = fit_cox(b);
    EXPECT_NEAR(fe.beta(0), fb.beta(0), 1e-10);
    EXPECT_NEAR(fe.beta(1), fb.beta(1), 1e-10);
    EXPECT_NEAR(fe.log_likelihood, fb.log_likelihood, 1e-10);
}

TEST(FitCox, LikelihoodPathNonDecreasing)
{
    frailty::Rng rng(27);
    for (int trial = 0; trial < 30; ++trial) {
        const auto d = random_small_dataset(rng, 30, 2, trial % 2 ? Ties::breslow : Ties::efron, 6);
        CoxFitResult fit;
        try {
            fit = fit_cox(d);
        } catch (const Error&) {
            continue;
        }
        ASSERT_FALSE(fit.loglik_path.empty());
        EXPECT_NEAR(fit.loglik_path.front(), naive_loglik(d, Eigen::VectorXd::Zero(2)), 1e-10);
        for (std::size_t i = 1; i < fit.loglik_path.size(); ++i) EXPECT_GE(fit.loglik_path[i], fit.loglik_path[i - 1]);
        EXPECT_EQ(fit.loglik_path.back(), fit.log_likelihood);
    }
}

TEST(FitCox, JsonRoundTrip)
{
    frailty::Rng rng(28);
    const auto d = random_continuous_dataset(rng, 60, 2, Ties::breslow);
    const auto fit = fit_cox(d, {}, {"a", "b"});
    const auto back = cox_fit_from_json(nlohmann::json::parse(to_json(fit).dump()));
    EXPECT_EQ(back.names, fit.names);
    EXPECT_EQ(back.beta, fit.beta);
    EXPECT_EQ(back.se, fit.se);
    EXPECT_EQ(back.p_value, fit.p_value);
    EXPECT_EQ(back.ties, Ties::breslow);
    EXPECT_EQ(back.log_likelihood, fit.log_likelihood);
}
