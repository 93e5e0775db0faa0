#include <gtest/gtest.h>

#include <mutex>
#include <set>

#include "frailty/cv.hpp"

using namespace frailty;

namespace {

std::vector<std::string> ids(std::size_t n)
{
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("p" + std::to_string(i));
    return out;
}

std::vector<Case> cases(std::size_t n)
{
    std::vector<Case> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({"p" + std::to_string(i), 30.0 + 2.5 * static_cast<double>(i), {}});
    return out;
}

class Fixed final : public AgePredictor {
public:
    explicit Fixed(std::function<double(const Case&)> f) : f_(std::move(f)) {}
    double predict(const Case& c) const override { return f_(c); }

private:
    std::function<double(const Case&)> f_;
};

PredictorFactory fixed(std::function<double(const Case&)> f)
{
    return [f](const TrainingContext&) { return std::make_unique<Fixed>(f); };
}

} // namespace

TEST(MakeFolds, BalancedSizes)
{
    const auto plan = make_folds(ids(10), 5, 3, 42);
    for (std::size_t r = 0; r < 3; ++r) {
        std::vector<int> sizes(5, 0);
        for (auto f : plan.assignments[r]) ++sizes[f];
        for (int s : sizes) EXPECT_EQ(s, 2);
    }
    const auto uneven = make_folds(ids(13), 5, 2, 1);
    for (std::size_t r = 0; r < 2; ++r) {
        std::vector<int> sizes(5, 0);
        for (auto f : uneven.assignments[r]) ++sizes[f];
        for (int s : sizes) EXPECT_TRUE(s == 2 || s == 3);
    }
}

TEST(MakeFolds, Errors)
{
    try {
        make_folds(ids(4), 5, 1, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::TooFewPatients);
    }
    try {
        make_folds({"a", "b", "a"}, 2, 1, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::DuplicateIds);
    }
    try {
        make_folds(ids(10), 1, 1, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ConfigError);
    }
}

TEST(MakeFolds, DeterministicAndSeedSensitive)
{
    const auto a = make_folds(ids(30), 5, 4, 20230);
    const auto b = make_folds(ids(30), 5, 4, 20230);
    const auto c = make_folds(ids(30), 5, 4, 20231);
    EXPECT_EQ(a.assignments, b.assignments);
    EXPECT_NE(a.assignments, c.assignments);
    EXPECT_NE(a.assignments[0], a.assignments[1]);
}

TEST(RunCv, IdentityPredictor)
{
    const auto cs = cases(10);
    const auto plan = make_folds(ids(10), 5, 3, 7);
    const auto t = run_cv(cs, fixed([](const Case& c) { return c.chronological_age; }), plan);
    ASSERT_EQ(t.rows.size(), 10u);
    for (const auto& r : t.rows) EXPECT_EQ(r.predicted_age, r.chronological_age);
}

TEST(RunCv, ConstantPredictor)
{
    const auto cs = cases(12);
    const auto plan = make_folds(ids(12), 4, 5, 7);
    const auto t = run_cv(cs, fixed([](const Case&) { return 62.0; }), plan);
    for (const auto& r : t.rows) EXPECT_EQ(r.predicted_age, 62.0);
}

TEST(RunCv, MissingCase)
{
    auto cs = cases(10);
    cs.pop_back();
    const auto plan = make_folds(ids(10), 5, 1, 7);
    try {
        run_cv(cs, fixed([](const Case&) { return 1.0; }), plan);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::MissingCase);
    }
}

TEST(RunCv, PredictorFailureIsWrapped)
{
    const auto cs = cases(10);
    const auto plan = make_folds(ids(10), 5, 1, 7);
    PredictorFactory broken = [](const TrainingContext&) -> std::unique_ptr<AgePredictor> { throw std::runtime_error("boom"); };
    try {
        run_cv(cs, broken, plan, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::PredictorFailure);
    }
    try {
        run_cv(cs, fixed([](const Case&) { return NAN; }), plan);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::PredictorFailure);
    }
}

TEST(RunCv, EveryPatientHeldOutOncePerRepeat)
{
    const std::size_t n = 23, k = 5, repeats = 4;
    const auto cs = cases(n);
    const auto plan = make_folds(ids(n), k, repeats, 99);

    struct Call {
        std::size_t repeat, fold;
        std::set<std::string> train;
    };
    std::mutex mu;
    std::vector<Call> calls;
    std::map<std::pair<std::size_t, std::string>, int> predicted;

    class Spy final : public AgePredictor {
    public:
        Spy(std::mutex& mu, std::map<std::pair<std::size_t, std::string>, int>& seen, std::size_t repeat, std::set<std::string> train)
            : mu_(mu), seen_(seen), repeat_(repeat), train_(std::move(train))
        {
        }
        double predict(const Case& c) const override
        {
            EXPECT_EQ(train_.count(c.patient_id), 0u) << "held-out patient in training set";
            std::lock_guard lock(mu_);
            ++seen_[{repeat_, c.patient_id}];
            return c.chronological_age;
        }

    private:
        std::mutex& mu_;
        std::map<std::pair<std::size_t, std::string>, int>& seen_;
        std::size_t repeat_;
        std::set<std::string> train_;
    };

    PredictorFactory factory = [&](const TrainingContext& ctx) {
        std::set<std::string> train;
        for (const Case* c : ctx.cases) train.insert(c->patient_id);
        EXPECT_EQ(train.size(), ctx.cases.size());
        EXPECT_EQ(ctx.seed, plan.repeat_seed(ctx.repeat));
        std::lock_guard lock(mu);
        calls.push_back({ctx.repeat, ctx.fold, train});
        return std::make_unique<Spy>(mu, predicted, ctx.repeat, train);
    };
    run_cv(cs, factory, plan, 4);

    EXPECT_EQ(calls.size(), k * repeats);
    EXPECT_EQ(predicted.size(), n * repeats);
    for (const auto& [key, count] : predicted) EXPECT_EQ(count, 1);
    for (const auto& call : calls) {
        for (std::size_t i = 0; i < n; ++i) {
            const bool in_fold = plan.assignments[call.repeat][i] == call.fold;
            EXPECT_EQ(call.train.count(plan.patient_ids[i]) == 0, in_fold);
        }
    }
}

TEST(RunCv, RepeatMeanWithinPerRepeatRange)
{
    const auto cs = cases(15);
    const auto plan = make_folds(ids(15), 3, 5, 5);
    PredictorFactory factory = [](const TrainingContext& ctx) {
        const double offset = 0.1 * static_cast<double>(ctx.repeat * 7 + ctx.fold);
        return std::make_unique<Fixed>([offset](const Case& c) { return c.chronological_age + offset; });
    };
    const auto res = run_cv_detailed(cs, factory, plan);
    for (std::size_t i = 0; i < 15; ++i) {
        const auto& v = res.per_repeat[i];
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        EXPECT_GE(res.table.rows[i].predicted_age, *lo);
        EXPECT_LE(res.table.rows[i].predicted_age, *hi);
        double sum = 0;
        for (double x : v) sum += x;
        EXPECT_NEAR(res.table.rows[i].predicted_age, sum / 5.0, 1e-12);
    }
}

TEST(RunCv, BaselineIndependentOfThreadCount)
{
    // small synthetic view sets so the baseline trains quickly
    std::vector<Case> cs;
    for (std::size_t i = 0; i < 12; ++i) {
        Case c;
        c.patient_id = "p" + std::to_string(i);
        c.chronological_age = 40.0 + 3.0 * static_cast<double>(i);
        for (int v = 0; v < 3; ++v) {
            View view;
            view.width = 3;
            view.height = 2;
            for (int px = 0; px < 6; ++px) {
                view.hu.push_back(static_cast<double>(i) * 5.0 + v * 11.0 + px);
                view.tumor.push_back(px < v + 1);
                view.kidney.push_back(px == 5);
            }
            view.tumor_voxels = static_cast<std::size_t>(v + 1);
            c.views.views.push_back(view);
        }
        c.views.weights = tumor_fraction_weights(std::span<const View>(c.views.views));
        cs.push_back(std::move(c));
    }
    const auto plan = make_folds(ids(12), 4, 3, 11);
    const auto one = run_cv(cs, baseline_factory({4, 1.0}), plan, 1);
    const auto many = run_cv(cs, baseline_factory({4, 1.0}), plan, 5);
    ASSERT_EQ(one.rows.size(), many.rows.size());
    for (std::size_t i = 0; i < one.rows.size(); ++i) EXPECT_EQ(one.rows[i].predicted_age, many.rows[i].predicted_age);
    EXPECT_EQ(to_csv(one), to_csv(many));
}
