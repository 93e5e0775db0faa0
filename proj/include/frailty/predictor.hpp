#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "frailty/csv.hpp"
#include "frailty/error.hpp"
#include "frailty/rng.hpp"
#include "frailty/views.hpp"

namespace frailty {

// ---------------------------------------------------------------------------
// Handcrafted view features
// ---------------------------------------------------------------------------

struct FeatureVector {
    static constexpr std::size_t size = 8;

    double mean_hu_all = 0.0;
    double mean_hu_kidney = 0.0;
    double mean_hu_tumor = 0.0;
    double tumor_area_fraction = 0.0;
    double kidney_area_fraction = 0.0;
    double hu_p10 = 0.0;
    double hu_p50 = 0.0;
    double hu_p90 = 0.0;

    std::array<double, size> values() const
    {
        return {mean_hu_all, mean_hu_kidney, mean_hu_tumor, tumor_area_fraction,
                kidney_area_fraction, hu_p10, hu_p50, hu_p90};
    }

    static const std::vector<std::string>& names()
    {
        static const std::vector<std::string> n{"mean_hu_all", "mean_hu_kidney", "mean_hu_tumor", "tumor_area_fraction",
                                                "kidney_area_fraction", "hu_p10", "hu_p50", "hu_p90"};
        return n;
    }
};

/// Linear-interpolation quantile of ascending data, q in [0, 1].
inline double sorted_quantile(std::span<const double> sorted, double q)
{
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Masked means use only pixels whose mask is 1; an empty mask gives 0.
inline FeatureVector compute_view_features(const View& view)
{
    FeatureVector f;
    const std::size_t n = view.hu.size();
    if (n == 0) return f;
    double sum_all = 0.0, sum_k = 0.0, sum_t = 0.0;
    std::size_t n_k = 0, n_t = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sum_all += view.hu[i];
        if (view.kidney[i]) {
            sum_k += view.hu[i];
            ++n_k;
        }
        if (view.tumor[i]) {
            sum_t += view.hu[i];
            ++n_t;
        }
    }
    const double dn = static_cast<double>(n);
    f.mean_hu_all = sum_all / dn;
    f.mean_hu_kidney = n_k ? sum_k / static_cast<double>(n_k) : 0.0;
    f.mean_hu_tumor = n_t ? sum_t / static_cast<double>(n_t) : 0.0;
    f.tumor_area_fraction = static_cast<double>(n_t) / dn;
    f.kidney_area_fraction = static_cast<double>(n_k) / dn;

    std::vector<double> sorted(view.hu);
    std::sort(sorted.begin(), sorted.end());
    f.hu_p10 = sorted_quantile(sorted, 0.10);
    f.hu_p50 = sorted_quantile(sorted, 0.50);
    f.hu_p90 = sorted_quantile(sorted, 0.90);
    return f;
}

// ---------------------------------------------------------------------------
// Ridge baseline
// ---------------------------------------------------------------------------

/// Ridge regression on standardized columns with an unpenalized intercept.
/// Columns that are constant in the training data are dropped (coef 0).
struct BaselineModel {
    std::vector<std::string> feature_names;
    std::vector<double> center;
    std::vector<double> scale;
    std::vector<bool> kept;
    /// Coefficients on the standardized scale, one per input column.
    std::vector<double> coef;
    double intercept = 0.0;
    double ridge_lambda = 0.0;

    double predict(std::span<const double> x) const
    {
        if (x.size() != coef.size())
            throw Error(Errc::DimensionMismatch, "expected " + std::to_string(coef.size()) + " features, got " + std::to_string(x.size()));
        double y = intercept;
        for (std::size_t j = 0; j < coef.size(); ++j)
            if (kept[j]) y += coef[j] * (x[j] - center[j]) / scale[j];
        return y;
    }

    /// Weights in raw feature units; element 0 is the intercept.
    std::vector<double> raw_weights() const
    {
        std::vector<double> w(coef.size() + 1, 0.0);
        w[0] = intercept;
        for (std::size_t j = 0; j < coef.size(); ++j) {
            if (!kept[j]) continue;
            w[j + 1] = coef[j] / scale[j];
            w[0] -= coef[j] * center[j] / scale[j];
        }
        return w;
    }
};

inline void to_json(nlohmann::json& j, const BaselineModel& m)
{
    j = nlohmann::json{{"feature_names", m.feature_names}, {"center", m.center}, {"scale", m.scale},
                       {"kept", m.kept},                   {"coef", m.coef},     {"intercept", m.intercept},
                       {"ridge_lambda", m.ridge_lambda},   {"raw_weights", m.raw_weights()}};
}

inline void from_json(const nlohmann::json& j, BaselineModel& m)
{
    j.at("feature_names").get_to(m.feature_names);
    j.at("center").get_to(m.center);
    j.at("scale").get_to(m.scale);
    j.at("kept").get_to(m.kept);
    j.at("coef").get_to(m.coef);
    j.at("intercept").get_to(m.intercept);
    j.at("ridge_lambda").get_to(m.ridge_lambda);
    const auto p = m.coef.size();
    if (m.center.size() != p || m.scale.size() != p || m.kept.size() != p)
        throw Error(Errc::DimensionMismatch, "inconsistent model vectors");
}

/// Minimizes |y - b - Zw|^2 + lambda |w|^2 where Z is X standardized per
/// column (population sd), solved through a Cholesky factorization of the
/// normal equations.
inline BaselineModel fit_baseline(const Eigen::MatrixXd& features, std::span<const double> ages, double ridge_lambda,
                                  std::vector<std::string> names = {})
{
    const auto n = features.rows();
    const auto p = features.cols();
    if (static_cast<std::size_t>(n) != ages.size())
        throw Error(Errc::DimensionMismatch, std::to_string(n) + " feature rows vs " + std::to_string(ages.size()) + " ages");
    if (n < 2) throw Error(Errc::TooFewSamples, "need at least 2 samples, have " + std::to_string(n));
    if (!(ridge_lambda >= 0.0) || !std::isfinite(ridge_lambda))
        throw Error(Errc::NonFiniteInput, "ridge lambda must be finite and nonnegative");
    if (!features.allFinite()) throw Error(Errc::NonFiniteInput, "feature matrix contains non-finite values");
    for (double a : ages)
        if (!std::isfinite(a)) throw Error(Errc::NonFiniteInput, "ages contain non-finite values");

    BaselineModel m;
    m.ridge_lambda = ridge_lambda;
    if (names.empty())
        for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
    m.feature_names = std::move(names);
    m.center.assign(p, 0.0);
    m.scale.assign(p, 1.0);
    m.kept.assign(p, false);
    m.coef.assign(p, 0.0);

    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < p; ++j) {
        const double mean = features.col(j).mean();
        const double sd = std::sqrt((features.col(j).array() - mean).square().mean());
        m.center[j] = mean;
        if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
            m.scale[j] = sd;
            m.kept[j] = true;
            cols.push_back(j);
        }
    }

    const Eigen::Map<const Eigen::VectorXd> y(ages.data(), n);
    const double y_mean = y.mean();
    m.intercept = y_mean;
    if (cols.empty()) return m;

    const auto q = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd z(n, q);
    for (Eigen::Index c = 0; c < q; ++c) {
        const auto j = cols[static_cast<std::size_t>(c)];
        z.col(c) = (features.col(j).array() - m.center[j]) / m.scale[j];
    }
    Eigen::MatrixXd gram = z.transpose() * z;
    gram.diagonal().array() += ridge_lambda;
    const Eigen::VectorXd rhs = z.transpose() * (y.array() - y_mean).matrix();
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw Error(Errc::SingularSystem, "normal equations are not positive definite");
    const Eigen::VectorXd w = llt.solve(rhs);
    if (!w.allFinite()) throw Error(Errc::SingularSystem, "ridge solution is not finite");
    for (Eigen::Index c = 0; c < q; ++c) m.coef[cols[static_cast<std::size_t>(c)]] = w(c);
    return m;
}

/// Per-view features, per-view predictions, then the tumor-weighted mean.
inline double predict_age(const BaselineModel& model, const ViewSet& set)
{
    std::vector<double> preds(set.views.size(), 0.0);
    for (std::size_t i = 0; i < set.views.size(); ++i) {
        if (i < set.weights.size() && set.weights[i] == 0.0) continue;
        const auto f = compute_view_features(set.views[i]).values();
        preds[i] = model.predict(f);
    }
    return aggregate_predictions(preds, set.weights);
}

// ---------------------------------------------------------------------------
// Plugin interface
// ---------------------------------------------------------------------------

struct Case {
    std::string patient_id;
    double chronological_age = 0.0;
    ViewSet views;
};

/// Everything a predictor sees when it is trained for one CV fold.
struct TrainingContext {
    std::vector<const Case*> cases;
    std::uint64_t seed = 0;
    std::size_t repeat = 0;
    std::size_t fold = 0;
};

class AgePredictor {
public:
    virtual ~AgePredictor() = default;
    virtual double predict(const Case& c) const = 0;
};

using PredictorFactory = std::function<std::unique_ptr<AgePredictor>(const TrainingContext&)>;

struct BaselineOptions {
    std::size_t views_per_scan = 12;
    double ridge_lambda = 1.0;
};

class BaselinePredictor final : public AgePredictor {
public:
    explicit BaselinePredictor(BaselineModel model) : model_(std::move(model)) {}
    double predict(const Case& c) const override { return predict_age(model_, c.views); }
    const BaselineModel& model() const noexcept { return model_; }

private:
    BaselineModel model_;
};

/// Trains the ridge baseline on `views_per_scan` tumor-weighted view draws
/// per training case; each case's draws use a seed derived from
/// (context seed, patient id).
inline BaselineModel train_baseline(const TrainingContext& ctx, const BaselineOptions& opts)
{
    const auto rows = static_cast<Eigen::Index>(ctx.cases.size() * opts.views_per_scan);
    Eigen::MatrixXd x(rows, static_cast<Eigen::Index>(FeatureVector::size));
    std::vector<double> y;
    y.reserve(static_cast<std::size_t>(rows));
    Eigen::Index r = 0;
    for (const Case* c : ctx.cases) {
        const auto draws = sample_views(c->views, opts.views_per_scan, derive_seed(ctx.seed, fnv1a(c->patient_id)));
        for (auto idx : draws) {
            const auto f = compute_view_features(c->views.views[idx]).values();
            for (std::size_t j = 0; j < f.size(); ++j) x(r, static_cast<Eigen::Index>(j)) = f[j];
            y.push_back(c->chronological_age);
            ++r;
        }
    }
    return fit_baseline(x, y, opts.ridge_lambda, FeatureVector::names());
}

inline PredictorFactory baseline_factory(BaselineOptions opts = {})
{
    return [opts](const TrainingContext& ctx) -> std::unique_ptr<AgePredictor> {
        return std::make_unique<BaselinePredictor>(train_baseline(ctx, opts));
    };
}

// ---------------------------------------------------------------------------
// Prediction tables
// ---------------------------------------------------------------------------

struct PredictionRow {
    std::string patient_id;
    double predicted_age = 0.0;
    double chronological_age = 0.0;
};

struct PredictionTable {
    std::vector<PredictionRow> rows;
};

inline constexpr std::string_view prediction_csv_header = "patient_id,predicted_age,chronological_age";

inline void validate(const PredictionTable& t)
{
    std::set<std::string> seen;
    for (const auto& r : t.rows) {
        if (!seen.insert(r.patient_id).second) throw Error(Errc::DuplicatePatient, "patient '" + r.patient_id + "' appears twice");
        if (!std::isfinite(r.predicted_age) || !(r.predicted_age > 0.0) || !std::isfinite(r.chronological_age) ||
            !(r.chronological_age > 0.0))
            throw Error(Errc::NonNumericField, "patient '" + r.patient_id + "' has a non-positive or non-finite age");
    }
}

/// Parses predictions produced outside this project (e.g. by a CNN).
inline PredictionTable load_external_predictions(std::string_view csv_text)
{
    const auto t = csv::parse(csv_text);
    const auto idx = csv::require_columns(t, {"patient_id", "predicted_age", "chronological_age"});
    PredictionTable out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const auto line = std::to_string(t.lines[r]);
        if (row.size() < t.header.size()) throw Error(Errc::MissingColumn, "line " + line + " has too few fields");
        PredictionRow pr;
        pr.patient_id = row[idx[0]];
        if (pr.patient_id.empty()) throw Error(Errc::MissingColumn, "line " + line + " has an empty patient_id");
        const auto pred = csv::to_double(row[idx[1]]);
        const auto age = csv::to_double(row[idx[2]]);
        if (!pred) throw Error(Errc::NonNumericField, "line " + line + ": predicted_age '" + row[idx[1]] + "'");
        if (!age) throw Error(Errc::NonNumericField, "line " + line + ": chronological_age '" + row[idx[2]] + "'");
        pr.predicted_age = *pred;
        pr.chronological_age = *age;
        out.rows.push_back(std::move(pr));
    }
    validate(out);
    return out;
}

inline std::string to_csv(const PredictionTable& t)
{
    std::string out(prediction_csv_header);
    out += '\n';
    for (const auto& r : t.rows) {
        out += r.patient_id;
        out += ',';
        out += csv::format_double(r.predicted_age);
        out += ',';
        out += csv::format_double(r.chronological_age);
        out += '\n';
    }
    return out;
}

} // namespace frailty
