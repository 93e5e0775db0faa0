#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "frailty/csv.hpp"
#include "frailty/error.hpp"
#include "frailty/predictor.hpp"

namespace frailty {

/// Least-squares line of predicted age on chronological age.
struct OlsFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t n = 0;

    double operator()(double age) const noexcept { return intercept + slope * age; }
};

inline OlsFit fit_ols(std::span<const double> ages, std::span<const double> preds)
{
    if (ages.size() != preds.size())
        throw Error(Errc::LengthMismatch, std::to_string(ages.size()) + " ages vs " + std::to_string(preds.size()) + " predictions");
    if (ages.size() < 2) throw Error(Errc::TooFewSamples, "need at least 2 points for a regression line");
    const double n = static_cast<double>(ages.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < ages.size(); ++i) {
        mx += ages[i];
        my += preds[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < ages.size(); ++i) {
        const double dx = ages[i] - mx;
        sxx += dx * dx;
        sxy += dx * (preds[i] - my);
    }
    if (!(sxx > 0.0)) throw Error(Errc::DegenerateX, "chronological ages have zero variance");
    OlsFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.n = ages.size();
    return fit;
}

enum class SdConvention { population, sample };

struct DiscrepancyRow {
    std::string patient_id;
    double predicted_age = 0.0;
    double chronological_age = 0.0;
    double raw_residual = 0.0;
    double discrepancy = 0.0;
};

struct DiscrepancyVector {
    OlsFit fit;
    std::vector<DiscrepancyRow> rows;

    const DiscrepancyRow* find(std::string_view id) const
    {
        for (const auto& r : rows)
            if (r.patient_id == id) return &r;
        return nullptr;
    }
};

/// Residuals of predicted age from the regression line (not from y = x),
/// centered and scaled to unit standard deviation.
inline DiscrepancyVector compute_discrepancy(const PredictionTable& table, SdConvention sd = SdConvention::population)
{
    if (table.rows.empty()) throw Error(Errc::EmptyTable, "no predictions");
    std::vector<double> ages, preds;
    ages.reserve(table.rows.size());
    preds.reserve(table.rows.size());
    for (const auto& r : table.rows) {
        ages.push_back(r.chronological_age);
        preds.push_back(r.predicted_age);
    }
    DiscrepancyVector out;
    out.fit = fit_ols(ages, preds);

    const std::size_t n = ages.size();
    std::vector<double> raw(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        raw[i] = preds[i] - out.fit(ages[i]);
        mean += raw[i];
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double r : raw) ss += (r - mean) * (r - mean);
    const double denom = sd == SdConvention::population ? static_cast<double>(n) : static_cast<double>(n - 1);
    const double spread = std::sqrt(ss / denom);
    double scale_ref = 1.0;
    for (double p : preds) scale_ref = std::max(scale_ref, std::abs(p));
    if (!(spread >= 1e-12 * scale_ref)) throw Error(Errc::DegenerateResiduals, "residual spread is zero; predictions lie on a line");

    std::vector<double> z(n);
    double zmean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = (raw[i] - mean) / spread;
        zmean += z[i];
    }
    // one refinement pass removes the rounding left by the first centering
    zmean /= static_cast<double>(n);
    double zss = 0.0;
    for (auto& v : z) {
        v -= zmean;
        zss += v * v;
    }
    const double zsd = std::sqrt(zss / denom);
    for (auto& v : z) v /= zsd;

    out.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.rows.push_back({table.rows[i].patient_id, preds[i], ages[i], raw[i], z[i]});
    return out;
}

inline constexpr std::string_view discrepancy_csv_header =
    "patient_id,predicted_age,chronological_age,raw_residual,ai_age_discrepancy";

inline std::string to_csv(const DiscrepancyVector& d)
{
    std::string out(discrepancy_csv_header);
    out += '\n';
    for (const auto& r : d.rows) {
        out += r.patient_id + ',' + csv::format_double(r.predicted_age) + ',' + csv::format_double(r.chronological_age) + ',' +
               csv::format_double(r.raw_residual) + ',' + csv::format_double(r.discrepancy) + '\n';
    }
    return out;
}

inline DiscrepancyVector parse_discrepancy_csv(std::string_view text)
{
    const auto t = csv::parse(text);
    const auto idx = csv::require_columns(
        t, {"patient_id", "predicted_age", "chronological_age", "raw_residual", "ai_age_discrepancy"});
    DiscrepancyVector out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() < t.header.size())
            throw Error(Errc::MissingColumn, "line " + std::to_string(t.lines[r]) + " has too few fields");
        DiscrepancyRow d;
        d.patient_id = row[idx[0]];
        double* fields[] = {&d.predicted_age, &d.chronological_age, &d.raw_residual, &d.discrepancy};
        for (std::size_t c = 0; c < 4; ++c) {
            const auto v = csv::to_double(row[idx[c + 1]]);
            if (!v) throw Error(Errc::NonNumericField, "line " + std::to_string(t.lines[r]) + ": '" + row[idx[c + 1]] + "'");
            *fields[c] = *v;
        }
        out.rows.push_back(std::move(d));
    }
    std::vector<double> ages, preds;
    for (const auto& d : out.rows) {
        ages.push_back(d.chronological_age);
        preds.push_back(d.predicted_age);
    }
    if (out.rows.size() >= 2) out.fit = fit_ols(ages, preds);
    return out;
}

} // namespace frailty
