#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "frailty/discrepancy.hpp"
#include "frailty/error.hpp"
#include "frailty/predictor.hpp"
#include "frailty/survival.hpp"

namespace frailty {

/// Fixed-point text with `decimals` places, "." separator, independent of the
/// global locale. Exact binary ties round half to even.
inline std::string format_fixed(double v, int decimals)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, decimals);
    std::string s(buf, ptr);
    if (s.starts_with('-') && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

inline std::string format_p_value(double p) { return p < 0.001 ? "<0.001" : format_fixed(p, 3); }

/// "hr & (lo - hi) & p", each to three decimals.
inline std::string format_hr_row(double hr, double ci_low, double ci_high, double p)
{
    return format_fixed(hr, 3) + " & (" + format_fixed(ci_low, 3) + " - " + format_fixed(ci_high, 3) + ") & " + format_p_value(p);
}

struct HrTableRow {
    std::string label;
    std::string hr;
    std::string ci;
    std::string p_value;
    bool significant = false;
};

struct HrTable {
    std::vector<HrTableRow> rows;
    std::string csv;
    std::string text;
};

inline HrTable render_hr_table(const CoxFitResult& result, const std::vector<std::string>& labels)
{
    const auto p = static_cast<std::size_t>(result.beta.size());
    if (labels.size() != p)
        throw Error(Errc::LabelMismatch, std::to_string(labels.size()) + " labels for " + std::to_string(p) + " coefficients");

    HrTable t;
    std::size_t label_width = std::string_view("Variable").size();
    for (std::size_t j = 0; j < p; ++j) {
        const auto i = static_cast<Eigen::Index>(j);
        HrTableRow row;
        row.label = labels[j];
        row.hr = format_fixed(result.hr(i), 3);
        row.ci = "(" + format_fixed(result.ci_low(i), 3) + " - " + format_fixed(result.ci_high(i), 3) + ")";
        row.p_value = format_p_value(result.p_value(i));
        row.significant = result.p_value(i) < 0.05;
        label_width = std::max(label_width, row.label.size());
        t.rows.push_back(std::move(row));
    }

    t.csv = "variable,hazard_ratio,ci_95,p_value,significant\n";
    for (const auto& r : t.rows)
        t.csv += r.label + ',' + r.hr + ',' + r.ci + ',' + r.p_value + ',' + (r.significant ? "1" : "0") + '\n';

    auto pad = [&](const std::string& s) { return s + std::string(label_width - s.size(), ' '); };
    t.text = pad("Variable") + " & Hazard Ratio & 95% CI & p-value\n";
    for (const auto& r : t.rows)
        t.text += pad(r.label) + " & " + r.hr + " & " + r.ci + " & " + r.p_value + (r.significant ? " *" : "") + '\n';
    return t;
}

struct ForestRow {
    std::string label;
    double hr = 1.0;
    double ci_low = 1.0;
    double ci_high = 1.0;
    double p_value = 1.0;
    bool significant = false;
};

inline std::vector<ForestRow> forest_rows(const CoxFitResult& result, const std::vector<std::string>& labels)
{
    const auto p = static_cast<std::size_t>(result.beta.size());
    if (labels.size() != p)
        throw Error(Errc::LabelMismatch, std::to_string(labels.size()) + " labels for " + std::to_string(p) + " coefficients");
    std::vector<ForestRow> rows;
    for (std::size_t j = 0; j < p; ++j) {
        const auto i = static_cast<Eigen::Index>(j);
        rows.push_back({labels[j], result.hr(i), result.ci_low(i), result.ci_high(i), result.p_value(i), result.p_value(i) < 0.05});
    }
    return rows;
}

namespace svg {

inline std::string escape(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string num(double v) { return format_fixed(v, 2); }

/// Linear map from a data interval onto a pixel interval.
struct Scale {
    double d0, d1, p0, p1;
    double operator()(double v) const { return p0 + (v - d0) / (d1 - d0) * (p1 - p0); }
};

inline std::pair<double, double> padded(double lo, double hi)
{
    if (hi - lo < 1e-9) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

inline std::string header(int width, int height)
{
    const auto w = std::to_string(width);
    const auto h = std::to_string(height);
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
           "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + w + "\" height=\"" + h + "\" viewBox=\"0 0 " + w + " " + h +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n";
}

} // namespace svg

enum class ForestAxis { log_hr };

/// Forest plot on the log(HR) axis: a marker at log(hr), a whisker over the
/// log CI, and a reference line at 0.
inline std::string render_forest_plot(const std::vector<ForestRow>& rows, ForestAxis = ForestAxis::log_hr,
                                      std::string_view title = {})
{
    if (rows.empty()) throw Error(Errc::EmptyRows, "forest plot needs at least one row");
    double lo = 0.0, hi = 0.0;
    for (const auto& r : rows) {
        if (!(r.hr > 0.0) || !(r.ci_low > 0.0) || !(r.ci_high > 0.0) || !std::isfinite(r.hr) || !std::isfinite(r.ci_low) ||
            !std::isfinite(r.ci_high))
            throw Error(Errc::NonPositiveHR, "row '" + r.label + "' has a non-positive hazard ratio or interval bound");
        lo = std::min({lo, std::log(r.ci_low), std::log(r.hr)});
        hi = std::max({hi, std::log(r.ci_high), std::log(r.hr)});
    }
    const auto [d0, d1] = svg::padded(lo, hi);
    const int width = 800;
    const int height = 40 * static_cast<int>(rows.size()) + 80;
    const svg::Scale x{d0, d1, 300.0, 770.0};
    const double top = 40.0;
    const double bottom = height - 40.0;

    std::string out = svg::header(width, height);
    out += "<style>.whisker{stroke:#333;stroke-width:2}.reference{stroke:#888;stroke-dasharray:4 3}"
           ".marker{fill:#1f4e9c}.marker.sig{fill:#c0392b}.axis{stroke:#000;fill:none}</style>\n";
    out += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"" + std::to_string(height) + "\" fill=\"#ffffff\"/>\n";
    if (!title.empty()) out += "<text x=\"400\" y=\"22\" text-anchor=\"middle\" font-weight=\"bold\">" + svg::escape(title) + "</text>\n";

    const auto x0 = svg::num(x(0.0));
    out += "<line class=\"reference\" x1=\"" + x0 + "\" y1=\"" + svg::num(top) + "\" x2=\"" + x0 + "\" y2=\"" + svg::num(bottom) + "\"/>\n";

    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const double y = top + 20.0 + 40.0 * static_cast<double>(i);
        const double lhr = std::log(r.hr);
        const double llo = std::log(r.ci_low);
        const double lhi = std::log(r.ci_high);
        const auto ys = svg::num(y);
        out += "<g class=\"row\" data-label=\"" + svg::escape(r.label) + "\" data-log-hr=\"" + csv::format_double(lhr) +
               "\" data-log-ci-low=\"" + csv::format_double(llo) + "\" data-log-ci-high=\"" + csv::format_double(lhi) + "\">\n";
        out += "<text x=\"10\" y=\"" + svg::num(y + 4.0) + "\">" + svg::escape(r.label) + "</text>\n";
        out += "<text x=\"290\" y=\"" + svg::num(y + 4.0) + "\" text-anchor=\"end\">" + format_fixed(r.hr, 3) + "</text>\n";
        out += "<line class=\"whisker\" x1=\"" + svg::num(x(llo)) + "\" y1=\"" + ys + "\" x2=\"" + svg::num(x(lhi)) + "\" y2=\"" + ys + "\"/>\n";
        out += "<rect class=\"marker" + std::string(r.significant ? " sig" : "") + "\" x=\"" + svg::num(x(lhr) - 5.0) + "\" y=\"" +
               svg::num(y - 5.0) + "\" width=\"10\" height=\"10\" data-cx=\"" + svg::num(x(lhr)) + "\"/>\n";
        out += "</g>\n";
    }

    out += "<path class=\"axis\" d=\"M300 " + svg::num(bottom) + " H770\"/>\n";
    const int ticks = 5;
    for (int t = 0; t <= ticks; ++t) {
        const double v = d0 + (d1 - d0) * t / ticks;
        out += "<text x=\"" + svg::num(x(v)) + "\" y=\"" + svg::num(bottom + 16.0) + "\" text-anchor=\"middle\">" + format_fixed(v, 2) +
               "</text>\n";
    }
    out += "<text x=\"535\" y=\"" + svg::num(bottom + 32.0) + "\" text-anchor=\"middle\">log(HR) with 95% CI</text>\n";
    out += "</svg>\n";
    return out;
}

/// Predicted vs chronological age: points, the fitted line, and y = x.
inline std::string render_scatter(const PredictionTable& table, const OlsFit& fit)
{
    if (table.rows.empty()) throw Error(Errc::EmptyTable, "scatter plot needs at least one patient");
    double lo = table.rows.front().chronological_age;
    double hi = lo;
    for (const auto& r : table.rows) {
        lo = std::min({lo, r.chronological_age, r.predicted_age});
        hi = std::max({hi, r.chronological_age, r.predicted_age});
    }
    const auto [d0, d1] = svg::padded(lo, hi);
    const double left = 70.0, right = 580.0, top = 30.0, bottom = 540.0;
    const svg::Scale x{d0, d1, left, right};
    const svg::Scale y{d0, d1, bottom, top};

    std::string out = svg::header(620, 600);
    out += "<style>.point{fill:#1f77b4;fill-opacity:0.7}.ols{stroke:#d62728;stroke-width:2}"
           ".identity{stroke:#888;stroke-width:1.5;stroke-dasharray:5 4}.axis{stroke:#000;fill:none}</style>\n";
    out += "<defs><clipPath id=\"plot\"><rect x=\"" + svg::num(left) + "\" y=\"" + svg::num(top) + "\" width=\"" + svg::num(right - left) +
           "\" height=\"" + svg::num(bottom - top) + "\"/></clipPath></defs>\n";
    out += "<path class=\"axis\" d=\"M" + svg::num(left) + " " + svg::num(top) + " V" + svg::num(bottom) + " H" + svg::num(right) + "\"/>\n";

    out += "<g clip-path=\"url(#plot)\">\n";
    out += "<line class=\"identity\" x1=\"" + svg::num(x(d0)) + "\" y1=\"" + svg::num(y(d0)) + "\" x2=\"" + svg::num(x(d1)) + "\" y2=\"" +
           svg::num(y(d1)) + "\"/>\n";
    out += "<line class=\"ols\" x1=\"" + svg::num(x(d0)) + "\" y1=\"" + svg::num(y(fit(d0))) + "\" x2=\"" + svg::num(x(d1)) + "\" y2=\"" +
           svg::num(y(fit(d1))) + "\"/>\n";
    for (const auto& r : table.rows)
        out += "<circle class=\"point\" cx=\"" + svg::num(x(r.chronological_age)) + "\" cy=\"" + svg::num(y(r.predicted_age)) +
               "\" r=\"3\"><title>" + svg::escape(r.patient_id) + "</title></circle>\n";
    out += "</g>\n";

    const int ticks = 5;
    for (int t = 0; t <= ticks; ++t) {
        const double v = d0 + (d1 - d0) * t / ticks;
        out += "<text x=\"" + svg::num(x(v)) + "\" y=\"" + svg::num(bottom + 18.0) + "\" text-anchor=\"middle\">" + format_fixed(v, 0) + "</text>\n";
        out += "<text x=\"" + svg::num(left - 8.0) + "\" y=\"" + svg::num(y(v) + 4.0) + "\" text-anchor=\"end\">" + format_fixed(v, 0) + "</text>\n";
    }
    out += "<text x=\"325\" y=\"585\" text-anchor=\"middle\">Chronological age (years)</text>\n";
    out += "<text x=\"18\" y=\"285\" text-anchor=\"middle\" transform=\"rotate(-90 18 285)\">Predicted age (years)</text>\n";
    out += "</svg>\n";
    return out;
}

} // namespace frailty
