#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "frailty/csv.hpp"
#include "frailty/discrepancy.hpp"
#include "frailty/error.hpp"

namespace frailty {

enum class Approach { open, laparoscopic, robotic };

constexpr std::string_view approach_name(Approach a) noexcept
{
    switch (a) {
    case Approach::open: return "open";
    case Approach::laparoscopic: return "laparoscopic";
    case Approach::robotic: return "robotic";
    }
    return "?";
}

struct PatientRecord {
    std::string patient_id;
    double age_years = 0.0;
    double los_days = 0.0;
    int los_event = 1; ///< 1 = discharged
    double os_months = 0.0;
    int os_event = 0; ///< 1 = death observed
    Approach approach = Approach::open;
    int nephron_sparing = 0;
    int cci = 0;
    double tumor_size_cm = 0.0;
    int t_stage = 1;
    int lymph_node_involvement = 0;
    int metastasis = 0;
    std::optional<int> isup_grade;

    friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

inline const std::vector<std::string>& cohort_columns()
{
    static const std::vector<std::string> c{"patient_id", "age_years",     "los_days", "los_event",
                                            "os_months",  "os_event",      "approach", "nephron_sparing",
                                            "cci",        "tumor_size_cm", "t_stage",  "lymph_node_involvement",
                                            "metastasis", "isup_grade"};
    return c;
}

namespace detail {

struct FieldReader {
    const std::vector<std::string>& row;
    const std::vector<std::size_t>& idx;
    std::string where;

    const std::string& raw(std::size_t c) const { return row[idx[c]]; }

    double real(std::size_t c) const
    {
        const auto v = csv::to_double(raw(c));
        if (!v) throw Error(Errc::NonNumericField, where + ": " + cohort_columns()[c] + " = '" + raw(c) + "'");
        return *v;
    }

    long long integer(std::size_t c) const
    {
        const auto v = csv::to_int(raw(c));
        if (!v) throw Error(Errc::NonNumericField, where + ": " + cohort_columns()[c] + " = '" + raw(c) + "'");
        return *v;
    }

    int ranged(std::size_t c, long long lo, long long hi) const
    {
        const auto v = integer(c);
        if (v < lo || v > hi)
            throw Error(Errc::BadEnumValue, where + ": " + cohort_columns()[c] + " = " + std::to_string(v) + " outside [" +
                                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return static_cast<int>(v);
    }

    double positive_time(std::size_t c) const
    {
        const double v = real(c);
        if (!(v > 0.0)) throw Error(Errc::NonPositiveTime, where + ": " + cohort_columns()[c] + " = " + raw(c));
        return v;
    }
};

} // namespace detail

inline std::vector<PatientRecord> parse_clinical_csv(std::string_view text)
{
    const auto t = csv::parse(text);
    const auto idx = csv::require_columns(t, cohort_columns());
    std::vector<PatientRecord> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string where = "line " + std::to_string(t.lines[r]);
        if (row.size() < t.header.size()) throw Error(Errc::MissingColumn, where + " has too few fields");
        const detail::FieldReader f{row, idx, where};

        PatientRecord p;
        p.patient_id = f.raw(0);
        if (p.patient_id.empty()) throw Error(Errc::MissingColumn, where + " has an empty patient_id");
        p.age_years = f.real(1);
        if (!(p.age_years > 0.0)) throw Error(Errc::NonNumericField, where + ": age_years must be positive");
        p.los_days = f.positive_time(2);
        p.los_event = f.ranged(3, 0, 1);
        p.os_months = f.positive_time(4);
        p.os_event = f.ranged(5, 0, 1);
        const auto& a = f.raw(6);
        if (a == "open")
            p.approach = Approach::open;
        else if (a == "laparoscopic")
            p.approach = Approach::laparoscopic;
        else if (a == "robotic")
            p.approach = Approach::robotic;
        else
            throw Error(Errc::BadEnumValue, where + ": approach '" + a + "'");
        p.nephron_sparing = f.ranged(7, 0, 1);
        p.cci = f.ranged(8, 0, 1000);
        p.tumor_size_cm = f.real(9);
        if (!(p.tumor_size_cm > 0.0)) throw Error(Errc::NonNumericField, where + ": tumor_size_cm must be positive");
        p.t_stage = f.ranged(10, 1, 4);
        p.lymph_node_involvement = f.ranged(11, 0, 1);
        p.metastasis = f.ranged(12, 0, 1);
        if (!f.raw(13).empty()) p.isup_grade = f.ranged(13, 1, 4);
        out.push_back(std::move(p));
    }
    return out;
}

inline std::string to_csv(const std::vector<PatientRecord>& records)
{
    std::string out;
    for (std::size_t c = 0; c < cohort_columns().size(); ++c) {
        if (c) out += ',';
        out += cohort_columns()[c];
    }
    out += '\n';
    for (const auto& p : records) {
        out += p.patient_id + ',' + csv::format_double(p.age_years) + ',' + csv::format_double(p.los_days) + ',' +
               std::to_string(p.los_event) + ',' + csv::format_double(p.os_months) + ',' + std::to_string(p.os_event) + ',' +
               std::string(approach_name(p.approach)) + ',' + std::to_string(p.nephron_sparing) + ',' + std::to_string(p.cci) +
               ',' + csv::format_double(p.tumor_size_cm) + ',' + std::to_string(p.t_stage) + ',' +
               std::to_string(p.lymph_node_involvement) + ',' + std::to_string(p.metastasis) + ',' +
               (p.isup_grade ? std::to_string(*p.isup_grade) : std::string{}) + '\n';
    }
    return out;
}

struct Exclusion {
    std::string patient_id;
    std::string reason;
};

struct ExclusionResult {
    std::vector<PatientRecord> kept;
    std::vector<Exclusion> log;
};

inline constexpr double minimum_age_years = 18.0;

/// Drops patients younger than 18; exactly 18.0 is kept.
inline ExclusionResult apply_exclusions(std::vector<PatientRecord> records)
{
    ExclusionResult out;
    for (auto& p : records) {
        if (p.age_years < minimum_age_years)
            out.log.push_back({p.patient_id, "age " + csv::format_double(p.age_years) + " < 18"});
        else
            out.kept.push_back(std::move(p));
    }
    if (out.kept.empty()) throw Error(Errc::EmptyCohortAfterExclusion, "every patient was excluded");
    return out;
}

enum class Endpoint { LOS, OS };

constexpr std::string_view endpoint_name(Endpoint e) noexcept { return e == Endpoint::LOS ? "LOS" : "OS"; }

struct DesignMatrix {
    Endpoint endpoint = Endpoint::LOS;
    std::vector<std::string> columns;
    std::vector<std::string> patient_ids;
    Eigen::MatrixXd x;
    Eigen::VectorXd time;
    Eigen::VectorXi event;
};

inline const std::vector<std::string>& design_columns(Endpoint e)
{
    static const std::vector<std::string> los{"ai_age_discrepancy", "tumor_size_cm", "minimally_invasive",
                                              "nephron_sparing",    "cci",           "age_years"};
    static const std::vector<std::string> os{"ai_age_discrepancy", "tumor_size_cm", "minimally_invasive", "nephron_sparing",
                                             "cci",                "age_years",     "t_stage_ge3",        "lymph_node_involvement",
                                             "metastasis",         "isup_grade"};
    return e == Endpoint::LOS ? los : os;
}

/// Human-readable row labels matching `design_columns`.
inline const std::vector<std::string>& design_labels(Endpoint e)
{
    static const std::vector<std::string> los{"AI Age Discrepancy",        "Tumor Size",
                                              "Minimally Invasive Surgery", "Nephron Sparing Procedure",
                                              "Charlson Comorbidity Index", "Chronological Age"};
    static const std::vector<std::string> os{"AI Age Discrepancy",        "Tumor Size",
                                             "Minimally Invasive Surgery", "Nephron Sparing Procedure",
                                             "Charlson Comorbidity Index", "Chronological Age",
                                             "T stage >= 3",               "Lymph Node Involvement",
                                             "Metastasis",                 "Tumor ISUP Grade"};
    return e == Endpoint::LOS ? los : os;
}

inline DesignMatrix build_design_matrix(const std::vector<PatientRecord>& records, Endpoint endpoint,
                                        const DiscrepancyVector& discrepancy)
{
    DesignMatrix m;
    m.endpoint = endpoint;
    m.columns = design_columns(endpoint);
    const auto n = static_cast<Eigen::Index>(records.size());
    const auto p = static_cast<Eigen::Index>(m.columns.size());
    m.x.resize(n, p);
    m.time.resize(n);
    m.event.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = records[static_cast<std::size_t>(i)];
        const auto* d = discrepancy.find(r.patient_id);
        if (!d) throw Error(Errc::MissingDiscrepancy, "patient '" + r.patient_id + "' has no AI age discrepancy");
        m.patient_ids.push_back(r.patient_id);
        m.x(i, 0) = d->discrepancy;
        m.x(i, 1) = r.tumor_size_cm;
        m.x(i, 2) = r.approach == Approach::open ? 0.0 : 1.0;
        m.x(i, 3) = r.nephron_sparing;
        m.x(i, 4) = r.cci;
        m.x(i, 5) = r.age_years;
        if (endpoint == Endpoint::OS) {
            if (!r.isup_grade) throw Error(Errc::MissingGrade, "patient '" + r.patient_id + "' has no ISUP grade");
            m.x(i, 6) = r.t_stage >= 3 ? 1.0 : 0.0;
            m.x(i, 7) = r.lymph_node_involvement;
            m.x(i, 8) = r.metastasis;
            m.x(i, 9) = *r.isup_grade;
            m.time(i) = r.os_months;
            m.event(i) = r.os_event;
        } else {
            m.time(i) = r.los_days;
            m.event(i) = r.los_event;
        }
    }
    if (!m.x.allFinite() || !m.time.allFinite()) throw Error(Errc::NonFiniteInput, "design matrix has non-finite entries");
    return m;
}

} // namespace frailty
