#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "frailty/cohort_io.hpp"
#include "frailty/error.hpp"
#include "frailty/rng.hpp"
#include "frailty/survival.hpp"
#include "frailty/volume_io.hpp"

namespace frailty {

struct SynthSpec {
    std::size_t n_patients = 40;
    std::vector<double> true_beta{0.5};
    double baseline_hazard = 0.02;
    double censor_rate = 0.2;
    std::uint64_t seed = 1;
    std::array<int, 3> volume_dims{16, 16, 12};
};

inline void validate(const SynthSpec& s)
{
    if (s.n_patients < 1) throw Error(Errc::ConfigError, "n_patients must be positive");
    if (!(s.baseline_hazard > 0.0) || !std::isfinite(s.baseline_hazard))
        throw Error(Errc::ConfigError, "baseline_hazard must be positive");
    if (!(s.censor_rate >= 0.0 && s.censor_rate < 1.0)) throw Error(Errc::ConfigError, "censor_rate must be in [0, 1)");
    for (int d : s.volume_dims)
        if (d < 2 || d > 512) throw Error(Errc::ConfigError, "volume_dims must be in [2, 512]");
    for (double b : s.true_beta)
        if (!std::isfinite(b)) throw Error(Errc::ConfigError, "true_beta must be finite");
}

inline void from_json(const nlohmann::json& j, SynthSpec& s)
{
    s.n_patients = j.value("n_patients", s.n_patients);
    s.true_beta = j.value("true_beta", s.true_beta);
    s.baseline_hazard = j.value("baseline_hazard", s.baseline_hazard);
    s.censor_rate = j.value("censor_rate", s.censor_rate);
    s.seed = j.value("seed", s.seed);
    s.volume_dims = j.value("volume_dims", s.volume_dims);
}

inline void to_json(nlohmann::json& j, const SynthSpec& s)
{
    j = nlohmann::json{{"n_patients", s.n_patients},   {"true_beta", s.true_beta}, {"baseline_hazard", s.baseline_hazard},
                       {"censor_rate", s.censor_rate}, {"seed", s.seed},           {"volume_dims", s.volume_dims}};
}

/// Upper bound c of uniform censoring U(0, c) such that the expected censored
/// fraction over exponential event rates `rates` equals `target`.
inline double censoring_horizon(std::span<const double> rates, double target)
{
    auto censored_fraction = [&](double c) {
        double total = 0.0;
        for (double lam : rates) {
            const double a = lam * c;
            total += a < 1e-8 ? 1.0 - a / 2.0 : -std::expm1(-a) / a;
        }
        return total / static_cast<double>(rates.size());
    };
    double lo = -60.0, hi = 60.0; // log c
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (censored_fraction(std::exp(mid)) > target)
            lo = mid;
        else
            hi = mid;
    }
    return std::exp(0.5 * (lo + hi));
}

struct EventDraws {
    std::vector<double> time;
    std::vector<int> event;
};

/// Exponential event times with rate baseline * exp(eta_i) and independent
/// uniform censoring tuned to `censor_rate`. Subject i draws from its own
/// stream, so results do not depend on generation order.
inline EventDraws draw_event_times(std::span<const double> eta, double baseline_hazard, double censor_rate, std::uint64_t seed)
{
    const std::size_t n = eta.size();
    std::vector<double> rates(n);
    for (std::size_t i = 0; i < n; ++i) rates[i] = baseline_hazard * std::exp(eta[i]);
    const double horizon = censor_rate > 0.0 ? censoring_horizon(rates, censor_rate) : 0.0;
    EventDraws out;
    out.time.resize(n);
    out.event.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, i));
        const double t = rng.exponential(rates[i]);
        if (censor_rate > 0.0) {
            const double c = horizon * rng.uniform_open();
            out.time[i] = std::min(t, c);
            out.event[i] = t <= c ? 1 : 0;
        } else {
            out.time[i] = t;
            out.event[i] = 1;
        }
    }
    return out;
}

/// In-memory proportional-hazards sample with independent standard normal
/// covariates, one per entry of `true_beta`.
inline SurvivalData simulate_survival(const SynthSpec& spec, Ties ties = Ties::efron)
{
    validate(spec);
    const auto n = static_cast<Eigen::Index>(spec.n_patients);
    const auto p = static_cast<Eigen::Index>(spec.true_beta.size());
    SurvivalData d;
    d.ties = ties;
    d.x.resize(n, p);
    const std::uint64_t cov_seed = derive_seed(spec.seed, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        Rng rng(derive_seed(cov_seed, static_cast<std::uint64_t>(i)));
        for (Eigen::Index j = 0; j < p; ++j) d.x(i, j) = rng.normal();
    }
    const Eigen::Map<const Eigen::VectorXd> beta(spec.true_beta.data(), p);
    const Eigen::VectorXd eta = d.x * beta;
    const auto draws = draw_event_times(std::span<const double>(eta.data(), static_cast<std::size_t>(n)), spec.baseline_hazard,
                                        spec.censor_rate, derive_seed(spec.seed, 1));
    d.time = Eigen::Map<const Eigen::VectorXd>(draws.time.data(), n);
    d.event.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) d.event(i) = draws.event[static_cast<std::size_t>(i)];
    return d;
}

/// Ground truth behind one generated patient.
struct SynthTruth {
    std::string patient_id;
    double frailty = 0.0;
    double biological_age = 0.0;
};

struct SynthCohort {
    std::vector<PatientRecord> records;
    std::vector<SynthTruth> truth;
};

/// Names of the hazard covariates `true_beta` applies to, in order, for
/// generate_cohort. The latent frailty is first.
inline const std::vector<std::string>& synth_hazard_covariates()
{
    static const std::vector<std::string> c{"latent_frailty", "metastasis", "lymph_node_involvement", "cci"};
    return c;
}

inline std::string synth_patient_id(std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "case_%05zu", i);
    return buf;
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

inline void write_file_text(const std::filesystem::path& path, std::string_view text)
{
    write_file_bytes(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

namespace detail {

inline double round_to(double v, double step) { return std::round(v / step) * step; }

/// Ellipsoidal body, kidney, and tumor. Soft-tissue HU falls with
/// biological age, which gives image features a learnable age signal.
inline CaseVolumes synth_volumes(const std::array<int, 3>& dims, double biological_age, double tumor_size_cm, Rng& rng)
{
    const Dims d{dims[0], dims[1], dims[2]};
    Volume image;
    image.dims = d;
    image.voxels.assign(d.count(), -1000.0);
    Volume seg;
    seg.dims = d;
    seg.voxels.assign(d.count(), 0.0);

    const double age_shift = biological_age - 50.0;
    const double cx = 0.5 * (d.x - 1), cy = 0.5 * (d.y - 1);
    const double kx = 0.32 * (d.x - 1) + rng.uniform(-0.5, 0.5), ky = 0.5 * (d.y - 1) + rng.uniform(-0.5, 0.5),
                 kz = 0.5 * (d.z - 1);
    const double krx = std::max(1.0, 0.16 * d.x), kry = std::max(1.0, 0.24 * d.y), krz = std::max(1.0, 0.34 * d.z);
    // tumor sits on the lateral pole of the kidney
    const double tr = std::clamp(0.35 * tumor_size_cm, 0.8, 0.25 * std::min({d.x, d.y, d.z}));
    const double tx = kx - 0.6 * krx, ty = ky + rng.uniform(-0.5, 0.5) * kry, tz = kz + rng.uniform(-0.5, 0.5) * krz;

    std::size_t tumor_count = 0;
    for (int k = 0; k < d.z; ++k) {
        for (int j = 0; j < d.y; ++j) {
            for (int i = 0; i < d.x; ++i) {
                const auto idx = d.index(i, j, k);
                const double bx = (i - cx) / (0.48 * d.x), by = (j - cy) / (0.45 * d.y);
                if (bx * bx + by * by > 1.0) continue;
                double hu = 55.0 - 1.2 * age_shift + rng.normal(0.0, 12.0);
                const double ex = (i - kx) / krx, ey = (j - ky) / kry, ez = (k - kz) / krz;
                const double dx = i - tx, dy = j - ty, dz = k - tz;
                if (dx * dx + dy * dy + dz * dz <= tr * tr) {
                    hu = 95.0 - 0.3 * age_shift + rng.normal(0.0, 18.0);
                    seg.voxels[idx] = 2.0;
                    ++tumor_count;
                } else if (ex * ex + ey * ey + ez * ez <= 1.0) {
                    hu = 160.0 - 0.8 * age_shift + rng.normal(0.0, 10.0);
                    seg.voxels[idx] = 1.0;
                }
                image.voxels[idx] = std::round(hu);
            }
        }
    }
    if (tumor_count == 0) {
        const auto idx = d.index(std::clamp(static_cast<int>(std::lround(tx)), 0, d.x - 1),
                                 std::clamp(static_cast<int>(std::lround(ty)), 0, d.y - 1),
                                 std::clamp(static_cast<int>(std::lround(tz)), 0, d.z - 1));
        seg.voxels[idx] = 2.0;
    }
    auto typed = validate_segmentation(seg, image);
    return {std::move(image), std::move(typed)};
}

} // namespace detail

/// Writes `<out>/<case_id>/{imaging,segmentation}.nii`, `<out>/cohort.csv`,
/// and `<out>/truth.csv`. `true_beta` weights the covariates named by
/// synth_hazard_covariates() in the overall-survival hazard.
inline SynthCohort generate_cohort(const SynthSpec& spec, const std::filesystem::path& out_dir)
{
    validate(spec);
    const auto& hazard_names = synth_hazard_covariates();
    if (spec.true_beta.size() > hazard_names.size())
        throw Error(Errc::ConfigError, "true_beta has more than " + std::to_string(hazard_names.size()) + " entries");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

    const std::size_t n = spec.n_patients;
    SynthCohort cohort;
    cohort.records.resize(n);
    cohort.truth.resize(n);
    std::vector<double> os_eta(n), los_eta(n);

    const std::uint64_t patient_seed = derive_seed(spec.seed, 0);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(patient_seed, i));
        auto& p = cohort.records[i];
        auto& t = cohort.truth[i];
        p.patient_id = t.patient_id = synth_patient_id(i);
        p.age_years = detail::round_to(rng.bernoulli(0.03) ? rng.uniform(8.0, 18.0) : rng.uniform(25.0, 85.0), 0.1);
        t.frailty = rng.normal();
        t.biological_age = p.age_years + 6.0 * t.frailty;
        const double u = rng.uniform();
        p.approach = u < 0.4 ? Approach::open : (u < 0.7 ? Approach::laparoscopic : Approach::robotic);
        p.nephron_sparing = rng.bernoulli(0.5) ? 1 : 0;
        p.cci = std::min(12, static_cast<int>(p.age_years / 25.0 + rng.exponential(0.5)));
        p.tumor_size_cm = detail::round_to(1.0 + rng.exponential(1.0 / 3.5), 0.1);
        const double s = rng.uniform();
        p.t_stage = s < 0.5 ? 1 : (s < 0.65 ? 2 : (s < 0.95 ? 3 : 4));
        p.lymph_node_involvement = rng.bernoulli(0.1) ? 1 : 0;
        p.metastasis = rng.bernoulli(0.1) ? 1 : 0;
        p.isup_grade = 1 + static_cast<int>(rng.index(4));

        const std::array<double, 4> hz{t.frailty, static_cast<double>(p.metastasis), static_cast<double>(p.lymph_node_involvement),
                                       static_cast<double>(p.cci)};
        for (std::size_t j = 0; j < spec.true_beta.size(); ++j) os_eta[i] += spec.true_beta[j] * hz[j];
        // faster discharge after minimally invasive surgery, slower with frailty and comorbidity
        los_eta[i] = 1.0 * (p.approach == Approach::open ? 0.0 : 1.0) - 0.3 * t.frailty - 0.05 * p.cci;

        auto vols = detail::synth_volumes(spec.volume_dims, t.biological_age, p.tumor_size_cm, rng);
        const auto case_dir = out_dir / p.patient_id;
        std::filesystem::create_directories(case_dir, ec);
        if (ec) throw Error(Errc::IoFailure, "cannot create " + case_dir.string() + ": " + ec.message());
        VolumeHeader ih;
        ih.dims = vols.image.dims;
        ih.datatype = Datatype::int16;
        ih.scl_slope = 1.0;
        ih.scl_inter = -1024.0;
        write_file_bytes(case_dir / "imaging.nii", write_volume(ih, vols.image));
        VolumeHeader sh = ih;
        sh.datatype = Datatype::uint8;
        sh.scl_inter = 0.0;
        std::vector<double> labels(vols.segmentation.labels.begin(), vols.segmentation.labels.end());
        write_file_bytes(case_dir / "segmentation.nii", encode_nifti(sh, labels));
    }

    const auto os = draw_event_times(os_eta, spec.baseline_hazard, spec.censor_rate, derive_seed(spec.seed, 1));
    const auto los = draw_event_times(los_eta, 0.2, 0.0, derive_seed(spec.seed, 2));
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = cohort.records[i];
        p.os_months = std::max(0.01, detail::round_to(os.time[i], 0.01));
        p.os_event = os.event[i];
        p.los_days = std::max(1.0, std::ceil(los.time[i]));
        p.los_event = 1;
    }

    write_file_text(out_dir / "cohort.csv", to_csv(cohort.records));
    std::string truth = "patient_id,latent_frailty,biological_age\n";
    for (const auto& t : cohort.truth)
        truth += t.patient_id + ',' + csv::format_double(t.frailty) + ',' + csv::format_double(t.biological_age) + '\n';
    write_file_text(out_dir / "truth.csv", truth);
    return cohort;
}

} // namespace frailty
