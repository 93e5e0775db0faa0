#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <openssl/sha.h>
#include <json.hpp>

#include "frailty/cohort_io.hpp"
#include "frailty/cv.hpp"
#include "frailty/discrepancy.hpp"
#include "frailty/error.hpp"
#include "frailty/parallel.hpp"
#include "frailty/predictor.hpp"
#include "frailty/report.hpp"
#include "frailty/survival.hpp"
#include "frailty/views.hpp"
#include "frailty/volume_io.hpp"

namespace frailty {

/// An Error annotated with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& e) : Error(e.code(), e.detail()), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

template <class Fn>
auto run_stage(std::string_view stage, Fn&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(std::string(stage), e);
    }
}

enum class PredictorKind { baseline, external };

struct RunConfig {
    std::filesystem::path data_dir;
    std::filesystem::path cohort_csv;
    std::size_t k = 5;
    std::size_t repeats = 3;
    std::uint64_t master_seed = 20230;
    std::size_t views_per_scan = 12;
    Ties ties = Ties::efron;
    PredictorKind predictor = PredictorKind::baseline;
    std::filesystem::path predictions_csv;
    std::filesystem::path out_dir;
    double ridge_lambda = 1.0;
    SdConvention sd = SdConvention::population;
    std::size_t threads = 1;
};

inline void validate(const RunConfig& c)
{
    if (c.cohort_csv.empty()) throw Error(Errc::ConfigError, "cohort_csv is required");
    if (c.out_dir.empty()) throw Error(Errc::ConfigError, "out_dir is required");
    if (c.k < 2) throw Error(Errc::ConfigError, "k must be at least 2");
    if (c.repeats < 1) throw Error(Errc::ConfigError, "repeats must be at least 1");
    if (c.views_per_scan < 1) throw Error(Errc::ConfigError, "views_per_scan must be at least 1");
    if (c.threads < 1) throw Error(Errc::ConfigError, "threads must be at least 1");
    if (!(c.ridge_lambda >= 0.0)) throw Error(Errc::ConfigError, "ridge_lambda must be nonnegative");
    if (c.predictor == PredictorKind::external && c.predictions_csv.empty())
        throw Error(Errc::ConfigError, "predictor 'external' requires predictions_csv");
    if (c.predictor == PredictorKind::baseline && c.data_dir.empty())
        throw Error(Errc::ConfigError, "predictor 'baseline' requires data_dir");
}

/// Reads a run configuration. Relative paths resolve against `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {})
{
    RunConfig c;
    try {
        auto path = [&](const char* key) -> std::filesystem::path {
            if (!j.contains(key) || j.at(key).is_null()) return {};
            std::filesystem::path p = j.at(key).get<std::string>();
            if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
            return base_dir / p;
        };
        static const std::vector<std::string> known{"data_dir",  "cohort_csv",      "k",       "repeats",      "master_seed",
                                                    "views_per_scan", "ties",        "predictor", "predictions_csv", "out_dir",
                                                    "ridge_lambda",   "sd_convention", "threads"};
        for (const auto& [key, value] : j.items())
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw Error(Errc::ConfigError, "unknown config key '" + key + "'");
        c.data_dir = path("data_dir");
        c.cohort_csv = path("cohort_csv");
        c.predictions_csv = path("predictions_csv");
        c.out_dir = path("out_dir");
        c.k = j.value("k", c.k);
        c.repeats = j.value("repeats", c.repeats);
        c.master_seed = j.value("master_seed", c.master_seed);
        c.views_per_scan = j.value("views_per_scan", c.views_per_scan);
        c.ties = parse_ties(j.value("ties", std::string("efron")));
        const auto pred = j.value("predictor", std::string("baseline"));
        if (pred == "baseline")
            c.predictor = PredictorKind::baseline;
        else if (pred == "external")
            c.predictor = PredictorKind::external;
        else
            throw Error(Errc::ConfigError, "predictor must be 'baseline' or 'external', got '" + pred + "'");
        c.ridge_lambda = j.value("ridge_lambda", c.ridge_lambda);
        const auto sd = j.value("sd_convention", std::string("population"));
        if (sd == "population")
            c.sd = SdConvention::population;
        else if (sd == "sample")
            c.sd = SdConvention::sample;
        else
            throw Error(Errc::ConfigError, "sd_convention must be 'population' or 'sample'");
        c.threads = j.value("threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ConfigError, e.what());
    }
    return c;
}

inline std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string sha256_hex(std::string_view data)
{
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char b : digest) {
        out += hex[b >> 4];
        out += hex[b & 0xf];
    }
    return out;
}

/// Output files held in memory until commit(), which writes each to a
/// temporary name and renames it into place. Nothing reaches the output
/// directory if an earlier stage fails.
class OutputSet {
public:
    void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }

    const std::vector<std::pair<std::string, std::string>>& files() const noexcept { return files_; }

    nlohmann::json manifest(const nlohmann::json& settings) const
    {
        nlohmann::json outputs = nlohmann::json::array();
        for (const auto& [name, content] : files_)
            outputs.push_back({{"file", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
        return {{"settings", settings}, {"outputs", outputs}};
    }

    void commit(const std::filesystem::path& dir) const
    {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw Error(Errc::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
        std::vector<std::filesystem::path> temps;
        auto cleanup = [&] {
            for (const auto& t : temps) std::filesystem::remove(t, ec);
        };
        try {
            for (const auto& [name, content] : files_) {
                const auto tmp = dir / ("." + name + ".tmp");
                temps.push_back(tmp);
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                out.write(content.data(), static_cast<std::streamsize>(content.size()));
                out.close();
                if (!out) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
            }
        } catch (...) {
            cleanup();
            throw;
        }
        for (std::size_t i = 0; i < files_.size(); ++i) {
            std::filesystem::rename(temps[i], dir / files_[i].first, ec);
            if (ec) {
                cleanup();
                throw Error(Errc::IoFailure, "cannot rename into " + (dir / files_[i].first).string() + ": " + ec.message());
            }
        }
    }

private:
    std::vector<std::pair<std::string, std::string>> files_;
};

/// Reads and slices every patient's case folder. Cases load independently
/// on `threads` workers into fixed slots.
inline std::vector<Case> load_cases(const std::filesystem::path& data_dir, const std::vector<PatientRecord>& records,
                                    std::size_t threads = 1, const LabelScheme& scheme = {})
{
    std::vector<Case> cases(records.size());
    parallel_for(records.size(), threads, [&](std::size_t i) {
        const auto& r = records[i];
        const auto dir = data_dir / r.patient_id;
        for (const char* f : {"imaging.nii", "segmentation.nii"})
            if (!std::filesystem::is_regular_file(dir / f))
                throw Error(Errc::MissingCase, "patient '" + r.patient_id + "': missing " + (dir / f).string());
        try {
            auto vols = load_case_volumes(dir, scheme);
            cases[i].patient_id = r.patient_id;
            cases[i].chronological_age = r.age_years;
            cases[i].views = extract_views(vols.image, vols.segmentation, r.patient_id);
        } catch (const Error& e) {
            throw Error(e.code(), "patient '" + r.patient_id + "': " + e.detail());
        }
    });
    return cases;
}

struct PipelineResult {
    OutputSet outputs;
    nlohmann::json manifest;
    std::vector<std::string> warnings;
};

/// Runs the full pipeline without touching the filesystem beyond reading
/// inputs. Outputs are returned in memory.
inline PipelineResult execute_pipeline(const RunConfig& config)
{
    run_stage("config", [&] { validate(config); });
    PipelineResult res;

    const auto cohort = run_stage("ingest", [&] {
        auto records = parse_clinical_csv(read_text_file(config.cohort_csv));
        auto ex = apply_exclusions(std::move(records));
        std::sort(ex.kept.begin(), ex.kept.end(), [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
        return ex;
    });
    {
        std::string log = "patient_id,reason\n";
        for (const auto& e : cohort.log) log += e.patient_id + ',' + e.reason + '\n';
        res.outputs.add("exclusions.csv", log);
    }

    const PredictionTable predictions = [&] {
        if (config.predictor == PredictorKind::external) {
            return run_stage("predict", [&] {
                const auto ext = load_external_predictions(read_text_file(config.predictions_csv));
                PredictionTable t;
                for (const auto& r : cohort.kept) {
                    const auto it = std::find_if(ext.rows.begin(), ext.rows.end(), [&](const auto& row) { return row.patient_id == r.patient_id; });
                    if (it == ext.rows.end()) throw Error(Errc::MissingCase, "no external prediction for patient '" + r.patient_id + "'");
                    t.rows.push_back(*it);
                }
                return t;
            });
        }
        const auto cases = run_stage("views", [&] { return load_cases(config.data_dir, cohort.kept, config.threads); });
        return run_stage("cv", [&] {
            std::vector<std::string> ids;
            for (const auto& r : cohort.kept) ids.push_back(r.patient_id);
            const auto plan = make_folds(ids, config.k, config.repeats, config.master_seed);
            return run_cv(cases, baseline_factory({config.views_per_scan, config.ridge_lambda}), plan, config.threads);
        });
    }();
    res.outputs.add("predictions.csv", to_csv(predictions));

    const auto disc = run_stage("discrepancy", [&] { return compute_discrepancy(predictions, config.sd); });
    res.outputs.add("discrepancy.csv", to_csv(disc));

    for (const auto endpoint : {Endpoint::LOS, Endpoint::OS}) {
        const std::string tag = endpoint == Endpoint::LOS ? "los" : "os";
        const auto fit = run_stage("coxfit", [&] {
            const auto design = build_design_matrix(cohort.kept, endpoint, disc);
            SurvivalData data{design.x, design.time, design.event, config.ties};
            return fit_cox(data, {}, design.columns);
        });
        if (!fit.converged)
            res.warnings.push_back("NotConverged coxfit " + tag + " model stopped after " + std::to_string(fit.iterations) + " iterations");
        res.outputs.add(tag + "_fit.json", to_json(fit).dump(2) + "\n");
        const auto& labels = design_labels(endpoint);
        run_stage("report", [&] {
            res.outputs.add(tag + "_table.csv", render_hr_table(fit, labels).csv);
            res.outputs.add(tag + "_forest.svg",
                            render_forest_plot(forest_rows(fit, labels), ForestAxis::log_hr,
                                               endpoint == Endpoint::LOS ? "Length of stay" : "Overall survival"));
        });
    }
    run_stage("report", [&] { res.outputs.add("age_scatter.svg", render_scatter(predictions, disc.fit)); });

    const nlohmann::json settings{{"k", config.k},
                                  {"repeats", config.repeats},
                                  {"master_seed", config.master_seed},
                                  {"views_per_scan", config.views_per_scan},
                                  {"ties", ties_name(config.ties)},
                                  {"predictor", config.predictor == PredictorKind::baseline ? "baseline" : "external"},
                                  {"ridge_lambda", config.ridge_lambda},
                                  {"sd_convention", config.sd == SdConvention::population ? "population" : "sample"},
                                  {"patients", cohort.kept.size()},
                                  {"excluded", cohort.log.size()}};
    res.manifest = res.outputs.manifest(settings);
    return res;
}

/// Runs the pipeline and commits every output plus `manifest.json` to
/// `config.out_dir`. Returns the manifest.
inline nlohmann::json run_pipeline(const RunConfig& config, std::ostream& warn = std::cerr)
{
    auto res = execute_pipeline(config);
    for (const auto& w : res.warnings) warn << "WARN " << w << '\n';
    res.outputs.add("manifest.json", res.manifest.dump(2) + "\n");
    run_stage("write", [&] { res.outputs.commit(config.out_dir); });
    return res.manifest;
}

} // namespace frailty
