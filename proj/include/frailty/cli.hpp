#pragma once

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "frailty/pipeline.hpp"
#include "frailty/synth.hpp"

namespace frailty::cli {

inline int exit_code(ErrorKind k) noexcept
{
    switch (k) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numeric: return 4;
    }
    return 1;
}

/// `ERROR <code> <stage> <detail>` on a single line.
inline std::string error_record(Errc code, std::string_view stage, std::string detail)
{
    for (auto& c : detail)
        if (c == '\n' || c == '\r') c = ' ';
    return "ERROR " + std::string(errc_name(code)) + " " + std::string(stage) + " " + detail;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path)
{
    const auto text = read_text_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ConfigError, path.string() + ": " + e.what());
    }
}

namespace detail {

inline Endpoint parse_endpoint(const std::string& s)
{
    if (s == "los" || s == "LOS") return Endpoint::LOS;
    if (s == "os" || s == "OS") return Endpoint::OS;
    throw Error(Errc::ConfigError, "endpoint must be 'los' or 'os', got '" + s + "'");
}

inline std::string endpoint_tag(Endpoint e) { return e == Endpoint::LOS ? "los" : "os"; }

/// Writes per-view channels as little-endian float64 (HU, tumor, kidney
/// planes back to back) plus a JSON sidecar describing the layout.
inline void dump_views(const ViewSet& set, const std::filesystem::path& dir)
{
    std::string blob;
    nlohmann::json sidecar{{"case_id", set.case_id}, {"dtype", "float64"}, {"byte_order", "little"}, {"views", nlohmann::json::array()}};
    std::size_t offset = 0;
    auto put = [&](double v) {
        char raw[sizeof(double)];
        std::memcpy(raw, &v, sizeof(double));
        if (!nifti::host_is_little()) std::reverse(raw, raw + sizeof(double));
        blob.append(raw, sizeof(double));
    };
    for (std::size_t i = 0; i < set.views.size(); ++i) {
        const auto& v = set.views[i];
        for (double h : v.hu) put(h);
        for (auto t : v.tumor) put(t);
        for (auto k : v.kidney) put(k);
        sidecar["views"].push_back({{"plane", plane_name(v.plane)},
                                    {"index", v.index},
                                    {"width", v.width},
                                    {"height", v.height},
                                    {"tumor_voxels", v.tumor_voxels},
                                    {"weight", set.weights[i]},
                                    {"offset_bytes", offset},
                                    {"channels", {"hu", "tumor", "kidney"}}});
        offset += 3 * v.pixels() * sizeof(double);
    }
    OutputSet out;
    out.add("views.bin", std::move(blob));
    out.add("views.json", sidecar.dump(2) + "\n");
    out.commit(dir);
}

} // namespace detail

/// Entry point shared by the executable and the tests.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Frailty metrics: CT age discrepancy and Cox survival models", "frailty-metrics"};
    app.require_subcommand(1);

    std::string config_path, out_path, ties, spec_path, cohort_path, case_dir, dump_dir, predictions_path, discrepancy_path,
        endpoint = "los", fit_path, sd = "population";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;

    auto* run = app.add_subcommand("run", "Full pipeline: ingest, views, cv, discrepancy, coxfit, report");
    run->add_option("--config", config_path, "Run configuration JSON")->required();
    run->add_option("--seed", seed, "Override master_seed");
    run->add_option("--ties", ties, "efron or breslow");
    run->add_option("--out", out_path, "Override out_dir");
    run->add_option("--threads", threads, "Worker threads");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort with case volumes");
    synth->add_option("--spec", spec_path, "Synthetic cohort spec JSON")->required();
    synth->add_option("--out", out_path, "Output directory")->required();

    auto* ingest = app.add_subcommand("ingest", "Validate cohort.csv and apply exclusions");
    ingest->add_option("--cohort", cohort_path, "cohort.csv")->required();
    ingest->add_option("--out", out_path, "Output directory")->required();

    auto* views = app.add_subcommand("views", "Extract views from one case folder");
    views->add_option("--case", case_dir, "Case folder with imaging.nii and segmentation.nii")->required();
    views->add_option("--dump", dump_dir, "Write views.bin + views.json here");

    auto* cv = app.add_subcommand("cv", "Cross-validated age predictions");
    cv->add_option("--config", config_path, "Run configuration JSON")->required();
    cv->add_option("--seed", seed, "Override master_seed");
    cv->add_option("--out", out_path, "Override out_dir");
    cv->add_option("--threads", threads, "Worker threads");

    auto* disc = app.add_subcommand("discrepancy", "AI age discrepancy from predictions.csv");
    disc->add_option("--predictions", predictions_path, "predictions.csv")->required();
    disc->add_option("--out", out_path, "Output directory")->required();
    disc->add_option("--sd", sd, "population or sample");

    auto* coxfit = app.add_subcommand("coxfit", "Fit one endpoint's Cox model");
    coxfit->add_option("--cohort", cohort_path, "cohort.csv")->required();
    coxfit->add_option("--discrepancy", discrepancy_path, "discrepancy.csv")->required();
    coxfit->add_option("--endpoint", endpoint, "los or os");
    coxfit->add_option("--ties", ties, "efron or breslow");
    coxfit->add_option("--out", out_path, "Output JSON file")->required();

    auto* report = app.add_subcommand("report", "Hazard-ratio table and forest plot from a fit JSON");
    report->add_option("--fit", fit_path, "Fit JSON from coxfit")->required();
    report->add_option("--endpoint", endpoint, "los or os");
    report->add_option("--out", out_path, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << error_record(Errc::ConfigError, "cli", e.what()) << '\n';
        return 2;
    }

    std::string stage = "cli";
    try {
        if (*run || *cv) {
            stage = "config";
            RunConfig config = parse_run_config(read_json_file(config_path), std::filesystem::path(config_path).parent_path());
            if (seed) config.master_seed = *seed;
            if (!ties.empty()) config.ties = parse_ties(ties);
            if (!out_path.empty()) config.out_dir = out_path;
            if (threads) config.threads = *threads;
            if (*run) {
                const auto manifest = run_pipeline(config, err);
                out << manifest.dump(2) << '\n';
                return 0;
            }
            validate(config);
            stage = "ingest";
            auto kept = apply_exclusions(parse_clinical_csv(read_text_file(config.cohort_csv))).kept;
            std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
            stage = "views";
            const auto cases = load_cases(config.data_dir, kept, config.threads);
            stage = "cv";
            std::vector<std::string> ids;
            for (const auto& r : kept) ids.push_back(r.patient_id);
            const auto plan = make_folds(ids, config.k, config.repeats, config.master_seed);
            const auto table = run_cv(cases, baseline_factory({config.views_per_scan, config.ridge_lambda}), plan, config.threads);
            stage = "write";
            OutputSet o;
            o.add("predictions.csv", to_csv(table));
            o.commit(config.out_dir);
            return 0;
        }
        if (*synth) {
            stage = "synth";
            const auto spec = read_json_file(spec_path).get<SynthSpec>();
            const auto cohort = generate_cohort(spec, out_path);
            out << "wrote " << cohort.records.size() << " cases to " << out_path << '\n';
            return 0;
        }
        if (*ingest) {
            stage = "ingest";
            const auto ex = apply_exclusions(parse_clinical_csv(read_text_file(cohort_path)));
            std::string log = "patient_id,reason\n";
            for (const auto& e : ex.log) log += e.patient_id + ',' + e.reason + '\n';
            OutputSet o;
            o.add("cohort_clean.csv", to_csv(ex.kept));
            o.add("exclusions.csv", log);
            stage = "write";
            o.commit(out_path);
            out << "kept " << ex.kept.size() << ", excluded " << ex.log.size() << '\n';
            return 0;
        }
        if (*views) {
            stage = "views";
            const auto vols = load_case_volumes(case_dir);
            const auto set = extract_views(vols.image, vols.segmentation, std::filesystem::path(case_dir).filename().string());
            nlohmann::json summary{{"case_id", set.case_id},
                                   {"dims", {vols.image.dims.x, vols.image.dims.y, vols.image.dims.z}},
                                   {"views", set.views.size()},
                                   {"tumor_voxels", vols.segmentation.tumor_voxels()},
                                   {"nonzero_weight_views", std::count_if(set.weights.begin(), set.weights.end(), [](double w) { return w > 0.0; })}};
            if (!dump_dir.empty()) detail::dump_views(set, dump_dir);
            out << summary.dump(2) << '\n';
            return 0;
        }
        if (*disc) {
            stage = "discrepancy";
            if (sd != "population" && sd != "sample") throw Error(Errc::ConfigError, "--sd must be 'population' or 'sample'");
            const auto table = load_external_predictions(read_text_file(predictions_path));
            const auto d = compute_discrepancy(table, sd == "population" ? SdConvention::population : SdConvention::sample);
            OutputSet o;
            o.add("discrepancy.csv", to_csv(d));
            o.add("age_scatter.svg", render_scatter(table, d.fit));
            stage = "write";
            o.commit(out_path);
            return 0;
        }
        if (*coxfit) {
            stage = "coxfit";
            const auto ep = detail::parse_endpoint(endpoint);
            const auto kept = apply_exclusions(parse_clinical_csv(read_text_file(cohort_path))).kept;
            const auto d = parse_discrepancy_csv(read_text_file(discrepancy_path));
            const auto design = build_design_matrix(kept, ep, d);
            SurvivalData data{design.x, design.time, design.event, ties.empty() ? Ties::efron : parse_ties(ties)};
            const auto fit = fit_cox(data, {}, design.columns);
            if (!fit.converged)
                err << "WARN NotConverged coxfit " << detail::endpoint_tag(ep) << " model stopped after " << fit.iterations << " iterations\n";
            const auto target = std::filesystem::path(out_path);
            OutputSet o;
            o.add(target.filename().string(), to_json(fit).dump(2) + "\n");
            stage = "write";
            o.commit(target.has_parent_path() ? target.parent_path() : std::filesystem::path("."));
            out << render_hr_table(fit, design_labels(ep)).text;
            return 0;
        }
        if (*report) {
            stage = "report";
            const auto ep = detail::parse_endpoint(endpoint);
            CoxFitResult fit;
            try {
                fit = cox_fit_from_json(read_json_file(fit_path));
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::ConfigError, fit_path + ": " + e.what());
            }
            const auto& labels = fit.names == design_columns(ep) ? design_labels(ep) : fit.names;
            const auto tag = detail::endpoint_tag(ep);
            OutputSet o;
            const auto table = render_hr_table(fit, labels);
            o.add(tag + "_table.csv", table.csv);
            o.add(tag + "_forest.svg", render_forest_plot(forest_rows(fit, labels), ForestAxis::log_hr));
            stage = "write";
            o.commit(out_path);
            out << table.text;
            return 0;
        }
    } catch (const StageError& e) {
        err << error_record(e.code(), e.stage(), e.detail()) << '\n';
        return exit_code(e.kind());
    } catch (const Error& e) {
        err << error_record(e.code(), stage, e.detail()) << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << error_record(Errc::IoFailure, stage, e.what()) << '\n';
        return 3;
    }
    return 0;
}

} // namespace frailty::cli
