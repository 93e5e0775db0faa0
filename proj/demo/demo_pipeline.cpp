// Generates a small synthetic cohort, runs the full pipeline on it, and
// prints both hazard-ratio tables.
//
//   demo_pipeline [work_dir]

#include <filesystem>
#include <iostream>

#include "frailty/frailty.hpp"

int main(int argc, char** argv)
{
    namespace fs = std::filesystem;
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "frailty_demo";

    frailty::SynthSpec spec;
    spec.n_patients = 60;
    spec.true_beta = {0.4, 0.9};
    spec.seed = 2024;
    try {
        frailty::generate_cohort(spec, work / "data");

        frailty::RunConfig config;
        config.data_dir = work / "data";
        config.cohort_csv = work / "data" / "cohort.csv";
        config.out_dir = work / "out";
        const auto manifest = frailty::run_pipeline(config);

        for (const char* tag : {"los", "os"}) {
            const auto fit = frailty::cox_fit_from_json(
                nlohmann::json::parse(frailty::read_text_file(config.out_dir / (std::string(tag) + "_fit.json"))));
            const auto endpoint = std::string(tag) == "los" ? frailty::Endpoint::LOS : frailty::Endpoint::OS;
            std::cout << (endpoint == frailty::Endpoint::LOS ? "Length of stay" : "Overall survival") << '\n'
                      << frailty::render_hr_table(fit, frailty::design_labels(endpoint)).text << '\n';
        }
        std::cout << "outputs in " << config.out_dir << " (" << manifest["outputs"].size() << " files)\n";
    } catch (const frailty::Error& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }
    return 0;
}
