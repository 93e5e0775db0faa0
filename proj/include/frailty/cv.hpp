#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "frailty/error.hpp"
#include "frailty/parallel.hpp"
#include "frailty/predictor.hpp"
#include "frailty/rng.hpp"

namespace frailty {

/// Repeated k-fold assignment. `assignments[r][i]` is the fold of
/// `patient_ids[i]` in repeat r.
struct FoldPlan {
    std::size_t k = 5;
    std::size_t repeats = 3;
    std::uint64_t master_seed = 0;
    std::vector<std::string> patient_ids;
    std::vector<std::vector<std::size_t>> assignments;

    std::uint64_t repeat_seed(std::size_t repeat) const noexcept { return derive_seed(master_seed, repeat); }

    std::size_t fold_of(std::size_t repeat, std::string_view patient_id) const
    {
        for (std::size_t i = 0; i < patient_ids.size(); ++i)
            if (patient_ids[i] == patient_id) return assignments[repeat][i];
        throw Error(Errc::MissingCase, "patient '" + std::string(patient_id) + "' is not in the fold plan");
    }
};

/// Each repeat shuffles the patients with its own derived seed and deals
/// them round-robin into k folds.
inline FoldPlan make_folds(std::vector<std::string> patient_ids, std::size_t k, std::size_t repeats, std::uint64_t master_seed)
{
    if (k < 2) throw Error(Errc::ConfigError, "k must be at least 2");
    if (repeats < 1) throw Error(Errc::ConfigError, "repeats must be at least 1");
    if (patient_ids.size() < k)
        throw Error(Errc::TooFewPatients, std::to_string(patient_ids.size()) + " patients for " + std::to_string(k) + " folds");
    {
        auto sorted = patient_ids;
        std::sort(sorted.begin(), sorted.end());
        const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
        if (dup != sorted.end()) throw Error(Errc::DuplicateIds, "patient '" + *dup + "' listed twice");
    }

    FoldPlan plan;
    plan.k = k;
    plan.repeats = repeats;
    plan.master_seed = master_seed;
    plan.patient_ids = std::move(patient_ids);
    const std::size_t n = plan.patient_ids.size();
    plan.assignments.assign(repeats, std::vector<std::size_t>(n, 0));
    for (std::size_t r = 0; r < repeats; ++r) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(plan.repeat_seed(r));
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
        for (std::size_t pos = 0; pos < n; ++pos) plan.assignments[r][order[pos]] = pos % k;
    }
    return plan;
}

/// Raw per-repeat predictions kept alongside the averaged table.
struct CvResult {
    PredictionTable table;
    /// `per_repeat[i][r]` for patient i in plan order.
    std::vector<std::vector<double>> per_repeat;
};

/// Fits one predictor per (repeat, fold) on the other folds and predicts the
/// held-out patients. Fold jobs may run on `threads` workers; results land in
/// fixed slots, so output never depends on scheduling.
inline CvResult run_cv_detailed(std::span<const Case> cases, const PredictorFactory& factory, const FoldPlan& plan,
                                std::size_t threads = 1)
{
    std::map<std::string, const Case*, std::less<>> by_id;
    for (const auto& c : cases) by_id.emplace(c.patient_id, &c);
    std::vector<const Case*> ordered;
    ordered.reserve(plan.patient_ids.size());
    for (const auto& id : plan.patient_ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(Errc::MissingCase, "no case loaded for patient '" + id + "'");
        ordered.push_back(it->second);
    }

    const std::size_t n = ordered.size();
    const std::size_t jobs = plan.repeats * plan.k;
    std::vector<std::vector<double>> per_repeat(n, std::vector<double>(plan.repeats, 0.0));

    parallel_for(jobs, threads, [&](std::size_t job) {
        const std::size_t r = job / plan.k;
        const std::size_t f = job % plan.k;
        TrainingContext ctx;
        ctx.seed = plan.repeat_seed(r);
        ctx.repeat = r;
        ctx.fold = f;
        for (std::size_t i = 0; i < n; ++i)
            if (plan.assignments[r][i] != f) ctx.cases.push_back(ordered[i]);
        std::unique_ptr<AgePredictor> model;
        try {
            model = factory(ctx);
        } catch (const std::exception& e) {
            throw Error(Errc::PredictorFailure, "training repeat " + std::to_string(r) + " fold " + std::to_string(f) + ": " + e.what());
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (plan.assignments[r][i] != f) continue;
            double pred = 0.0;
            try {
                pred = model->predict(*ordered[i]);
            } catch (const std::exception& e) {
                throw Error(Errc::PredictorFailure, "patient '" + ordered[i]->patient_id + "': " + e.what());
            }
            if (!std::isfinite(pred))
                throw Error(Errc::PredictorFailure, "patient '" + ordered[i]->patient_id + "': non-finite prediction");
            per_repeat[i][r] = pred;
        }
    });

    CvResult out;
    out.per_repeat = std::move(per_repeat);
    out.table.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (double v : out.per_repeat[i]) sum += v;
        const double mean = sum / static_cast<double>(plan.repeats);
        const auto [lo, hi] = std::minmax_element(out.per_repeat[i].begin(), out.per_repeat[i].end());
        out.table.rows.push_back({ordered[i]->patient_id, std::clamp(mean, *lo, *hi), ordered[i]->chronological_age});
    }
    return out;
}

inline PredictionTable run_cv(std::span<const Case> cases, const PredictorFactory& factory, const FoldPlan& plan,
                              std::size_t threads = 1)
{
    return run_cv_detailed(cases, factory, plan, threads).table;
}

} // namespace frailty
