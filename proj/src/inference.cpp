#include "scm/inference.hpp"

#include <algorithm>

#include "scm/error.hpp"
#include "scm/parallel.hpp"

namespace scm {

double permutation_p_value(double observed, std::span<const double> all) {
    if (all.empty()) throw Error(ErrorCode::DegenerateStudy, "no fitted units to compare against");
    const auto at_least = std::count_if(all.begin(), all.end(), [&](double x) { return x >= observed; });
    return static_cast<double>(at_least) / static_cast<double>(all.size());
}

int descending_rank(double observed, std::span<const double> all) {
    return 1 + static_cast<int>(std::count_if(all.begin(), all.end(), [&](double x) { return x > observed; }));
}

namespace {

PlaceboResult fit_unit(const PanelDataset& panel, const StudyDesign& design, const PredictorSpec& spec,
                       const SolverOptions& solver, bool is_treated) {
    PlaceboResult r;
    r.unit = design.treated;
    r.is_treated = is_treated;
    try {
        r.fit = fit(panel, design, spec, solver);
        r.stats = fit_stats(*r.fit);
        if (!r.stats.pre_rmse || !r.stats.post_rmse)
            r.failure = r.stats.errors.empty() ? "RMSE undefined" : r.stats.errors.front();
    } catch (const Error& e) {
        r.failure = e.what();
        r.fit.reset();
    }
    return r;
}

}  // namespace

PlaceboStudy run_placebos(const PanelDataset& panel, const StudyDesign& design, const PredictorSpec& spec,
                          const SolverOptions& solver, const PlaceboOptions& options) {
    design.validate(panel);
    if (design.donors.size() < 2)
        throw Error(ErrorCode::InvalidDesign, "placebo inference needs at least two donors");

    PlaceboStudy study;
    study.treated = fit_unit(panel, design, spec, solver, true);
    if (!study.treated.succeeded())
        throw Error(ErrorCode::StudyFailure,
                    "treated unit '" + design.treated + "' could not be fitted: " + *study.treated.failure);
    study.design = study.treated.fit->design;

    // Donors excluded from the treated fit for missing data cannot be fitted
    // as pseudo-treated units either; they are recorded as failures.
    std::vector<UnitId> pool = study.design.donors;
    std::vector<UnitId> candidates = design.donors;
    std::sort(candidates.begin(), candidates.end());

    study.placebos.resize(candidates.size());
    parallel_for(candidates.size(), options.threads, [&](std::size_t i) {
        const auto& unit = candidates[i];
        if (std::find(pool.begin(), pool.end(), unit) == pool.end()) {
            PlaceboResult r;
            r.unit = unit;
            r.failure = "excluded from the donor pool for missing data";
            study.placebos[i] = std::move(r);
            return;
        }
        StudyDesign d = study.design;
        d.treated = unit;
        d.donors.clear();
        for (const auto& u : pool)
            if (u != unit) d.donors.push_back(u);
        study.placebos[i] = fit_unit(panel, d, spec, solver, false);
    });

    for (const auto& p : study.placebos)
        if (!p.succeeded()) ++study.n_failed;
    if (2 * study.n_failed > study.placebos.size())
        throw Error(ErrorCode::DegenerateStudy, std::to_string(study.n_failed) + " of " +
                                                    std::to_string(study.placebos.size()) +
                                                    " placebo fits failed");

    if (options.filter_by_pre_fit) {
        const double limit = options.filter_k * study.treated.pre_rmse();
        for (auto& p : study.placebos)
            if (p.succeeded() && p.pre_rmse() > limit) {
                p.filtered = true;
                ++study.n_filtered;
            }
    }

    const double observed = study.treated.post_rmse();
    std::vector<double> all{observed};
    std::vector<double> placebo_only;
    for (const auto& p : study.placebos)
        if (p.counted()) {
            all.push_back(p.post_rmse());
            placebo_only.push_back(p.post_rmse());
        }
    study.n_units = all.size();
    study.p_value = permutation_p_value(observed, all);
    study.rank = descending_rank(observed, all);
    if (!placebo_only.empty()) study.p_value_donors_only = permutation_p_value(observed, placebo_only);
    return study;
}

std::vector<RatioRank> ratio_ranking(const PlaceboStudy& study) {
    std::vector<RatioRank> out{{study.treated.unit, study.treated.ratio(), true}};
    for (const auto& p : study.placebos)
        if (p.counted()) out.push_back({p.unit, p.ratio(), false});
    std::sort(out.begin(), out.end(), [](const RatioRank& a, const RatioRank& b) {
        if (a.ratio.has_value() != b.ratio.has_value()) return a.ratio.has_value();
        if (a.ratio && *a.ratio != *b.ratio) return *a.ratio > *b.ratio;
        return a.unit < b.unit;
    });
    return out;
}

std::vector<GapPath> gap_paths(const PlaceboStudy& study, const PanelDataset& panel) {
    std::vector<GapPath> out;
    out.push_back({study.treated.unit, true, gap_series(*study.treated.fit, panel)});
    for (const auto& p : study.placebos)
        if (p.succeeded()) out.push_back({p.unit, false, gap_series(*p.fit, panel)});
    return out;
}

}  // namespace scm
