#pragma once

// In-space placebo inference: refit every donor as a pseudo-treated unit and
// compare post-period RMSEs.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scm/diagnostics.hpp"
#include "scm/estimator.hpp"

namespace scm {

struct PlaceboOptions {
    // Drop placebos whose pre-period RMSE exceeds filter_k times the treated
    // unit's. Off by default.
    bool filter_by_pre_fit = false;
    double filter_k = 5.0;
    unsigned threads = 1;  // 0 = one per hardware thread
};

struct PlaceboResult {
    UnitId unit;
    bool is_treated = false;
    std::optional<SynthFit> fit;
    UnitFitStats stats;
    std::optional<std::string> failure;
    bool filtered = false;

    bool succeeded() const noexcept { return fit.has_value() && !failure; }
    bool counted() const noexcept { return succeeded() && !filtered; }
    double pre_rmse() const { return stats.pre_rmse.value(); }
    double post_rmse() const { return stats.post_rmse.value(); }
    std::optional<double> ratio() const { return stats.ratio; }
};

struct PlaceboStudy {
    StudyDesign design;  // the treated unit's design after donor exclusions
    PlaceboResult treated;
    std::vector<PlaceboResult> placebos;  // sorted by unit label

    // Share of counted units, treated included, whose post-period RMSE is at
    // least the treated unit's. Lies in [1/N, 1].
    double p_value = 1.0;
    // Position of the treated post-period RMSE, 1 = largest.
    int rank = 1;
    std::size_t n_units = 0;  // counted units, treated included
    // Alternate convention: placebos only in numerator and denominator.
    std::optional<double> p_value_donors_only;
    std::size_t n_failed = 0;
    std::size_t n_filtered = 0;
};

// count(x >= observed) / size. Throws if `all` is empty.
double permutation_p_value(double observed, std::span<const double> all);
// 1 + count(x > observed).
int descending_rank(double observed, std::span<const double> all);

// Throws StudyFailure if the treated fit fails and DegenerateStudy if more
// than half of the placebo fits fail. Placebo donor pools exclude the
// originally treated unit.
PlaceboStudy run_placebos(const PanelDataset& panel, const StudyDesign& design, const PredictorSpec& spec,
                          const SolverOptions& solver = {}, const PlaceboOptions& options = {});

struct RatioRank {
    UnitId unit;
    std::optional<double> ratio;  // nullopt = undefined (zero pre-period RMSE)
    bool is_treated = false;
};

// Counted units by descending post/pre RMSE ratio; undefined ratios last;
// ties broken by unit label.
std::vector<RatioRank> ratio_ranking(const PlaceboStudy& study);

struct GapPath {
    UnitId unit;
    bool is_treated = false;
    GapSeries series;
};

// One gap series per successfully fitted unit, treated first, then placebos
// in label order.
std::vector<GapPath> gap_paths(const PlaceboStudy& study, const PanelDataset& panel);

}  // namespace scm
