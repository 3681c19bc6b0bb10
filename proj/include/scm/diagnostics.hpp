#pragma once

// Gap paths and fit statistics: RMSE, MAE and the RMSE-observations
// standard deviation ratio (RSR).

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scm/estimator.hpp"
#include "scm/panel.hpp"

namespace scm {

// Values indexed by consecutive periods starting at `first`.
struct Series {
    TimeIndex first = 0;
    std::vector<double> values;

    TimeRange range() const noexcept { return {first, first + static_cast<int>(values.size()) - 1}; }
    // Throws EmptyWindow when the window is empty or not covered.
    std::span<const double> over(TimeRange window) const;
};

// sqrt(mean((synthetic - actual)^2)). Throws EmptyWindow on empty input.
double rmse(std::span<const double> actual, std::span<const double> synthetic);
// mean(|synthetic - actual|).
double mae(std::span<const double> actual, std::span<const double> synthetic);
// rmse / sample standard deviation of actual (1/T numerator, 1/(T-1)
// denominator). Needs T >= 2 and a non-constant actual series.
double rsr(std::span<const double> actual, std::span<const double> synthetic);

double rmse(const Series& actual, const Series& synthetic, TimeRange window);
double mae(const Series& actual, const Series& synthetic, TimeRange window);
double rsr(const Series& actual, const Series& synthetic, TimeRange window);

// Unit counts as well fit when its pre-period RSR is below 1.
constexpr double kWellFitRsr = 1.0;

struct GapSeries {
    std::vector<TimeIndex> times;
    std::vector<double> gap;  // actual - synthetic
};

// gap(t) = y_treated(t) - synthetic_path(t) over the fit's window, with the
// treated outcomes read from `panel`.
GapSeries gap_series(const SynthFit& fit, const PanelDataset& panel);

Series treated_series(const SynthFit& fit);
Series synthetic_series(const SynthFit& fit);

struct UnitFitStats {
    UnitId unit;
    std::optional<double> pre_rmse;
    std::optional<double> post_rmse;
    std::optional<double> pre_mae;
    std::optional<double> rsr;
    std::optional<double> ratio;  // post_rmse / pre_rmse, only when pre_rmse > 0
    bool well_fit = false;
    std::vector<std::string> errors;
};

// Statistics for one fit; per-stat failures are recorded, not thrown.
UnitFitStats fit_stats(const SynthFit& fit);

struct ColumnSummary {
    std::size_t count = 0;
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

struct FitReport {
    std::vector<UnitFitStats> rows;  // sorted by unit label
    ColumnSummary pre_rmse;
    ColumnSummary post_rmse;
    ColumnSummary pre_mae;
    ColumnSummary rsr;
    ColumnSummary ratio;

    // Defined values of one column, in row order; for histograms.
    std::vector<double> values(const std::string& column) const;
};

FitReport fit_report(std::span<const SynthFit> fits, const PanelDataset& panel);
FitReport fit_report(std::vector<UnitFitStats> rows);

}  // namespace scm
