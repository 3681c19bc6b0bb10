#include "scm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scm/error.hpp"

namespace scm {

std::span<const double> Series::over(TimeRange window) const {
    const TimeRange have = range();
    if (window.size() < 1) throw Error(ErrorCode::EmptyWindow, "window is empty");
    if (!have.contains(window.first) || !have.contains(window.last))
        throw Error(ErrorCode::EmptyWindow, "window " + std::to_string(window.first) + "-" +
                                                std::to_string(window.last) + " is not covered by the series");
    return std::span<const double>(values).subspan(static_cast<std::size_t>(window.first - first),
                                                   static_cast<std::size_t>(window.size()));
}

namespace {

void check_pair(std::span<const double> actual, std::span<const double> synthetic) {
    if (actual.empty()) throw Error(ErrorCode::EmptyWindow, "window is empty");
    if (actual.size() != synthetic.size())
        throw Error(ErrorCode::EmptyWindow, "actual and synthetic series differ in length");
}

}  // namespace

double rmse(std::span<const double> actual, std::span<const double> synthetic) {
    check_pair(actual, synthetic);
    double ss = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        const double d = synthetic[t] - actual[t];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(actual.size()));
}

double mae(std::span<const double> actual, std::span<const double> synthetic) {
    check_pair(actual, synthetic);
    double s = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) s += std::abs(synthetic[t] - actual[t]);
    return s / static_cast<double>(actual.size());
}

double rsr(std::span<const double> actual, std::span<const double> synthetic) {
    check_pair(actual, synthetic);
    const std::size_t n = actual.size();
    if (n < 2) throw Error(ErrorCode::EmptyWindow, "RSR needs at least two periods");

    double mean = 0.0;
    for (double y : actual) mean += y;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    double scale = 0.0;
    for (double y : actual) {
        ss += (y - mean) * (y - mean);
        scale = std::max(scale, std::abs(y));
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 1e-14 * scale))
        throw Error(ErrorCode::DegenerateVariance, "actual series has no variation over the window");
    return rmse(actual, synthetic) / sd;
}

double rmse(const Series& actual, const Series& synthetic, TimeRange window) {
    return rmse(actual.over(window), synthetic.over(window));
}

double mae(const Series& actual, const Series& synthetic, TimeRange window) {
    return mae(actual.over(window), synthetic.over(window));
}

double rsr(const Series& actual, const Series& synthetic, TimeRange window) {
    if (window.size() < 2) throw Error(ErrorCode::EmptyWindow, "RSR needs at least two periods");
    return rsr(actual.over(window), synthetic.over(window));
}

Series treated_series(const SynthFit& fit) {
    return {fit.window.first, {fit.treated_path.data(), fit.treated_path.data() + fit.treated_path.size()}};
}

Series synthetic_series(const SynthFit& fit) {
    return {fit.window.first,
            {fit.synthetic_path.data(), fit.synthetic_path.data() + fit.synthetic_path.size()}};
}

GapSeries gap_series(const SynthFit& fit, const PanelDataset& panel) {
    const auto row = panel.unit_index(fit.design.treated);
    GapSeries g;
    for (TimeIndex t = fit.window.first; t <= fit.window.last; ++t) {
        const auto y = panel.outcome(row, t);
        if (!y)
            throw Error(ErrorCode::TreatedIncomplete,
                        "outcome for '" + fit.design.treated + "' missing at " + std::to_string(t));
        g.times.push_back(t);
        g.gap.push_back(*y - fit.synthetic_path(static_cast<Eigen::Index>(t - fit.window.first)));
    }
    return g;
}

UnitFitStats fit_stats(const SynthFit& fit) {
    UnitFitStats s;
    s.unit = fit.design.treated;
    const Series actual = treated_series(fit);
    const Series synth = synthetic_series(fit);
    const TimeRange pre = fit.design.pre_period;
    const TimeRange post = fit.design.post_period;

    auto attempt = [&](std::optional<double>& slot, const char* name, auto&& fn) {
        try {
            slot = fn();
        } catch (const Error& e) {
            s.errors.push_back(std::string(name) + ": " + e.what());
        }
    };
    attempt(s.pre_rmse, "pre_rmse", [&] { return rmse(actual, synth, pre); });
    attempt(s.post_rmse, "post_rmse", [&] { return rmse(actual, synth, post); });
    attempt(s.pre_mae, "pre_mae", [&] { return mae(actual, synth, pre); });
    attempt(s.rsr, "rsr", [&] { return rsr(actual, synth, pre); });

    if (s.pre_rmse && s.post_rmse) {
        if (*s.pre_rmse > 0.0)
            s.ratio = *s.post_rmse / *s.pre_rmse;
        else
            s.errors.push_back("ratio: pre-period RMSE is zero");
    }
    s.well_fit = s.rsr.has_value() && *s.rsr < kWellFitRsr;
    return s;
}

namespace {

ColumnSummary summarize(const std::vector<UnitFitStats>& rows, std::optional<double> UnitFitStats::*field) {
    ColumnSummary c;
    double sum = 0.0;
    for (const auto& r : rows) {
        const auto& v = r.*field;
        if (!v) continue;
        if (c.count == 0) {
            c.min = c.max = *v;
        } else {
            c.min = std::min(c.min, *v);
            c.max = std::max(c.max, *v);
        }
        sum += *v;
        ++c.count;
    }
    c.mean = c.count ? sum / static_cast<double>(c.count) : std::numeric_limits<double>::quiet_NaN();
    return c;
}

std::optional<double> UnitFitStats::*column_field(const std::string& column) {
    if (column == "pre_rmse") return &UnitFitStats::pre_rmse;
    if (column == "post_rmse") return &UnitFitStats::post_rmse;
    if (column == "pre_mae") return &UnitFitStats::pre_mae;
    if (column == "rsr") return &UnitFitStats::rsr;
    if (column == "ratio") return &UnitFitStats::ratio;
    throw Error(ErrorCode::InvalidDesign, "unknown fit-report column '" + column + "'");
}

}  // namespace

std::vector<double> FitReport::values(const std::string& column) const {
    const auto field = column_field(column);
    std::vector<double> out;
    for (const auto& r : rows)
        if (const auto& v = r.*field) out.push_back(*v);
    return out;
}

FitReport fit_report(std::vector<UnitFitStats> rows) {
    if (rows.empty()) throw Error(ErrorCode::EmptyWindow, "fit report needs at least one fit");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const UnitFitStats& a, const UnitFitStats& b) { return a.unit < b.unit; });
    FitReport rep;
    rep.rows = std::move(rows);
    rep.pre_rmse = summarize(rep.rows, &UnitFitStats::pre_rmse);
    rep.post_rmse = summarize(rep.rows, &UnitFitStats::post_rmse);
    rep.pre_mae = summarize(rep.rows, &UnitFitStats::pre_mae);
    rep.rsr = summarize(rep.rows, &UnitFitStats::rsr);
    rep.ratio = summarize(rep.rows, &UnitFitStats::ratio);
    return rep;
}

FitReport fit_report(std::span<const SynthFit> fits, const PanelDataset& panel) {
    std::vector<UnitFitStats> rows;
    rows.reserve(fits.size());
    for (const auto& f : fits) {
        panel.unit_index(f.design.treated);
        rows.push_back(fit_stats(f));
    }
    return fit_report(std::move(rows));
}

}  // namespace scm
