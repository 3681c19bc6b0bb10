#pragma once

// Balanced unit x time panel data, study designs, and predictor specifications.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace scm {

using UnitId = std::string;
using TimeIndex = int;

// Inclusive range of periods [first, last].
struct TimeRange {
    TimeIndex first = 0;
    TimeIndex last = -1;

    int size() const noexcept { return last >= first ? last - first + 1 : 0; }
    bool contains(TimeIndex t) const noexcept { return t >= first && t <= last; }
    bool operator==(const TimeRange&) const = default;
};

// Missing cells are stored as quiet NaN; every other cell must be finite.
struct Covariate {
    std::string name;
    Eigen::MatrixXd values;  // units x times
};

class PanelDataset {
public:
    // Validates all invariants. Units must be unique and non-empty, times
    // run first_time .. first_time + n_times - 1, matrices are units x times.
    PanelDataset(std::vector<UnitId> units, TimeIndex first_time, Eigen::MatrixXd outcome,
                 std::vector<Covariate> covariates = {}, bool rate_panel = false);

    const std::vector<UnitId>& units() const noexcept { return units_; }
    std::size_t n_units() const noexcept { return units_.size(); }
    std::size_t n_times() const noexcept { return static_cast<std::size_t>(outcome_.cols()); }
    TimeIndex first_time() const noexcept { return first_time_; }
    TimeIndex last_time() const noexcept { return first_time_ + static_cast<int>(n_times()) - 1; }
    TimeRange time_range() const noexcept { return {first_time(), last_time()}; }
    std::vector<TimeIndex> times() const;
    bool has_time(TimeIndex t) const noexcept { return time_range().contains(t); }
    bool is_rate_panel() const noexcept { return rate_panel_; }

    std::optional<std::size_t> find_unit(std::string_view label) const;
    // Throws InvalidDesign when the label is unknown.
    std::size_t unit_index(std::string_view label) const;
    std::size_t time_offset(TimeIndex t) const;

    const Eigen::MatrixXd& outcomes() const noexcept { return outcome_; }
    std::optional<double> outcome(std::size_t unit, TimeIndex t) const;
    bool outcome_missing(std::size_t unit, TimeIndex t) const;

    const std::vector<Covariate>& covariates() const noexcept { return covariates_; }
    const Covariate* find_covariate(std::string_view name) const;

    // Copy restricted to the given units (in that order) and time range.
    PanelDataset subset(const std::vector<std::size_t>& unit_rows, TimeRange range) const;

    bool operator==(const PanelDataset& other) const;

private:
    std::vector<UnitId> units_;
    TimeIndex first_time_;
    Eigen::MatrixXd outcome_;
    std::vector<Covariate> covariates_;
    bool rate_panel_;
};

bool is_missing(double cell) noexcept;
double missing_value() noexcept;

struct StudyDesign {
    UnitId treated;
    TimeIndex treatment_time = 0;
    TimeRange pre_period;
    TimeRange post_period;
    std::vector<UnitId> donors;

    TimeRange window() const noexcept { return {pre_period.first, post_period.last}; }

    // Throws InvalidDesign describing the first violated invariant.
    void validate(const PanelDataset& panel) const;

    bool operator==(const StudyDesign&) const = default;
};

// Design with every unit other than `treated` as a donor.
StudyDesign make_design(const PanelDataset& panel, const UnitId& treated, TimeIndex treatment_time,
                        TimeIndex pre_start, TimeIndex post_end);

struct CovariateMean {
    std::string covariate;
    bool operator==(const CovariateMean&) const = default;
};

struct OutcomeLag {
    TimeIndex time = 0;
    bool operator==(const OutcomeLag&) const = default;
};

using PredictorEntry = std::variant<CovariateMean, OutcomeLag>;

struct PredictorSpec {
    std::vector<PredictorEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    void validate(const PanelDataset& panel, const StudyDesign& design) const;
    bool operator==(const PredictorSpec&) const = default;
};

// Display label: the covariate name, or "outcome <time>" for a lag.
std::string predictor_label(const PredictorEntry& entry);

// Parses "mean:<covariate>" or "lag:<time>".
PredictorEntry parse_predictor(std::string_view token);
std::string format_predictor(const PredictorEntry& entry);

// ---------------------------------------------------------------------------
// Long-format file I/O: header `unit,time,outcome[,covariate...]`, one row per
// (unit, time), empty field = missing.
// ---------------------------------------------------------------------------

struct LoadOptions {
    bool rate_panel = false;
};

PanelDataset load_panel(std::istream& in, const LoadOptions& options = {});
PanelDataset load_panel_file(const std::string& path, const LoadOptions& options = {});
void save_panel(std::ostream& out, const PanelDataset& panel);
void save_panel_file(const std::string& path, const PanelDataset& panel);

// ---------------------------------------------------------------------------
// Restriction to the study window.
// ---------------------------------------------------------------------------

struct DonorExclusion {
    UnitId unit;
    std::string reason;
    bool operator==(const DonorExclusion&) const = default;
};

struct RestrictedPanel {
    PanelDataset panel;    // treated and surviving donors, in the source panel's unit order
    StudyDesign design;    // donors narrowed to the survivors
    std::vector<DonorExclusion> excluded;
};

// Drops donors with a missing outcome inside the study window.
RestrictedPanel restrict(const PanelDataset& panel, const StudyDesign& design);

// As above, and additionally drops donors for which a covariate used by a
// CovariateMean entry has no observed value in the pre-period.
RestrictedPanel restrict(const PanelDataset& panel, const StudyDesign& design,
                         const PredictorSpec& spec);

}  // namespace scm
