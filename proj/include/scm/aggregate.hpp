#pragma once

// Weighted status completion rates from individual-level survey records.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scm/panel.hpp"

namespace scm {

struct MicroRecord {
    UnitId unit;
    TimeIndex time = 0;
    int age = 0;
    bool has_credential = false;
    double weight = 0.0;  // sampling weight chosen by the caller, >= 0
};

// Inclusive age bounds; defaults to the 18-24 young-adult window.
struct AgeWindow {
    int min_age = 18;
    int max_age = 24;

    bool contains(int age) const noexcept { return age >= min_age && age <= max_age; }
};

// Sum(weight * has_credential) / Sum(weight) over records for (unit, time)
// whose age lies in the window. nullopt when the eligible weight total is 0.
// Weights are summed in sorted order with compensation, so the result does
// not depend on record order.
std::optional<double> status_completion_rate(std::span<const MicroRecord> records, const UnitId& unit,
                                             TimeIndex time, const AgeWindow& window = {});

struct CellSummary {
    UnitId unit;
    TimeIndex time = 0;
    std::size_t eligible_records = 0;
    std::optional<double> rate;
};

struct OutcomePanel {
    PanelDataset panel;
    std::vector<CellSummary> cells;  // unit-major, time-minor
};

// Outcome cell (u, t) = status_completion_rate(records, u, t, window). The
// result is flagged as a rate panel. `times` must be a gap-free sequence.
OutcomePanel aggregate_outcomes(std::span<const MicroRecord> records, const std::vector<UnitId>& units,
                                const std::vector<TimeIndex>& times, const AgeWindow& window = {});

PanelDataset build_outcome_panel(std::span<const MicroRecord> records, const std::vector<UnitId>& units,
                                 const std::vector<TimeIndex>& times, const AgeWindow& window = {});

// Microdata file: header `unit,time,age,has_credential,weight`,
// has_credential in {0,1}. Parse errors name the offending line.
std::vector<MicroRecord> load_microdata(std::istream& in);
std::vector<MicroRecord> load_microdata_file(const std::string& path);

}  // namespace scm
