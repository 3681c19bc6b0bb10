#pragma once

// Study configuration files: INI-style sections of key = value lines.
//
//   [data]       panel, rate_panel
//   [design]     treated, treatment_time, pre_start, post_end, donors
//   [predictors] entries            (comma list of mean:<cov> / lag:<time>)
//   [solver]     outer_starts, seed, max_inner_iterations, inner_gap_tolerance,
//                max_evaluations_per_start, initial_step, step_tolerance
//   [placebo]    filter, filter_k
//   [aggregate]  microdata, units, first_time, last_time, min_age, max_age
//   [simulate]   FactorModelConfig fields
//   [power]      replications, alpha, top_fraction
//
// Unknown sections and keys are rejected with ConfigError. Relative paths
// are resolved against the directory holding the config file.

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "scm/aggregate.hpp"
#include "scm/estimator.hpp"
#include "scm/inference.hpp"
#include "scm/panel.hpp"
#include "scm/simulate.hpp"

namespace scm {

struct DataSection {
    std::string panel_path;
    bool rate_panel = false;
};

struct DesignSection {
    UnitId treated;
    TimeIndex treatment_time = 0;
    TimeIndex pre_start = 0;
    TimeIndex post_end = 0;
    std::vector<UnitId> donors;  // empty = every other unit
};

struct AggregateSection {
    std::string microdata_path;
    std::vector<UnitId> units;  // empty = every unit in the microdata
    std::optional<TimeIndex> first_time;
    std::optional<TimeIndex> last_time;
    AgeWindow ages;
};

struct PowerSection {
    std::size_t replications = 100;
    std::vector<double> alpha_grid{0.05, 0.1};
    double top_fraction = 0.1;
};

struct StudyConfig {
    std::string source_dir;  // directory the config was read from

    std::optional<DataSection> data;
    std::optional<DesignSection> design;
    std::optional<PredictorSpec> predictors;
    SolverOptions solver;
    PlaceboOptions placebo;
    std::optional<AggregateSection> aggregate;
    FactorModelConfig simulate;
    bool has_simulate = false;
    PowerSection power;

    // Throws ConfigError when a section a command needs is absent.
    const DataSection& require_data() const;
    const DesignSection& require_design() const;
    const PredictorSpec& require_predictors() const;
    const AggregateSection& require_aggregate() const;

    std::string resolve(const std::string& path) const;
};

StudyConfig parse_config(std::istream& in, const std::string& source_dir = ".");
StudyConfig load_config_file(const std::string& path);

// Design for the loaded panel: the configured donors, or every other unit.
StudyDesign build_design(const DesignSection& section, const PanelDataset& panel);

// Config text reproducing a simulated study, readable by load_config_file.
std::string study_config_text(const SimulatedStudy& study, const std::string& panel_file);

}  // namespace scm
