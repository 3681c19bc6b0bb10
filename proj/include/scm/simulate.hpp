#pragma once

// Seeded linear factor-model panels with known ground truth, and Monte Carlo
// size/power studies of the placebo test built on them.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scm/estimator.hpp"
#include "scm/inference.hpp"
#include "scm/panel.hpp"

namespace scm {

struct FactorModelConfig {
    int n_units = 20;
    int n_pre = 5;
    int n_post = 10;
    int n_factors = 1;
    double noise_std = 0.1;
    double effect = 0.0;            // added to the treated unit's post-period outcomes
    bool treated_is_convex = false;
    int convex_support = 3;         // donors mixed into a convex treated unit
    int n_covariates = 2;
    double covariate_noise_std = 0.1;  // per-cell noise on covariates
    bool lag_predictors = true;        // add first/last pre-period outcome lags to the spec
    std::uint64_t seed = 0;
    TimeIndex start_time = 1977;

    // Throws InvalidDesign naming the first bad field.
    void validate() const;
};

struct SimTruth {
    // Generating donor weights (aligned with StudyDesign::donors) when the
    // treated unit is a convex combination of donors.
    std::optional<Eigen::VectorXd> generating_weights;
    Series effect_path;  // over the post-period
    Eigen::MatrixXd loadings;  // units x factors, panel unit order
};

struct SimulatedStudy {
    PanelDataset panel;
    StudyDesign design;
    PredictorSpec spec;
    SimTruth truth;
};

// y_u(t) = mu(t) + loadings_u . f(t) + noise with f(t) ~ N(0, 1) per factor,
// loadings ~ U(0, 1), noise ~ N(0, noise_std^2), and mu(t) a shared trend.
// Covariates are linear functions of the loadings plus N(0,
// covariate_noise_std^2) cell noise. The treated unit is the first label
// ("unit01"); its loadings are a Dirichlet mix of `convex_support` random
// donors when treated_is_convex. The predictor spec is every covariate mean,
// plus outcome lags at the first and last pre-period when lag_predictors.
SimulatedStudy generate(const FactorModelConfig& config);

// Independent per-replication seed derived from a master seed and a counter.
std::uint64_t split_seed(std::uint64_t master, std::uint64_t counter);

struct ReplicationOutcome {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    double p_value = 1.0;
    int rank = 0;        // post-RMSE rank of the treated unit
    int ratio_rank = 0;  // position in the post/pre ratio ranking
    std::size_t n_units = 0;
};

struct PowerRow {
    double alpha = 0.0;
    double rejection_rate = 0.0;  // share of replications with p_value <= alpha
    double mean_rank = 0.0;
};

struct PowerTable {
    std::vector<PowerRow> rows;
    std::size_t replications = 0;
    std::size_t failures = 0;
    double top_fraction = 0.1;
    // Share of replications where the treated ratio ranks within the top
    // ceil(top_fraction * N) units.
    double top_ratio_rate = 0.0;
    double mean_ratio_rank = 0.0;
    std::vector<ReplicationOutcome> outcomes;
};

struct PowerOptions {
    double top_fraction = 0.1;
    unsigned threads = 1;  // 0 = one per hardware thread
};

// Runs generate + run_placebos per replication with split seeds. Study
// failures are counted, not thrown; rates use the successful replications.
PowerTable power_study(const FactorModelConfig& config, std::size_t replications,
                       const std::vector<double>& alpha_grid, const SolverOptions& solver = {},
                       const PowerOptions& options = {});

}  // namespace scm
