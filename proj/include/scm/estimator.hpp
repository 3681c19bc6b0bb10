#pragma once

// Synthetic control estimation: predictor matrices, donor weights W for a
// given predictor weighting V, and the outer search over V.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scm/panel.hpp"
#include "scm/simplex_lsq.hpp"

namespace scm {

// Predictor values for the treated unit (x1) and donors (x0, one column per
// donor). Rows are divided by their cross-unit sample standard deviation,
// recorded in `scale`; the raw values are kept for balance tables.
struct PredictorMatrices {
    Eigen::VectorXd x1;
    Eigen::MatrixXd x0;
    Eigen::VectorXd scale;
    Eigen::VectorXd raw_x1;
    Eigen::MatrixXd raw_x0;
    std::vector<UnitId> donor_order;
    std::vector<std::string> labels;

    std::size_t n_predictors() const noexcept { return static_cast<std::size_t>(x1.size()); }
    std::size_t n_donors() const noexcept { return donor_order.size(); }
};

// Nonnegative weights summing to one. Construction checks both within 1e-9.
class SimplexWeights {
public:
    SimplexWeights() = default;
    explicit SimplexWeights(Eigen::VectorXd values);

    const Eigen::VectorXd& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
    double operator[](std::size_t i) const { return values_(static_cast<Eigen::Index>(i)); }

    static SimplexWeights uniform(std::size_t n);
    static bool is_feasible(const Eigen::VectorXd& values, double tol = 1e-9);

private:
    Eigen::VectorXd values_;
};

// Weights over predictors (rows of x1/x0).
struct VWeights : SimplexWeights {
    using SimplexWeights::SimplexWeights;
    static VWeights uniform(std::size_t n) { return VWeights(SimplexWeights::uniform(n).values()); }
};

// Weights over donors, aligned with PredictorMatrices::donor_order.
struct WWeights : SimplexWeights {
    using SimplexWeights::SimplexWeights;
};

struct SolverOptions {
    std::size_t random_starts = 16;
    std::uint64_t seed = 0;
    int max_inner_iterations = 0;    // 0 = solver default
    double inner_gap_tolerance = 1e-11;
    int max_evaluations_per_start = 4000;
    double initial_step = 0.25;      // mass moved between two predictors
    double step_tolerance = 1e-4;    // search stops once the step falls below this
};

// Throws DegeneratePredictor (naming the row) when a predictor has zero
// cross-unit variance. Expects a panel already passed through restrict().
PredictorMatrices build_matrices(const PanelDataset& panel, const StudyDesign& design,
                                 const PredictorSpec& spec);

struct InnerSolution {
    WWeights w;
    double inner_loss = 0.0;  // (x1 - x0 w)' diag(v) (x1 - x0 w)
    int iterations = 0;
};

InnerSolution solve_w(const PredictorMatrices& mats, const VWeights& v, const SolverOptions& options = {});

// Pretreatment outcome MSPE of the synthetic control implied by v.
class OuterObjective {
public:
    OuterObjective(const PanelDataset& panel, const StudyDesign& design, const PredictorMatrices& mats,
                   SolverOptions options = {});

    struct Evaluation {
        double loss = 0.0;
        InnerSolution inner;
    };
    Evaluation evaluate(const VWeights& v) const;

private:
    PredictorMatrices mats_;
    SolverOptions options_;
    Eigen::VectorXd treated_pre_;
    Eigen::MatrixXd donors_pre_;  // pre-periods x donors
};

double outer_loss(const VWeights& v, const PanelDataset& panel, const StudyDesign& design,
                  const PredictorSpec& spec, const PredictorMatrices& mats, const SolverOptions& options = {});

enum class StartKind { Equal, Vertex, Random };
const char* to_string(StartKind kind);

struct StartTrace {
    std::size_t index = 0;
    StartKind kind = StartKind::Equal;
    Eigen::VectorXd start_v;
    Eigen::VectorXd final_v;
    std::vector<double> losses;  // loss at the start, then after every accepted move
    int evaluations = 0;
    bool failed = false;
    std::string failure;
};

struct VOptimization {
    VWeights v;
    WWeights w;
    double outer_loss = 0.0;
    double inner_loss = 0.0;
    std::size_t best_start = 0;
    std::vector<StartTrace> starts;
};

// Multi-start pattern search over the predictor-weight simplex. Starts are
// equal weights, each vertex, then `random_starts` seeded Dirichlet(1) draws.
// Each start repeatedly moves mass between pairs of predictors, halving the
// step when no move improves. Throws OptimizationFailure if every start fails.
VOptimization optimize_v(const PanelDataset& panel, const StudyDesign& design, const PredictorMatrices& mats,
                         const SolverOptions& options = {});
VOptimization optimize_v(const PanelDataset& panel, const StudyDesign& design, const PredictorSpec& spec,
                         const SolverOptions& options = {});

struct SynthFit {
    StudyDesign design;  // donors as actually used, after exclusions
    PredictorSpec spec;
    PredictorMatrices matrices;
    VWeights v;
    WWeights w;
    TimeRange window;                // pre and post periods
    Eigen::VectorXd treated_path;    // over window
    Eigen::VectorXd synthetic_path;  // over window
    double inner_loss = 0.0;
    double pre_mspe = 0.0;
    std::vector<DonorExclusion> excluded;
    std::vector<StartTrace> starts;
    std::size_t best_start = 0;

    double weight_of(const UnitId& donor) const;
};

// restrict -> build_matrices -> optimize_v -> synthetic path.
SynthFit fit(const PanelDataset& panel, const StudyDesign& design, const PredictorSpec& spec,
             const SolverOptions& options = {});

struct BalanceRow {
    std::string predictor;
    double treated = 0.0;
    double synthetic = 0.0;
    double sample_mean = 0.0;  // unweighted donor average
};

// Raw (unscaled) predictor values for the treated unit, its synthetic
// control, and the donor pool average.
std::vector<BalanceRow> predictor_balance(const SynthFit& fit);

}  // namespace scm
