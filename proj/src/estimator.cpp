#include "scm/estimator.hpp"

#include <cmath>
#include <random>

#include "scm/error.hpp"

namespace scm {

// ---------------------------------------------------------------------------
// SimplexWeights
// ---------------------------------------------------------------------------

SimplexWeights::SimplexWeights(Eigen::VectorXd values) : values_(std::move(values)) {
    if (!is_feasible(values_))
        throw Error(ErrorCode::InvalidDesign, "weights must be nonnegative and sum to 1");
}

SimplexWeights SimplexWeights::uniform(std::size_t n) {
    return SimplexWeights(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)));
}

bool SimplexWeights::is_feasible(const Eigen::VectorXd& values, double tol) {
    if (values.size() == 0) return false;
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (!(values(i) >= -tol) || !std::isfinite(values(i))) return false;
    return std::abs(values.sum() - 1.0) <= tol;
}

const char* to_string(StartKind kind) {
    switch (kind) {
        case StartKind::Equal: return "equal";
        case StartKind::Vertex: return "vertex";
        case StartKind::Random: return "random";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Predictor matrices
// ---------------------------------------------------------------------------

PredictorMatrices build_matrices(const PanelDataset& panel, const StudyDesign& design,
                                 const PredictorSpec& spec) {
    design.validate(panel);
    spec.validate(panel, design);

    std::vector<std::size_t> rows{panel.unit_index(design.treated)};
    for (const auto& d : design.donors) rows.push_back(panel.unit_index(d));

    const auto p = static_cast<Eigen::Index>(spec.size());
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd raw(p, n);  // column 0 = treated

    for (Eigen::Index i = 0; i < p; ++i) {
        const auto& entry = spec.entries[static_cast<std::size_t>(i)];
        for (Eigen::Index u = 0; u < n; ++u) {
            const auto row = rows[static_cast<std::size_t>(u)];
            const auto& label = panel.units()[row];
            if (const auto* m = std::get_if<CovariateMean>(&entry)) {
                const auto& vals = panel.find_covariate(m->covariate)->values;
                double sum = 0.0;
                int count = 0;
                for (TimeIndex t = design.pre_period.first; t <= design.pre_period.last; ++t) {
                    const double x = vals(static_cast<Eigen::Index>(row),
                                          static_cast<Eigen::Index>(panel.time_offset(t)));
                    if (is_missing(x)) continue;
                    sum += x;
                    ++count;
                }
                if (count == 0)
                    throw Error(ErrorCode::InvalidDesign, "covariate '" + m->covariate + "' unobserved for '" +
                                                              label + "' in the pre-period");
                raw(i, u) = sum / count;
            } else {
                const auto t = std::get<OutcomeLag>(entry).time;
                const auto y = panel.outcome(row, t);
                if (!y)
                    throw Error(ErrorCode::InvalidDesign,
                                "outcome for '" + label + "' missing at " + std::to_string(t));
                raw(i, u) = *y;
            }
        }
    }

    PredictorMatrices mats;
    mats.scale.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        const auto label = predictor_label(spec.entries[static_cast<std::size_t>(i)]);
        const Eigen::RowVectorXd r = raw.row(i);
        const double mean = r.mean();
        const double var = (r.array() - mean).square().sum() / static_cast<double>(n - 1);
        const double sd = std::sqrt(var);
        const bool constant = (r.array() == r(0)).all();
        if (constant || !(sd > 1e-12 * r.cwiseAbs().maxCoeff()))
            throw Error(ErrorCode::DegeneratePredictor,
                        "predictor '" + label + "' has no variation across units");
        mats.scale(i) = sd;
        mats.labels.push_back(label);
    }

    mats.raw_x1 = raw.col(0);
    mats.raw_x0 = raw.rightCols(n - 1);
    mats.x1 = mats.raw_x1.cwiseQuotient(mats.scale);
    mats.x0 = mats.scale.cwiseInverse().asDiagonal() * mats.raw_x0;
    mats.donor_order = design.donors;
    return mats;
}

// ---------------------------------------------------------------------------
// Inner problem
// ---------------------------------------------------------------------------

InnerSolution solve_w(const PredictorMatrices& mats, const VWeights& v, const SolverOptions& options) {
    if (v.size() != mats.n_predictors())
        throw Error(ErrorCode::InvalidDesign, "predictor weights do not match the predictor count");

    const Eigen::VectorXd root = v.values().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd A = root.asDiagonal() * mats.x0;
    const Eigen::VectorXd b = root.cwiseProduct(mats.x1);

    SimplexLsqOptions lsq;
    lsq.max_iterations = options.max_inner_iterations;
    lsq.gap_tolerance = options.inner_gap_tolerance;
    auto sol = solve_simplex_lsq(A, b, lsq);

    InnerSolution out;
    const Eigen::VectorXd resid = mats.x1 - mats.x0 * sol.w;
    out.inner_loss = resid.cwiseProduct(v.values()).dot(resid);
    out.iterations = sol.iterations;
    out.w = WWeights(std::move(sol.w));
    return out;
}

// ---------------------------------------------------------------------------
// Outer problem
// ---------------------------------------------------------------------------

OuterObjective::OuterObjective(const PanelDataset& panel, const StudyDesign& design,
                               const PredictorMatrices& mats, SolverOptions options)
    : mats_(mats), options_(options) {
    const TimeRange pre = design.pre_period;
    const auto t_pre = static_cast<Eigen::Index>(pre.size());
    treated_pre_.resize(t_pre);
    donors_pre_.resize(t_pre, static_cast<Eigen::Index>(mats.n_donors()));

    auto value = [&](const UnitId& unit, TimeIndex t) {
        const auto y = panel.outcome(panel.unit_index(unit), t);
        if (!y)
            throw Error(ErrorCode::InvalidDesign, "outcome for '" + unit + "' missing at " + std::to_string(t));
        return *y;
    };
    for (Eigen::Index k = 0; k < t_pre; ++k) {
        const TimeIndex t = pre.first + static_cast<TimeIndex>(k);
        treated_pre_(k) = value(design.treated, t);
        for (std::size_t j = 0; j < mats.n_donors(); ++j)
            donors_pre_(k, static_cast<Eigen::Index>(j)) = value(mats.donor_order[j], t);
    }
}

OuterObjective::Evaluation OuterObjective::evaluate(const VWeights& v) const {
    Evaluation ev;
    ev.inner = solve_w(mats_, v, options_);
    const Eigen::VectorXd gap = treated_pre_ - donors_pre_ * ev.inner.w.values();
    ev.loss = gap.squaredNorm() / static_cast<double>(gap.size());
    return ev;
}

double outer_loss(const VWeights& v, const PanelDataset& panel, const StudyDesign& design,
                  const PredictorSpec& spec, const PredictorMatrices& mats, const SolverOptions& options) {
    spec.validate(panel, design);
    return OuterObjective(panel, design, mats, options).evaluate(v).loss;
}

namespace {

double unit_uniform(std::mt19937_64& rng) {
    // 53 random bits, open interval (0, 1).
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

Eigen::VectorXd dirichlet_draw(std::mt19937_64& rng, Eigen::Index p) {
    Eigen::VectorXd g(p);
    for (Eigen::Index i = 0; i < p; ++i) g(i) = -std::log(unit_uniform(rng));
    return g / g.sum();
}

struct SearchResult {
    StartTrace trace;
    OuterObjective::Evaluation best;
};

SearchResult pattern_search(const OuterObjective& objective, const Eigen::VectorXd& start,
                            const SolverOptions& options) {
    SearchResult res;
    res.trace.start_v = start;
    res.trace.final_v = start;
    const Eigen::Index p = start.size();

    Eigen::VectorXd v = start;
    try {
        res.best = objective.evaluate(VWeights(v));
    } catch (const SolverFailure& e) {
        res.trace.failed = true;
        res.trace.failure = e.what();
        return res;
    }
    res.trace.evaluations = 1;
    res.trace.losses.push_back(res.best.loss);

    double step = options.initial_step;
    while (step >= options.step_tolerance && res.trace.evaluations < options.max_evaluations_per_start) {
        bool improved = false;
        for (Eigen::Index from = 0; from < p; ++from) {
            for (Eigen::Index to = 0; to < p; ++to) {
                if (to == from || v(from) <= 0.0) continue;
                if (res.trace.evaluations >= options.max_evaluations_per_start) break;
                // Keep moving mass along a successful direction, doubling the
                // amount each time, until it stops paying off.
                double amount = step;
                while (v(from) > 0.0 && res.trace.evaluations < options.max_evaluations_per_start) {
                    Eigen::VectorXd cand = v;
                    const double delta = std::min(amount, v(from));
                    cand(to) += delta;
                    cand(from) = delta == v(from) ? 0.0 : v(from) - delta;
                    ++res.trace.evaluations;
                    bool accepted = false;
                    try {
                        auto ev = objective.evaluate(VWeights(cand));
                        if (ev.loss < res.best.loss) {
                            v = cand;
                            res.best = std::move(ev);
                            res.trace.losses.push_back(res.best.loss);
                            improved = accepted = true;
                        }
                    } catch (const SolverFailure&) {
                        // An unsolvable candidate is simply not accepted.
                    }
                    if (!accepted) break;
                    amount *= 2.0;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    res.trace.final_v = v;
    return res;
}

}  // namespace

VOptimization optimize_v(const PanelDataset& panel, const StudyDesign& design, const PredictorMatrices& mats,
                         const SolverOptions& options) {
    const auto p = static_cast<Eigen::Index>(mats.n_predictors());
    if (p < 1) throw Error(ErrorCode::InvalidDesign, "no predictors");
    const OuterObjective objective(panel, design, mats, options);

    std::vector<std::pair<StartKind, Eigen::VectorXd>> starts;
    if (p == 1) {
        starts.emplace_back(StartKind::Equal, Eigen::VectorXd::Ones(1));
    } else {
        starts.emplace_back(StartKind::Equal, Eigen::VectorXd::Constant(p, 1.0 / static_cast<double>(p)));
        for (Eigen::Index i = 0; i < p; ++i) starts.emplace_back(StartKind::Vertex, Eigen::VectorXd::Unit(p, i));
        std::mt19937_64 rng(options.seed);
        for (std::size_t r = 0; r < options.random_starts; ++r)
            starts.emplace_back(StartKind::Random, dirichlet_draw(rng, p));
    }

    VOptimization out;
    bool have_best = false;
    OuterObjective::Evaluation best;
    std::vector<std::string> failures;

    for (std::size_t s = 0; s < starts.size(); ++s) {
        SearchResult res;
        if (p == 1) {
            // The simplex is a single point: evaluate, no search.
            res.trace.start_v = res.trace.final_v = starts[s].second;
            try {
                res.best = objective.evaluate(VWeights(starts[s].second));
                res.trace.evaluations = 1;
                res.trace.losses.push_back(res.best.loss);
            } catch (const SolverFailure& e) {
                res.trace.failed = true;
                res.trace.failure = e.what();
            }
        } else {
            res = pattern_search(objective, starts[s].second, options);
        }
        res.trace.index = s;
        res.trace.kind = starts[s].first;

        if (res.trace.failed) {
            failures.push_back(res.trace.failure);
        } else if (!have_best || res.best.loss < best.loss - 1e-12) {
            // Later starts must beat the incumbent by more than 1e-12.
            have_best = true;
            best = res.best;
            out.v = VWeights(res.trace.final_v);
            out.best_start = s;
        }
        out.starts.push_back(std::move(res.trace));
    }
    if (!have_best)
        throw Error(ErrorCode::OptimizationFailure,
                    "all " + std::to_string(starts.size()) + " starts failed; first: " + failures.front());

    out.w = best.inner.w;
    out.outer_loss = best.loss;
    out.inner_loss = best.inner.inner_loss;
    return out;
}

VOptimization optimize_v(const PanelDataset& panel, const StudyDesign& design, const PredictorSpec& spec,
                         const SolverOptions& options) {
    return optimize_v(panel, design, build_matrices(panel, design, spec), options);
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

double SynthFit::weight_of(const UnitId& donor) const {
    for (std::size_t j = 0; j < matrices.donor_order.size(); ++j)
        if (matrices.donor_order[j] == donor) return w[j];
    return 0.0;
}

SynthFit fit(const PanelDataset& panel, const StudyDesign& design, const PredictorSpec& spec,
             const SolverOptions& options) {
    auto restricted = restrict(panel, design, spec);
    const auto& rp = restricted.panel;
    const auto& rd = restricted.design;

    SynthFit out;
    out.matrices = build_matrices(rp, rd, spec);
    auto opt = optimize_v(rp, rd, out.matrices, options);

    out.design = rd;
    out.spec = spec;
    out.v = opt.v;
    out.w = opt.w;
    out.window = rd.window();
    out.inner_loss = opt.inner_loss;
    out.excluded = std::move(restricted.excluded);
    out.starts = std::move(opt.starts);
    out.best_start = opt.best_start;

    const auto n_t = static_cast<Eigen::Index>(out.window.size());
    const auto m = static_cast<Eigen::Index>(rd.donors.size());
    Eigen::MatrixXd donors(n_t, m);
    out.treated_path.resize(n_t);
    const auto treated_row = rp.unit_index(rd.treated);
    for (Eigen::Index k = 0; k < n_t; ++k) {
        const TimeIndex t = out.window.first + static_cast<TimeIndex>(k);
        out.treated_path(k) = *rp.outcome(treated_row, t);
        for (Eigen::Index j = 0; j < m; ++j)
            donors(k, j) = *rp.outcome(rp.unit_index(rd.donors[static_cast<std::size_t>(j)]), t);
    }
    out.synthetic_path = donors * out.w.values();

    const auto t_pre = static_cast<Eigen::Index>(rd.pre_period.size());
    out.pre_mspe = (out.treated_path.head(t_pre) - out.synthetic_path.head(t_pre)).squaredNorm() /
                   static_cast<double>(t_pre);
    return out;
}

std::vector<BalanceRow> predictor_balance(const SynthFit& fit) {
    const auto& m = fit.matrices;
    const Eigen::VectorXd synthetic = m.raw_x0 * fit.w.values();
    std::vector<BalanceRow> rows;
    for (std::size_t i = 0; i < m.n_predictors(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        rows.push_back({m.labels[i], m.raw_x1(k), synthetic(k), m.raw_x0.row(k).mean()});
    }
    return rows;
}

}  // namespace scm
