#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scm/error.hpp"
#include "scm/estimator.hpp"
#include "scm/simplex_lsq.hpp"
#include "scm/simulate.hpp"
#include "support.hpp"

using namespace scm;
using testing_support::grid_oracle;
using testing_support::random_panel;
using testing_support::with_clone;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = z(rng);
    return m;
}

PredictorMatrices matrices_from(const Eigen::VectorXd& x1, const Eigen::MatrixXd& x0) {
    PredictorMatrices m;
    m.x1 = x1;
    m.x0 = x0;
    m.raw_x1 = x1;
    m.raw_x0 = x0;
    m.scale = Eigen::VectorXd::Ones(x1.size());
    for (Eigen::Index j = 0; j < x0.cols(); ++j) m.donor_order.push_back("d" + std::to_string(j));
    for (Eigen::Index i = 0; i < x1.size(); ++i) m.labels.push_back("p" + std::to_string(i));
    return m;
}

VWeights random_v(std::mt19937_64& rng, int p) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd v(p);
    for (int i = 0; i < p; ++i) v(i) = -std::log(1.0 - u(rng));
    return VWeights(v / v.sum());
}

const PredictorSpec kLagsAndCovs{{CovariateMean{"c1"}, CovariateMean{"c2"}, OutcomeLag{1977}, OutcomeLag{1980}}};

}  // namespace

// ---------------------------------------------------------------------------
// simplex least squares
// ---------------------------------------------------------------------------

TEST(SimplexLsq, ExactVertex) {
    Eigen::MatrixXd A(3, 3);
    A << 1, 0, 2, 0, 1, 3, 5, 1, 0;
    const Eigen::VectorXd b = A.col(1);
    const auto r = solve_simplex_lsq(A, b);
    EXPECT_NEAR(r.w(1), 1.0, 1e-12);
    EXPECT_LE(r.objective, 1e-20);
}

TEST(SimplexLsq, Midpoint) {
    Eigen::MatrixXd A(2, 2);
    A << 0, 2, 4, 0;
    const Eigen::VectorXd b = 0.5 * (A.col(0) + A.col(1));
    const auto r = solve_simplex_lsq(A, b);
    EXPECT_NEAR(r.w(0), 0.5, 1e-12);
    EXPECT_NEAR(r.w(1), 0.5, 1e-12);
    EXPECT_LE(r.objective, 1e-20);
}

TEST(SimplexLsq, MatchesGridOracle) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        const int m = 2 + trial % 3;   // 2..4 donors
        const int p = 1 + trial % 6;   // 1..6 rows
        const Eigen::MatrixXd A = random_matrix(rng, p, m);
        const Eigen::VectorXd b = random_matrix(rng, p, 1).col(0);
        const auto r = solve_simplex_lsq(A, b);
        const double oracle = grid_oracle(A, b);
        EXPECT_LE(r.objective, oracle + 1e-8) << "trial " << trial;
        EXPECT_NEAR(r.objective, testing_support::simplex_objective(A, b, r.w), 1e-12);
    }
}

TEST(SimplexLsq, DuplicateColumnsStillOptimal) {
    std::mt19937_64 rng(9);
    Eigen::MatrixXd A = random_matrix(rng, 4, 4);
    A.col(3) = A.col(1);
    const Eigen::VectorXd b = random_matrix(rng, 4, 1).col(0);
    const auto r = solve_simplex_lsq(A, b);
    EXPECT_LE(r.objective, grid_oracle(A, b) + 1e-8);
    EXPECT_TRUE(SimplexWeights::is_feasible(r.w));
}

TEST(SimplexLsq, FeasibilityProperty) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const int m = 1 + trial % 30;
        const int p = 1 + (trial * 7) % 12;
        const Eigen::MatrixXd A = random_matrix(rng, p, m) * std::pow(10.0, trial % 5 - 2);
        const Eigen::VectorXd b = random_matrix(rng, p, 1).col(0);
        const auto r = solve_simplex_lsq(A, b);
        ASSERT_EQ(r.w.size(), m);
        EXPECT_TRUE(SimplexWeights::is_feasible(r.w, 1e-9)) << "trial " << trial;
        EXPECT_GE(r.w.minCoeff(), 0.0);
        EXPECT_NEAR(r.w.sum(), 1.0, 1e-12);
    }
}

TEST(SimplexLsq, ExactRecoveryWhenInHull) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 2 + trial % 5;
        const Eigen::MatrixXd A = random_matrix(rng, m + 2, m);  // full column rank
        Eigen::VectorXd w(m);
        for (int j = 0; j < m; ++j) w(j) = u(rng);
        w /= w.sum();
        const auto r = solve_simplex_lsq(A, A * w);
        EXPECT_LE(r.objective, 1e-10);
        EXPECT_LE((r.w - w).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(SimplexLsq, BudgetExhaustionCarriesBestIterate) {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd A = random_matrix(rng, 8, 25);
    const Eigen::VectorXd b = random_matrix(rng, 8, 1).col(0);
    try {
        solve_simplex_lsq(A, b, SimplexLsqOptions{1, 1e-11});
        FAIL() << "one iteration should not be enough";
    } catch (const SolverFailure& e) {
        EXPECT_EQ(e.code(), ErrorCode::SolverFailure);
        Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(e.best_iterate().data(),
                                                              static_cast<Eigen::Index>(e.best_iterate().size()));
        EXPECT_EQ(w.size(), 25);
        EXPECT_TRUE(SimplexWeights::is_feasible(w));
        EXPECT_GT(e.residual(), 0.0);
        EXPECT_NEAR(e.best_objective(), testing_support::simplex_objective(A, b, w), 1e-10);
    }
}

// ---------------------------------------------------------------------------
// matrices and inner problem
// ---------------------------------------------------------------------------

TEST(Matrices, SingleLagTwoDonors) {
    const auto p = random_panel(1, 3, 6);
    const auto d = make_design(p, "u01", 1980, 1977, 1982);
    const auto m = build_matrices(p, d, PredictorSpec{{OutcomeLag{1978}}});
    ASSERT_EQ(m.x0.rows(), 1);
    ASSERT_EQ(m.x0.cols(), 2);
    const Eigen::Vector3d raw(*p.outcome(0, 1978), *p.outcome(1, 1978), *p.outcome(2, 1978));
    const double mean = raw.mean();
    const double sd = std::sqrt((raw.array() - mean).square().sum() / 2.0);
    EXPECT_DOUBLE_EQ(m.scale(0), sd);
    EXPECT_DOUBLE_EQ(m.raw_x1(0), raw(0));
    EXPECT_NEAR(m.x1(0), raw(0) / sd, 1e-15);
    EXPECT_NEAR(m.x0(0, 1), raw(2) / sd, 1e-15);
    EXPECT_EQ(m.donor_order, (std::vector<UnitId>{"u02", "u03"}));
}

TEST(Matrices, CovariateMeanAveragesPrePeriod) {
    const auto p = random_panel(2, 4, 8);
    const auto d = make_design(p, "u02", 1980, 1977, 1983);
    const auto m = build_matrices(p, d, PredictorSpec{{CovariateMean{"c2"}}});
    const auto& c = p.find_covariate("c2")->values;
    EXPECT_NEAR(m.raw_x1(0), c.row(1).segment(0, 3).mean(), 1e-12);
    EXPECT_NEAR(m.raw_x0(0, 2), c.row(3).segment(0, 3).mean(), 1e-12);
}

TEST(Matrices, ConstantCovariateIsDegenerate) {
    auto p = random_panel(3, 4, 6);
    auto covs = p.covariates();
    covs[1].values.setConstant(2.5);
    p = PanelDataset(p.units(), p.first_time(), p.outcomes(), covs);
    const auto d = make_design(p, "u01", 1980, 1977, 1982);
    try {
        build_matrices(p, d, PredictorSpec{{CovariateMean{"c1"}, CovariateMean{"c2"}}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegeneratePredictor);
        EXPECT_NE(std::string(e.what()).find("c2"), std::string::npos);
    }
}

TEST(Matrices, SixPredictorRows) {
    auto p = random_panel(4, 10, 15, 4);
    const auto d = make_design(p, "u01", 1982, 1977, 1991);
    const PredictorSpec spec{{CovariateMean{"c1"}, CovariateMean{"c2"}, CovariateMean{"c3"}, CovariateMean{"c4"},
                              OutcomeLag{1977}, OutcomeLag{1981}}};
    const auto m = build_matrices(p, d, spec);
    EXPECT_EQ(m.n_predictors(), 6u);
    EXPECT_EQ(m.n_donors(), 9u);
    EXPECT_EQ(m.labels[4], "outcome 1977");
}

TEST(SolveW, CloneAndMidpoint) {
    Eigen::MatrixXd x0(2, 3);
    x0 << 1, 3, 0, 2, 6, 1;
    auto m = matrices_from(x0.col(1), x0);
    const auto a = solve_w(m, VWeights::uniform(2));
    EXPECT_NEAR(a.w[1], 1.0, 1e-12);
    EXPECT_LE(a.inner_loss, 1e-20);

    m = matrices_from(0.5 * (x0.col(0) + x0.col(2)), x0);
    const auto b = solve_w(m, VWeights(Eigen::Vector2d(0.3, 0.7)));
    EXPECT_LE(b.inner_loss, 1e-20);
}

TEST(SolveW, InnerLossIsWeightedQuadratic) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const int p = 1 + trial % 6, mm = 2 + trial % 3;
        const auto m = matrices_from(random_matrix(rng, p, 1).col(0), random_matrix(rng, p, mm));
        const auto v = random_v(rng, p);
        const auto s = solve_w(m, v);
        const Eigen::VectorXd r = m.x1 - m.x0 * s.w.values();
        EXPECT_NEAR(s.inner_loss, (v.values().array() * r.array().square()).sum(), 1e-12);
        const Eigen::VectorXd sv = v.values().cwiseSqrt();
        const double oracle = grid_oracle(sv.asDiagonal() * m.x0, sv.cwiseProduct(m.x1));
        EXPECT_LE(s.inner_loss, oracle + 1e-8) << "trial " << trial;
    }
}

// ---------------------------------------------------------------------------
// outer problem and fit
// ---------------------------------------------------------------------------

TEST(OuterLoss, CloneIsZeroForEveryV) {
    const auto p = with_clone(random_panel(5, 6, 8), 3);
    const auto d = make_design(p, "u01", 1981, 1977, 1984);
    const auto m = build_matrices(p, d, kLagsAndCovs);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 10; ++i) EXPECT_LE(outer_loss(random_v(rng, 4), p, d, kLagsAndCovs, m), 1e-24);
}

TEST(OuterLoss, EqualsRecomputedMspe) {
    const auto p = random_panel(6, 6, 8);
    const auto d = make_design(p, "u01", 1981, 1977, 1984);
    const auto m = build_matrices(p, d, kLagsAndCovs);
    const VWeights v(Eigen::Vector4d(0.1, 0.2, 0.3, 0.4));
    const auto s = solve_w(m, v);
    double mspe = 0.0;
    for (TimeIndex t = 1977; t <= 1980; ++t) {
        double synth = 0.0;
        for (std::size_t j = 0; j < m.n_donors(); ++j) synth += s.w[j] * *p.outcome(p.unit_index(m.donor_order[j]), t);
        mspe += std::pow(*p.outcome(0, t) - synth, 2);
    }
    EXPECT_NEAR(outer_loss(v, p, d, kLagsAndCovs, m), mspe / 4.0, 1e-14);
}

TEST(OptimizeV, SinglePredictorNeedsNoSearch) {
    const auto p = random_panel(7, 5, 8);
    const auto d = make_design(p, "u01", 1980, 1977, 1984);
    const auto r = optimize_v(p, d, PredictorSpec{{OutcomeLag{1979}}});
    ASSERT_EQ(r.v.size(), 1u);
    EXPECT_EQ(r.v[0], 1.0);
    ASSERT_EQ(r.starts.size(), 1u);
    EXPECT_EQ(r.starts[0].evaluations, 1);
}

TEST(OptimizeV, NeverWorseThanEqualWeights) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = random_panel(100 + seed, 4, 8);
        const auto d = make_design(p, "u01", 1980, 1977, 1984);
        const PredictorSpec spec{{CovariateMean{"c1"}, OutcomeLag{1978}}};
        const auto m = build_matrices(p, d, spec);
        SolverOptions o;
        o.seed = seed;
        const auto r = optimize_v(p, d, m, o);
        EXPECT_LE(r.outer_loss, outer_loss(VWeights::uniform(2), p, d, spec, m) + 1e-15);
        EXPECT_EQ(r.starts.size(), 1u + 2u + o.random_starts);
        for (const auto& s : r.starts) {
            ASSERT_FALSE(s.losses.empty());
            for (std::size_t k = 1; k < s.losses.size(); ++k) EXPECT_LE(s.losses[k], s.losses[k - 1]);
        }
    }
}

TEST(Fit, CloneDonorRecovered) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = with_clone(random_panel(200 + seed, 8, 15), 5);
        const auto d = make_design(p, "u01", 1982, 1977, 1991);
        const auto f = fit(p, d, kLagsAndCovs);
        EXPECT_GE(f.weight_of("u06"), 0.999);
        EXPECT_LE(f.pre_mspe, 1e-12);
    }
}

TEST(Fit, SyntheticPathIsWeightedDonorSum) {
    const auto p = random_panel(8, 7, 12);
    const auto d = make_design(p, "u03", 1982, 1977, 1988);
    const auto f = fit(p, d, kLagsAndCovs);
    ASSERT_EQ(f.synthetic_path.size(), 12);
    for (TimeIndex t = 1977; t <= 1988; ++t) {
        double s = 0.0;
        for (const auto& u : f.design.donors) s += f.weight_of(u) * *p.outcome(p.unit_index(u), t);
        EXPECT_NEAR(f.synthetic_path(t - 1977), s, 1e-13);
        EXPECT_EQ(f.treated_path(t - 1977), *p.outcome(p.unit_index("u03"), t));
    }
    EXPECT_GE(f.pre_mspe, 0.0);
}

TEST(Fit, BalanceTableUsesRawValues) {
    const auto p = random_panel(9, 6, 10);
    const auto d = make_design(p, "u01", 1982, 1977, 1986);
    const auto f = fit(p, d, kLagsAndCovs);
    const auto rows = predictor_balance(f);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[2].predictor, "outcome 1977");
    EXPECT_EQ(rows[2].treated, *p.outcome(0, 1977));
    double mean = 0.0;
    for (std::size_t u = 1; u < 6; ++u) mean += *p.outcome(u, 1977);
    EXPECT_NEAR(rows[2].sample_mean, mean / 5.0, 1e-13);
}

TEST(FitProperty, FeasibleAndDeterministic) {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        const auto p = random_panel(300 + seed, 3 + static_cast<int>(seed % 8), 10);
        const auto d = make_design(p, "u02", 1982, 1977, 1986);
        SolverOptions o;
        o.seed = seed;
        o.random_starts = 4;
        const auto a = fit(p, d, kLagsAndCovs, o);
        const auto b = fit(p, d, kLagsAndCovs, o);
        EXPECT_TRUE(SimplexWeights::is_feasible(a.w.values(), 1e-9));
        EXPECT_TRUE(SimplexWeights::is_feasible(a.v.values(), 1e-9));
        EXPECT_TRUE(a.w.values() == b.w.values());
        EXPECT_TRUE(a.v.values() == b.v.values());
        EXPECT_TRUE(a.synthetic_path == b.synthetic_path);
        EXPECT_EQ(a.pre_mspe, b.pre_mspe);
        EXPECT_EQ(a.best_start, b.best_start);
    }
}

// Multiplying a raw covariate by a positive constant is absorbed by the row
// standardization, so the fitted weights do not move.
TEST(FitProperty, CovariateScaleEquivariance) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const auto p = random_panel(400 + seed, 7, 10);
        const auto d = make_design(p, "u01", 1982, 1977, 1986);
        const auto base = fit(p, d, kLagsAndCovs);
        for (double k : {4.0, 0.03125, 1000.0, 0.37}) {
            auto covs = p.covariates();
            covs[0].values *= k;
            const PanelDataset q(p.units(), p.first_time(), p.outcomes(), covs);
            const auto m = build_matrices(q, d, kLagsAndCovs);
            EXPECT_LE((m.x1 - base.matrices.x1).cwiseAbs().maxCoeff(), 1e-12);
            const auto scaled = fit(q, d, kLagsAndCovs);
            if (k == 4.0 || k == 0.03125)
                EXPECT_TRUE(scaled.w.values() == base.w.values()) << "k=" << k;
            else
                EXPECT_LE((scaled.w.values() - base.w.values()).cwiseAbs().maxCoeff(), 1e-6) << "k=" << k;
        }
    }
}

TEST(Fit, RecoversGeneratingWeights) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        FactorModelConfig c;
        c.n_units = 5;
        c.n_factors = 3;
        c.n_pre = 20;
        c.n_post = 5;
        c.noise_std = 0.0005;
        c.treated_is_convex = true;
        c.convex_support = 3;
        c.n_covariates = 3;
        c.covariate_noise_std = 0.0001;
        c.seed = seed;
        const auto sim = generate(c);
        PredictorSpec spec = sim.spec;
        for (TimeIndex t = sim.design.pre_period.first + 1; t < sim.design.pre_period.last; ++t)
            spec.entries.push_back(OutcomeLag{t});
        const auto f = fit(sim.panel, sim.design, spec);
        const Eigen::VectorXd& truth = *sim.truth.generating_weights;
        const Eigen::MatrixXd& y = sim.panel.outcomes();
        double truth_mspe = 0.0;
        for (int t = 0; t < c.n_pre; ++t) {
            const double gap = y(0, t) - truth.dot(y.col(t).tail(truth.size()));
            truth_mspe += gap * gap / c.n_pre;
        }
        EXPECT_LE(f.pre_mspe, truth_mspe * (1.0 + 1e-9)) << "seed " << seed;
        for (std::size_t j = 0; j < sim.design.donors.size(); ++j)
            EXPECT_NEAR(f.weight_of(sim.design.donors[j]), (*sim.truth.generating_weights)(static_cast<Eigen::Index>(j)),
                        0.05)
                << "seed " << seed << " donor " << sim.design.donors[j];
    }
}

TEST(Fit, TreatedIncompletePropagates) {
    auto p = random_panel(10, 4, 8);
    Eigen::MatrixXd y = p.outcomes();
    y(0, 2) = missing_value();
    p = PanelDataset(p.units(), p.first_time(), y, p.covariates());
    try {
        fit(p, make_design(p, "u01", 1981, 1977, 1983), kLagsAndCovs);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TreatedIncomplete);
    }
}
