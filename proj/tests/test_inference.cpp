#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "scm/error.hpp"
#include "scm/inference.hpp"
#include "support.hpp"

using namespace scm;

namespace {

const PredictorSpec kSpec{{CovariateMean{"c1"}, OutcomeLag{1977}, OutcomeLag{1980}}};

SolverOptions quick() {
    SolverOptions o;
    o.random_starts = 4;
    return o;
}

// Adds `shift` to the post-period outcomes of unit row `u`.
PanelDataset shift_post(const PanelDataset& p, std::size_t u, TimeIndex from, double shift) {
    Eigen::MatrixXd y = p.outcomes();
    for (TimeIndex t = from; t <= p.last_time(); ++t) y(static_cast<Eigen::Index>(u), t - p.first_time()) += shift;
    return PanelDataset(p.units(), p.first_time(), y, p.covariates());
}

}  // namespace

TEST(PValue, Counting) {
    const std::vector<double> all{0.5, 0.1, 0.2};
    EXPECT_NEAR(permutation_p_value(0.5, all), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(descending_rank(0.5, all), 1);
    EXPECT_EQ(permutation_p_value(0.1, all), 1.0);
    EXPECT_EQ(descending_rank(0.1, all), 3);

    std::vector<double> twenty(20);
    for (int i = 0; i < 20; ++i) twenty[static_cast<std::size_t>(i)] = 1.0 + i;
    EXPECT_EQ(permutation_p_value(1.0, twenty), 1.0);
    EXPECT_EQ(permutation_p_value(2.0, twenty), 0.95);
    EXPECT_THROW(permutation_p_value(1.0, std::vector<double>{}), Error);
}

TEST(PValue, TiesCountAsAtLeast) {
    const std::vector<double> all{0.3, 0.3, 0.1, 0.3};
    EXPECT_EQ(permutation_p_value(0.3, all), 0.75);
    EXPECT_EQ(descending_rank(0.3, all), 1);
}

// Any strictly increasing transform of all values leaves p and rank alone,
// as does reordering the collection.
TEST(PValueProperty, OrderInvariance) {
    std::mt19937_64 rng(17);
    std::lognormal_distribution<double> x(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> all;
        const int n = 1 + trial % 25;
        for (int i = 0; i < n; ++i) all.push_back(x(rng));
        if (trial % 3 == 0) all.push_back(all.front());  // a tie
        const double obs = all[static_cast<std::size_t>(trial) % all.size()];
        const double p = permutation_p_value(obs, all);
        const int r = descending_rank(obs, all);
        EXPECT_GE(p, 1.0 / static_cast<double>(all.size()));
        EXPECT_LE(p, 1.0);

        auto shuffled = all;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        EXPECT_EQ(permutation_p_value(obs, shuffled), p);
        EXPECT_EQ(descending_rank(obs, shuffled), r);

        for (auto f : {+[](double v) { return std::log(v); }, +[](double v) { return v * v * v + 7.0; },
                       +[](double v) { return std::exp(2.0 * v); }}) {
            std::vector<double> t;
            for (double v : all) t.push_back(f(v));
            EXPECT_EQ(permutation_p_value(f(obs), t), p);
            EXPECT_EQ(descending_rank(f(obs), t), r);
        }
    }
}

TEST(Placebo, ThreeUnitTreatedWorstFit) {
    // Outcomes chosen so each unit is fitted by the other two, and the
    // treated unit's post period jumps far away.
    Eigen::MatrixXd y(3, 5);
    y << 1.0, 2.0, 1.5, 9.0, 9.5,  //
        0.0, 1.0, 0.8, 1.0, 1.1,   //
        2.0, 3.0, 2.1, 2.2, 2.0;
    const PanelDataset p({"A", "B", "C"}, 1, y);
    const auto d = make_design(p, "A", 4, 1, 5);
    const auto s = run_placebos(p, d, PredictorSpec{{OutcomeLag{1}, OutcomeLag{3}}}, quick());
    EXPECT_EQ(s.n_units, 3u);
    EXPECT_EQ(s.rank, 1);
    EXPECT_NEAR(s.p_value, 1.0 / 3.0, 1e-15);
    ASSERT_TRUE(s.p_value_donors_only);
    EXPECT_EQ(*s.p_value_donors_only, 0.0);
}

TEST(Placebo, PlaceboPoolsExcludeTreated) {
    const auto p = testing_support::random_panel(21, 6, 9);
    const auto d = make_design(p, "u03", 1981, 1977, 1985);
    const auto s = run_placebos(p, d, kSpec, quick());
    ASSERT_EQ(s.placebos.size(), 5u);
    for (const auto& r : s.placebos) {
        ASSERT_TRUE(r.succeeded());
        const auto& donors = r.fit->design.donors;
        EXPECT_EQ(std::find(donors.begin(), donors.end(), "u03"), donors.end());
        EXPECT_EQ(std::find(donors.begin(), donors.end(), r.unit), donors.end());
        EXPECT_EQ(donors.size(), 4u);
        EXPECT_EQ(r.fit->design.treatment_time, 1981);
    }
    EXPECT_TRUE(std::is_sorted(s.placebos.begin(), s.placebos.end(),
                               [](const auto& a, const auto& b) { return a.unit < b.unit; }));
}

TEST(Placebo, StoredStatsMatchRecomputation) {
    const auto p = testing_support::random_panel(22, 7, 10);
    const auto s = run_placebos(p, make_design(p, "u01", 1981, 1977, 1986), kSpec, quick());
    auto check = [&](const PlaceboResult& r) {
        const auto again = fit_stats(*r.fit);
        EXPECT_EQ(again.pre_rmse, r.stats.pre_rmse);
        EXPECT_EQ(again.post_rmse, r.stats.post_rmse);
        EXPECT_EQ(again.pre_mae, r.stats.pre_mae);
        EXPECT_EQ(again.rsr, r.stats.rsr);
        EXPECT_EQ(again.ratio, r.stats.ratio);
        const auto g = gap_series(*r.fit, p);
        std::vector<double> pre(g.gap.begin(), g.gap.begin() + 4), zero(4, 0.0);
        EXPECT_NEAR(rmse(pre, zero), r.pre_rmse(), 1e-14);
    };
    check(s.treated);
    for (const auto& r : s.placebos) check(r);
}

TEST(Placebo, TreatedSmallestGivesPValueOne) {
    const auto p = testing_support::with_clone(testing_support::random_panel(23, 6, 9), 4);
    const auto s = run_placebos(p, make_design(p, "u01", 1981, 1977, 1985), kSpec, quick());
    // u01 is an exact copy of u05, so its post RMSE is 0 (smallest); u05 fits
    // itself from the pool without u01, so it is not a copy.
    EXPECT_EQ(s.p_value, 1.0);
    EXPECT_EQ(s.rank, static_cast<int>(s.n_units));
}

TEST(Placebo, RelabelingDonorsChangesNothing) {
    const auto p = testing_support::random_panel(24, 6, 9);
    const auto d = make_design(p, "u01", 1981, 1977, 1985);
    auto reversed = d;
    std::reverse(reversed.donors.begin(), reversed.donors.end());
    const auto a = run_placebos(p, d, kSpec, quick());
    const auto b = run_placebos(p, reversed, kSpec, quick());
    EXPECT_EQ(a.p_value, b.p_value);
    EXPECT_EQ(a.rank, b.rank);
    for (std::size_t i = 0; i < a.placebos.size(); ++i) {
        EXPECT_EQ(a.placebos[i].unit, b.placebos[i].unit);
        EXPECT_NEAR(a.placebos[i].post_rmse(), b.placebos[i].post_rmse(), 1e-10);
    }
    EXPECT_NEAR(a.treated.post_rmse(), b.treated.post_rmse(), 1e-10);
}

TEST(Placebo, ThreadCountDoesNotChangeResults) {
    const auto p = testing_support::random_panel(25, 8, 9);
    const auto d = make_design(p, "u01", 1981, 1977, 1985);
    PlaceboOptions one, many;
    many.threads = 4;
    const auto a = run_placebos(p, d, kSpec, quick(), one);
    const auto b = run_placebos(p, d, kSpec, quick(), many);
    EXPECT_EQ(a.p_value, b.p_value);
    for (std::size_t i = 0; i < a.placebos.size(); ++i)
        EXPECT_TRUE(a.placebos[i].fit->w.values() == b.placebos[i].fit->w.values());
}

TEST(Placebo, ExcludedDonorIsAFailureNotFatal) {
    auto p = testing_support::random_panel(26, 6, 9);
    Eigen::MatrixXd y = p.outcomes();
    y(2, 6) = missing_value();
    p = PanelDataset(p.units(), p.first_time(), y, p.covariates());
    const auto s = run_placebos(p, make_design(p, "u01", 1981, 1977, 1985), kSpec, quick());
    EXPECT_EQ(s.n_failed, 1u);
    EXPECT_EQ(s.n_units, 5u);
    const auto it = std::find_if(s.placebos.begin(), s.placebos.end(), [](const auto& r) { return r.unit == "u03"; });
    ASSERT_NE(it, s.placebos.end());
    EXPECT_FALSE(it->succeeded());
    EXPECT_TRUE(it->failure);
}

TEST(Placebo, TooManyFailuresIsDegenerate) {
    auto p = testing_support::random_panel(27, 6, 9);
    Eigen::MatrixXd y = p.outcomes();
    for (int u : {1, 2, 3}) y(u, 7) = missing_value();
    p = PanelDataset(p.units(), p.first_time(), y, p.covariates());
    try {
        run_placebos(p, make_design(p, "u01", 1981, 1977, 1985), kSpec, quick());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateStudy);
    }
}

TEST(Placebo, TreatedFailureIsStudyFailure) {
    auto p = testing_support::random_panel(28, 5, 9);
    auto covs = p.covariates();
    covs[0].values.setConstant(1.0);
    p = PanelDataset(p.units(), p.first_time(), p.outcomes(), covs);
    try {
        run_placebos(p, make_design(p, "u01", 1981, 1977, 1985), kSpec, quick());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::StudyFailure);
    }
}

TEST(Placebo, NeedsTwoDonors) {
    const auto p = testing_support::random_panel(29, 2, 9);
    EXPECT_THROW(run_placebos(p, make_design(p, "u01", 1981, 1977, 1985), kSpec), Error);
}

TEST(Placebo, PreFitFilter) {
    const auto base = testing_support::random_panel(30, 8, 9);
    // Blow up u08's level so nothing fits it in the pre-period.
    Eigen::MatrixXd y = base.outcomes();
    y.row(7).array() += 50.0;
    const PanelDataset p(base.units(), base.first_time(), y, base.covariates());
    const auto d = make_design(p, "u01", 1981, 1977, 1985);
    const auto plain = run_placebos(p, d, kSpec, quick());
    PlaceboOptions opts;
    opts.filter_by_pre_fit = true;
    const auto filtered = run_placebos(p, d, kSpec, quick(), opts);
    EXPECT_EQ(plain.n_filtered, 0u);
    EXPECT_GE(filtered.n_filtered, 1u);
    EXPECT_EQ(filtered.n_units + filtered.n_filtered, plain.n_units);
    for (const auto& r : filtered.placebos)
        if (r.filtered) {
            EXPECT_GT(r.pre_rmse(), 5.0 * filtered.treated.pre_rmse());
        }
}

TEST(RatioRanking, InjectedEffectRanksFirst) {
    const auto p0 = testing_support::random_panel(31, 10, 12);
    const auto p = shift_post(p0, 0, 1982, 5.0);
    const auto s = run_placebos(p, make_design(p, "u01", 1982, 1977, 1988), kSpec, quick());
    const auto ranking = ratio_ranking(s);
    ASSERT_EQ(ranking.size(), s.n_units);
    EXPECT_TRUE(ranking.front().is_treated);
    for (std::size_t i = 1; i < ranking.size(); ++i)
        if (ranking[i].ratio && ranking[i - 1].ratio) {
            EXPECT_GE(*ranking[i - 1].ratio, *ranking[i].ratio);
        }
}

TEST(RatioRanking, UndefinedLastAndTiesByLabel) {
    PlaceboStudy s;
    s.treated.unit = "m";
    s.treated.is_treated = true;
    s.treated.stats.ratio = 2.0;
    auto add = [&](const char* u, std::optional<double> ratio) {
        PlaceboResult r;
        r.unit = u;
        r.stats.ratio = ratio;
        r.fit.emplace();
        s.placebos.push_back(r);
    };
    add("z", 2.0);
    add("a", std::nullopt);
    add("b", 2.0);
    add("c", 3.0);
    const auto r = ratio_ranking(s);
    std::vector<std::string> order;
    for (const auto& x : r) order.push_back(x.unit);
    EXPECT_EQ(order, (std::vector<std::string>{"c", "b", "m", "z", "a"}));
}

TEST(GapPaths, OnePerFittedUnitTreatedFirst) {
    const auto p = testing_support::random_panel(32, 6, 9);
    const auto s = run_placebos(p, make_design(p, "u02", 1981, 1977, 1985), kSpec, quick());
    const auto g = gap_paths(s, p);
    ASSERT_EQ(g.size(), 6u);
    EXPECT_TRUE(g[0].is_treated);
    EXPECT_EQ(g[0].unit, "u02");
    for (const auto& x : g) {
        EXPECT_EQ(x.series.times.size(), 9u);
        EXPECT_EQ(x.series.times.front(), 1977);
    }
}

TEST(GapPaths, CloneTreatedIsZero) {
    const auto p = testing_support::with_clone(testing_support::random_panel(33, 5, 9), 3);
    const auto s = run_placebos(p, make_design(p, "u01", 1981, 1977, 1985), kSpec, quick());
    const auto paths = gap_paths(s, p);
    for (double x : paths[0].series.gap) EXPECT_NEAR(x, 0.0, 1e-12);
}
