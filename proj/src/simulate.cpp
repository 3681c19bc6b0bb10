#include "scm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "scm/error.hpp"
#include "scm/parallel.hpp"

namespace scm {

void FactorModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidDesign, msg); };
    if (n_units < 3) fail("n_units must be at least 3");
    if (n_pre < 2) fail("n_pre must be at least 2");
    if (n_post < 1) fail("n_post must be at least 1");
    if (n_factors < 1) fail("n_factors must be at least 1");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) fail("noise_std must be finite and nonnegative");
    if (!std::isfinite(effect)) fail("effect must be finite");
    if (convex_support < 1) fail("convex_support must be at least 1");
    if (n_covariates < 0) fail("n_covariates must be nonnegative");
    if (!(covariate_noise_std >= 0.0) || !std::isfinite(covariate_noise_std))
        fail("covariate_noise_std must be finite and nonnegative");
}

std::uint64_t split_seed(std::uint64_t master, std::uint64_t counter) {
    // SplitMix64 finalizer over a Weyl sequence.
    std::uint64_t z = master + (counter + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

SimulatedStudy generate(const FactorModelConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    const int n = config.n_units;
    const int k = config.n_factors;
    const int t_total = config.n_pre + config.n_post;
    const int width = static_cast<int>(std::to_string(n).size());

    std::vector<UnitId> units;
    for (int u = 1; u <= n; ++u) {
        std::string num = std::to_string(u);
        units.push_back("unit" + std::string(static_cast<std::size_t>(std::max(2, width)) - num.size(), '0') + num);
    }

    Eigen::MatrixXd factors(t_total, k);
    for (int t = 0; t < t_total; ++t)
        for (int f = 0; f < k; ++f) factors(t, f) = normal(rng);

    Eigen::MatrixXd loadings(n, k);
    for (int u = 0; u < n; ++u)
        for (int f = 0; f < k; ++f) loadings(u, f) = uniform(rng);

    SimTruth truth;
    if (config.treated_is_convex) {
        std::vector<int> donors(static_cast<std::size_t>(n - 1));
        std::iota(donors.begin(), donors.end(), 1);
        std::shuffle(donors.begin(), donors.end(), rng);
        const int support = std::min(config.convex_support, n - 1);
        Eigen::VectorXd mix(support);
        for (int i = 0; i < support; ++i) mix(i) = -std::log(1.0 - uniform(rng));
        mix /= mix.sum();

        Eigen::VectorXd w = Eigen::VectorXd::Zero(n - 1);
        Eigen::RowVectorXd treated_loading = Eigen::RowVectorXd::Zero(k);
        for (int i = 0; i < support; ++i) {
            const int donor_row = donors[static_cast<std::size_t>(i)];
            w(donor_row - 1) = mix(i);
            treated_loading += mix(i) * loadings.row(donor_row);
        }
        loadings.row(0) = treated_loading;
        truth.generating_weights = w;
    }

    Eigen::MatrixXd y(n, t_total);
    for (int u = 0; u < n; ++u)
        for (int t = 0; t < t_total; ++t) {
            const double trend = 0.5 + 0.01 * t;
            y(u, t) = trend + loadings.row(u).dot(factors.row(t)) + config.noise_std * normal(rng);
        }

    std::vector<Covariate> covariates;
    for (int c = 0; c < config.n_covariates; ++c) {
        Eigen::VectorXd coef(k);
        for (int f = 0; f < k; ++f) coef(f) = normal(rng);
        const double intercept = normal(rng);
        Covariate cov{"cov" + std::to_string(c + 1), Eigen::MatrixXd(n, t_total)};
        for (int u = 0; u < n; ++u)
            for (int t = 0; t < t_total; ++t)
                cov.values(u, t) = intercept + loadings.row(u).dot(coef) + config.covariate_noise_std * normal(rng);
        covariates.push_back(std::move(cov));
    }

    truth.effect_path.first = config.start_time + config.n_pre;
    truth.effect_path.values.assign(static_cast<std::size_t>(config.n_post), config.effect);
    for (int t = config.n_pre; t < t_total; ++t) y(0, t) += config.effect;
    truth.loadings = loadings;

    PanelDataset panel(units, config.start_time, std::move(y), std::move(covariates), false);
    StudyDesign design = make_design(panel, units.front(), config.start_time + config.n_pre, config.start_time,
                                     config.start_time + t_total - 1);
    PredictorSpec spec;
    for (int c = 0; c < config.n_covariates; ++c) spec.entries.push_back(CovariateMean{"cov" + std::to_string(c + 1)});
    if (config.lag_predictors || config.n_covariates == 0) {
        spec.entries.push_back(OutcomeLag{design.pre_period.first});
        spec.entries.push_back(OutcomeLag{design.pre_period.last});
    }

    return {std::move(panel), std::move(design), std::move(spec), std::move(truth)};
}

PowerTable power_study(const FactorModelConfig& config, std::size_t replications,
                       const std::vector<double>& alpha_grid, const SolverOptions& solver,
                       const PowerOptions& options) {
    config.validate();
    if (replications < 1) throw Error(ErrorCode::InvalidDesign, "replications must be at least 1");

    PowerTable table;
    table.replications = replications;
    table.top_fraction = options.top_fraction;
    table.outcomes.resize(replications);

    parallel_for(replications, options.threads, [&](std::size_t r) {
        ReplicationOutcome& out = table.outcomes[r];
        out.seed = split_seed(config.seed, r);
        FactorModelConfig cfg = config;
        cfg.seed = out.seed;
        SolverOptions s = solver;
        s.seed = out.seed;
        try {
            const auto sim = generate(cfg);
            const auto study = run_placebos(sim.panel, sim.design, sim.spec, s, PlaceboOptions{});
            out.p_value = study.p_value;
            out.rank = study.rank;
            out.n_units = study.n_units;
            const auto ranking = ratio_ranking(study);
            for (std::size_t i = 0; i < ranking.size(); ++i)
                if (ranking[i].is_treated) out.ratio_rank = static_cast<int>(i) + 1;
        } catch (const Error& e) {
            out.failed = true;
            out.failure = e.what();
        }
    });

    std::size_t ok = 0;
    double rank_sum = 0.0;
    double ratio_rank_sum = 0.0;
    std::size_t top = 0;
    for (const auto& o : table.outcomes) {
        if (o.failed) {
            ++table.failures;
            continue;
        }
        ++ok;
        rank_sum += o.rank;
        ratio_rank_sum += o.ratio_rank;
        const auto cutoff = static_cast<int>(std::ceil(options.top_fraction * static_cast<double>(o.n_units) - 1e-9));
        if (o.ratio_rank <= std::max(1, cutoff)) ++top;
    }
    const double denom = ok ? static_cast<double>(ok) : std::nan("");
    for (double alpha : alpha_grid) {
        std::size_t rejected = 0;
        for (const auto& o : table.outcomes)
            if (!o.failed && o.p_value <= alpha * (1.0 + 1e-12)) ++rejected;
        table.rows.push_back({alpha, static_cast<double>(rejected) / denom, rank_sum / denom});
    }
    table.top_ratio_rate = static_cast<double>(top) / denom;
    table.mean_ratio_rank = ratio_rank_sum / denom;
    return table;
}

}  // namespace scm
