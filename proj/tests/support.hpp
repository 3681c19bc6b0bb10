#pragma once

// Shared helpers for the test binaries: small panel builders and a
// brute-force simplex oracle that does not touch the library solvers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scm/panel.hpp"

namespace testing_support {

inline std::string unit_name(int i) {
    std::string n = std::to_string(i);
    return "u" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

// Random panel with `n_units` units over [first, first + n_times), one
// outcome and `n_cov` covariates, all fully observed.
inline scm::PanelDataset random_panel(std::uint64_t seed, int n_units, int n_times, int n_cov = 2,
                                      scm::TimeIndex first = 1977) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<std::string> units;
    for (int i = 1; i <= n_units; ++i) units.push_back(unit_name(i));
    Eigen::MatrixXd y(n_units, n_times);
    for (int u = 0; u < n_units; ++u) {
        const double level = z(rng);
        for (int t = 0; t < n_times; ++t) y(u, t) = level + 0.3 * z(rng);
    }
    std::vector<scm::Covariate> covs;
    for (int c = 0; c < n_cov; ++c) {
        Eigen::MatrixXd v(n_units, n_times);
        for (int u = 0; u < n_units; ++u) {
            const double level = 5.0 * z(rng);
            for (int t = 0; t < n_times; ++t) v(u, t) = level + 0.1 * z(rng);
        }
        covs.push_back({"c" + std::to_string(c + 1), v});
    }
    return scm::PanelDataset(units, first, y, covs, false);
}

// Copies donor row `clone_of` into row 0 (the treated unit) for outcomes and
// every covariate.
inline scm::PanelDataset with_clone(const scm::PanelDataset& p, std::size_t clone_of) {
    Eigen::MatrixXd y = p.outcomes();
    y.row(0) = y.row(static_cast<Eigen::Index>(clone_of));
    std::vector<scm::Covariate> covs = p.covariates();
    for (auto& c : covs) c.values.row(0) = c.values.row(static_cast<Eigen::Index>(clone_of));
    return scm::PanelDataset(p.units(), p.first_time(), y, covs, p.is_rate_panel());
}

inline double simplex_objective(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& w) {
    return (A * w - b).squaredNorm();
}

// Minimum of ||A w - b||^2 over the unit simplex by exhaustive grid search
// with step 0.01, then a local refinement that shifts mass between pairs of
// coordinates with shrinking steps down to 1e-7.
inline double grid_oracle(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, Eigen::VectorXd* argmin = nullptr) {
    const int m = static_cast<int>(A.cols());
    const int steps = 100;
    Eigen::VectorXd best_w = Eigen::VectorXd::Zero(m);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> k(static_cast<std::size_t>(m), 0);

    // enumerate compositions of `steps` into m nonnegative parts
    auto rec = [&](auto&& self, int idx, int left) -> void {
        if (idx == m - 1) {
            k[static_cast<std::size_t>(idx)] = left;
            Eigen::VectorXd w(m);
            for (int i = 0; i < m; ++i) w(i) = k[static_cast<std::size_t>(i)] / static_cast<double>(steps);
            const double f = simplex_objective(A, b, w);
            if (f < best) {
                best = f;
                best_w = w;
            }
            return;
        }
        for (int c = 0; c <= left; ++c) {
            k[static_cast<std::size_t>(idx)] = c;
            self(self, idx + 1, left - c);
        }
    };
    rec(rec, 0, steps);

    double step = 0.01;
    while (step > 1e-7) {
        bool improved = false;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                if (i == j) continue;
                const double amount = std::min(step, best_w(j));
                if (amount <= 0.0) continue;
                Eigen::VectorXd w = best_w;
                w(i) += amount;
                w(j) -= amount;
                const double f = simplex_objective(A, b, w);
                if (f < best) {
                    best = f;
                    best_w = w;
                    improved = true;
                }
            }
        if (!improved) step /= 2.0;
    }
    if (argmin) *argmin = best_w;
    return best;
}

}  // namespace testing_support
