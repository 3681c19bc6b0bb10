#pragma once

#include <Eigen/Dense>

namespace scm {

struct SimplexLsqOptions {
    int max_iterations = 0;        // 0 = 10 * (cols + rows) + 100
    double gap_tolerance = 1e-11;  // stop when the Frank-Wolfe gap falls below this
};

struct SimplexLsqResult {
    Eigen::VectorXd w;
    double objective = 0.0;  // ||A w - b||^2
    double gap = 0.0;        // Frank-Wolfe gap, an upper bound on objective - optimum
    int iterations = 0;
};

// Minimizes ||A w - b||^2 subject to w >= 0 and sum(w) = 1.
//
// Active-set method in the style of Lawson-Hanson NNLS: start from the best
// vertex, repeatedly admit the coordinate with the most negative reduced
// cost, solve the equality-constrained least-squares problem on the active
// set, and step back to the boundary whenever that solution leaves the
// nonnegative orthant. Rank-deficient active sets are handled with a
// complete orthogonal decomposition (minimum-norm solution).
//
// Throws SolverFailure with the best iterate when the iteration budget is
// exhausted before the gap tolerance is met.
SimplexLsqResult solve_simplex_lsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                   const SimplexLsqOptions& options = {});

}  // namespace scm
