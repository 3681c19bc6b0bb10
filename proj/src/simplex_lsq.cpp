#include "scm/simplex_lsq.hpp"

#include <limits>
#include <string>
#include <vector>

#include "scm/error.hpp"

namespace scm {

namespace {

// Least squares over the affine set {z : sum(z) = 1} restricted to `idx`.
// Eliminates the first active coordinate so the remaining problem is
// unconstrained.
Eigen::VectorXd solve_on_active(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                const std::vector<Eigen::Index>& idx) {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::VectorXd z(k);
    if (k == 1) {
        z(0) = 1.0;
        return z;
    }
    const Eigen::Index ref = idx[0];
    Eigen::MatrixXd B(A.rows(), k - 1);
    for (Eigen::Index i = 1; i < k; ++i) B.col(i - 1) = A.col(idx[static_cast<std::size_t>(i)]) - A.col(ref);
    const Eigen::VectorXd rhs = b - A.col(ref);
    const Eigen::VectorXd u = B.completeOrthogonalDecomposition().solve(rhs);
    z(0) = 1.0 - u.sum();
    z.tail(k - 1) = u;
    return z;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

SimplexLsqResult solve_simplex_lsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                   const SimplexLsqOptions& options) {
    const Eigen::Index m = A.cols();
    if (m < 1) throw Error(ErrorCode::InvalidDesign, "simplex least squares needs at least one column");
    if (b.size() != A.rows()) throw Error(ErrorCode::InvalidDesign, "right-hand side has the wrong length");

    const int budget = options.max_iterations > 0 ? options.max_iterations
                                                  : static_cast<int>(10 * (m + A.rows()) + 100);
    const double tol = options.gap_tolerance;

    auto objective = [&](const Eigen::VectorXd& w) { return (A * w - b).squaredNorm(); };

    // Best vertex, lowest index on ties.
    Eigen::Index start = 0;
    double best_vertex = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
        const double f = (A.col(j) - b).squaredNorm();
        if (f < best_vertex) {
            best_vertex = f;
            start = j;
        }
    }

    Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
    w(start) = 1.0;
    std::vector<char> active(static_cast<std::size_t>(m), 0);
    active[static_cast<std::size_t>(start)] = 1;

    SimplexLsqResult result;
    double gap = 0.0;
    int iterations = 0;

    auto fail = [&](const char* what) {
        throw SolverFailure(std::string(what) + " after " + std::to_string(iterations) + " iterations",
                            to_std(w), objective(w), gap);
    };

    while (true) {
        const Eigen::VectorXd g = A.transpose() * (A * w - b);
        const double kappa = w.dot(g);

        Eigen::Index entering = -1;
        double entering_cost = 0.0;
        double gmin = kappa;
        for (Eigen::Index j = 0; j < m; ++j) {
            gmin = std::min(gmin, g(j));
            if (active[static_cast<std::size_t>(j)]) continue;
            const double reduced = g(j) - kappa;
            if (entering < 0 || reduced < entering_cost) {
                entering = j;
                entering_cost = reduced;
            }
        }
        gap = 2.0 * (kappa - gmin);
        if (gap <= tol) break;
        if (entering < 0 || entering_cost >= -0.5 * tol) break;

        if (++iterations > budget) fail("simplex least squares did not converge");
        active[static_cast<std::size_t>(entering)] = 1;

        bool first_pass = true;
        bool stalled = false;
        while (true) {
            std::vector<Eigen::Index> idx;
            for (Eigen::Index j = 0; j < m; ++j)
                if (active[static_cast<std::size_t>(j)]) idx.push_back(j);
            const Eigen::VectorXd z = solve_on_active(A, b, idx);

            bool interior = true;
            for (Eigen::Index i = 0; i < z.size(); ++i)
                if (!(z(i) > 0.0)) interior = false;
            if (interior) {
                w.setZero();
                for (std::size_t i = 0; i < idx.size(); ++i) w(idx[i]) = z(static_cast<Eigen::Index>(i));
                break;
            }

            // Step from w toward z until the first active coordinate hits zero.
            double alpha = 1.0;
            std::size_t blocking = 0;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const double zi = z(static_cast<Eigen::Index>(i));
                if (zi > 0.0) continue;
                const double wi = w(idx[i]);
                const double a = wi / (wi - zi);
                if (a < alpha) {
                    alpha = a;
                    blocking = i;
                }
            }
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const auto j = idx[i];
                w(j) += alpha * (z(static_cast<Eigen::Index>(i)) - w(j));
            }
            w(idx[blocking]) = 0.0;
            for (const auto j : idx) {
                if (w(j) <= 0.0) {
                    w(j) = 0.0;
                    active[static_cast<std::size_t>(j)] = 0;
                }
            }
            // The entering coordinate was rejected without moving: the
            // reduced cost was a rounding artefact.
            if (first_pass && alpha == 0.0 && !active[static_cast<std::size_t>(entering)]) {
                stalled = true;
                break;
            }
            first_pass = false;
            if (++iterations > budget) fail("simplex least squares did not converge");
        }
        if (stalled) break;
    }

    w = w.cwiseMax(0.0);
    w /= w.sum();
    const Eigen::VectorXd g = A.transpose() * (A * w - b);
    result.gap = std::max(0.0, 2.0 * (w.dot(g) - g.minCoeff()));
    result.objective = objective(w);
    result.iterations = iterations;
    result.w = std::move(w);
    return result;
}

}  // namespace scm
