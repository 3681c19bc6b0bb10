#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace scm {

enum class ErrorCode {
    // data
    ParseError,
    DuplicateCell,
    MissingRow,
    NonContiguousTimes,
    OutOfRange,
    InvalidDesign,
    TreatedIncomplete,
    EmptyDonorPool,
    IoError,
    // estimation
    DegeneratePredictor,
    SolverFailure,
    OptimizationFailure,
    EmptyWindow,
    DegenerateVariance,
    StudyFailure,
    DegenerateStudy,
    // configuration
    ConfigError,
};

// Coarse grouping used by the command-line front end to pick an exit code.
enum class ErrorCategory { Config, Data, Estimation };

const char* to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }
    ErrorCategory category() const noexcept { return category_of(code_); }

private:
    ErrorCode code_;
};

// Raised by the simplex least-squares solver when the iteration budget runs
// out. Carries the best feasible iterate found and its KKT residual.
class SolverFailure : public Error {
public:
    SolverFailure(const std::string& message, std::vector<double> best_iterate,
                  double best_objective, double residual);

    const std::vector<double>& best_iterate() const noexcept { return best_iterate_; }
    double best_objective() const noexcept { return best_objective_; }
    double residual() const noexcept { return residual_; }

private:
    std::vector<double> best_iterate_;
    double best_objective_;
    double residual_;
};

}  // namespace scm
