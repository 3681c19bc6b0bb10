#include "scm/error.hpp"

#include <utility>

namespace scm {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::DuplicateCell: return "DuplicateCell";
        case ErrorCode::MissingRow: return "MissingRow";
        case ErrorCode::NonContiguousTimes: return "NonContiguousTimes";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::InvalidDesign: return "InvalidDesign";
        case ErrorCode::TreatedIncomplete: return "TreatedIncomplete";
        case ErrorCode::EmptyDonorPool: return "EmptyDonorPool";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::DegeneratePredictor: return "DegeneratePredictor";
        case ErrorCode::SolverFailure: return "SolverFailure";
        case ErrorCode::OptimizationFailure: return "OptimizationFailure";
        case ErrorCode::EmptyWindow: return "EmptyWindow";
        case ErrorCode::DegenerateVariance: return "DegenerateVariance";
        case ErrorCode::StudyFailure: return "StudyFailure";
        case ErrorCode::DegenerateStudy: return "DegenerateStudy";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "UnknownError";
}

ErrorCategory category_of(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
            return ErrorCategory::Config;
        case ErrorCode::DegeneratePredictor:
        case ErrorCode::SolverFailure:
        case ErrorCode::OptimizationFailure:
        case ErrorCode::EmptyWindow:
        case ErrorCode::DegenerateVariance:
        case ErrorCode::StudyFailure:
        case ErrorCode::DegenerateStudy:
            return ErrorCategory::Estimation;
        default:
            return ErrorCategory::Data;
    }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

SolverFailure::SolverFailure(const std::string& message, std::vector<double> best_iterate,
                             double best_objective, double residual)
    : Error(ErrorCode::SolverFailure, message),
      best_iterate_(std::move(best_iterate)),
      best_objective_(best_objective),
      residual_(residual) {}

}  // namespace scm
