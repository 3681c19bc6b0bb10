#pragma once

// Comma-separated output tables. Display tables round to three decimals;
// the *_full variants and every machine table keep shortest round-trip
// precision.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "scm/aggregate.hpp"
#include "scm/diagnostics.hpp"
#include "scm/estimator.hpp"
#include "scm/inference.hpp"
#include "scm/simulate.hpp"

namespace scm {

inline constexpr int kDisplayDecimals = 3;
inline constexpr double kWeightDisplayThreshold = 0.001;

// predictor,treated,synthetic,sample_mean
void write_balance_table(std::ostream& out, const std::vector<BalanceRow>& rows, bool full_precision = false);

// weight,unit for donors with weight >= 0.001, by unit label, 3 decimals.
void write_weights_table(std::ostream& out, const SynthFit& fit);
// unit,weight for every donor, full precision.
void write_weights_full(std::ostream& out, const SynthFit& fit);
// predictor,v
void write_v_weights(std::ostream& out, const SynthFit& fit);
// time,actual,synthetic,gap
void write_path_table(std::ostream& out, const SynthFit& fit);

// unit,treated,pre_rmse,post_rmse,pre_mae,rsr,ratio,well_fit,status
void write_stats_table(std::ostream& out, const PlaceboStudy& study);
// rank,p_value,p_value_donors_only,n_units,n_failed,n_filtered
void write_study_summary(std::ostream& out, const PlaceboStudy& study);
// position,unit,ratio,treated
void write_ratio_ranking(std::ostream& out, const std::vector<RatioRank>& ranking);
// unit,time,gap
void write_gap_paths(std::ostream& out, const std::vector<GapPath>& paths);
// unit,reason
void write_failures(std::ostream& out, const PlaceboStudy& study);

// unit,pre_rmse,post_rmse,pre_mae,rsr,ratio,well_fit
void write_fit_rows(std::ostream& out, const FitReport& report);
// column,count,min,max,mean
void write_fit_summary(std::ostream& out, const FitReport& report);

// Reads the per-unit table written by write_stats_table or write_fit_rows
// back into fit statistics. Failed rows (no RMSE) are skipped.
std::vector<UnitFitStats> read_stats_table(std::istream& in);

// alpha,rejection_rate,mean_rank
void write_power_table(std::ostream& out, const PowerTable& table);
// replication,seed,failed,p_value,rank,ratio_rank,n_units,failure
void write_replications(std::ostream& out, const PowerTable& table);

// unit,time,eligible_records,rate
void write_cells(std::ostream& out, const std::vector<CellSummary>& cells);

// Plain-text aligned rendering of a header plus rows, for terminal output.
void print_aligned(std::ostream& out, const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows);

}  // namespace scm
