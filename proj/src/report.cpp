#include "scm/report.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "scm/error.hpp"
#include "scm/text.hpp"

namespace scm {

namespace {

std::string num(double v) { return text::format_double(v); }
std::string opt(const std::optional<double>& v) { return v ? text::format_double(*v) : std::string(); }

void row(std::ostream& out, std::initializer_list<std::string> fields) {
    bool first = true;
    for (const auto& f : fields) {
        if (!first) out << ',';
        out << text::escape_csv(f);
        first = false;
    }
    out << '\n';
}

const char* status_of(const PlaceboResult& r) {
    if (!r.succeeded()) return "failed";
    if (r.filtered) return "filtered";
    return "counted";
}

}  // namespace

void write_balance_table(std::ostream& out, const std::vector<BalanceRow>& rows, bool full_precision) {
    auto fmt = [&](double v) { return full_precision ? num(v) : text::format_fixed(v, kDisplayDecimals); };
    row(out, {"predictor", "treated", "synthetic", "sample_mean"});
    for (const auto& r : rows) row(out, {r.predictor, fmt(r.treated), fmt(r.synthetic), fmt(r.sample_mean)});
}

void write_weights_table(std::ostream& out, const SynthFit& fit) {
    std::vector<std::pair<UnitId, double>> shown;
    for (std::size_t j = 0; j < fit.w.size(); ++j)
        if (fit.w[j] >= kWeightDisplayThreshold) shown.emplace_back(fit.matrices.donor_order[j], fit.w[j]);
    std::sort(shown.begin(), shown.end());
    row(out, {"weight", "unit"});
    for (const auto& [unit, w] : shown) row(out, {text::format_fixed(w, kDisplayDecimals), unit});
}

void write_weights_full(std::ostream& out, const SynthFit& fit) {
    row(out, {"unit", "weight"});
    for (std::size_t j = 0; j < fit.w.size(); ++j) row(out, {fit.matrices.donor_order[j], num(fit.w[j])});
}

void write_v_weights(std::ostream& out, const SynthFit& fit) {
    row(out, {"predictor", "v"});
    for (std::size_t i = 0; i < fit.v.size(); ++i) row(out, {fit.matrices.labels[i], num(fit.v[i])});
}

void write_path_table(std::ostream& out, const SynthFit& fit) {
    row(out, {"time", "actual", "synthetic", "gap"});
    for (Eigen::Index t = 0; t < fit.treated_path.size(); ++t) {
        const double a = fit.treated_path(t);
        const double s = fit.synthetic_path(t);
        row(out, {std::to_string(fit.window.first + static_cast<TimeIndex>(t)), num(a), num(s), num(a - s)});
    }
}

void write_stats_table(std::ostream& out, const PlaceboStudy& study) {
    row(out, {"unit", "treated", "pre_rmse", "post_rmse", "pre_mae", "rsr", "ratio", "well_fit", "status"});
    auto emit = [&](const PlaceboResult& r) {
        const auto& s = r.stats;
        const bool fitted = r.fit.has_value();
        row(out, {r.unit, r.is_treated ? "1" : "0", fitted ? opt(s.pre_rmse) : "", fitted ? opt(s.post_rmse) : "",
                  fitted ? opt(s.pre_mae) : "", fitted ? opt(s.rsr) : "", fitted ? opt(s.ratio) : "",
                  fitted ? (s.well_fit ? "1" : "0") : "", status_of(r)});
    };
    emit(study.treated);
    for (const auto& p : study.placebos) emit(p);
}

void write_study_summary(std::ostream& out, const PlaceboStudy& study) {
    row(out, {"rank", "p_value", "p_value_donors_only", "n_units", "n_failed", "n_filtered"});
    row(out, {std::to_string(study.rank), num(study.p_value), opt(study.p_value_donors_only),
              std::to_string(study.n_units), std::to_string(study.n_failed), std::to_string(study.n_filtered)});
}

void write_ratio_ranking(std::ostream& out, const std::vector<RatioRank>& ranking) {
    row(out, {"position", "unit", "ratio", "treated"});
    for (std::size_t i = 0; i < ranking.size(); ++i)
        row(out, {std::to_string(i + 1), ranking[i].unit, opt(ranking[i].ratio), ranking[i].is_treated ? "1" : "0"});
}

void write_gap_paths(std::ostream& out, const std::vector<GapPath>& paths) {
    row(out, {"unit", "time", "gap"});
    for (const auto& p : paths)
        for (std::size_t i = 0; i < p.series.times.size(); ++i)
            row(out, {p.unit, std::to_string(p.series.times[i]), num(p.series.gap[i])});
}

void write_failures(std::ostream& out, const PlaceboStudy& study) {
    row(out, {"unit", "reason"});
    for (const auto& p : study.placebos)
        if (p.failure) row(out, {p.unit, *p.failure});
}

void write_fit_rows(std::ostream& out, const FitReport& report) {
    row(out, {"unit", "pre_rmse", "post_rmse", "pre_mae", "rsr", "ratio", "well_fit"});
    for (const auto& s : report.rows)
        row(out, {s.unit, opt(s.pre_rmse), opt(s.post_rmse), opt(s.pre_mae), opt(s.rsr), opt(s.ratio),
                  s.well_fit ? "1" : "0"});
}

void write_fit_summary(std::ostream& out, const FitReport& report) {
    row(out, {"column", "count", "min", "max", "mean"});
    const std::pair<const char*, const ColumnSummary*> cols[] = {{"pre_rmse", &report.pre_rmse},
                                                                 {"post_rmse", &report.post_rmse},
                                                                 {"pre_mae", &report.pre_mae},
                                                                 {"rsr", &report.rsr},
                                                                 {"ratio", &report.ratio}};
    for (const auto& [name, c] : cols) {
        if (c->count == 0) {
            row(out, {name, "0", "", "", ""});
            continue;
        }
        row(out, {name, std::to_string(c->count), num(c->min), num(c->max), num(c->mean)});
    }
}

std::vector<UnitFitStats> read_stats_table(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "stats table is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = text::split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[std::string(text::trim(header[i]))] = i;
    for (const char* need : {"unit", "pre_rmse", "post_rmse", "pre_mae", "rsr", "ratio", "well_fit"})
        if (!col.count(need))
            throw Error(ErrorCode::ParseError, std::string("line 1: stats table lacks column '") + need + "'");

    std::vector<UnitFitStats> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto f = text::split_csv_line(line);
        if (f.size() != header.size())
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                                   std::to_string(header.size()) + " fields, found " +
                                                   std::to_string(f.size()));
        auto value = [&](const char* name) -> std::optional<double> {
            const auto& s = f[col[name]];
            if (text::trim(s).empty()) return std::nullopt;
            const auto d = text::parse_double(s);
            if (!d)
                throw Error(ErrorCode::ParseError,
                            "line " + std::to_string(line_no) + ": bad " + name + " value '" + s + "'");
            return d;
        };
        UnitFitStats s;
        s.unit = f[col["unit"]];
        s.pre_rmse = value("pre_rmse");
        s.post_rmse = value("post_rmse");
        if (!s.pre_rmse || !s.post_rmse) continue;
        s.pre_mae = value("pre_mae");
        s.rsr = value("rsr");
        s.ratio = value("ratio");
        s.well_fit = text::trim(f[col["well_fit"]]) == "1";
        rows.push_back(std::move(s));
    }
    return rows;
}

void write_power_table(std::ostream& out, const PowerTable& table) {
    row(out, {"alpha", "rejection_rate", "mean_rank"});
    for (const auto& r : table.rows) row(out, {num(r.alpha), num(r.rejection_rate), num(r.mean_rank)});
}

void write_replications(std::ostream& out, const PowerTable& table) {
    row(out, {"replication", "seed", "failed", "p_value", "rank", "ratio_rank", "n_units", "failure"});
    for (std::size_t i = 0; i < table.outcomes.size(); ++i) {
        const auto& o = table.outcomes[i];
        if (o.failed) {
            row(out, {std::to_string(i), std::to_string(o.seed), "1", "", "", "", "", o.failure});
            continue;
        }
        row(out, {std::to_string(i), std::to_string(o.seed), "0", num(o.p_value), std::to_string(o.rank),
                  std::to_string(o.ratio_rank), std::to_string(o.n_units), ""});
    }
}

void write_cells(std::ostream& out, const std::vector<CellSummary>& cells) {
    row(out, {"unit", "time", "eligible_records", "rate"});
    for (const auto& c : cells)
        row(out, {c.unit, std::to_string(c.time), std::to_string(c.eligible_records), opt(c.rate)});
}

void print_aligned(std::ostream& out, const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size(), 0);
    for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i) out << "  ";
            // first column left-aligned, numbers right-aligned
            const std::size_t pad = width[i] > r[i].size() ? width[i] - r[i].size() : 0;
            if (i == 0)
                out << r[i] << std::string(i + 1 < r.size() ? pad : 0, ' ');
            else
                out << std::string(pad, ' ') << r[i];
        }
        out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
}

}  // namespace scm
