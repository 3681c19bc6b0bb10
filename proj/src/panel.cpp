#include "scm/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <unordered_set>

#include "scm/error.hpp"
#include "scm/text.hpp"

namespace scm {

bool is_missing(double cell) noexcept { return std::isnan(cell); }

double missing_value() noexcept { return std::numeric_limits<double>::quiet_NaN(); }

namespace {

void check_cells(const Eigen::MatrixXd& m, const std::string& what) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double x = m.data()[i];
        if (!is_missing(x) && !std::isfinite(x))
            throw Error(ErrorCode::ParseError, what + " contains a non-finite value");
    }
}

bool same_cells(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        const double y = b.data()[i];
        if (is_missing(x) != is_missing(y)) return false;
        if (!is_missing(x) && x != y) return false;
    }
    return true;
}

}  // namespace

PanelDataset::PanelDataset(std::vector<UnitId> units, TimeIndex first_time, Eigen::MatrixXd outcome,
                           std::vector<Covariate> covariates, bool rate_panel)
    : units_(std::move(units)),
      first_time_(first_time),
      outcome_(std::move(outcome)),
      covariates_(std::move(covariates)),
      rate_panel_(rate_panel) {
    if (units_.empty()) throw Error(ErrorCode::ParseError, "panel has no units");
    if (outcome_.cols() == 0) throw Error(ErrorCode::ParseError, "panel has no time periods");
    if (static_cast<std::size_t>(outcome_.rows()) != units_.size())
        throw Error(ErrorCode::ParseError, "outcome matrix rows do not match unit count");

    std::unordered_set<std::string> seen;
    for (const auto& u : units_) {
        if (u.empty()) throw Error(ErrorCode::ParseError, "empty unit label");
        if (!seen.insert(u).second) throw Error(ErrorCode::DuplicateCell, "duplicate unit '" + u + "'");
    }
    check_cells(outcome_, "outcome");

    std::unordered_set<std::string> names;
    for (const auto& c : covariates_) {
        if (c.name.empty()) throw Error(ErrorCode::ParseError, "empty covariate name");
        if (!names.insert(c.name).second)
            throw Error(ErrorCode::ParseError, "duplicate covariate '" + c.name + "'");
        if (c.values.rows() != outcome_.rows() || c.values.cols() != outcome_.cols())
            throw Error(ErrorCode::ParseError, "covariate '" + c.name + "' has wrong shape");
        check_cells(c.values, "covariate '" + c.name + "'");
    }

    if (rate_panel_) {
        for (Eigen::Index u = 0; u < outcome_.rows(); ++u)
            for (Eigen::Index t = 0; t < outcome_.cols(); ++t) {
                const double y = outcome_(u, t);
                if (!is_missing(y) && (y < 0.0 || y > 1.0))
                    throw Error(ErrorCode::OutOfRange,
                                "rate outcome " + text::format_double(y) + " for unit '" +
                                    units_[static_cast<std::size_t>(u)] + "' at time " +
                                    std::to_string(first_time_ + t) + " lies outside [0, 1]");
            }
    }
}

std::vector<TimeIndex> PanelDataset::times() const {
    std::vector<TimeIndex> out(n_times());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = first_time_ + static_cast<int>(i);
    return out;
}

std::optional<std::size_t> PanelDataset::find_unit(std::string_view label) const {
    for (std::size_t i = 0; i < units_.size(); ++i)
        if (units_[i] == label) return i;
    return std::nullopt;
}

std::size_t PanelDataset::unit_index(std::string_view label) const {
    if (auto i = find_unit(label)) return *i;
    throw Error(ErrorCode::InvalidDesign, "unknown unit '" + std::string(label) + "'");
}

std::size_t PanelDataset::time_offset(TimeIndex t) const {
    if (!has_time(t))
        throw Error(ErrorCode::InvalidDesign, "time " + std::to_string(t) + " is not in the panel");
    return static_cast<std::size_t>(t - first_time_);
}

std::optional<double> PanelDataset::outcome(std::size_t unit, TimeIndex t) const {
    const double y = outcome_(static_cast<Eigen::Index>(unit), static_cast<Eigen::Index>(time_offset(t)));
    if (is_missing(y)) return std::nullopt;
    return y;
}

bool PanelDataset::outcome_missing(std::size_t unit, TimeIndex t) const {
    return !outcome(unit, t).has_value();
}

const Covariate* PanelDataset::find_covariate(std::string_view name) const {
    for (const auto& c : covariates_)
        if (c.name == name) return &c;
    return nullptr;
}

PanelDataset PanelDataset::subset(const std::vector<std::size_t>& unit_rows, TimeRange range) const {
    const auto col0 = static_cast<Eigen::Index>(time_offset(range.first));
    time_offset(range.last);
    const auto ncols = static_cast<Eigen::Index>(range.size());

    std::vector<UnitId> units;
    units.reserve(unit_rows.size());
    Eigen::MatrixXd y(static_cast<Eigen::Index>(unit_rows.size()), ncols);
    for (std::size_t i = 0; i < unit_rows.size(); ++i) {
        units.push_back(units_.at(unit_rows[i]));
        y.row(static_cast<Eigen::Index>(i)) =
            outcome_.row(static_cast<Eigen::Index>(unit_rows[i])).segment(col0, ncols);
    }
    std::vector<Covariate> covs;
    covs.reserve(covariates_.size());
    for (const auto& c : covariates_) {
        Covariate sub{c.name, Eigen::MatrixXd(y.rows(), ncols)};
        for (std::size_t i = 0; i < unit_rows.size(); ++i)
            sub.values.row(static_cast<Eigen::Index>(i)) =
                c.values.row(static_cast<Eigen::Index>(unit_rows[i])).segment(col0, ncols);
        covs.push_back(std::move(sub));
    }
    return PanelDataset(std::move(units), range.first, std::move(y), std::move(covs), rate_panel_);
}

bool PanelDataset::operator==(const PanelDataset& other) const {
    if (units_ != other.units_ || first_time_ != other.first_time_ || rate_panel_ != other.rate_panel_)
        return false;
    if (!same_cells(outcome_, other.outcome_)) return false;
    if (covariates_.size() != other.covariates_.size()) return false;
    for (std::size_t i = 0; i < covariates_.size(); ++i) {
        if (covariates_[i].name != other.covariates_[i].name) return false;
        if (!same_cells(covariates_[i].values, other.covariates_[i].values)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// StudyDesign / PredictorSpec
// ---------------------------------------------------------------------------

void StudyDesign::validate(const PanelDataset& panel) const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidDesign, msg); };

    if (treated.empty()) fail("treated unit is empty");
    if (!panel.find_unit(treated)) fail("treated unit '" + treated + "' is not in the panel");
    if (donors.empty()) fail("donor pool is empty");
    std::set<std::string> seen;
    for (const auto& d : donors) {
        if (d == treated) fail("treated unit '" + treated + "' is listed as a donor");
        if (!panel.find_unit(d)) fail("donor '" + d + "' is not in the panel");
        if (!seen.insert(d).second) fail("donor '" + d + "' is listed twice");
    }
    if (pre_period.last != treatment_time - 1) fail("pre-period must end at treatment_time - 1");
    if (post_period.first != treatment_time) fail("post-period must start at treatment_time");
    if (pre_period.size() < 2) fail("pre-period needs at least 2 periods");
    if (post_period.size() < 1) fail("post-period needs at least 1 period");
    for (TimeIndex t : {pre_period.first, pre_period.last, post_period.first, post_period.last})
        if (!panel.has_time(t)) fail("time " + std::to_string(t) + " is not in the panel");
}

StudyDesign make_design(const PanelDataset& panel, const UnitId& treated, TimeIndex treatment_time,
                        TimeIndex pre_start, TimeIndex post_end) {
    StudyDesign d;
    d.treated = treated;
    d.treatment_time = treatment_time;
    d.pre_period = {pre_start, treatment_time - 1};
    d.post_period = {treatment_time, post_end};
    for (const auto& u : panel.units())
        if (u != treated) d.donors.push_back(u);
    return d;
}

std::string predictor_label(const PredictorEntry& entry) {
    if (const auto* m = std::get_if<CovariateMean>(&entry)) return m->covariate;
    return "outcome " + std::to_string(std::get<OutcomeLag>(entry).time);
}

std::string format_predictor(const PredictorEntry& entry) {
    if (const auto* m = std::get_if<CovariateMean>(&entry)) return "mean:" + m->covariate;
    return "lag:" + std::to_string(std::get<OutcomeLag>(entry).time);
}

PredictorEntry parse_predictor(std::string_view token) {
    token = text::trim(token);
    const auto colon = token.find(':');
    if (colon == std::string_view::npos)
        throw Error(ErrorCode::ConfigError,
                    "predictor '" + std::string(token) + "' must be mean:<covariate> or lag:<time>");
    const auto kind = text::trim(token.substr(0, colon));
    const auto arg = text::trim(token.substr(colon + 1));
    if (kind == "mean" && !arg.empty()) return CovariateMean{std::string(arg)};
    if (kind == "lag") {
        if (auto t = text::parse_int(arg)) return OutcomeLag{static_cast<TimeIndex>(*t)};
    }
    throw Error(ErrorCode::ConfigError,
                "predictor '" + std::string(token) + "' must be mean:<covariate> or lag:<time>");
}

void PredictorSpec::validate(const PanelDataset& panel, const StudyDesign& design) const {
    if (entries.empty()) throw Error(ErrorCode::InvalidDesign, "predictor spec has no entries");
    for (const auto& e : entries) {
        if (const auto* m = std::get_if<CovariateMean>(&e)) {
            if (!panel.find_covariate(m->covariate))
                throw Error(ErrorCode::InvalidDesign, "unknown covariate '" + m->covariate + "'");
        } else {
            const auto t = std::get<OutcomeLag>(e).time;
            if (!design.pre_period.contains(t))
                throw Error(ErrorCode::InvalidDesign,
                            "outcome lag " + std::to_string(t) + " lies outside the pre-period");
        }
    }
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

PanelDataset load_panel(std::istream& in, const LoadOptions& options) {
    std::string line;
    std::size_t line_no = 0;
    auto parse_error = [&](const std::string& msg) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + msg);
    };

    // Header, skipping blank lines.
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!text::trim(line).empty()) {
            header = text::split_csv_line(line);
            break;
        }
    }
    if (header.empty()) throw Error(ErrorCode::ParseError, "panel file is empty");
    for (auto& h : header) h = std::string(text::trim(h));
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

    std::optional<std::size_t> unit_col, time_col, outcome_col;
    std::vector<std::pair<std::string, std::size_t>> cov_cols;
    std::set<std::string> names;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto& h = header[i];
        if (h.empty()) parse_error("empty column name in header");
        if (!names.insert(h).second) parse_error("duplicate column '" + h + "'");
        if (h == "unit") unit_col = i;
        else if (h == "time") time_col = i;
        else if (h == "outcome") outcome_col = i;
        else cov_cols.emplace_back(h, i);
    }
    if (!unit_col || !time_col || !outcome_col)
        parse_error("header must name 'unit', 'time' and 'outcome' columns");

    struct Row {
        double outcome;
        std::vector<double> covs;
    };
    std::map<std::pair<std::string, TimeIndex>, Row> cells;

    auto numeric = [&](const std::string& field, const std::string& col) {
        if (text::trim(field).empty()) return missing_value();
        auto v = text::parse_double(field);
        if (!v) parse_error("non-numeric value '" + field + "' in column '" + col + "'");
        return *v;
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto fields = text::split_csv_line(line);
        if (fields.size() != header.size())
            parse_error("expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
        std::string unit(text::trim(fields[*unit_col]));
        if (unit.empty()) parse_error("empty unit label");
        auto t = text::parse_int(fields[*time_col]);
        if (!t) parse_error("non-integer time '" + fields[*time_col] + "'");

        Row row{numeric(fields[*outcome_col], "outcome"), {}};
        row.covs.reserve(cov_cols.size());
        for (const auto& [name, col] : cov_cols) row.covs.push_back(numeric(fields[col], name));

        auto key = std::make_pair(unit, static_cast<TimeIndex>(*t));
        if (!cells.emplace(key, std::move(row)).second)
            throw Error(ErrorCode::DuplicateCell, "line " + std::to_string(line_no) + ": (" + unit +
                                                      ", " + std::to_string(*t) + ") appears twice");
    }
    if (cells.empty()) throw Error(ErrorCode::ParseError, "panel file has no data rows");

    std::set<std::string> unit_set;
    std::set<TimeIndex> time_set;
    for (const auto& [key, row] : cells) {
        unit_set.insert(key.first);
        time_set.insert(key.second);
    }
    const TimeIndex t0 = *time_set.begin();
    const TimeIndex t1 = *time_set.rbegin();
    if (static_cast<std::size_t>(t1 - t0 + 1) != time_set.size()) {
        TimeIndex prev = t0;
        for (TimeIndex t : time_set) {
            if (t > prev + 1)
                throw Error(ErrorCode::NonContiguousTimes, "no rows for time " + std::to_string(prev + 1) +
                                                               " between " + std::to_string(t0) + " and " +
                                                               std::to_string(t1));
            prev = t;
        }
    }

    std::vector<UnitId> units(unit_set.begin(), unit_set.end());
    const auto n_u = static_cast<Eigen::Index>(units.size());
    const auto n_t = static_cast<Eigen::Index>(time_set.size());
    Eigen::MatrixXd y(n_u, n_t);
    std::vector<Covariate> covs;
    for (const auto& [name, col] : cov_cols) covs.push_back({name, Eigen::MatrixXd(n_u, n_t)});

    for (Eigen::Index u = 0; u < n_u; ++u) {
        for (Eigen::Index k = 0; k < n_t; ++k) {
            const auto key = std::make_pair(units[static_cast<std::size_t>(u)], t0 + static_cast<TimeIndex>(k));
            auto it = cells.find(key);
            if (it == cells.end())
                throw Error(ErrorCode::MissingRow, "no row for (" + key.first + ", " +
                                                       std::to_string(key.second) +
                                                       "); encode missing values as empty fields");
            y(u, k) = it->second.outcome;
            for (std::size_t c = 0; c < covs.size(); ++c) covs[c].values(u, k) = it->second.covs[c];
        }
    }
    return PanelDataset(std::move(units), t0, std::move(y), std::move(covs), options.rate_panel);
}

PanelDataset load_panel_file(const std::string& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open panel file '" + path + "'");
    return load_panel(in, options);
}

void save_panel(std::ostream& out, const PanelDataset& panel) {
    auto cell = [](double x) { return is_missing(x) ? std::string() : text::format_double(x); };

    out << "unit,time,outcome";
    for (const auto& c : panel.covariates()) out << ',' << text::escape_csv(c.name);
    out << '\n';
    for (std::size_t u = 0; u < panel.n_units(); ++u) {
        const auto ui = static_cast<Eigen::Index>(u);
        for (std::size_t k = 0; k < panel.n_times(); ++k) {
            const auto ki = static_cast<Eigen::Index>(k);
            out << text::escape_csv(panel.units()[u]) << ',' << panel.first_time() + static_cast<int>(k) << ','
                << cell(panel.outcomes()(ui, ki));
            for (const auto& c : panel.covariates()) out << ',' << cell(c.values(ui, ki));
            out << '\n';
        }
    }
}

void save_panel_file(const std::string& path, const PanelDataset& panel) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write panel file '" + path + "'");
    save_panel(out, panel);
}

// ---------------------------------------------------------------------------
// restrict
// ---------------------------------------------------------------------------

namespace {

RestrictedPanel restrict_impl(const PanelDataset& panel, const StudyDesign& design,
                              const PredictorSpec* spec) {
    design.validate(panel);
    const TimeRange window = design.window();

    std::vector<std::string> cov_names;
    if (spec) {
        spec->validate(panel, design);
        for (const auto& e : spec->entries)
            if (const auto* m = std::get_if<CovariateMean>(&e)) cov_names.push_back(m->covariate);
    }

    // Returns an empty string when the unit is usable, otherwise the reason.
    auto problem = [&](std::size_t u) -> std::string {
        for (TimeIndex t = window.first; t <= window.last; ++t)
            if (panel.outcome_missing(u, t)) return "missing outcome at " + std::to_string(t);
        for (const auto& name : cov_names) {
            const auto& vals = panel.find_covariate(name)->values;
            bool any = false;
            for (TimeIndex t = design.pre_period.first; t <= design.pre_period.last && !any; ++t)
                any = !is_missing(vals(static_cast<Eigen::Index>(u),
                                       static_cast<Eigen::Index>(panel.time_offset(t))));
            if (!any) return "covariate '" + name + "' unobserved in the pre-period";
        }
        return {};
    };

    const std::size_t treated_row = panel.unit_index(design.treated);
    if (auto why = problem(treated_row); !why.empty())
        throw Error(ErrorCode::TreatedIncomplete, "treated unit '" + design.treated + "': " + why);

    RestrictedPanel out{panel, design, {}};
    out.design.donors.clear();
    std::set<std::size_t> keep{treated_row};
    for (const auto& d : design.donors) {
        const auto row = panel.unit_index(d);
        if (auto why = problem(row); !why.empty()) {
            out.excluded.push_back({d, why});
        } else {
            out.design.donors.push_back(d);
            keep.insert(row);
        }
    }
    if (out.design.donors.empty())
        throw Error(ErrorCode::EmptyDonorPool, "every donor was excluded for missing data");

    out.panel = panel.subset(std::vector<std::size_t>(keep.begin(), keep.end()), window);
    return out;
}

}  // namespace

RestrictedPanel restrict(const PanelDataset& panel, const StudyDesign& design) {
    return restrict_impl(panel, design, nullptr);
}

RestrictedPanel restrict(const PanelDataset& panel, const StudyDesign& design, const PredictorSpec& spec) {
    return restrict_impl(panel, design, &spec);
}

}  // namespace scm
