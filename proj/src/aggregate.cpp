#include "scm/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>

#include "scm/error.hpp"
#include "scm/text.hpp"

namespace scm {

namespace {

// Neumaier summation over ascending values.
double stable_sum(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    double carry = 0.0;
    for (double x : values) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            carry += (sum - t) + x;
        else
            carry += (x - t) + sum;
        sum = t;
    }
    return sum + carry;
}

struct CellRate {
    std::size_t eligible = 0;
    std::optional<double> rate;
};

template <typename Range>
CellRate rate_of(const Range& records, const AgeWindow& window) {
    std::vector<double> total;
    std::vector<double> credentialed;
    CellRate out;
    for (const MicroRecord& r : records) {
        if (!window.contains(r.age)) continue;
        ++out.eligible;
        total.push_back(r.weight);
        if (r.has_credential) credentialed.push_back(r.weight);
    }
    const double denom = stable_sum(total);
    if (denom > 0.0) out.rate = std::clamp(stable_sum(credentialed) / denom, 0.0, 1.0);
    return out;
}

void check_record(const MicroRecord& r) {
    if (r.age < 0) throw Error(ErrorCode::ParseError, "negative age for unit '" + r.unit + "'");
    if (!(r.weight >= 0.0) || !std::isfinite(r.weight))
        throw Error(ErrorCode::ParseError, "weight must be finite and non-negative for unit '" + r.unit + "'");
}

}  // namespace

std::optional<double> status_completion_rate(std::span<const MicroRecord> records, const UnitId& unit,
                                             TimeIndex time, const AgeWindow& window) {
    std::vector<MicroRecord> cell;
    for (const auto& r : records) {
        check_record(r);
        if (r.unit == unit && r.time == time) cell.push_back(r);
    }
    return rate_of(cell, window).rate;
}

OutcomePanel aggregate_outcomes(std::span<const MicroRecord> records, const std::vector<UnitId>& units,
                                const std::vector<TimeIndex>& times, const AgeWindow& window) {
    if (units.empty() || times.empty())
        throw Error(ErrorCode::InvalidDesign, "aggregation needs at least one unit and one time");
    if (window.min_age > window.max_age)
        throw Error(ErrorCode::InvalidDesign, "age window minimum exceeds maximum");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] != times[i - 1] + 1)
            throw Error(ErrorCode::NonContiguousTimes, "aggregation times must be consecutive");

    std::map<std::pair<UnitId, TimeIndex>, std::vector<MicroRecord>> groups;
    for (const auto& r : records) {
        check_record(r);
        groups[{r.unit, r.time}].push_back(r);
    }

    const auto n_u = static_cast<Eigen::Index>(units.size());
    const auto n_t = static_cast<Eigen::Index>(times.size());
    Eigen::MatrixXd y(n_u, n_t);
    std::vector<CellSummary> cells;
    cells.reserve(units.size() * times.size());
    for (Eigen::Index u = 0; u < n_u; ++u) {
        for (Eigen::Index k = 0; k < n_t; ++k) {
            const auto& unit = units[static_cast<std::size_t>(u)];
            const TimeIndex t = times[static_cast<std::size_t>(k)];
            CellRate cr;
            if (auto it = groups.find({unit, t}); it != groups.end()) cr = rate_of(it->second, window);
            y(u, k) = cr.rate.value_or(missing_value());
            cells.push_back({unit, t, cr.eligible, cr.rate});
        }
    }
    return {PanelDataset(units, times.front(), std::move(y), {}, true), std::move(cells)};
}

PanelDataset build_outcome_panel(std::span<const MicroRecord> records, const std::vector<UnitId>& units,
                                 const std::vector<TimeIndex>& times, const AgeWindow& window) {
    return aggregate_outcomes(records, units, times, window).panel;
}

std::vector<MicroRecord> load_microdata(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + msg);
    };

    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!text::trim(line).empty()) {
            header = text::split_csv_line(line);
            break;
        }
    }
    if (header.empty()) throw Error(ErrorCode::ParseError, "microdata file is empty");

    const std::vector<std::string> expected{"unit", "time", "age", "has_credential", "weight"};
    std::vector<std::size_t> col(expected.size(), header.size());
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto h = text::trim(header[i]);
        for (std::size_t k = 0; k < expected.size(); ++k)
            if (h == expected[k]) col[k] = i;
    }
    for (std::size_t k = 0; k < expected.size(); ++k)
        if (col[k] == header.size()) fail("header is missing column '" + expected[k] + "'");

    std::vector<MicroRecord> records;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto f = text::split_csv_line(line);
        if (f.size() != header.size())
            fail("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));

        MicroRecord r;
        r.unit = std::string(text::trim(f[col[0]]));
        if (r.unit.empty()) fail("empty unit label");
        auto t = text::parse_int(f[col[1]]);
        if (!t) fail("malformed time '" + f[col[1]] + "'");
        r.time = static_cast<TimeIndex>(*t);
        auto age = text::parse_int(f[col[2]]);
        if (!age || *age < 0) fail("malformed age '" + f[col[2]] + "'");
        r.age = static_cast<int>(*age);
        auto cred = text::parse_int(f[col[3]]);
        if (!cred || (*cred != 0 && *cred != 1)) fail("has_credential must be 0 or 1, got '" + f[col[3]] + "'");
        r.has_credential = *cred == 1;
        auto w = text::parse_double(f[col[4]]);
        if (!w || *w < 0.0) fail("malformed weight '" + f[col[4]] + "'");
        r.weight = *w;
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<MicroRecord> load_microdata_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open microdata file '" + path + "'");
    return load_microdata(in);
}

}  // namespace scm
