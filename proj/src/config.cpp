#include "scm/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "scm/error.hpp"
#include "scm/text.hpp"

namespace scm {

namespace {

namespace pt = boost::property_tree;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

// Reads typed values out of one section and remembers which keys were used,
// so leftovers can be reported as unknown.
class SectionReader {
public:
    SectionReader(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

    std::optional<std::string> raw(const std::string& key) {
        seen_.insert(key);
        const auto child = tree_.get_child_optional(pt::ptree::path_type(key, '\0'));
        if (!child) return std::nullopt;
        return std::string(text::trim(child->data()));
    }

    std::string required(const std::string& key) {
        auto v = raw(key);
        if (!v || v->empty()) config_error("[" + name_ + "] missing required key '" + key + "'");
        return *v;
    }

    template <typename T>
    std::optional<T> integer(const std::string& key) {
        const auto v = raw(key);
        if (!v) return std::nullopt;
        const auto n = text::parse_int(*v);
        if (!n) bad(key, *v, "an integer");
        if (*n < static_cast<long long>(std::numeric_limits<T>::min()) ||
            (*n > 0 && static_cast<unsigned long long>(*n) > static_cast<unsigned long long>(std::numeric_limits<T>::max())))
            bad(key, *v, "an integer in range");
        return static_cast<T>(*n);
    }

    std::optional<double> real(const std::string& key) {
        const auto v = raw(key);
        if (!v) return std::nullopt;
        const auto d = text::parse_double(*v);
        if (!d) bad(key, *v, "a number");
        return d;
    }

    std::optional<bool> boolean(const std::string& key) {
        const auto v = raw(key);
        if (!v) return std::nullopt;
        std::string s = *v;
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
        if (s == "false" || s == "no" || s == "off" || s == "0") return false;
        bad(key, *v, "true or false");
    }

    std::optional<std::vector<std::string>> list(const std::string& key) {
        const auto v = raw(key);
        if (!v) return std::nullopt;
        std::vector<std::string> out;
        if (v->empty()) return out;
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto t = text::trim(item);
            if (t.empty()) bad(key, *v, "a comma-separated list without empty entries");
            out.emplace_back(t);
        }
        return out;
    }

    void check(const char* key, bool ok, const std::string& what) {
        if (!ok) config_error("[" + name_ + "] " + key + " must be " + what);
    }

    void finish() const {
        for (const auto& [key, child] : tree_) {
            if (!seen_.count(key)) config_error("[" + name_ + "] unknown key '" + key + "'");
            if (!child.empty()) config_error("[" + name_ + "] key '" + key + "' is malformed");
        }
    }

private:
    [[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& expected) {
        config_error("[" + name_ + "] " + key + " = '" + value + "' is not " + expected);
    }

    std::string name_;
    const pt::ptree& tree_;
    std::set<std::string> seen_;
};

void read_data(SectionReader& r, StudyConfig& c) {
    DataSection d;
    d.panel_path = r.required("panel");
    d.rate_panel = r.boolean("rate_panel").value_or(false);
    c.data = d;
}

void read_design(SectionReader& r, StudyConfig& c) {
    DesignSection d;
    d.treated = r.required("treated");
    r.required("treatment_time");
    d.treatment_time = *r.integer<TimeIndex>("treatment_time");
    r.required("pre_start");
    d.pre_start = *r.integer<TimeIndex>("pre_start");
    r.required("post_end");
    d.post_end = *r.integer<TimeIndex>("post_end");
    d.donors = r.list("donors").value_or(std::vector<std::string>{});
    r.check("pre_start", d.pre_start < d.treatment_time, "before treatment_time");
    r.check("post_end", d.post_end >= d.treatment_time, "at or after treatment_time");
    c.design = d;
}

void read_predictors(SectionReader& r, StudyConfig& c) {
    PredictorSpec spec;
    const auto entries = r.list("entries");
    if (!entries || entries->empty()) config_error("[predictors] entries must list at least one predictor");
    for (const auto& e : *entries) spec.entries.push_back(parse_predictor(e));
    c.predictors = spec;
}

void read_solver(SectionReader& r, StudyConfig& c) {
    auto& s = c.solver;
    if (auto v = r.integer<long long>("outer_starts")) {
        r.check("outer_starts", *v >= 0, "nonnegative");
        s.random_starts = static_cast<std::size_t>(*v);
    }
    if (auto v = r.integer<std::uint64_t>("seed")) s.seed = *v;
    if (auto v = r.integer<int>("max_inner_iterations")) {
        r.check("max_inner_iterations", *v >= 0, "nonnegative");
        s.max_inner_iterations = *v;
    }
    if (auto v = r.real("inner_gap_tolerance")) {
        r.check("inner_gap_tolerance", *v > 0.0, "positive");
        s.inner_gap_tolerance = *v;
    }
    if (auto v = r.integer<int>("max_evaluations_per_start")) {
        r.check("max_evaluations_per_start", *v >= 1, "at least 1");
        s.max_evaluations_per_start = *v;
    }
    if (auto v = r.real("initial_step")) {
        r.check("initial_step", *v > 0.0 && *v <= 1.0, "in (0, 1]");
        s.initial_step = *v;
    }
    if (auto v = r.real("step_tolerance")) {
        r.check("step_tolerance", *v > 0.0, "positive");
        s.step_tolerance = *v;
    }
    r.check("step_tolerance", s.step_tolerance <= s.initial_step, "no larger than initial_step");
}

void read_placebo(SectionReader& r, StudyConfig& c) {
    if (auto v = r.boolean("filter")) c.placebo.filter_by_pre_fit = *v;
    if (auto v = r.real("filter_k")) {
        r.check("filter_k", *v > 0.0, "positive");
        c.placebo.filter_k = *v;
    }
}

void read_aggregate(SectionReader& r, StudyConfig& c) {
    AggregateSection a;
    a.microdata_path = r.required("microdata");
    a.units = r.list("units").value_or(std::vector<std::string>{});
    a.first_time = r.integer<TimeIndex>("first_time");
    a.last_time = r.integer<TimeIndex>("last_time");
    if (auto v = r.integer<int>("min_age")) a.ages.min_age = *v;
    if (auto v = r.integer<int>("max_age")) a.ages.max_age = *v;
    r.check("min_age", a.ages.min_age <= a.ages.max_age, "no larger than max_age");
    if (a.first_time && a.last_time) r.check("first_time", *a.first_time <= *a.last_time, "no later than last_time");
    c.aggregate = a;
}

void read_simulate(SectionReader& r, StudyConfig& c) {
    auto& s = c.simulate;
    if (auto v = r.integer<int>("n_units")) s.n_units = *v;
    if (auto v = r.integer<int>("n_pre")) s.n_pre = *v;
    if (auto v = r.integer<int>("n_post")) s.n_post = *v;
    if (auto v = r.integer<int>("n_factors")) s.n_factors = *v;
    if (auto v = r.real("noise_std")) s.noise_std = *v;
    if (auto v = r.real("effect")) s.effect = *v;
    if (auto v = r.boolean("treated_is_convex")) s.treated_is_convex = *v;
    if (auto v = r.integer<int>("convex_support")) s.convex_support = *v;
    if (auto v = r.integer<int>("n_covariates")) s.n_covariates = *v;
    if (auto v = r.real("covariate_noise_std")) s.covariate_noise_std = *v;
    if (auto v = r.boolean("lag_predictors")) s.lag_predictors = *v;
    if (auto v = r.integer<std::uint64_t>("seed")) s.seed = *v;
    if (auto v = r.integer<TimeIndex>("start_time")) s.start_time = *v;
    try {
        s.validate();
    } catch (const Error& e) {
        config_error(std::string("[simulate] ") + e.what());
    }
    c.has_simulate = true;
}

void read_power(SectionReader& r, StudyConfig& c) {
    auto& p = c.power;
    if (auto v = r.integer<long long>("replications")) {
        r.check("replications", *v >= 1, "at least 1");
        p.replications = static_cast<std::size_t>(*v);
    }
    if (auto v = r.list("alpha")) {
        p.alpha_grid.clear();
        for (const auto& a : *v) {
            const auto d = text::parse_double(a);
            r.check("alpha", d && *d > 0.0 && *d <= 1.0, "a list of levels in (0, 1]");
            p.alpha_grid.push_back(*d);
        }
        r.check("alpha", !p.alpha_grid.empty(), "non-empty");
    }
    if (auto v = r.real("top_fraction")) {
        r.check("top_fraction", *v > 0.0 && *v <= 1.0, "in (0, 1]");
        p.top_fraction = *v;
    }
}

using Reader = void (*)(SectionReader&, StudyConfig&);

const std::map<std::string, Reader>& section_readers() {
    static const std::map<std::string, Reader> readers{
        {"data", read_data},         {"design", read_design},   {"predictors", read_predictors},
        {"solver", read_solver},     {"placebo", read_placebo}, {"aggregate", read_aggregate},
        {"simulate", read_simulate}, {"power", read_power},
    };
    return readers;
}

}  // namespace

const DataSection& StudyConfig::require_data() const {
    if (!data) config_error("config has no [data] section");
    return *data;
}

const DesignSection& StudyConfig::require_design() const {
    if (!design) config_error("config has no [design] section");
    return *design;
}

const PredictorSpec& StudyConfig::require_predictors() const {
    if (!predictors) config_error("config has no [predictors] section");
    return *predictors;
}

const AggregateSection& StudyConfig::require_aggregate() const {
    if (!aggregate) config_error("config has no [aggregate] section");
    return *aggregate;
}

std::string StudyConfig::resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    if (p.is_absolute()) return p.string();
    return (std::filesystem::path(source_dir) / p).lexically_normal().string();
}

StudyConfig parse_config(std::istream& in, const std::string& source_dir) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        config_error(std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
    }

    StudyConfig c;
    c.source_dir = source_dir.empty() ? "." : source_dir;
    const auto& readers = section_readers();
    for (const auto& [name, section] : tree) {
        if (section.empty() && !section.data().empty())
            config_error("key '" + name + "' appears outside any section");
        const auto it = readers.find(name);
        if (it == readers.end()) config_error("unknown section [" + name + "]");
        SectionReader reader(name, section);
        it->second(reader, c);
        reader.finish();
    }
    return c;
}

StudyConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) config_error("cannot open config file '" + path + "'");
    auto dir = std::filesystem::path(path).parent_path().string();
    return parse_config(in, dir.empty() ? "." : dir);
}

StudyDesign build_design(const DesignSection& section, const PanelDataset& panel) {
    StudyDesign design;
    try {
        design = make_design(panel, section.treated, section.treatment_time, section.pre_start, section.post_end);
        if (!section.donors.empty()) design.donors = section.donors;
        design.validate(panel);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidDesign) config_error(std::string("[design] ") + e.what());
        throw;
    }
    return design;
}

std::string study_config_text(const SimulatedStudy& study, const std::string& panel_file) {
    std::ostringstream out;
    out << "[data]\npanel = " << panel_file << "\n\n";
    out << "[design]\ntreated = " << study.design.treated << "\n";
    out << "treatment_time = " << study.design.post_period.first << "\n";
    out << "pre_start = " << study.design.pre_period.first << "\n";
    out << "post_end = " << study.design.post_period.last << "\n\n";
    out << "[predictors]\nentries = ";
    for (std::size_t i = 0; i < study.spec.entries.size(); ++i)
        out << (i ? ", " : "") << format_predictor(study.spec.entries[i]);
    out << "\n";
    return out.str();
}

}  // namespace scm
