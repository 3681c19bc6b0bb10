#include "scm/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "scm/aggregate.hpp"
#include "scm/config.hpp"
#include "scm/error.hpp"
#include "scm/manifest.hpp"
#include "scm/report.hpp"
#include "scm/text.hpp"

namespace scm {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "scm-out";
    unsigned threads = 0;
    bool verbose = false;
};

// Collects output files for one command and writes the manifest last.
class RunContext {
public:
    RunContext(std::string command, const GlobalOptions& g, std::ostream& out, std::ostream& err)
        : g_(g), out_(out), err_(err) {
        manifest_.command = std::move(command);
        manifest_.timestamp = utc_timestamp();
        if (!g.config_path.empty()) manifest_.config_sha256 = sha256_file(g.config_path);
        std::error_code ec;
        fs::create_directories(g.out_dir, ec);
        if (ec) throw Error(ErrorCode::IoError, "cannot create output directory '" + g.out_dir + "': " + ec.message());
    }

    RunManifest& manifest() { return manifest_; }
    std::ostream& out() { return out_; }

    void log(const std::string& msg) {
        if (g_.verbose) err_ << "[" << manifest_.command << "] " << msg << '\n';
    }

    void warn(const std::string& msg) { err_ << "warning: " << msg << '\n'; }

    void write(const std::string& name, const std::function<void(std::ostream&)>& fill) {
        std::ostringstream buf;
        fill(buf);
        const std::string bytes = buf.str();
        const fs::path path = fs::path(g_.out_dir) / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
        f << bytes;
        if (!f) throw Error(ErrorCode::IoError, "write to '" + path.string() + "' failed");
        manifest_.outputs.emplace_back(name, sha256_hex(bytes));
        log("wrote " + path.string());
    }

    void finish() {
        const std::string text = manifest_.to_json().dump(2) + "\n";
        const fs::path path = fs::path(g_.out_dir) / "run.json";
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
        f << text;
    }

private:
    const GlobalOptions& g_;
    std::ostream& out_;
    std::ostream& err_;
    RunManifest manifest_;
};

StudyConfig read_config(const GlobalOptions& g, bool required) {
    if (g.config_path.empty()) {
        if (required) throw Error(ErrorCode::ConfigError, "this command needs --config");
        return StudyConfig{};
    }
    StudyConfig c = load_config_file(g.config_path);
    if (g.seed) {
        c.solver.seed = *g.seed;
        c.simulate.seed = *g.seed;
    }
    c.placebo.threads = g.threads;
    return c;
}

struct LoadedStudy {
    PanelDataset panel;
    StudyDesign design;
    PredictorSpec spec;
};

// Loads the panel and checks the design and predictors against it. Design
// problems are the config's fault, so they surface as ConfigError.
LoadedStudy load_study(const StudyConfig& c, RunContext& run) {
    const auto& data = c.require_data();
    const auto& design_section = c.require_design();
    const auto& spec = c.require_predictors();
    const std::string path = c.resolve(data.panel_path);
    run.manifest().input_sha256 = sha256_file(path);
    run.log("loading " + path);
    PanelDataset panel = load_panel_file(path, LoadOptions{data.rate_panel});
    StudyDesign design = build_design(design_section, panel);
    try {
        spec.validate(panel, design);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidDesign) throw Error(ErrorCode::ConfigError, std::string("[predictors] ") + e.what());
        throw;
    }
    return {std::move(panel), std::move(design), spec};
}

std::string fixed(double v) { return text::format_fixed(v, kDisplayDecimals); }
std::string fixed(const std::optional<double>& v) { return v ? fixed(*v) : std::string("-"); }

ojson solver_json(const SolverOptions& s) {
    ojson j;
    j["outer_starts"] = s.random_starts;
    j["seed"] = s.seed;
    j["max_inner_iterations"] = s.max_inner_iterations;
    j["inner_gap_tolerance"] = s.inner_gap_tolerance;
    j["max_evaluations_per_start"] = s.max_evaluations_per_start;
    j["initial_step"] = s.initial_step;
    j["step_tolerance"] = s.step_tolerance;
    return j;
}

// ---------------------------------------------------------------------------

struct AggregateArgs {
    std::string microdata;
    std::vector<std::string> units;
    std::optional<TimeIndex> first_time;
    std::optional<TimeIndex> last_time;
    std::optional<int> min_age;
    std::optional<int> max_age;
};

void cmd_aggregate(const GlobalOptions& g, const AggregateArgs& args, std::ostream& out, std::ostream& err) {
    StudyConfig c = read_config(g, false);
    AggregateSection a = c.aggregate.value_or(AggregateSection{});
    std::string path;
    if (!args.microdata.empty())
        path = args.microdata;
    else if (c.aggregate)
        path = c.resolve(a.microdata_path);
    else
        throw Error(ErrorCode::ConfigError, "aggregate needs a microdata file or an [aggregate] section");
    if (!args.units.empty()) a.units = args.units;
    if (args.first_time) a.first_time = args.first_time;
    if (args.last_time) a.last_time = args.last_time;
    if (args.min_age) a.ages.min_age = *args.min_age;
    if (args.max_age) a.ages.max_age = *args.max_age;
    if (a.ages.min_age > a.ages.max_age) throw Error(ErrorCode::ConfigError, "min_age exceeds max_age");

    RunContext run("aggregate", g, out, err);
    run.manifest().input_sha256 = sha256_file(path);
    const auto records = load_microdata_file(path);
    if (records.empty()) throw Error(ErrorCode::ParseError, "microdata file '" + path + "' has no records");

    std::vector<UnitId> units = a.units;
    if (units.empty()) {
        std::set<UnitId> seen;
        for (const auto& r : records) seen.insert(r.unit);
        units.assign(seen.begin(), seen.end());
    }
    TimeIndex lo = records.front().time, hi = records.front().time;
    for (const auto& r : records) {
        lo = std::min(lo, r.time);
        hi = std::max(hi, r.time);
    }
    const TimeIndex first = a.first_time.value_or(lo);
    const TimeIndex last = a.last_time.value_or(hi);
    if (first > last) throw Error(ErrorCode::ConfigError, "first_time is after last_time");
    std::vector<TimeIndex> times;
    for (TimeIndex t = first; t <= last; ++t) times.push_back(t);

    const auto result = aggregate_outcomes(records, units, times, a.ages);
    run.write("panel.csv", [&](std::ostream& o) { save_panel(o, result.panel); });
    run.write("cells.csv", [&](std::ostream& o) { write_cells(o, result.cells); });

    std::vector<std::vector<std::string>> rows;
    std::size_t missing = 0;
    for (const auto& cell : result.cells) {
        rows.push_back({cell.unit, std::to_string(cell.time), std::to_string(cell.eligible_records),
                        cell.rate ? text::format_fixed(*cell.rate, 4) : "-"});
        if (!cell.rate) {
            ++missing;
            run.warn("no eligible records for " + cell.unit + " " + std::to_string(cell.time) + "; cell left empty");
        }
    }
    print_aligned(out, {"unit", "time", "records", "rate"}, rows);
    out << result.cells.size() << " cells, " << missing << " missing\n";

    run.manifest().seed = 0;
    run.manifest().summary["cells"] = result.cells.size();
    run.manifest().summary["missing_cells"] = missing;
    run.finish();
}

void cmd_fit(const GlobalOptions& g, std::ostream& out, std::ostream& err) {
    const StudyConfig c = read_config(g, true);
    RunContext run("fit", g, out, err);
    const auto study = load_study(c, run);
    run.manifest().seed = c.solver.seed;
    run.log("fitting " + study.design.treated + " against " + std::to_string(study.design.donors.size()) + " donors");

    const SynthFit f = fit(study.panel, study.design, study.spec, c.solver);
    const auto balance = predictor_balance(f);

    run.write("balance.csv", [&](std::ostream& o) { write_balance_table(o, balance); });
    run.write("weights.csv", [&](std::ostream& o) { write_weights_table(o, f); });
    run.write("balance_full.csv", [&](std::ostream& o) { write_balance_table(o, balance, true); });
    run.write("weights_full.csv", [&](std::ostream& o) { write_weights_full(o, f); });
    run.write("v_weights.csv", [&](std::ostream& o) { write_v_weights(o, f); });
    run.write("path.csv", [&](std::ostream& o) { write_path_table(o, f); });

    for (const auto& x : f.excluded) run.warn("donor " + x.unit + " excluded: " + x.reason);

    std::vector<std::vector<std::string>> rows;
    for (const auto& b : balance) rows.push_back({b.predictor, fixed(b.treated), fixed(b.synthetic), fixed(b.sample_mean)});
    print_aligned(out, {"predictor", "treated", "synthetic", "sample_mean"}, rows);
    out << '\n';
    rows.clear();
    std::vector<std::pair<UnitId, double>> shown;
    for (std::size_t j = 0; j < f.w.size(); ++j)
        if (f.w[j] >= kWeightDisplayThreshold) shown.emplace_back(f.matrices.donor_order[j], f.w[j]);
    std::sort(shown.begin(), shown.end());
    for (const auto& [u, w] : shown) rows.push_back({fixed(w), u});
    print_aligned(out, {"weight", "unit"}, rows);
    out << "\npre-period MSPE " << text::format_double(f.pre_mspe) << '\n';

    auto& s = run.manifest().summary;
    s["treated"] = f.design.treated;
    s["donors"] = f.design.donors.size();
    s["excluded_donors"] = f.excluded.size();
    s["pre_mspe"] = f.pre_mspe;
    s["inner_loss"] = f.inner_loss;
    s["best_start"] = f.best_start;
    s["solver"] = solver_json(c.solver);
    run.finish();
}

void cmd_placebo(const GlobalOptions& g, std::ostream& out, std::ostream& err) {
    const StudyConfig c = read_config(g, true);
    RunContext run("placebo", g, out, err);
    const auto loaded = load_study(c, run);
    run.manifest().seed = c.solver.seed;
    run.log("running " + std::to_string(loaded.design.donors.size() + 1) + " fits");

    const PlaceboStudy study = run_placebos(loaded.panel, loaded.design, loaded.spec, c.solver, c.placebo);
    const auto ranking = ratio_ranking(study);
    const auto paths = gap_paths(study, loaded.panel);
    std::vector<UnitFitStats> counted{study.treated.stats};
    for (const auto& p : study.placebos)
        if (p.counted()) counted.push_back(p.stats);
    const FitReport report = fit_report(counted);

    run.write("stats.csv", [&](std::ostream& o) { write_stats_table(o, study); });
    run.write("study.csv", [&](std::ostream& o) { write_study_summary(o, study); });
    run.write("ratios.csv", [&](std::ostream& o) { write_ratio_ranking(o, ranking); });
    run.write("gaps.csv", [&](std::ostream& o) { write_gap_paths(o, paths); });
    run.write("fit_report.csv", [&](std::ostream& o) { write_fit_rows(o, report); });
    run.write("fit_summary.csv", [&](std::ostream& o) { write_fit_summary(o, report); });
    run.write("failures.csv", [&](std::ostream& o) { write_failures(o, study); });

    std::vector<std::vector<std::string>> rows;
    auto add = [&](const PlaceboResult& r) {
        const auto& s = r.stats;
        const bool ok = r.fit.has_value();
        rows.push_back({r.unit + (r.is_treated ? " *" : ""), ok ? fixed(s.pre_rmse) : "-", ok ? fixed(s.post_rmse) : "-",
                        ok ? fixed(s.pre_mae) : "-", ok ? fixed(s.rsr) : "-", ok ? fixed(s.ratio) : "-",
                        ok ? (s.well_fit ? "yes" : "no") : "-",
                        !r.succeeded() ? "failed" : (r.filtered ? "filtered" : "counted")});
    };
    add(study.treated);
    for (const auto& p : study.placebos) add(p);
    print_aligned(out, {"unit", "pre_rmse", "post_rmse", "pre_mae", "rsr", "ratio", "well_fit", "status"}, rows);
    if (study.n_failed) {
        out << "\nfailures:\n";
        for (const auto& p : study.placebos)
            if (p.failure) out << "  " << p.unit << ": " << *p.failure << '\n';
    }
    out << "\nrank " << study.rank << " of " << study.n_units << '\n';
    out << "p_value " << fixed(study.p_value) << '\n';

    auto& s = run.manifest().summary;
    s["treated"] = study.treated.unit;
    s["rank"] = study.rank;
    s["p_value"] = study.p_value;
    s["p_value_donors_only"] = study.p_value_donors_only ? ojson(*study.p_value_donors_only) : ojson(nullptr);
    s["n_units"] = study.n_units;
    s["n_failed"] = study.n_failed;
    s["n_filtered"] = study.n_filtered;
    s["filter"] = c.placebo.filter_by_pre_fit;
    s["filter_k"] = c.placebo.filter_k;
    s["solver"] = solver_json(c.solver);
    run.finish();
}

struct SimulateArgs {
    std::optional<double> effect;
    std::optional<std::size_t> replications;
};

FactorModelConfig simulation_config(const StudyConfig& c, const GlobalOptions& g, const SimulateArgs& args) {
    FactorModelConfig f = c.simulate;
    if (g.seed) f.seed = *g.seed;
    if (args.effect) f.effect = *args.effect;
    try {
        f.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, std::string("[simulate] ") + e.what());
    }
    return f;
}

ojson simulation_json(const FactorModelConfig& f) {
    ojson j;
    j["n_units"] = f.n_units;
    j["n_pre"] = f.n_pre;
    j["n_post"] = f.n_post;
    j["n_factors"] = f.n_factors;
    j["noise_std"] = f.noise_std;
    j["effect"] = f.effect;
    j["treated_is_convex"] = f.treated_is_convex;
    j["convex_support"] = f.convex_support;
    j["n_covariates"] = f.n_covariates;
    j["covariate_noise_std"] = f.covariate_noise_std;
    j["lag_predictors"] = f.lag_predictors;
    j["seed"] = f.seed;
    j["start_time"] = f.start_time;
    return j;
}

void cmd_simulate(const GlobalOptions& g, const SimulateArgs& args, std::ostream& out, std::ostream& err) {
    const StudyConfig c = read_config(g, false);
    const FactorModelConfig f = simulation_config(c, g, args);
    RunContext run("simulate", g, out, err);
    run.manifest().seed = f.seed;
    const SimulatedStudy sim = generate(f);

    ojson truth;
    truth["config"] = simulation_json(f);
    truth["treated"] = sim.design.treated;
    truth["treatment_time"] = sim.design.post_period.first;
    ojson effect = ojson::object();
    for (std::size_t i = 0; i < sim.truth.effect_path.values.size(); ++i)
        effect[std::to_string(sim.truth.effect_path.first + static_cast<TimeIndex>(i))] = sim.truth.effect_path.values[i];
    truth["effect"] = effect;
    if (sim.truth.generating_weights) {
        ojson w = ojson::object();
        for (std::size_t j = 0; j < sim.design.donors.size(); ++j)
            w[sim.design.donors[j]] = (*sim.truth.generating_weights)(static_cast<Eigen::Index>(j));
        truth["generating_weights"] = w;
    } else {
        truth["generating_weights"] = nullptr;
    }
    ojson loadings = ojson::object();
    for (std::size_t u = 0; u < sim.panel.n_units(); ++u) {
        ojson row = ojson::array();
        for (Eigen::Index k = 0; k < sim.truth.loadings.cols(); ++k)
            row.push_back(sim.truth.loadings(static_cast<Eigen::Index>(u), k));
        loadings[sim.panel.units()[u]] = row;
    }
    truth["loadings"] = loadings;

    run.write("panel.csv", [&](std::ostream& o) { save_panel(o, sim.panel); });
    run.write("truth.json", [&](std::ostream& o) { o << truth.dump(2) << '\n'; });
    run.write("study.ini", [&](std::ostream& o) { o << study_config_text(sim, "panel.csv"); });

    out << "generated " << sim.panel.n_units() << " units x " << sim.panel.n_times() << " periods, treated "
        << sim.design.treated << ", effect " << text::format_double(f.effect) << '\n';
    run.manifest().summary["simulate"] = simulation_json(f);
    run.finish();
}

void cmd_power(const GlobalOptions& g, const SimulateArgs& args, std::ostream& out, std::ostream& err) {
    const StudyConfig c = read_config(g, false);
    const FactorModelConfig f = simulation_config(c, g, args);
    const std::size_t reps = args.replications.value_or(c.power.replications);
    if (reps < 1) throw Error(ErrorCode::ConfigError, "replications must be at least 1");
    RunContext run("power", g, out, err);
    run.manifest().seed = f.seed;
    run.log("running " + std::to_string(reps) + " replications");

    PowerOptions po;
    po.top_fraction = c.power.top_fraction;
    po.threads = g.threads;
    const PowerTable table = power_study(f, reps, c.power.alpha_grid, c.solver, po);

    run.write("power.csv", [&](std::ostream& o) { write_power_table(o, table); });
    run.write("replications.csv", [&](std::ostream& o) { write_replications(o, table); });

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : table.rows) rows.push_back({fixed(r.alpha), fixed(r.rejection_rate), fixed(r.mean_rank)});
    print_aligned(out, {"alpha", "rejection_rate", "mean_rank"}, rows);
    out << "\ntreated in top " << text::format_double(table.top_fraction * 100.0) << "% of ratios: "
        << fixed(table.top_ratio_rate) << " of replications\n";
    out << "failed replications: " << table.failures << " of " << table.replications << '\n';

    auto& s = run.manifest().summary;
    s["simulate"] = simulation_json(f);
    s["replications"] = table.replications;
    s["failures"] = table.failures;
    s["top_fraction"] = table.top_fraction;
    s["top_ratio_rate"] = table.top_ratio_rate;
    s["mean_ratio_rank"] = table.mean_ratio_rank;
    s["solver"] = solver_json(c.solver);
    run.finish();
}

void cmd_report(const GlobalOptions& g, const std::string& stats_path, std::ostream& out, std::ostream& err) {
    RunContext run("report", g, out, err);
    std::ifstream in(stats_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + stats_path + "'");
    run.manifest().input_sha256 = sha256_file(stats_path);
    auto rows = read_stats_table(in);
    const FitReport report = fit_report(std::move(rows));

    run.write("fit_report.csv", [&](std::ostream& o) { write_fit_rows(o, report); });
    run.write("fit_summary.csv", [&](std::ostream& o) { write_fit_summary(o, report); });

    std::vector<std::vector<std::string>> table;
    for (const auto& r : report.rows)
        table.push_back({r.unit, fixed(r.pre_rmse), fixed(r.post_rmse), fixed(r.pre_mae), fixed(r.rsr), fixed(r.ratio),
                         r.well_fit ? "yes" : "no"});
    print_aligned(out, {"unit", "pre_rmse", "post_rmse", "pre_mae", "rsr", "ratio", "well_fit"}, table);
    out << '\n';
    table.clear();
    const std::pair<const char*, const ColumnSummary*> cols[] = {{"pre_rmse", &report.pre_rmse},
                                                                 {"post_rmse", &report.post_rmse},
                                                                 {"pre_mae", &report.pre_mae},
                                                                 {"rsr", &report.rsr},
                                                                 {"ratio", &report.ratio}};
    for (const auto& [name, col] : cols) {
        if (col->count == 0)
            table.push_back({name, "0", "-", "-", "-"});
        else
            table.push_back({name, std::to_string(col->count), fixed(col->min), fixed(col->max), fixed(col->mean)});
    }
    print_aligned(out, {"column", "count", "min", "max", "mean"}, table);
    run.manifest().summary["units"] = report.rows.size();
    run.finish();
}

int exit_code_for(const Error& e) {
    switch (e.category()) {
        case ErrorCategory::Config: return kExitConfig;
        case ErrorCategory::Data: return kExitData;
        case ErrorCategory::Estimation: return kExitEstimation;
    }
    return kExitEstimation;
}

const char* category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::Config: return "config";
        case ErrorCategory::Data: return "data";
        case ErrorCategory::Estimation: return "estimation";
    }
    return "error";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Synthetic control estimation and placebo inference for panel data", "scm"};
    app.set_version_flag("--version", std::string(tool_version()));
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config_path, "Study config file");
    app.add_option("--seed", g.seed, "Override the solver and simulation seed");
    app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads, 0 = one per hardware thread")->capture_default_str();
    app.add_flag("--verbose", g.verbose, "Progress messages on stderr");

    AggregateArgs agg;
    auto* aggregate = app.add_subcommand("aggregate", "Aggregate microdata into an outcome panel");
    aggregate->add_option("microdata", agg.microdata, "Microdata file (unit,time,age,has_credential,weight)");
    aggregate->add_option("--units", agg.units, "Units to include")->delimiter(',');
    aggregate->add_option("--first-time", agg.first_time, "First period");
    aggregate->add_option("--last-time", agg.last_time, "Last period");
    aggregate->add_option("--min-age", agg.min_age, "Youngest eligible age");
    aggregate->add_option("--max-age", agg.max_age, "Oldest eligible age");

    auto* fit_cmd = app.add_subcommand("fit", "Fit the synthetic control for the treated unit");
    auto* placebo = app.add_subcommand("placebo", "Placebo study over the donor pool");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate a factor-model panel with known truth");
    simulate->add_option("--effect", sim.effect, "Treatment effect added to the treated unit");
    auto* power = app.add_subcommand("power", "Monte Carlo size/power study of the placebo test");
    power->add_option("--effect", sim.effect, "Treatment effect added to the treated unit");
    power->add_option("--replications", sim.replications, "Number of replications");

    std::string stats_path;
    auto* report = app.add_subcommand("report", "Fit-quality report from a placebo stats table");
    report->add_option("stats", stats_path, "stats.csv written by the placebo command")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*aggregate) cmd_aggregate(g, agg, out, err);
        else if (*fit_cmd) cmd_fit(g, out, err);
        else if (*placebo) cmd_placebo(g, out, err);
        else if (*simulate) cmd_simulate(g, sim, out, err);
        else if (*power) cmd_power(g, sim, out, err);
        else if (*report) cmd_report(g, stats_path, out, err);
    } catch (const Error& e) {
        err << "error (" << category_name(e.category()) << "): " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error (data): " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitEstimation;
    }
    return kExitOk;
}

}  // namespace scm
