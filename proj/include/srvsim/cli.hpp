#ifndef SRVSIM_CLI_HPP
#define SRVSIM_CLI_HPP

// Command-line front end: run, matrix, sweep, list-scenarios.
// Exit status: 0 on completion (whatever the leak outcome), 2 on bad
// configuration or arguments, 1 on an internal error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "srvsim/attacks.hpp"
#include "srvsim/config.hpp"
#include "srvsim/io.hpp"

#ifndef SRVSIM_SCENARIO_DIR
#define SRVSIM_SCENARIO_DIR "scenarios"
#endif

namespace srvsim::cli
{

inline const std::vector<std::string> kDefaultMatrix{"srv_leak", "flexvec_gadget", "spectre_stl", "spectre_v1"};

struct RunConfig
{
    std::string scenario;
    std::optional<std::string> mitigation;
    std::optional<std::string> strategy;
    std::optional<unsigned> width;
    std::optional<std::uint64_t> seed;
    std::optional<double> jitter;
    std::optional<Tick> granularity;
    std::optional<unsigned> trials;
    std::optional<unsigned> training;
    double miss_probability = 0.5;
    std::string out_dir = ".";
    std::set<std::string> emit{"report"};
};

inline std::vector<std::string> split(const std::string& s, char sep = ',')
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::optional<std::uint64_t> env_seed()
{
    const char* v = std::getenv("SRV_SIM_SEED");
    if (!v || !*v) return std::nullopt;
    try {
        return std::stoull(v, nullptr, 0);
    }
    catch (const std::exception&) {
        throw ConfigError(std::string("SRV_SIM_SEED is not a number: '") + v + "'");
    }
}

inline std::filesystem::path out_path(const std::string& dir, const std::string& file)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("output directory '" + dir + "' is not writable");
    return fs::path(dir) / file;
}

inline void write_file(const std::filesystem::path& p, const std::string& content)
{
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + p.string() + "'");
    f << content;
}

/// Scenario file with command-line overrides applied (flags > SRV_SIM_SEED > file).
inline Scenario configured(const RunConfig& rc)
{
    Scenario s = load_scenario(rc.scenario);
    if (rc.mitigation) s.core.mitigation = parse_mitigation(*rc.mitigation);
    if (rc.strategy) s.core.strategy = parse_strategy(*rc.strategy);
    if (rc.width) s.core.width = *rc.width;
    std::optional<std::uint64_t> seed = rc.seed ? rc.seed : env_seed();
    if (seed) {
        s.seed = *seed;
        s.timer.seed = *seed;
    }
    if (rc.jitter) s.timer.jitter_stddev = *rc.jitter;
    if (rc.granularity) s.timer.granularity = *rc.granularity;
    if (rc.training) s.training_iterations = *rc.training;
    for (const auto& e : rc.emit)
        if (e != "trace" && e != "mld" && e != "csv" && e != "report")
            throw ConfigError("unknown --emit value '" + e + "' (valid: trace, mld, csv, report)");
    try {
        s.validate();
    }
    catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return s;
}

inline int cmd_run(const RunConfig& rc, std::ostream& out)
{
    const Scenario s = configured(rc);
    std::ostringstream report;
    switch (s.kind) {
        case ScenarioKind::SrvLeak:
        case ScenarioKind::SpectreStl:
        case ScenarioKind::SpectreV1: {
            const LeakResult r = run_leak(s, rc.trials);
            write_leak_report(report, s, r);
            if (rc.emit.count("csv")) {
                std::ostringstream csv;
                csv << "# srvsim leak_v1\nbyte_index,expected,recovered,correct\n";
                for (std::size_t i = 0; i < r.per_byte_correct.size(); ++i)
                    csv << i << ',' << static_cast<int>(static_cast<unsigned char>(s.secret[i % s.secret.size()])) << ','
                        << static_cast<int>(static_cast<unsigned char>(r.recovered[i])) << ',' << (r.per_byte_correct[i] ? 1 : 0)
                        << '\n';
                write_file(out_path(rc.out_dir, s.name + "_leak.csv"), csv.str());
            }
            if (rc.emit.count("trace") || rc.emit.count("mld")) {
                const ArmedRun a = armed_run(s, 0, builtin_mlds());
                if (rc.emit.count("trace")) {
                    std::ostringstream t;
                    write_trace(t, a.result.trace);
                    write_file(out_path(rc.out_dir, s.name + "_trace.jsonl"), t.str());
                }
                if (rc.emit.count("mld")) {
                    std::ostringstream t;
                    write_mld(t, a.mld);
                    write_file(out_path(rc.out_dir, s.name + "_mld.jsonl"), t.str());
                }
            }
            break;
        }
        case ScenarioKind::EvictTime: {
            const EvictTimeReport r = scenario_evict_time(s);
            report << "srvsim report_v1\n";
            report << "scenario: " << s.name << " (evict_time), strategy " << to_string(s.core.strategy) << "\n";
            report << "dependent path ticks: " << r.dependent_path_ticks << "\n";
            report << "independent path ticks: " << r.independent_path_ticks << "\n";
            report << "post-region variance: " << fixed(r.post_region_variance, 2) << "\n";
            report << "serialized: " << (r.serialized ? "yes" : "no") << "\n";
            break;
        }
        case ScenarioKind::ReplayAmplification: {
            const AmplificationReport r = scenario_replay_amplification(s, rc.miss_probability);
            report << "srvsim report_v1\n";
            report << "scenario: " << s.name << " (replay_amplification), width " << s.core.width << "\n";
            report << "replays: " << r.replays << "\n";
            report << "transmit executions: " << r.transmit_executions << "\n";
            report << "miss probability: " << fixed(rc.miss_probability, 2) << "\n";
            std::ostringstream csv;
            csv << "# srvsim amplification_v1\npasses,analytic,empirical\n";
            for (const auto& p : r.curve) {
                report << "  passes " << p.passes << ": analytic " << fixed(p.analytic) << ", empirical " << fixed(p.empirical)
                       << "\n";
                csv << p.passes << ',' << fixed(p.analytic) << ',' << fixed(p.empirical) << '\n';
            }
            if (rc.emit.count("csv")) write_file(out_path(rc.out_dir, s.name + "_amplification.csv"), csv.str());
            break;
        }
    }
    if (rc.emit.count("report")) write_file(out_path(rc.out_dir, s.name + "_report.txt"), report.str());
    out << report.str();
    return 0;
}

inline std::vector<Mitigation> parse_mitigations(const std::string& list)
{
    if (list.empty() || list == "all") return {kAllMitigations.begin(), kAllMitigations.end()};
    std::vector<Mitigation> out;
    for (const auto& n : split(list)) out.push_back(parse_mitigation(n));
    if (out.empty()) throw ConfigError("no mitigations given (valid: " + mitigation_names() + ")");
    return out;
}

inline int cmd_matrix(std::vector<std::string> scenarios, const std::string& mitigations, const std::string& scenario_dir,
    const std::string& out_dir, std::optional<std::uint64_t> seed, std::ostream& out)
{
    if (scenarios.empty())
        for (const auto& n : kDefaultMatrix) scenarios.push_back((std::filesystem::path(scenario_dir) / (n + ".toml")).string());
    const auto mits = parse_mitigations(mitigations);
    std::vector<Scenario> loaded;
    for (const auto& path : scenarios) {
        RunConfig rc;
        rc.scenario = path;
        rc.seed = seed;
        Scenario s = configured(rc);
        if (s.kind != ScenarioKind::SrvLeak && s.kind != ScenarioKind::SpectreStl && s.kind != ScenarioKind::SpectreV1)
            throw ConfigError("scenario '" + s.name + "' is not a leak scenario and cannot enter the matrix");
        loaded.push_back(std::move(s));
    }
    const auto cells = run_matrix(loaded, mits);
    std::ostringstream csv, report;
    write_matrix_csv(csv, cells);
    write_matrix_report(report, cells);
    write_file(out_path(out_dir, "matrix.csv"), csv.str());
    write_file(out_path(out_dir, "matrix_report.txt"), report.str());
    out << report.str();
    return 0;
}

inline int cmd_sweep(const std::string& sizes, double jitter, Tick granularity, unsigned reps, std::optional<std::uint64_t> seed,
    const std::string& llc_size, const std::string& out_dir, std::ostream& out)
{
    std::vector<std::uint64_t> grid;
    if (sizes == "default")
        grid = default_sweep_sizes();
    else
        for (const auto& s : split(sizes)) grid.push_back(parse_size(s));
    if (grid.empty()) throw ConfigError("sweep needs at least one size");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1]) throw ConfigError("sweep sizes must be ascending");
    CacheConfig cfg = CacheConfig::defaults();
    if (!llc_size.empty()) cfg.levels.back().size = parse_size(llc_size);
    try {
        cfg.validate();
    }
    catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    CacheHierarchy cache(cfg);
    const std::uint64_t sd = seed ? *seed : env_seed().value_or(0);
    Timer timer({granularity, jitter, sd});
    SweepOptions opt;
    opt.reps = reps;
    LatencyTable table;
    try {
        table = sweep_latency(cache, grid, timer, opt);
    }
    catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    std::ostringstream csv;
    write_latency_csv(csv, table);
    write_file(out_path(out_dir, "latency.csv"), csv.str());
    out << csv.str();
    try {
        out << "estimated LLC size: " << format_size(estimate_llc_size(table)) << "\n";
    }
    catch (const NoKnee& e) {
        out << "estimated LLC size: none (" << e.what() << ")\n";
    }
    catch (const ValidationError& e) {
        out << "estimated LLC size: none (" << e.what() << ")\n";
    }
    return 0;
}

inline int cmd_list(const std::string& dir, std::ostream& out)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ConfigError("scenario directory '" + dir + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".toml") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            const Scenario s = load_scenario(f.string());
            out << s.name << "\t" << to_string(s.kind) << "\t" << to_string(s.core.strategy) << "\t" << f.filename().string()
                << "\n";
        }
        catch (const Error& e) {
            out << f.filename().string() << "\tinvalid: " << e.what() << "\n";
        }
    }
    return 0;
}

/// Entry point shared by the executable and the tests.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Speculative vectorization leakage simulator"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string emit = "report";
    auto* run = app.add_subcommand("run", "Run one scenario file");
    run->add_option("scenario", rc.scenario, "Scenario file (.toml)")->required();
    run->add_option("--mitigation", rc.mitigation, "none, mem_fence, fence_recompiled_scalar, vfence, visibility_delay, cfence_style, in_order");
    run->add_option("--strategy", rc.strategy, "scalar, scalar_ooo, srv, flexvec, scalar_fallback, vfenced_srv");
    run->add_option("--width", rc.width, "Vector lanes");
    run->add_option("--seed", rc.seed, "Seed (default: SRV_SIM_SEED, then the file)");
    run->add_option("--jitter", rc.jitter, "Timer jitter standard deviation in ticks");
    run->add_option("--granularity", rc.granularity, "Timer granularity in ticks");
    run->add_option("--trials", rc.trials, "Leak trials (default: one per secret byte)");
    run->add_option("--training", rc.training, "Training iterations before each armed run");
    run->add_option("--miss-probability", rc.miss_probability, "Replay amplification: chance an observation is missed");
    run->add_option("--out", rc.out_dir, "Output directory");
    run->add_option("--emit", emit, "Comma list of trace, mld, csv, report");

    std::vector<std::string> matrix_files;
    std::string mitigations = "all";
    std::string scenario_dir = SRVSIM_SCENARIO_DIR;
    std::string matrix_out = ".";
    std::optional<std::uint64_t> matrix_seed;
    auto* matrix = app.add_subcommand("matrix", "Scenario x mitigation leak matrix");
    matrix->add_option("scenarios", matrix_files, "Scenario files (default: the shipped set)");
    matrix->add_option("--mitigations", mitigations, "Comma list or 'all'");
    matrix->add_option("--scenario-dir", scenario_dir, "Directory of the default scenario set");
    matrix->add_option("--out", matrix_out, "Output directory");
    matrix->add_option("--seed", matrix_seed, "Seed");

    std::string sizes = "default";
    double jitter = 0;
    Tick granularity = 1;
    unsigned reps = 10;
    std::optional<std::uint64_t> sweep_seed;
    std::string llc;
    std::string sweep_out = ".";
    auto* sweep = app.add_subcommand("sweep", "Latency sweep and LLC size estimate");
    sweep->add_option("--sizes", sizes, "Comma list of sizes (K/M/G suffixes) or 'default' (4K..128M)");
    sweep->add_option("--jitter", jitter, "Timer jitter standard deviation in ticks");
    sweep->add_option("--granularity", granularity, "Timer granularity in ticks");
    sweep->add_option("--reps", reps, "Repetitions per size");
    sweep->add_option("--seed", sweep_seed, "Seed");
    sweep->add_option("--llc-size", llc, "Configured LLC size");
    sweep->add_option("--out", sweep_out, "Output directory");

    std::string list_dir = SRVSIM_SCENARIO_DIR;
    auto* list = app.add_subcommand("list-scenarios", "List scenario files");
    list->add_option("--scenario-dir", list_dir, "Directory to scan");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    }
    catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    }
    catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*run) {
            rc.emit.clear();
            for (const auto& e : split(emit)) rc.emit.insert(e);
            return cmd_run(rc, out);
        }
        if (*matrix) return cmd_matrix(matrix_files, mitigations, scenario_dir, matrix_out, matrix_seed, out);
        if (*sweep) return cmd_sweep(sizes, jitter, granularity, reps, sweep_seed, llc, sweep_out, out);
        if (*list) return cmd_list(list_dir, out);
    }
    catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const SyntaxError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const CapacityError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace srvsim::cli

#endif
