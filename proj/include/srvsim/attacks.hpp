#ifndef SRVSIM_ATTACKS_HPP
#define SRVSIM_ATTACKS_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "srvsim/isa.hpp"
#include "srvsim/memhier.hpp"
#include "srvsim/pipeline.hpp"

namespace srvsim
{

/// Flush+reload channel over one byte-indexed array: symbol s lives on the
/// line at base + s * stride.
struct CovertChannel
{
    std::string array = "encode_array";
    unsigned symbols = 256;
    Addr stride = 64;
    Tick threshold = 101;

    void validate(const GadgetProgram& p, unsigned line) const
    {
        const auto* a = p.find_array(array);
        if (!a) throw ValidationError("channel array '" + array + "' is not declared");
        if (stride == 0 || stride % line != 0) throw ValidationError("channel stride must be a multiple of the line size");
        if (a->bytes() < symbols * stride) throw ValidationError("channel array is too small for 256 symbols");
        if (threshold == 0) throw ValidationError("channel threshold must be positive");
    }
};

enum class ScenarioKind
{
    SrvLeak,      // vector gadget with a horizontal store-to-load dependence
    SpectreStl,   // same gadget on the scalar out-of-order core
    SpectreV1,    // bounds-check bypass
    EvictTime,
    ReplayAmplification
};

inline const char* to_string(ScenarioKind k)
{
    switch (k) {
        case ScenarioKind::SrvLeak: return "srv_leak";
        case ScenarioKind::SpectreStl: return "spectre_stl";
        case ScenarioKind::SpectreV1: return "spectre_v1";
        case ScenarioKind::EvictTime: return "evict_time";
        case ScenarioKind::ReplayAmplification: return "replay_amplification";
    }
    return "?";
}

inline ScenarioKind parse_scenario_kind(const std::string& s)
{
    for (auto k : {ScenarioKind::SrvLeak, ScenarioKind::SpectreStl, ScenarioKind::SpectreV1, ScenarioKind::EvictTime,
             ScenarioKind::ReplayAmplification})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown scenario kind '" + s +
        "' (valid: srv_leak, spectre_stl, spectre_v1, evict_time, replay_amplification)");
}

/// Everything one experiment needs. The leak gadgets follow one naming
/// convention: `x` is the index array, `A` the value array, `secret_val` the
/// table linked to the `secret` array, plus the channel array.
struct Scenario
{
    std::string name;
    ScenarioKind kind = ScenarioKind::SrvLeak;
    GadgetProgram program;
    unsigned training_iterations = 62;
    std::string secret = "XXThe Magic Words are Squeamish Ossifrage.";
    CovertChannel channel;
    CoreConfig core;
    CacheConfig cache = CacheConfig::defaults();
    TimerModel timer;
    LayoutOptions layout;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (secret.empty()) throw ValidationError("scenario secret must not be empty");
        core.validate();
        cache.validate();
        srvsim::validate(program);
        if (kind == ScenarioKind::SrvLeak || kind == ScenarioKind::SpectreStl || kind == ScenarioKind::SpectreV1)
            channel.validate(program, cache.levels[0].line);
    }
};

// ---------------------------------------------------------------------------
// Covert-channel decoding
// ---------------------------------------------------------------------------

struct DecodeResult
{
    std::optional<std::uint8_t> symbol; // empty: no entry classified as a hit
    bool ambiguous = false;
    std::vector<Tick> observed; // per symbol
};

/// Reloads every entry, classifies each observation, and returns the unique
/// hit, or the fastest hit with the ambiguity flag when several hit.
inline DecodeResult reload_decode(CacheHierarchy& cache, const Memory& memory, const CovertChannel& ch, Timer& timer)
{
    const int r = memory.index_of(ch.array);
    const Addr base = memory.region(r).base;
    DecodeResult out;
    unsigned hits = 0;
    Tick best = 0;
    for (unsigned s = 0; s < ch.symbols; ++s) {
        const Tick t = timer.observe(cache.access(base + s * ch.stride).latency);
        out.observed.push_back(t);
        if (classify(t, ch.threshold) == Observation::Hit) {
            if (!out.symbol || t < best) {
                out.symbol = static_cast<std::uint8_t>(s);
                best = t;
            }
            ++hits;
        }
    }
    out.ambiguous = hits > 1;
    return out;
}

struct LeakResult
{
    std::string recovered; // '?' where nothing decoded
    std::vector<bool> per_byte_correct;
    double accuracy = 0;
    std::vector<unsigned> replay_counts; // replays of the armed run, per trial
    std::vector<std::vector<Tick>> hit_latencies;
    unsigned ambiguous = 0;
    bool architecturally_correct = true; // every armed run matched the scalar oracle
};

namespace attack_detail
{
inline const ArrayDecl& require(const GadgetProgram& p, const std::string& name)
{
    const auto* a = p.find_array(name);
    if (!a) throw ValidationError("leak gadget must declare array '" + name + "'");
    return *a;
}

inline std::uint64_t link_offset(const GadgetProgram& p)
{
    const auto& table = require(p, "secret_val");
    if (!table.link || table.link->target != "secret")
        throw ValidationError("array 'secret_val' must be linked to 'secret'");
    return table.link->offset;
}

inline Machine fresh_machine(const Scenario& s)
{
    Machine m(make_memory(s.program, s.layout), s.cache, s.core);
    const auto& sec = require(s.program, "secret");
    if (sec.length < s.secret.size()) throw ValidationError("secret array is shorter than the secret");
    for (std::size_t i = 0; i < s.secret.size(); ++i)
        m.memory.set_element("secret", static_cast<Word>(i), static_cast<unsigned char>(s.secret[i]));
    return m;
}

inline std::uint64_t timer_seed(const Scenario& s, unsigned trial)
{
    return s.timer.seed ^ (s.seed * 0x9e3779b97f4a7c15ull) ^ (std::uint64_t{trial} << 32);
}

inline void record(LeakResult& res, const DecodeResult& d, std::uint8_t expected)
{
    res.recovered.push_back(d.symbol ? static_cast<char>(*d.symbol) : '?');
    res.per_byte_correct.push_back(d.symbol && *d.symbol == expected);
    if (d.ambiguous) ++res.ambiguous;
    std::vector<Tick> hits;
    for (unsigned s = 0; s < d.observed.size(); ++s)
        if (d.symbol && s == *d.symbol) hits.push_back(d.observed[s]);
    res.hit_latencies.push_back(std::move(hits));
}

inline void finish(LeakResult& res)
{
    unsigned ok = 0;
    for (bool b : res.per_byte_correct) ok += b ? 1 : 0;
    res.accuracy = res.per_byte_correct.empty() ? 0.0 : static_cast<double>(ok) / res.per_byte_correct.size();
}

/// Trains on benign data, evicts the hierarchy, then plants the dependence
/// (x[0] = 1, x[1] = 0) and the malicious index in A[1].
inline Machine armed_store_load(const Scenario& s, std::size_t byte_index, MldEngine* mld = nullptr)
{
    Machine m = fresh_machine(s);
    for (unsigned t = 0; t < s.training_iterations; ++t) run(m, s.program, s.core, mld);
    m.cache.trash(2 * s.cache.llc_size());
    m.memory.set_element("x", 0, 1);
    m.memory.set_element("x", 1, 0);
    m.memory.set_element("A", 1, static_cast<Word>(link_offset(s.program) + byte_index));
    return m;
}

/// Trains the bounds check with in-bounds calls, then evicts.
inline Machine trained_bounds_check(const Scenario& s, MldEngine* mld = nullptr)
{
    Machine m = fresh_machine(s);
    for (unsigned k = 0; k < s.training_iterations; ++k)
        run_bounds_check(m, s.program, k % s.program.trip_count, s.core, mld);
    m.cache.trash(2 * s.cache.llc_size());
    return m;
}

inline void store_load_trial(const Scenario& s, unsigned trial, std::size_t byte_index, LeakResult& res)
{
    Machine m = armed_store_load(s, byte_index);
    Machine oracle(m.memory, s.cache, s.core);
    const ExecResult expect = run_scalar(oracle, s.program, s.core);
    const ExecResult got = run(m, s.program, s.core);
    if (!(got.final_memory == expect.final_memory)) res.architecturally_correct = false;
    res.replay_counts.push_back(got.total_replays());
    Timer timer({s.timer.granularity, s.timer.jitter_stddev, timer_seed(s, trial)});
    record(res, reload_decode(m.cache, m.memory, s.channel, timer), static_cast<std::uint8_t>(s.secret[byte_index]));
}
} // namespace attack_detail

/// Leaks `trials` bytes, cycling through the secret (default: each byte once).
inline LeakResult scenario_srv_leak(const Scenario& s, std::optional<unsigned> trials = std::nullopt)
{
    s.validate();
    if (!is_vector(s.core.strategy)) throw ValidationError("srv_leak needs a vector strategy");
    LeakResult res;
    const unsigned n = trials.value_or(static_cast<unsigned>(s.secret.size()));
    for (unsigned t = 0; t < n; ++t) attack_detail::store_load_trial(s, t, t % s.secret.size(), res);
    attack_detail::finish(res);
    return res;
}

inline LeakResult scenario_spectre_stl(const Scenario& s, std::optional<unsigned> trials = std::nullopt)
{
    s.validate();
    if (s.core.strategy != Strategy::ScalarOoO) throw ValidationError("spectre_stl needs the scalar_ooo strategy");
    LeakResult res;
    const unsigned n = trials.value_or(static_cast<unsigned>(s.secret.size()));
    for (unsigned t = 0; t < n; ++t) attack_detail::store_load_trial(s, t, t % s.secret.size(), res);
    attack_detail::finish(res);
    return res;
}

/// Bounds-check bypass: `training_iterations` in-bounds calls train the
/// branch, then one call with an index that reaches the secret through the
/// linked table.
inline LeakResult scenario_spectre_v1(const Scenario& s, std::optional<unsigned> trials = std::nullopt,
    MldEngine* mld = nullptr)
{
    s.validate();
    LeakResult res;
    const unsigned n = trials.value_or(static_cast<unsigned>(s.secret.size()));
    for (unsigned t = 0; t < n; ++t) {
        const std::size_t byte_index = t % s.secret.size();
        Machine m = attack_detail::trained_bounds_check(s, mld);
        const Memory before = m.memory;
        run_bounds_check(m, s.program, attack_detail::link_offset(s.program) + byte_index, s.core, mld);
        if (!(m.memory == before)) res.architecturally_correct = false;
        res.replay_counts.push_back(0);
        Timer timer({s.timer.granularity, s.timer.jitter_stddev, attack_detail::timer_seed(s, t)});
        attack_detail::record(res, reload_decode(m.cache, m.memory, s.channel, timer),
            static_cast<std::uint8_t>(s.secret[byte_index]));
    }
    attack_detail::finish(res);
    return res;
}

struct ArmedRun
{
    ExecResult result; // the armed run only
    MldReport mld;     // training and armed run
};

/// The armed execution of one leak trial, with predicates attached.
inline ArmedRun armed_run(const Scenario& s, std::size_t byte_index, std::vector<MldPredicate> predicates = {})
{
    s.validate();
    MldEngine engine(std::move(predicates));
    if (s.kind == ScenarioKind::SpectreV1) {
        Machine m = attack_detail::trained_bounds_check(s, &engine);
        ExecResult r = run_bounds_check(m, s.program, attack_detail::link_offset(s.program) + byte_index, s.core, &engine);
        return {std::move(r), engine.report()};
    }
    Machine m = attack_detail::armed_store_load(s, byte_index, &engine);
    ExecResult r = run(m, s.program, s.core, &engine);
    return {std::move(r), engine.report()};
}

inline LeakResult run_leak(const Scenario& s, std::optional<unsigned> trials = std::nullopt)
{
    switch (s.kind) {
        case ScenarioKind::SrvLeak: return scenario_srv_leak(s, trials);
        case ScenarioKind::SpectreStl: return scenario_spectre_stl(s, trials);
        case ScenarioKind::SpectreV1: return scenario_spectre_v1(s, trials);
        default: throw ValidationError(std::string("scenario kind '") + to_string(s.kind) + "' does not leak bytes");
    }
}

// ---------------------------------------------------------------------------
// Evict+time through a region
// ---------------------------------------------------------------------------

struct EvictTimeReport
{
    Tick dependent_path_ticks = 0;   // region whose loads miss
    Tick independent_path_ticks = 0; // same region with warm lines
    double post_region_variance = 0; // across seeds, on the missing path
    std::vector<Tick> samples;
    bool serialized = true; // no post-region probe issued before its region committed
};

namespace attack_detail
{
struct TimedPath
{
    Tick observed = 0;
    bool serialized = true;
};

/// Times pre-probe -> region -> post-probe. Under a vector strategy the
/// post-probe waits for the region to commit; on the out-of-order core it
/// issues at a seeded point inside the region's execution window.
inline TimedPath timed_path(const Scenario& s, bool cold, std::uint64_t seed)
{
    Machine m(make_memory(s.program, s.layout), s.cache, s.core);
    const Addr probe = m.memory.element_address("probe", 0);
    m.cache.access(probe);
    if (!cold) run(m, s.program, s.core);
    else m.cache.trash(2 * s.cache.llc_size());
    m.cache.access(probe);
    const Tick t0 = m.clock;
    m.clock += m.cache.access(probe).latency;
    const Tick region_start = m.clock;
    const ExecResult r = run(m, s.program, s.core);
    const Tick commit = m.clock;
    Tick issue = commit;
    if (!is_vector(s.core.strategy)) {
        std::mt19937_64 rng(seed);
        issue = region_start + std::uniform_int_distribution<Tick>(0, r.cycles)(rng);
    }
    const Tick end = issue + m.cache.access(probe).latency;
    Timer timer({s.timer.granularity, s.timer.jitter_stddev, seed});
    return {timer.observe(end - t0), issue >= commit};
}
} // namespace attack_detail

inline EvictTimeReport scenario_evict_time(const Scenario& s, unsigned seeds = 100)
{
    s.validate();
    attack_detail::require(s.program, "probe");
    EvictTimeReport rep;
    rep.dependent_path_ticks = attack_detail::timed_path(s, true, s.seed).observed;
    rep.independent_path_ticks = attack_detail::timed_path(s, false, s.seed).observed;
    double sum = 0;
    for (unsigned i = 0; i < seeds; ++i) {
        const auto p = attack_detail::timed_path(s, true, s.seed + i);
        rep.samples.push_back(p.observed);
        rep.serialized = rep.serialized && p.serialized;
        sum += static_cast<double>(p.observed);
    }
    const double mean = seeds ? sum / seeds : 0;
    double var = 0;
    for (Tick t : rep.samples) var += (static_cast<double>(t) - mean) * (static_cast<double>(t) - mean);
    rep.post_region_variance = seeds ? var / seeds : 0;
    return rep;
}

// ---------------------------------------------------------------------------
// Replay amplification
// ---------------------------------------------------------------------------

struct AmplificationPoint
{
    unsigned passes = 0;
    double analytic = 0;
    double empirical = 0;
};

struct AmplificationReport
{
    unsigned replays = 0;
    unsigned transmit_executions = 0; // passes in which the last lane's load ran
    std::vector<AmplificationPoint> curve;
};

/// Runs the chained gadget once and counts how often the last lane's `a[z]`
/// load executes. Each execution is one chance for a noisy observer to see
/// it; an observation is missed with probability `miss_p`.
inline AmplificationReport scenario_replay_amplification(const Scenario& s, double miss_p, unsigned trials = 10000,
    std::optional<unsigned> requested_replays = std::nullopt)
{
    s.validate();
    if (miss_p < 0 || miss_p > 1) throw ValidationError("observation miss probability must be in [0, 1]");
    Machine m(make_memory(s.program, s.layout), s.cache, s.core);
    const unsigned last = std::min<unsigned>(s.core.width, static_cast<unsigned>(s.program.trip_count)) - 1;
    const Addr transmit = m.memory.element_address("a", last);
    const ExecResult r = run(m, s.program, s.core);
    AmplificationReport rep;
    rep.replays = r.replay_count.empty() ? 0 : r.replay_count[0];
    const unsigned want = requested_replays.value_or(s.core.width - 1);
    if (rep.replays < want)
        throw ConfigError("index vector yields " + std::to_string(rep.replays) + " replays, " + std::to_string(want) +
            " requested");
    std::vector<bool> passes(rep.replays + 1, false);
    for (const auto& ev : r.trace)
        if (ev.kind == EventKind::Load && ev.lane == static_cast<int>(last) && ev.addr == transmit && ev.pass < passes.size())
            passes[ev.pass] = true;
    for (bool b : passes) rep.transmit_executions += b ? 1 : 0;
    std::mt19937_64 rng(s.seed);
    std::bernoulli_distribution seen(1.0 - miss_p);
    for (unsigned k = 1; k <= rep.transmit_executions; ++k) {
        unsigned detected = 0;
        for (unsigned t = 0; t < trials; ++t) {
            bool any = false;
            for (unsigned i = 0; i < k; ++i) any = seen(rng) || any;
            detected += any ? 1 : 0;
        }
        rep.curve.push_back({k, 1.0 - std::pow(miss_p, k), trials ? static_cast<double>(detected) / trials : 0.0});
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Mitigation matrix
// ---------------------------------------------------------------------------

struct MatrixCell
{
    std::string scenario;
    Mitigation mitigation = Mitigation::None;
    double accuracy = 0;
    unsigned trials = 0;
    bool leak = false;     // accuracy 1.0
    bool no_leak = false;  // accuracy at most 3/256
    bool architecturally_correct = true;
};

inline constexpr double kNoLeakBound = 3.0 / 256.0;

inline MatrixCell run_cell(Scenario s, Mitigation mit)
{
    s.core.mitigation = mit;
    const unsigned trials = std::max<unsigned>(64, static_cast<unsigned>(s.secret.size()));
    const LeakResult r = run_leak(s, trials);
    return {s.name, mit, r.accuracy, trials, r.accuracy == 1.0, r.accuracy <= kNoLeakBound, r.architecturally_correct};
}

inline std::vector<MatrixCell> run_matrix(const std::vector<Scenario>& scenarios, const std::vector<Mitigation>& mitigations)
{
    std::vector<MatrixCell> out;
    for (const auto& s : scenarios)
        for (auto mit : mitigations) out.push_back(run_cell(s, mit));
    return out;
}

} // namespace srvsim

#endif
