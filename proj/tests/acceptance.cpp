// Acceptance suite: one line per criterion, PASS or FAIL, with wall time
// against its budget. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

#include "support.hpp"

using namespace srvsim;
using testsupport::GadgetGen;

namespace
{
struct Check
{
    bool ok = true;
    std::string why;

    void expect(bool cond, const std::string& what)
    {
        if (!cond && ok) why = what;
        ok = ok && cond;
    }
};

CacheConfig small_cache()
{
    CacheConfig c;
    c.levels = {{4096, 64, 4, Replacement::LRU, 40}, {65536, 64, 8, Replacement::LRU, 150}};
    return c;
}

Scenario scenario(const std::string& name)
{
    return load_scenario(std::string(SRVSIM_SCENARIO_DIR) + "/" + name + ".toml");
}

Check flexvec_example()
{
    Check c;
    const auto p = parse_gadget(testsupport::listing2_source());
    const auto groups = flexvec_partition(flexvec_dependences(p, make_memory(p), 0, 16), 16);
    const std::vector<LaneGroup> want{{0, 2}, {3, 6}, {7, 10}, {11, 14}, {15, 15}};
    c.expect(groups == want, "partition differs from [[0-2],[3-6],[7-10],[11-14],[15]]");
    return c;
}

Check srv_replay_example()
{
    Check c;
    const auto p = parse_gadget(testsupport::listing2_source());
    CoreConfig cfg;
    Machine m(make_memory(p), small_cache(), cfg);
    const auto r = run(m, p, cfg);
    c.expect(r.replay_count == std::vector<unsigned>{1}, "replay_count != 1");
    c.expect(r.replay_masks.size() == 1 && r.replay_masks[0] == std::vector<std::uint32_t>{0x8888}, "taint != {3,7,11,15}");
    const auto want = testsupport::listing2_expected();
    for (Word i = 0; i < 16; ++i)
        c.expect(r.final_memory.element("a", i) == want[static_cast<std::size_t>(i)], "final memory differs from scalar");
    return c;
}

Check functional_correctness()
{
    Check c;
    GadgetGen gen(1001);
    for (int i = 0; i < 1000 && c.ok; ++i) {
        const auto p = parse_gadget(gen.source());
        const auto ref = testsupport::ref_run(p);
        for (unsigned w : {4u, 8u, 16u})
            for (auto st : {Strategy::SRV, Strategy::FlexVec, Strategy::ScalarFallback, Strategy::VfencedSRV}) {
                CoreConfig cfg;
                cfg.width = w;
                cfg.strategy = st;
                Machine m(make_memory(p), small_cache(), cfg);
                const auto r = run(m, p, cfg);
                c.expect(testsupport::matches(ref, r.final_memory),
                    "program " + std::to_string(i) + " " + to_string(st) + " w" + std::to_string(w) + " differs");
                for (unsigned n : r.replay_count) c.expect(n <= w - 1, "replay_count > width - 1");
            }
    }
    return c;
}

std::uint64_t lower_lane_store_bytes(const LsqEntry& e, const std::vector<LsqEntry>& others)
{
    const Addr window = e.addr / 64 * 64;
    std::uint64_t m = 0;
    for (Addr b = e.addr; b < e.addr + e.size; ++b)
        for (const auto& o : others)
            if (o.kind == AccessKind::Store && o.lane < e.lane && b >= o.addr && b < o.addr + o.size)
                m |= std::uint64_t{1} << (b - window);
    return m;
}

Check hob_algebra()
{
    Check c;
    std::mt19937_64 rng(4);
    static const unsigned sizes[] = {1, 4, 8};
    for (int t = 0; t < 10000 && c.ok; ++t) {
        std::vector<LsqEntry> q;
        const int n = 2 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) {
            const unsigned size = sizes[rng() % 3];
            const Addr addr = 0x4000 + (rng() % 2) * 64 + (rng() % (64 / size)) * size;
            q.push_back({rng() % 8, static_cast<unsigned>(rng() % 16), rng() % 2 ? AccessKind::Load : AccessKind::Store, addr,
                size, {}, {}});
        }
        const LsqEntry& e = q.back();
        const std::vector<LsqEntry> others(q.begin(), q.end() - 1);
        const auto vob = compute_vob(e, others);
        const auto hob = compute_hob(e, vob, others);
        c.expect((hob.bits & ~vob.bits) == 0, "hob not a subset of vob");
        const std::uint64_t want = e.kind == AccessKind::Load ? vob.bits & lower_lane_store_bytes(e, others) : 0;
        c.expect(hob.bits == want, "hob != vob and older-lane contribution");
    }
    // Every lane whose first-pass loads disagree with scalar order is replayed.
    GadgetGen gen(44);
    for (int i = 0; i < 1000 && c.ok; ++i) {
        const auto p = parse_gadget(gen.source());
        const auto expect = testsupport::scalar_load_values(p, make_memory(p));
        CoreConfig cfg;
        Machine m(make_memory(p), small_cache(), cfg);
        const auto r = run(m, p, cfg);
        std::vector<std::multiset<Word>> got(16);
        for (const auto& ev : r.trace)
            if (ev.kind == EventKind::Load && ev.pass == 0) got[static_cast<std::size_t>(ev.lane)].insert(ev.value);
        std::uint32_t taint = 0;
        for (auto mask : r.replay_masks[0]) taint |= mask;
        for (unsigned k = 0; k < 16; ++k) {
            const std::multiset<Word> want(expect[k].begin(), expect[k].end());
            if (got[k] != want) c.expect((taint >> k) & 1u, "diverged lane " + std::to_string(k) + " never replayed");
        }
    }
    return c;
}

Check end_to_end_leak()
{
    Check c;
    const auto s = scenario("srv_leak");
    const auto r = scenario_srv_leak(s);
    c.expect(r.per_byte_correct.size() == 42, "expected 42 trials");
    c.expect(r.accuracy == 1.0, "accuracy " + std::to_string(r.accuracy) + ", recovered '" + r.recovered + "'");
    return c;
}

Check mitigation_matrix()
{
    Check c;
    const std::vector<std::pair<Mitigation, bool>> srv{{Mitigation::None, true}, {Mitigation::MemFence, true},
        {Mitigation::InOrder, true}, {Mitigation::Vfence, false}, {Mitigation::VisibilityDelay, false},
        {Mitigation::CfenceStyle, false}, {Mitigation::FenceRecompiledScalar, false}};
    const std::vector<std::pair<Mitigation, bool>> stl{{Mitigation::None, true}, {Mitigation::MemFence, false},
        {Mitigation::InOrder, false}};
    auto check = [&](const Scenario& s, const std::vector<std::pair<Mitigation, bool>>& rows) {
        for (const auto& [mit, leaks] : rows) {
            const auto cell = run_cell(s, mit);
            const std::string name = s.name + "/" + to_string(mit);
            c.expect(cell.trials >= 64, name + " ran fewer than 64 trials");
            c.expect(leaks ? cell.leak : cell.no_leak, name + " accuracy " + std::to_string(cell.accuracy));
        }
    };
    check(scenario("srv_leak"), srv);
    check(scenario("spectre_stl"), stl);
    return c;
}

Check mld_equivalences()
{
    Check c;
    GadgetGen gen(77);
    for (int i = 0; i < 10000 && c.ok; ++i) {
        const auto p = parse_gadget(gen.source());
        CoreConfig cfg; // width 16 over a 16-trip loop: one chunk
        Machine m(make_memory(p), small_cache(), cfg);
        const auto [r, rep] = run_with_mlds(m, p, cfg, {mld_srv_predicate()});
        c.expect((rep.count("mld_srv") > 0) == (r.replay_count.at(0) >= 1), "mld_srv disagrees with replay_count");
    }
    GadgetGen gen2(78);
    for (int i = 0; i < 200 && c.ok; ++i) {
        const auto p = parse_gadget(gen2.source());
        CoreConfig cfg;
        Machine m(make_memory(p), CacheConfig::defaults(), cfg);
        const auto [r, rep] = run_with_mlds(m, p, cfg, {mld_dcache_predicate(0)});
        std::set<Addr> seen;
        std::vector<Addr> hits;
        for (const auto& ev : r.trace) {
            if (ev.kind != EventKind::Load && ev.kind != EventKind::Store) continue;
            if (seen.count(ev.addr / 64)) hits.push_back(ev.addr);
            seen.insert(ev.addr / 64);
        }
        std::vector<Addr> fired;
        for (const auto& f : rep.firings) fired.push_back(f.addr);
        c.expect(fired == hits, "mld_dcache firing sequence differs from hit sequence");
    }
    for (const char* name : {"srv_leak", "spectre_stl", "spectre_v1"}) {
        const auto s = scenario(name);
        Machine a = s.kind == ScenarioKind::SpectreV1 ? attack_detail::trained_bounds_check(s)
                                                      : attack_detail::armed_store_load(s, 0);
        Machine b = a;
        MldEngine engine(builtin_mlds());
        const auto plain = s.kind == ScenarioKind::SpectreV1 ? run_bounds_check(a, s.program, 1024, s.core)
                                                             : run(a, s.program, s.core);
        const auto watched = s.kind == ScenarioKind::SpectreV1 ? run_bounds_check(b, s.program, 1024, s.core, &engine)
                                                               : run(b, s.program, s.core, &engine);
        c.expect(plain == watched && a.cache.same_state(b.cache), std::string(name) + ": predicates changed the run");
    }
    return c;
}

Check replay_amplification()
{
    Check c;
    const auto s = scenario("replay_amplification");
    for (double p : {0.25, 0.5}) {
        const auto r = scenario_replay_amplification(s, p, 10000);
        c.expect(r.replays == 15, "replays " + std::to_string(r.replays));
        for (const auto& pt : r.curve)
            c.expect(std::abs(pt.empirical - (1.0 - std::pow(p, pt.passes))) <= 0.05,
                "detection off the curve at r=" + std::to_string(pt.passes));
    }
    return c;
}

Check cache_size_recovery()
{
    Check c;
    {
        CacheHierarchy cache;
        Timer timer;
        const auto est = estimate_llc_size(sweep_latency(cache, default_sweep_sizes(), timer));
        c.expect(est == (32ull << 20), "jitter 0 estimate " + format_size(est));
    }
    CacheHierarchy cache;
    Timer timer({1, 10.0, 1});
    const auto est = estimate_llc_size(sweep_latency(cache, default_sweep_sizes(), timer));
    c.expect(est >= (16ull << 20) && est <= (64ull << 20), "sigma 10 estimate " + format_size(est));
    return c;
}

double classify_accuracy(Tick granularity)
{
    Timer t({granularity, 10.0, 2024});
    unsigned ok = 0;
    const unsigned draws = 100000;
    for (unsigned i = 0; i < draws; ++i) {
        const bool hit = i % 2 == 0;
        ok += (classify(t.observe(hit ? 40 : 400), 101) == Observation::Hit) == hit ? 1 : 0;
    }
    return static_cast<double>(ok) / draws;
}

Check timer_resolution()
{
    Check c;
    const double fine = classify_accuracy(5);
    const double coarse = classify_accuracy(500);
    c.expect(fine >= 0.99, "granularity 5 accuracy " + std::to_string(fine));
    c.expect(coarse <= 0.60, "granularity 500 accuracy " + std::to_string(coarse));
    return c;
}

Check serialization()
{
    Check c;
    auto s = scenario("evict_time");
    s.timer.jitter_stddev = 0;
    const auto srv = scenario_evict_time(s, 100);
    c.expect(srv.post_region_variance == 0.0, "SRV variance " + std::to_string(srv.post_region_variance));
    s.core.strategy = Strategy::ScalarOoO;
    s.core.width = 1;
    const auto ooo = scenario_evict_time(s, 100);
    c.expect(ooo.post_region_variance > 0.0, "scalar OoO variance is zero");
    return c;
}

struct Criterion
{
    const char* name;
    double budget_s;
    std::function<Check()> body;
};
} // namespace

int main()
{
    const std::vector<Criterion> criteria{
        {"flexvec worked example", 1, flexvec_example},
        {"srv replay worked example", 1, srv_replay_example},
        {"functional correctness", 60, functional_correctness},
        {"hob algebra", 30, hob_algebra},
        {"end-to-end leak", 10, end_to_end_leak},
        {"mitigation matrix", 60, mitigation_matrix},
        {"mld equivalences", 60, mld_equivalences},
        {"replay amplification", 60, replay_amplification},
        {"cache-size recovery", 30, cache_size_recovery},
        {"timer resolution", 30, timer_resolution},
        {"serialization", 10, serialization},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& cr = criteria[i];
        const auto t0 = std::chrono::steady_clock::now();
        Check result;
        try {
            result = cr.body();
        }
        catch (const std::exception& e) {
            result.ok = false;
            result.why = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= cr.budget_s;
        const bool pass = result.ok && in_time;
        failures += pass ? 0 : 1;
        std::printf("%s %2zu %-28s %8.2fs / %3.0fs%s%s\n", pass ? "PASS" : "FAIL", i + 1, cr.name, secs, cr.budget_s,
            result.ok ? "" : ("  " + result.why).c_str(), in_time ? "" : "  over time budget");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
