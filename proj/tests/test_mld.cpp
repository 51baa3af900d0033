#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace srvsim;

namespace
{
Scenario scenario(const std::string& name)
{
    return load_scenario(std::string(SRVSIM_SCENARIO_DIR) + "/" + name + ".toml");
}

CoreConfig srv()
{
    CoreConfig c;
    c.strategy = Strategy::SRV;
    return c;
}
} // namespace

TEST(MldSrv, FiresOncePerViolatingLaneOnListing2)
{
    const auto p = parse_gadget(testsupport::listing2_source());
    Machine m(make_memory(p));
    const auto [r, rep] = run_with_mlds(m, p, srv(), {mld_srv_predicate()});
    ASSERT_EQ(rep.count("mld_srv"), 4u);
    std::set<int> lanes;
    for (const auto& f : rep.firings) {
        EXPECT_EQ(f.event, EventKind::LsqCheck);
        lanes.insert(f.lane);
    }
    EXPECT_EQ(lanes, (std::set<int>{3, 7, 11, 15}));
}

TEST(MldSrv, SilentWithoutDependences)
{
    const auto p = parse_gadget("array a 4 32\narray b 4 32\nloop 32:\n    a[z] = b[z] * 2\n");
    Machine m(make_memory(p));
    EXPECT_TRUE(run_with_mlds(m, p, srv(), {mld_srv_predicate()}).second.firings.empty());
}

// Footprint far below L1, so a line is resident exactly when some earlier
// event touched it.
TEST(MldDcache, FiresExactlyOnPreviouslyTouchedLines)
{
    testsupport::GadgetGen gen(31);
    for (int i = 0; i < 50; ++i) {
        const auto p = parse_gadget(gen.source());
        for (auto strategy : {Strategy::Scalar, Strategy::SRV}) {
            CoreConfig cfg;
            cfg.strategy = strategy;
            Machine m(make_memory(p), CacheConfig::defaults(), cfg);
            const auto [r, rep] = run_with_mlds(m, p, cfg, {mld_dcache_predicate(0)});
            std::set<Addr> seen;
            std::vector<std::pair<std::int64_t, Addr>> want;
            for (const auto& ev : r.trace) {
                if (ev.kind != EventKind::Load && ev.kind != EventKind::Store) continue;
                if (seen.count(ev.addr / 64)) want.emplace_back(ev.instr_seq, ev.addr);
                seen.insert(ev.addr / 64);
            }
            std::vector<std::pair<std::int64_t, Addr>> got;
            for (const auto& f : rep.firings) got.emplace_back(f.instr_seq, f.addr);
            EXPECT_EQ(got, want);
        }
    }
}

TEST(MldDcache, ColdAccessDoesNotFire)
{
    const auto p = parse_gadget("array a 4 1\nloop 1:\n    a[0] = 1\n");
    Machine m(make_memory(p));
    EXPECT_TRUE(run_with_mlds(m, p, CoreConfig{}, {mld_dcache_predicate()}).second.firings.empty());
}

TEST(Mld, AttachingPredicatesDoesNotPerturbExecution)
{
    const auto s = scenario("srv_leak");
    Machine plain = attack_detail::armed_store_load(s, 3);
    Machine watched = plain;
    const auto a = run(plain, s.program, s.core);
    MldEngine engine(builtin_mlds());
    const auto b = run(watched, s.program, s.core, &engine);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(plain.cache.same_state(watched.cache));
    EXPECT_FALSE(engine.report().firings.empty());
}

TEST(Mld, EmptyPredicateSetGivesEmptyReport)
{
    const auto p = parse_gadget(testsupport::listing2_source());
    Machine m(make_memory(p));
    EXPECT_TRUE(run_with_mlds(m, p, srv(), {}).second.firings.empty());
}

TEST(Mld, UnsubscribedEventsAreIgnored)
{
    unsigned calls = 0;
    MldPredicate p{"probe_only", MldKind::NonSpeculative, {EventKind::Probe},
        [&](const TraceEvent&, const StateView&) { return ++calls > 0; }};
    TraceEvent load;
    load.kind = EventKind::Load;
    EXPECT_TRUE(evaluate_mld_hooks(load, {}, {p}).empty());
    EXPECT_EQ(calls, 0u);
    TraceEvent probe;
    probe.kind = EventKind::Probe;
    EXPECT_EQ(evaluate_mld_hooks(probe, {}, {p}).size(), 1u);
}

TEST(Mld, CustomPredicateSeesEveryLoad)
{
    const auto p = parse_gadget(testsupport::listing2_source());
    Machine m(make_memory(p));
    MldPredicate all{"loads", MldKind::NonSpeculative, {EventKind::Load}, [](const TraceEvent&, const StateView&) { return true; }};
    const auto [r, rep] = run_with_mlds(m, p, srv(), {all});
    std::size_t loads = 0;
    for (const auto& ev : r.trace) loads += ev.kind == EventKind::Load ? 1 : 0;
    EXPECT_EQ(rep.firings.size(), loads);
}

TEST(MldBranch, Examples)
{
    TraceEvent ev;
    ev.kind = EventKind::Branch;
    ev.predicted = true;
    ev.actual = false;
    EXPECT_TRUE(mld_branch(ev));
    ev.actual = true;
    EXPECT_FALSE(mld_branch(ev));
}

// Cold counter is weakly not taken, so a first not-taken outcome is a
// correct prediction; a saturated counter that falls through mispredicts.
TEST(MldBranch, CounterStatesByHand)
{
    BranchPredictor bp(2);
    EXPECT_EQ(bp.counter(0), 1u);
    EXPECT_FALSE(bp.predict(0));
    std::vector<bool> mispredicted;
    for (bool taken : {true, true, true, true, false}) {
        mispredicted.push_back(bp.predict(0) != taken);
        bp.update(0, taken);
    }
    EXPECT_EQ(mispredicted, (std::vector<bool>{true, false, false, false, true}));
    EXPECT_EQ(bp.counter(0), 2u);
}

// Hand trace of the two-bit counter, cold at 1: the first training call is
// predicted not taken and fires; training then saturates the counter; the
// out-of-bounds call is predicted taken and fires again.
TEST(MldBranch, FiresOnFirstTrainingCallAndOnTheAttack)
{
    const auto s = scenario("spectre_v1");
    const auto armed = armed_run(s, 0, {mld_branch_predicate()});
    ASSERT_EQ(armed.mld.count("mld_branch"), 2u);
    EXPECT_EQ(armed.mld.firings.back().tick, armed.result.trace.front().tick);
    EXPECT_EQ(armed.result.squash_count, 1u);
}

TEST(MldSrv, LeakGadgetFiresInArmedRunOnly)
{
    const auto s = scenario("srv_leak");
    MldEngine training(std::vector<MldPredicate>{mld_srv_predicate()});
    Machine m = attack_detail::fresh_machine(s);
    for (unsigned t = 0; t < s.training_iterations; ++t) run(m, s.program, s.core, &training);
    EXPECT_TRUE(training.report().firings.empty());
    const auto armed = armed_run(s, 0, {mld_srv_predicate()});
    ASSERT_EQ(armed.mld.count("mld_srv"), 1u);
    EXPECT_EQ(armed.mld.firings[0].lane, 1);
}

TEST(MldSrv, ScalarCoreHasNoRegionChecks)
{
    const auto s = scenario("spectre_stl");
    EXPECT_EQ(armed_run(s, 0, {mld_srv_predicate()}).mld.count("mld_srv"), 0u);
}
