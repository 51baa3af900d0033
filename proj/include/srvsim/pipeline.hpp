#ifndef SRVSIM_PIPELINE_HPP
#define SRVSIM_PIPELINE_HPP

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "srvsim/isa.hpp"
#include "srvsim/lsu.hpp"
#include "srvsim/memhier.hpp"
#include "srvsim/mld.hpp"
#include "srvsim/predictors.hpp"
#include "srvsim/trace.hpp"
#include "srvsim/vectorize.hpp"

namespace srvsim
{

enum class Mitigation
{
    None,
    MemFence,
    FenceRecompiledScalar,
    Vfence,
    VisibilityDelay,
    CfenceStyle,
    InOrder
};

inline constexpr std::array<Mitigation, 7> kAllMitigations{Mitigation::None, Mitigation::MemFence,
    Mitigation::FenceRecompiledScalar, Mitigation::Vfence, Mitigation::VisibilityDelay, Mitigation::CfenceStyle,
    Mitigation::InOrder};

inline const char* to_string(Mitigation m)
{
    switch (m) {
        case Mitigation::None: return "none";
        case Mitigation::MemFence: return "mem_fence";
        case Mitigation::FenceRecompiledScalar: return "fence_recompiled_scalar";
        case Mitigation::Vfence: return "vfence";
        case Mitigation::VisibilityDelay: return "visibility_delay";
        case Mitigation::CfenceStyle: return "cfence_style";
        case Mitigation::InOrder: return "in_order";
    }
    return "?";
}

inline std::string mitigation_names()
{
    std::string s;
    for (auto m : kAllMitigations) s += (s.empty() ? "" : ", ") + std::string(to_string(m));
    return s;
}

inline Mitigation parse_mitigation(const std::string& name)
{
    for (auto m : kAllMitigations)
        if (name == to_string(m)) return m;
    throw ConfigError("unknown mitigation '" + name + "' (valid: " + mitigation_names() + ")");
}

inline Strategy parse_strategy(const std::string& name)
{
    for (auto s : {Strategy::Scalar, Strategy::ScalarOoO, Strategy::SRV, Strategy::FlexVec, Strategy::ScalarFallback,
             Strategy::VfencedSRV})
        if (name == to_string(s)) return s;
    throw ConfigError("unknown strategy '" + name +
        "' (valid: scalar, scalar_ooo, srv, flexvec, scalar_fallback, vfenced_srv)");
}

enum class ReplayPolicy
{
    ErroneousOnly,     // replay exactly the lanes with a horizontal violation
    ErroneousAndLater  // replay every lane from the lowest violating lane upward
};

inline const char* to_string(ReplayPolicy p)
{
    return p == ReplayPolicy::ErroneousOnly ? "erroneous_only" : "erroneous_and_later";
}

inline ReplayPolicy parse_replay_policy(const std::string& s)
{
    if (s == "erroneous_only") return ReplayPolicy::ErroneousOnly;
    if (s == "erroneous_and_later") return ReplayPolicy::ErroneousAndLater;
    throw ConfigError("unknown replay policy '" + s + "' (valid: erroneous_only, erroneous_and_later)");
}

struct CoreConfig
{
    unsigned width = 16;
    std::optional<unsigned> replay_limit; // defaults to width - 1
    ReplayPolicy replay_policy = ReplayPolicy::ErroneousOnly;
    Strategy strategy = Strategy::SRV;
    Mitigation mitigation = Mitigation::None;
    unsigned mdp_threshold = 8;
    unsigned branch_counter_bits = 2;
    Tick alu_latency = 1;
    Tick fence_latency = 1;
    Tick squash_penalty = 10;
    Tick dep_check_latency = 8; // FlexVec runtime check at chunk entry

    unsigned effective_replay_limit() const { return replay_limit.value_or(width == 0 ? 0 : width - 1); }

    void validate() const
    {
        if (!valid_width(width)) throw ValidationError("vector width must be one of 1, 2, 4, 8, 16, 32");
        if (replay_limit && *replay_limit > width - 1) throw ValidationError("replay_limit must not exceed width - 1");
        if (branch_counter_bits == 0 || branch_counter_bits > 8)
            throw ValidationError("branch_counter_bits must be in [1, 8]");
        if (mdp_threshold == 0) throw ValidationError("mdp_threshold must be positive");
    }
};

/// All mutable state of one simulated core.
struct Machine
{
    Memory memory;
    CacheHierarchy cache;
    MemDepPredictor mdp;
    BranchPredictor branch;
    Tick clock = 0;
    bool fallback_engaged = false; // ScalarFallback: a violation was seen, stay scalar

    Machine(Memory mem, const CacheConfig& cache_cfg = CacheConfig::defaults(), const CoreConfig& core = {})
        : memory(std::move(mem))
        , cache(cache_cfg)
        , mdp(core.mdp_threshold)
        , branch(core.branch_counter_bits)
    {
    }
};

struct ExecResult
{
    Memory final_memory;
    Trace trace;
    Tick cycles = 0;
    std::vector<unsigned> replay_count;                  // per chunk
    std::vector<std::vector<std::uint32_t>> replay_masks; // per chunk, lanes of each replay pass
    unsigned squash_count = 0;

    unsigned total_replays() const
    {
        unsigned n = 0;
        for (auto r : replay_count) n += r;
        return n;
    }

    friend bool operator==(const ExecResult&, const ExecResult&) = default;
};

namespace pipe_detail
{
enum class Fill
{
    Normal, // the access updates the cache
    Peek    // the access is timed but leaves the cache untouched
};

/// Accumulates the result of one run and is the single place events enter
/// the trace. Predicates see each event before its state change.
struct Run
{
    Machine& m;
    const CoreConfig& cfg;
    MldEngine* mld;
    ExecResult res;
    Tick start;

    Run(Machine& machine, const CoreConfig& config, MldEngine* engine)
        : m(machine)
        , cfg(config)
        , mld(engine)
        , start(machine.clock)
    {
    }

    void note(TraceEvent ev, const LsqEntry* entry = nullptr)
    {
        ev.tick = m.clock;
        if (mld) mld->on_event(ev, {&m.cache, &m.branch, entry});
        res.trace.push_back(ev);
    }

    Tick access(TraceEvent ev, Fill fill)
    {
        ev.tick = m.clock;
        const auto pk = m.cache.peek(ev.addr);
        ev.level = pk.hit_level;
        if (mld) mld->on_event(ev, {&m.cache, &m.branch, nullptr});
        if (fill == Fill::Normal) m.cache.access(ev.addr, ev.kind == EventKind::Store ? AccessKind::Store : AccessKind::Load);
        res.trace.push_back(ev);
        m.clock += pk.latency;
        return pk.latency;
    }

    ExecResult finish()
    {
        res.final_memory = m.memory;
        res.cycles = m.clock - start;
        return std::move(res);
    }
};

inline unsigned count_alu(const Expr& e)
{
    switch (e.kind) {
        case ExprKind::Read: return count_alu(*e.a);
        case ExprKind::Binary: return 1 + count_alu(*e.a) + count_alu(*e.b);
        case ExprKind::Select: return 1 + count_alu(*e.a) + count_alu(*e.b) + count_alu(*e.c);
        default: return 0;
    }
}

inline unsigned alu_ops(const GadgetProgram& p)
{
    unsigned n = 0;
    for (const auto& s : p.loop) n += count_alu(*s.rhs) + count_alu(*s.dst_index);
    return n;
}

inline TraceEvent access_event(const AccessEvent& a, std::int64_t seq, std::uint64_t z, bool speculative)
{
    TraceEvent ev;
    ev.kind = a.kind == AccessKind::Load ? EventKind::Load : EventKind::Store;
    ev.instr_seq = seq;
    ev.iteration = z;
    ev.addr = a.addr;
    ev.size = a.size;
    ev.value = a.value;
    ev.speculative = speculative;
    return ev;
}

/// One in-order scalar iteration against the machine's memory.
inline void scalar_iteration(Run& run, const GadgetProgram& p, std::uint64_t z, unsigned alu)
{
    const IterationEffect fx = eval_scalar_iter(p, z, run.m.memory);
    for (std::size_t i = 0; i < fx.events.size(); ++i)
        run.access(access_event(fx.events[i], static_cast<std::int64_t>(i), z, false), Fill::Normal);
    run.m.clock += alu * run.cfg.alu_latency;
    apply(run.m.memory, fx);
}

inline bool overlaps(Addr a, unsigned as, Addr b, unsigned bs) { return a < b + bs && b < a + as; }

/// Executes one chunk of vector code: the passes, the LSQ evaluation and the
/// commit. Stores stay in the LSQ until commit; a load sees memory as of
/// chunk entry plus the live stores older than it in horizontal time.
class ChunkExec
{
public:
    ChunkExec(Run& run, const GadgetProgram& p, const VectorProgram& vp, const Chunk& chunk, bool speculative)
        : run_(run)
        , p_(p)
        , vp_(vp)
        , chunk_(chunk)
        , speculative_(speculative)
        , values_(vp.body.size(), std::vector<Word>(vp.width, 0))
        , fault_(vp.width, false)
    {
    }

    void pass(Predicate pred, unsigned pass_no)
    {
        run_.res.trace.reserve(run_.res.trace.size() + vp_.body.size() * pred.count());
        lsq_.squash(pred.bits);
        std::uint32_t exec = pred.bits;
        for (unsigned k = 0; k < vp_.width; ++k)
            if (pred.test(k)) fault_[k] = false;
        const Mitigation mit = run_.cfg.mitigation;
        for (std::size_t i = 0; i < vp_.body.size(); ++i) {
            const VectorInstr& ins = vp_.body[i];
            // Operands always come from the latest instruction that computed
            // the node, even if a node object is shared between statements.
            if (ins.op == Opcode::VAlu || is_load(ins.op)) slot_of_[ins.node.get()] = i;
            switch (ins.op) {
                case Opcode::SrvStart:
                case Opcode::SrvEnd:
                case Opcode::Vfence: break;
                case Opcode::Fence: {
                    TraceEvent ev;
                    ev.kind = EventKind::Fence;
                    ev.instr_seq = static_cast<std::int64_t>(i);
                    ev.pass = pass_no;
                    run_.note(ev);
                    run_.m.clock += run_.cfg.fence_latency;
                    break;
                }
                case Opcode::VAlu:
                    run_.m.clock += run_.cfg.alu_latency;
                    for (unsigned k = 0; k < vp_.width; ++k)
                        if ((exec >> k) & 1u) values_[i][k] = alu(*ins.node, k);
                    break;
                case Opcode::VGather:
                case Opcode::VLoadContig:
                case Opcode::VStoreContig:
                case Opcode::VScatter: {
                    const bool load = is_load(ins.op);
                    const std::string& array = load ? ins.node->name : p_.loop[static_cast<std::size_t>(ins.statement)].dst;
                    const int r = run_.m.memory.index_of(array);
                    const unsigned size = run_.m.memory.region(r).elem_size;
                    for (unsigned k = 0; k < vp_.width; ++k) {
                        if (!((exec >> k) & 1u)) continue;
                        const Word idx = value(load ? *ins.node->a : *ins.node, k);
                        Addr addr = 0;
                        try {
                            addr = run_.m.memory.element_address(r, idx);
                        }
                        catch (const OutOfBounds&) {
                            // Suppressed until the lane is known not to replay.
                            fault_[k] = true;
                            exec &= ~(1u << k);
                            continue;
                        }
                        LsqEntry e{static_cast<std::uint64_t>(i), k, load ? AccessKind::Load : AccessKind::Store, addr, size,
                            {}, {}};
                        Word v = 0;
                        std::size_t slot = 0;
                        if (load) {
                            auto [val, src] = lsq_.forward(run_.m.memory, addr, size, k, e.instr_seq);
                            v = val;
                            values_[i][k] = v;
                            slot = lsq_.add(e, v, std::move(src));
                        }
                        else {
                            v = detail::truncate(value(*p_.loop[static_cast<std::size_t>(ins.statement)].rhs, k), size);
                            slot = lsq_.add(e, v);
                        }
                        TraceEvent ev;
                        ev.kind = load ? EventKind::Load : EventKind::Store;
                        ev.instr_seq = static_cast<std::int64_t>(i);
                        ev.lane = static_cast<int>(k);
                        ev.iteration = chunk_.base + k;
                        ev.pass = pass_no;
                        ev.addr = addr;
                        ev.size = size;
                        ev.value = v;
                        ev.speculative = speculative_;
                        Fill fill = Fill::Normal;
                        if (speculative_ && mit == Mitigation::VisibilityDelay) {
                            fill = Fill::Peek;
                            deferred_.push_back({slot, addr});
                        }
                        else if (speculative_ && mit == Mitigation::CfenceStyle && load)
                            fill = Fill::Peek;
                        run_.access(ev, fill);
                    }
                    break;
                }
            }
        }
    }

    /// LSQ check at region end: one lsq_check event per live entry. Returns
    /// the replay register restricted to the chunk's active lanes.
    ReplayRegister evaluate(unsigned pass_no)
    {
        const auto live = lsq_.evaluate();
        for (const auto& e : live) {
            TraceEvent ev;
            ev.kind = EventKind::LsqCheck;
            ev.instr_seq = static_cast<std::int64_t>(e.instr_seq);
            ev.lane = static_cast<int>(e.lane);
            ev.iteration = chunk_.base + e.lane;
            ev.pass = pass_no;
            ev.addr = e.addr;
            ev.size = e.size;
            ev.vob = e.vob.bits;
            ev.hob = e.hob.bits;
            ev.speculative = speculative_;
            run_.note(ev, &e);
        }
        ReplayRegister taint = mark_replay(live);
        taint.bits &= chunk_.active.bits;
        if (!taint.empty() && run_.cfg.replay_policy == ReplayPolicy::ErroneousAndLater) {
            const std::uint32_t from = ~((1u << taint.lowest()) - 1);
            taint.bits = chunk_.active.bits & from;
        }
        return taint;
    }

    void check_faults() const
    {
        for (unsigned k = 0; k < vp_.width; ++k)
            if (fault_[k] && chunk_.active.test(k))
                throw OutOfBounds("iteration " + std::to_string(chunk_.base + k) + " accesses memory out of bounds");
    }

    void commit()
    {
        for (const auto& w : lsq_.commit_order()) run_.m.memory.store(w.addr, w.size, w.value);
        for (const auto& [slot, addr] : deferred_)
            if (lsq_.slots()[slot].live)
                run_.m.cache.access(addr, lsq_.slots()[slot].entry.kind);
    }

private:
    Word immediate(const Expr& e, unsigned lane) const
    {
        switch (e.kind) {
            case ExprKind::Literal: return e.literal;
            case ExprKind::Induction: return static_cast<Word>(chunk_.base + lane);
            case ExprKind::Param: return *p_.param(e.name);
            default: return values_[slot_of_.at(&e)][lane];
        }
    }

    Word value(const Expr& e, unsigned lane) const { return immediate(e, lane); }

    Word alu(const Expr& e, unsigned lane) const
    {
        if (e.kind == ExprKind::Select) return value(*e.a, lane) ? value(*e.b, lane) : value(*e.c, lane);
        return apply_binop(e.op, value(*e.a, lane), value(*e.b, lane));
    }

    Run& run_;
    const GadgetProgram& p_;
    const VectorProgram& vp_;
    const Chunk& chunk_;
    bool speculative_;
    std::vector<std::vector<Word>> values_;
    std::vector<bool> fault_;
    std::unordered_map<const Expr*, std::size_t> slot_of_;
    RegionLsq lsq_;
    std::vector<std::pair<std::size_t, Addr>> deferred_;
};

inline TraceEvent marker(EventKind k, std::uint32_t mask, std::uint64_t base, unsigned pass = 0)
{
    TraceEvent ev;
    ev.kind = k;
    ev.mask = mask;
    ev.iteration = base;
    ev.pass = pass;
    return ev;
}
} // namespace pipe_detail

/// Reference semantics: in-order scalar execution, one cache event per access.
inline ExecResult run_scalar(Machine& m, const GadgetProgram& p, const CoreConfig& cfg = {}, MldEngine* mld = nullptr)
{
    pipe_detail::Run run(m, cfg, mld);
    const unsigned alu = pipe_detail::alu_ops(p);
    for (std::uint64_t z = 0; z < p.trip_count; ++z) pipe_detail::scalar_iteration(run, p, z, alu);
    return run.finish();
}

/// Scalar out-of-order core with a store-to-load alias predictor. A load of
/// iteration z may issue ahead of the still-pending stores of iteration z-1
/// when the predictor says they do not alias. If they do, the load returns
/// the value from before the store, the rest of the iteration runs
/// transiently, and the core squashes and re-executes it.
inline ExecResult run_ooo_stl(Machine& m, const GadgetProgram& p, const CoreConfig& cfg = {}, MldEngine* mld = nullptr)
{
    using pipe_detail::Fill;
    pipe_detail::Run run(m, cfg, mld);
    const unsigned alu = pipe_detail::alu_ops(p);
    const bool may_bypass = cfg.mitigation != Mitigation::MemFence && cfg.mitigation != Mitigation::InOrder &&
        cfg.mitigation != Mitigation::FenceRecompiledScalar;
    const Fill transient_fill = (cfg.mitigation == Mitigation::VisibilityDelay || cfg.mitigation == Mitigation::CfenceStyle)
        ? Fill::Peek
        : Fill::Normal;
    struct Pending
    {
        int stmt;
        Addr addr;
        unsigned size;
        Word old; // memory contents before the store
    };
    std::vector<Pending> pending;
    for (std::uint64_t z = 0; z < p.trip_count; ++z) {
        bool stale = false;
        int load_id = 0;
        std::vector<std::pair<MemDepPredictor::Key, bool>> seen;
        std::vector<AccessEvent> issued;
        auto hook = [&](AccessEvent& ev, const std::vector<WriteRecord>& own) {
            const int id = load_id++;
            std::vector<WriteRecord> restore;
            for (const auto& ps : pending) {
                const MemDepPredictor::Key key{ps.stmt, id};
                const bool alias = pipe_detail::overlaps(ev.addr, ev.size, ps.addr, ps.size);
                seen.emplace_back(key, alias);
                if (alias && may_bypass && m.mdp.predicts_no_alias(key)) restore.push_back({ps.addr, ps.size, ps.old});
            }
            if (!restore.empty()) {
                std::reverse(restore.begin(), restore.end());
                restore.insert(restore.end(), own.begin(), own.end());
                ev.value = detail::overlaid_load(m.memory, restore, ev.addr, ev.size);
                stale = true;
            }
            issued.push_back(ev);
        };
        IterationEffect fx;
        bool faulted = false;
        try {
            fx = eval_iteration(p, static_cast<Word>(z), m.memory, hook);
        }
        catch (const OutOfBounds&) {
            if (!stale) throw;
            faulted = true;
        }
        if (stale) {
            const auto& events = faulted ? issued : fx.events;
            for (std::size_t i = 0; i < events.size(); ++i)
                run.access(pipe_detail::access_event(events[i], static_cast<std::int64_t>(i), z, true),
                    events[i].kind == AccessKind::Load ? transient_fill : Fill::Peek);
            TraceEvent sq = pipe_detail::marker(EventKind::Squash, 0, z);
            run.note(sq);
            ++run.res.squash_count;
            m.clock += cfg.squash_penalty;
            for (const auto& [key, alias] : seen)
                if (alias) m.mdp.observe_alias(key);
            fx = eval_scalar_iter(p, z, m.memory);
        }
        else {
            for (const auto& [key, alias] : seen) {
                if (alias)
                    m.mdp.observe_alias(key);
                else
                    m.mdp.observe_no_alias(key);
            }
        }
        for (std::size_t i = 0; i < fx.events.size(); ++i)
            run.access(pipe_detail::access_event(fx.events[i], static_cast<std::int64_t>(i), z, false), Fill::Normal);
        m.clock += alu * cfg.alu_latency;
        pending.clear();
        for (const auto& ev : fx.events)
            if (ev.kind == AccessKind::Store) pending.push_back({ev.statement, ev.addr, ev.size, m.memory.load(ev.addr, ev.size)});
        apply(m.memory, fx);
    }
    return run.finish();
}

/// Victim guarded by `if (x < trip_count)`: runs iteration x of the loop body
/// when the bound check passes, and transiently when the branch predictor
/// guesses taken for an out-of-bounds x.
inline ExecResult run_bounds_check(Machine& m, const GadgetProgram& p, std::uint64_t x, const CoreConfig& cfg = {},
    MldEngine* mld = nullptr)
{
    using pipe_detail::Fill;
    pipe_detail::Run run(m, cfg, mld);
    constexpr int site = 0;
    const bool predicted = m.branch.predict(site);
    const bool actual = x < p.trip_count;
    TraceEvent br = pipe_detail::marker(EventKind::Branch, 0, x);
    br.predicted = predicted;
    br.actual = actual;
    run.note(br);
    m.clock += cfg.alu_latency;
    const unsigned alu = pipe_detail::alu_ops(p);
    if (actual) {
        pipe_detail::scalar_iteration(run, p, x, alu);
    }
    else if (predicted) {
        const bool speculate = cfg.mitigation != Mitigation::InOrder && cfg.mitigation != Mitigation::MemFence &&
            cfg.mitigation != Mitigation::FenceRecompiledScalar;
        if (speculate) {
            const Fill fill = (cfg.mitigation == Mitigation::VisibilityDelay || cfg.mitigation == Mitigation::CfenceStyle)
                ? Fill::Peek
                : Fill::Normal;
            std::vector<AccessEvent> issued;
            IterationEffect fx;
            try {
                fx = eval_iteration(p, static_cast<Word>(x), m.memory,
                    [&](AccessEvent& ev, const std::vector<WriteRecord>&) { issued.push_back(ev); });
            }
            catch (const OutOfBounds&) {
                fx.events = issued;
            }
            for (std::size_t i = 0; i < fx.events.size(); ++i)
                run.access(pipe_detail::access_event(fx.events[i], static_cast<std::int64_t>(i), x, true),
                    fx.events[i].kind == AccessKind::Load ? fill : Fill::Peek);
        }
        run.note(pipe_detail::marker(EventKind::Squash, 0, x));
        ++run.res.squash_count;
        m.clock += cfg.squash_penalty;
    }
    m.branch.update(site, actual);
    return run.finish();
}

/// Vector execution of `vp` (SRV, VfencedSRV, FlexVec or ScalarFallback).
inline ExecResult run_vector(Machine& m, const GadgetProgram& p, const VectorProgram& vp, const CoreConfig& cfg = {},
    MldEngine* mld = nullptr)
{
    using namespace pipe_detail;
    Run run(m, cfg, mld);
    const unsigned limit = std::min(cfg.effective_replay_limit(), vp.width - 1);
    const unsigned alu = alu_ops(p);
    for (const Chunk& chunk : vp.chunks) {
        std::vector<std::uint32_t> masks;
        unsigned replays = 0;
        if (vp.strategy == Strategy::ScalarFallback && m.fallback_engaged) {
            for (unsigned k : chunk.active.lanes()) scalar_iteration(run, p, chunk.base + k, alu);
            run.res.replay_count.push_back(0);
            run.res.replay_masks.push_back({});
            continue;
        }
        const bool region = vp.strategy != Strategy::FlexVec;
        ChunkExec ex(run, p, vp, chunk, region);
        std::vector<Predicate> groups = chunk.sub_iterations;
        if (vp.strategy == Strategy::FlexVec) {
            run.note(marker(EventKind::DepCheck, chunk.active.bits, chunk.base));
            m.clock += cfg.dep_check_latency;
            const auto deps = flexvec_dependences(p, m.memory, chunk.base, chunk.active.count());
            for (const auto& g : flexvec_partition(deps, chunk.active.count())) {
                Predicate pr{0, vp.width};
                for (unsigned k = g.first; k <= g.last; ++k) pr.bits |= 1u << k;
                groups.push_back(pr);
            }
        }
        else {
            run.note(marker(EventKind::RegionStart, chunk.active.bits, chunk.base));
            if (vp.strategy == Strategy::VfencedSRV) run.note(marker(EventKind::Vfence, chunk.active.bits, chunk.base));
        }
        for (const auto& g : groups) ex.pass(g, 0);
        ReplayRegister taint = ex.evaluate(0);
        if (vp.strategy == Strategy::ScalarFallback && !taint.empty()) {
            // Discard the whole vector attempt and finish this and every later
            // chunk in scalar code.
            run.note(marker(EventKind::Squash, chunk.active.bits, chunk.base));
            ++run.res.squash_count;
            m.clock += cfg.squash_penalty;
            m.fallback_engaged = true;
            for (unsigned k : chunk.active.lanes()) scalar_iteration(run, p, chunk.base + k, alu);
            run.res.replay_count.push_back(0);
            run.res.replay_masks.push_back({});
            continue;
        }
        while (!taint.empty()) {
            if (replays >= limit)
                throw ReplayBudgetExceeded("taint persists after " + std::to_string(replays) + " replays in chunk at iteration " +
                    std::to_string(chunk.base));
            ++replays;
            masks.push_back(taint.bits);
            run.note(marker(EventKind::Replay, taint.bits, chunk.base, replays));
            ex.pass({taint.bits, vp.width}, replays);
            taint = ex.evaluate(replays);
        }
        ex.check_faults();
        ex.commit();
        if (region) run.note(marker(EventKind::RegionEnd, chunk.active.bits, chunk.base, replays));
        run.res.replay_count.push_back(replays);
        run.res.replay_masks.push_back(std::move(masks));
    }
    return run.finish();
}

/// Lowers `p` for `cfg.strategy` with `cfg.mitigation` applied.
inline VectorProgram lower_for(const GadgetProgram& p, const CoreConfig& cfg)
{
    VectorProgram vp = vectorize_loop(p, cfg.width, cfg.strategy);
    if (cfg.mitigation == Mitigation::Vfence && vp.strategy == Strategy::SRV) vp = vfence_transform(std::move(vp));
    if (cfg.mitigation == Mitigation::MemFence) vp = insert_fences(std::move(vp), FencePlacement::BetweenStatements);
    return vp;
}

inline ExecResult run_srv(Machine& m, const GadgetProgram& p, const CoreConfig& cfg = {}, MldEngine* mld = nullptr)
{
    cfg.validate();
    if (cfg.mitigation == Mitigation::FenceRecompiledScalar) return run_scalar(m, p, cfg, mld);
    return run_vector(m, p, lower_for(p, cfg), cfg, mld);
}

/// Dispatches on `cfg.strategy`.
inline ExecResult run(Machine& m, const GadgetProgram& p, const CoreConfig& cfg, MldEngine* mld = nullptr)
{
    cfg.validate();
    switch (cfg.strategy) {
        case Strategy::Scalar: return run_scalar(m, p, cfg, mld);
        case Strategy::ScalarOoO: return run_ooo_stl(m, p, cfg, mld);
        default: return run_srv(m, p, cfg, mld);
    }
}

/// Fresh machine over `memory` with the default cache.
inline ExecResult run(const GadgetProgram& p, const Memory& memory, const CoreConfig& cfg, MldEngine* mld = nullptr)
{
    Machine m(memory, CacheConfig::defaults(), cfg);
    return run(m, p, cfg, mld);
}

inline std::pair<ExecResult, MldReport> run_with_mlds(Machine& m, const GadgetProgram& p, const CoreConfig& cfg,
    std::vector<MldPredicate> predicates)
{
    MldEngine engine(std::move(predicates));
    ExecResult r = run(m, p, cfg, &engine);
    return {std::move(r), engine.report()};
}

} // namespace srvsim

#endif
