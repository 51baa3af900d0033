#ifndef SRVSIM_MLD_HPP
#define SRVSIM_MLD_HPP

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "srvsim/lsu.hpp"
#include "srvsim/memhier.hpp"
#include "srvsim/predictors.hpp"
#include "srvsim/trace.hpp"

namespace srvsim
{

/// Read-only view of machine state handed to leakage predicates. The engine
/// invokes predicates before the event's own state change is applied.
struct StateView
{
    const CacheHierarchy* cache = nullptr;
    const BranchPredictor* branch = nullptr;
    const LsqEntry* entry = nullptr; // set for lsq_check events
};

enum class MldKind
{
    Speculative,
    NonSpeculative
};

/// A micro-architectural leakage descriptor: which events it listens to and
/// when it fires.
struct MldPredicate
{
    std::string name;
    MldKind kind = MldKind::Speculative;
    std::vector<EventKind> subscriptions;
    std::function<bool(const TraceEvent&, const StateView&)> fires;
};

struct MldFiring
{
    std::string mld;
    Tick tick = 0;
    EventKind event = EventKind::Load;
    std::int64_t instr_seq = -1;
    int lane = -1;
    Addr addr = 0;

    friend bool operator==(const MldFiring&, const MldFiring&) = default;
};

struct MldReport
{
    std::vector<MldFiring> firings;

    std::size_t count(const std::string& name) const
    {
        return static_cast<std::size_t>(std::count_if(firings.begin(), firings.end(),
            [&](const MldFiring& f) { return f.mld == name; }));
    }
};

inline std::vector<MldFiring> evaluate_mld_hooks(const TraceEvent& ev, const StateView& state,
    const std::vector<MldPredicate>& predicates)
{
    std::vector<MldFiring> out;
    for (const auto& p : predicates) {
        if (std::find(p.subscriptions.begin(), p.subscriptions.end(), ev.kind) == p.subscriptions.end()) continue;
        if (p.fires(ev, state)) out.push_back({p.name, ev.tick, ev.kind, ev.instr_seq, ev.lane, ev.addr});
    }
    return out;
}

class MldEngine
{
public:
    MldEngine() = default;
    explicit MldEngine(std::vector<MldPredicate> predicates)
        : predicates_(std::move(predicates))
    {
    }

    void add(MldPredicate p) { predicates_.push_back(std::move(p)); }
    const std::vector<MldPredicate>& predicates() const { return predicates_; }

    void on_event(const TraceEvent& ev, const StateView& state)
    {
        for (auto& f : evaluate_mld_hooks(ev, state, predicates_)) report_.firings.push_back(std::move(f));
    }

    const MldReport& report() const { return report_; }
    void clear() { report_ = {}; }

private:
    std::vector<MldPredicate> predicates_;
    MldReport report_;
};

// Built-in predicates.

/// Line was resident at `level` or closer before the access.
inline bool mld_dcache(const TraceEvent& ev, const CacheHierarchy& cache, int level)
{
    for (int l = 0; l <= level && l < cache.memory_level(); ++l)
        if (cache.contains(ev.addr, l)) return true;
    return false;
}

inline bool mld_branch(const TraceEvent& ev) { return ev.predicted != ev.actual; }

inline bool mld_srv(const LsqEntry& entry) { return entry.hob.any(); }

inline MldPredicate mld_dcache_predicate(int level = 0)
{
    return {"mld_dcache", MldKind::NonSpeculative, {EventKind::Load, EventKind::Store, EventKind::Probe},
        [level](const TraceEvent& ev, const StateView& s) { return s.cache && mld_dcache(ev, *s.cache, level); }};
}

inline MldPredicate mld_branch_predicate()
{
    return {"mld_branch", MldKind::Speculative, {EventKind::Branch},
        [](const TraceEvent& ev, const StateView&) { return mld_branch(ev); }};
}

inline MldPredicate mld_srv_predicate()
{
    return {"mld_srv", MldKind::Speculative, {EventKind::LsqCheck},
        [](const TraceEvent&, const StateView& s) { return s.entry && mld_srv(*s.entry); }};
}

inline std::vector<MldPredicate> builtin_mlds(int dcache_level = 0)
{
    return {mld_dcache_predicate(dcache_level), mld_branch_predicate(), mld_srv_predicate()};
}

} // namespace srvsim

#endif
