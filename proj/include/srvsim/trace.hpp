#ifndef SRVSIM_TRACE_HPP
#define SRVSIM_TRACE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "srvsim/common.hpp"

namespace srvsim
{

enum class EventKind
{
    Load,
    Store,
    RegionStart,
    RegionEnd,
    Replay,
    LsqCheck,
    Squash,
    Branch,
    Fence,
    Vfence,
    DepCheck,
    Probe,
    Trash
};

inline const char* to_string(EventKind k)
{
    switch (k) {
        case EventKind::Load: return "load";
        case EventKind::Store: return "store";
        case EventKind::RegionStart: return "region_start";
        case EventKind::RegionEnd: return "region_end";
        case EventKind::Replay: return "replay";
        case EventKind::LsqCheck: return "lsq_check";
        case EventKind::Squash: return "squash";
        case EventKind::Branch: return "branch";
        case EventKind::Fence: return "fence";
        case EventKind::Vfence: return "vfence";
        case EventKind::DepCheck: return "dep_check";
        case EventKind::Probe: return "probe";
        case EventKind::Trash: return "trash";
    }
    return "?";
}

/// One simulator event. Fields that do not apply to a kind keep their
/// defaults.
struct TraceEvent
{
    Tick tick = 0;
    EventKind kind = EventKind::Load;
    std::int64_t instr_seq = -1;
    int lane = -1;
    std::uint64_t iteration = 0;
    unsigned pass = 0;
    Addr addr = 0;
    unsigned size = 0;
    int level = -1;          // cache level that served the access; levels == memory
    Word value = 0;
    bool speculative = false; // issued before the enclosing region or branch resolved
    std::uint64_t vob = 0;
    std::uint64_t hob = 0;
    std::uint32_t mask = 0;  // replay / squash lane mask
    bool predicted = false;
    bool actual = false;

    friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

using Trace = std::vector<TraceEvent>;

} // namespace srvsim

#endif
