#ifndef SRVSIM_VECTORIZE_HPP
#define SRVSIM_VECTORIZE_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "srvsim/isa.hpp"

namespace srvsim
{

enum class Opcode
{
    VGather,
    VScatter,
    VLoadContig,
    VStoreContig,
    VAlu,
    SrvStart,
    SrvEnd,
    Fence,
    Vfence
};

inline const char* to_string(Opcode op)
{
    switch (op) {
        case Opcode::VGather: return "vgather";
        case Opcode::VScatter: return "vscatter";
        case Opcode::VLoadContig: return "vload";
        case Opcode::VStoreContig: return "vstore";
        case Opcode::VAlu: return "valu";
        case Opcode::SrvStart: return "srv_start";
        case Opcode::SrvEnd: return "srv_end";
        case Opcode::Fence: return "fence";
        case Opcode::Vfence: return "vfence";
    }
    return "?";
}

inline bool is_load(Opcode op) { return op == Opcode::VGather || op == Opcode::VLoadContig; }
inline bool is_store(Opcode op) { return op == Opcode::VScatter || op == Opcode::VStoreContig; }
inline bool is_memory(Opcode op) { return is_load(op) || is_store(op); }

enum class Strategy
{
    Scalar,
    ScalarOoO,
    SRV,
    FlexVec,
    ScalarFallback,
    VfencedSRV
};

inline const char* to_string(Strategy s)
{
    switch (s) {
        case Strategy::Scalar: return "scalar";
        case Strategy::ScalarOoO: return "scalar_ooo";
        case Strategy::SRV: return "srv";
        case Strategy::FlexVec: return "flexvec";
        case Strategy::ScalarFallback: return "scalar_fallback";
        case Strategy::VfencedSRV: return "vfenced_srv";
    }
    return "?";
}

inline bool is_vector(Strategy s) { return s != Strategy::Scalar && s != Strategy::ScalarOoO; }

/// Lane mask, bit k = lane k.
struct Predicate
{
    std::uint32_t bits = 0;
    unsigned width = 0;

    static Predicate first_n(unsigned n, unsigned width)
    {
        return {n >= 32 ? 0xffffffffu : ((1u << n) - 1), width};
    }
    static Predicate single(unsigned lane, unsigned width) { return {1u << lane, width}; }

    bool test(unsigned lane) const { return (bits >> lane) & 1u; }
    unsigned count() const { return static_cast<unsigned>(std::popcount(bits)); }
    bool empty() const { return bits == 0; }

    std::vector<unsigned> lanes() const
    {
        std::vector<unsigned> out;
        for (unsigned k = 0; k < width; ++k)
            if (test(k)) out.push_back(k);
        return out;
    }

    friend bool operator==(const Predicate&, const Predicate&) = default;
};

struct VectorInstr
{
    Opcode op = Opcode::VAlu;
    int statement = -1; // originating statement for memory and ALU opcodes
    ExprPtr node;       // Read node for loads, operator node for VAlu
    unsigned width = 0;
};

struct Chunk
{
    std::uint64_t base = 0; // first iteration
    unsigned width = 0;
    Predicate active;
    /// Lane groups executed in order before replay scheduling. Empty for
    /// FlexVec, whose groups come from the runtime dependence check.
    std::vector<Predicate> sub_iterations;
};

/// The loop body is lowered once; every chunk runs the same instruction list.
struct VectorProgram
{
    Strategy strategy = Strategy::SRV;
    unsigned width = 0;
    std::vector<VectorInstr> body;
    std::vector<Chunk> chunks;

    std::uint64_t active_lane_total() const
    {
        std::uint64_t n = 0;
        for (const auto& c : chunks) n += c.active.count();
        return n;
    }
};

namespace vec_detail
{
inline bool unit_stride(const Expr& idx)
{
    if (idx.kind == ExprKind::Induction) return true;
    if (idx.kind != ExprKind::Binary) return false;
    const bool z_lit = idx.a->kind == ExprKind::Induction && idx.b->kind == ExprKind::Literal;
    const bool lit_z = idx.a->kind == ExprKind::Literal && idx.b->kind == ExprKind::Induction;
    return (idx.op == BinOp::Add && (z_lit || lit_z)) || (idx.op == BinOp::Sub && z_lit);
}

inline void lower(const ExprPtr& e, int stmt, unsigned width, std::vector<VectorInstr>& out)
{
    switch (e->kind) {
        case ExprKind::Literal:
        case ExprKind::Induction:
        case ExprKind::Param: return;
        case ExprKind::Read:
            lower(e->a, stmt, width, out);
            out.push_back({unit_stride(*e->a) ? Opcode::VLoadContig : Opcode::VGather, stmt, e, width});
            return;
        case ExprKind::Binary:
            lower(e->a, stmt, width, out);
            lower(e->b, stmt, width, out);
            out.push_back({Opcode::VAlu, stmt, e, width});
            return;
        case ExprKind::Select:
            lower(e->a, stmt, width, out);
            lower(e->b, stmt, width, out);
            lower(e->c, stmt, width, out);
            out.push_back({Opcode::VAlu, stmt, e, width});
            return;
    }
    throw UnsupportedPattern("expression cannot be lowered");
}
} // namespace vec_detail

inline VectorProgram vfence_transform(VectorProgram vp);

inline bool valid_width(unsigned w) { return w == 1 || w == 2 || w == 4 || w == 8 || w == 16 || w == 32; }

/// Lowers the loop body statement by statement. Every lane's loads of one
/// static load become a single vector instruction, so a later iteration's load
/// issues before an earlier iteration's store.
inline VectorProgram vectorize_loop(const GadgetProgram& program, unsigned width, Strategy strategy)
{
    if (!valid_width(width)) throw ValidationError("vector width must be one of 1, 2, 4, 8, 16, 32");
    if (!is_vector(strategy)) throw ValidationError(std::string("strategy '") + to_string(strategy) + "' is not a vector strategy");
    if (strategy == Strategy::VfencedSRV) return vfence_transform(vectorize_loop(program, width, Strategy::SRV));
    VectorProgram vp;
    vp.strategy = strategy;
    vp.width = width;
    const bool region = vp.strategy == Strategy::SRV || vp.strategy == Strategy::ScalarFallback;
    if (region) vp.body.push_back({Opcode::SrvStart, -1, nullptr, width});
    for (std::size_t s = 0; s < program.loop.size(); ++s) {
        const auto& st = program.loop[s];
        const int sid = static_cast<int>(s);
        vec_detail::lower(st.rhs, sid, width, vp.body);
        vec_detail::lower(st.dst_index, sid, width, vp.body);
        vp.body.push_back({vec_detail::unit_stride(*st.dst_index) ? Opcode::VStoreContig : Opcode::VScatter, sid,
            st.dst_index, width});
    }
    if (region) vp.body.push_back({Opcode::SrvEnd, -1, nullptr, width});
    for (std::uint64_t base = 0; base < program.trip_count; base += width) {
        const auto lanes = static_cast<unsigned>(std::min<std::uint64_t>(width, program.trip_count - base));
        Chunk c{base, width, Predicate::first_n(lanes, width), {}};
        if (vp.strategy != Strategy::FlexVec) c.sub_iterations.push_back(c.active);
        vp.chunks.push_back(std::move(c));
    }
    return vp;
}


struct LaneGroup
{
    unsigned first = 0;
    unsigned last = 0; // inclusive
    friend bool operator==(const LaneGroup&, const LaneGroup&) = default;
};

using LaneDep = std::pair<unsigned, unsigned>; // (writer lane, reader lane)

/// Splits [0, width) into consecutive groups; a reader lane whose writer lies
/// in the current group starts a new group. Pairs with writer >= reader are
/// not ordering violations and are ignored.
inline std::vector<LaneGroup> flexvec_partition(const std::set<LaneDep>& deps, unsigned width)
{
    std::vector<LaneGroup> groups;
    if (width == 0) return groups;
    unsigned start = 0;
    for (unsigned r = 1; r < width; ++r) {
        const bool violates = std::any_of(deps.begin(), deps.end(),
            [&](const LaneDep& d) { return d.second == r && d.first >= start && d.first < r; });
        if (violates) {
            groups.push_back({start, r - 1});
            start = r;
        }
    }
    groups.push_back({start, width - 1});
    return groups;
}

/// Runtime dependence check at chunk entry: the exact cross-lane RAW pairs,
/// computed from a scalar execution of the chunk's iterations.
inline std::set<LaneDep> flexvec_dependences(const GadgetProgram& program, const Memory& memory, std::uint64_t base,
    unsigned lanes)
{
    Memory scratch = memory;
    std::vector<std::vector<std::pair<Addr, Addr>>> reads(lanes), writes(lanes);
    for (unsigned k = 0; k < lanes; ++k) {
        const IterationEffect fx = eval_scalar_iter(program, base + k, scratch);
        for (const auto& ev : fx.events)
            (ev.kind == AccessKind::Load ? reads : writes)[k].emplace_back(ev.addr, ev.addr + ev.size);
        apply(scratch, fx);
    }
    std::set<LaneDep> deps;
    for (unsigned r = 0; r < lanes; ++r)
        for (unsigned w = 0; w < r; ++w)
            for (const auto& [wl, wh] : writes[w])
                for (const auto& [rl, rh] : reads[r])
                    if (wl < rh && rl < wh) deps.emplace(w, r);
    return deps;
}

/// Rewrites every SRV chunk into one single-lane sub-iteration per active lane.
inline VectorProgram vfence_transform(VectorProgram vp)
{
    if (vp.strategy != Strategy::SRV) throw ValidationError("vfence_transform requires an SRV program");
    for (auto& c : vp.chunks) {
        c.sub_iterations.clear();
        for (unsigned k : c.active.lanes()) c.sub_iterations.push_back(Predicate::single(k, c.width));
    }
    auto start = std::find_if(vp.body.begin(), vp.body.end(), [](const VectorInstr& i) { return i.op == Opcode::SrvStart; });
    vp.body.insert(start == vp.body.end() ? vp.body.begin() : start + 1, {Opcode::Vfence, -1, nullptr, vp.width});
    vp.strategy = Strategy::VfencedSRV;
    return vp;
}

enum class FencePlacement
{
    BetweenStatements,
    AroundRegion
};

inline VectorProgram insert_fences(VectorProgram vp, FencePlacement placement)
{
    std::vector<VectorInstr> out;
    const VectorInstr fence{Opcode::Fence, -1, nullptr, vp.width};
    if (placement == FencePlacement::AroundRegion) {
        const bool bracketed = std::any_of(vp.body.begin(), vp.body.end(), [](const VectorInstr& i) { return i.op == Opcode::SrvStart; });
        if (!bracketed) out.push_back(fence);
        for (const auto& i : vp.body) {
            if (i.op == Opcode::SrvStart) out.push_back(fence);
            out.push_back(i);
            if (i.op == Opcode::SrvEnd) out.push_back(fence);
        }
        if (!bracketed) out.push_back(fence);
    }
    else {
        int last_stmt = -1;
        for (const auto& i : vp.body) if (i.statement >= 0) last_stmt = std::max(last_stmt, i.statement);
        for (const auto& i : vp.body) {
            out.push_back(i);
            if (is_store(i.op) && i.statement < last_stmt) out.push_back(fence);
        }
    }
    vp.body = std::move(out);
    return vp;
}

} // namespace srvsim

#endif
