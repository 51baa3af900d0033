#ifndef SRVSIM_LSU_HPP
#define SRVSIM_LSU_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <utility>
#include <vector>

#include "srvsim/isa.hpp"

namespace srvsim
{

constexpr unsigned kLineBytes = 64;

/// One bit per byte of a 64-byte window.
struct ByteMask
{
    std::uint64_t bits = 0;

    bool any() const { return bits != 0; }
    unsigned count() const { return static_cast<unsigned>(std::popcount(bits)); }
    bool test(unsigned byte) const { return (bits >> byte) & 1u; }

    ByteMask operator&(ByteMask o) const { return {bits & o.bits}; }
    ByteMask operator|(ByteMask o) const { return {bits | o.bits}; }
    ByteMask& operator|=(ByteMask o) { bits |= o.bits; return *this; }
    friend bool operator==(const ByteMask&, const ByteMask&) = default;
};

struct LsqEntry
{
    std::uint64_t instr_seq = 0;
    unsigned lane = 0;
    AccessKind kind = AccessKind::Load;
    Addr addr = 0;
    unsigned size = 0;
    ByteMask vob;
    ByteMask hob;

    Addr window() const { return addr & ~Addr{kLineBytes - 1}; }
};

/// Bytes of `e` inside its own 64-byte window.
inline ByteMask footprint(const LsqEntry& e)
{
    const unsigned off = static_cast<unsigned>(e.addr - e.window());
    const unsigned n = std::min<unsigned>(e.size, kLineBytes - off);
    const std::uint64_t run = n >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
    return {run << off};
}

/// Bytes of `e`'s window that `other` also touches.
inline ByteMask overlap(const LsqEntry& e, const LsqEntry& other)
{
    const Addr w = e.window();
    const Addr lo = std::max(e.addr, other.addr);
    const Addr hi = std::min({e.addr + e.size, other.addr + other.size, w + kLineBytes});
    if (lo >= hi) return {};
    const auto off = static_cast<unsigned>(lo - w);
    const auto n = static_cast<unsigned>(hi - lo);
    const std::uint64_t run = n >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
    return {run << off};
}

/// Horizontal time: `a` precedes `b` when its lane is lower, or in the same
/// lane when it is earlier in program order.
inline bool is_older(const LsqEntry& a, const LsqEntry& b)
{
    return a.lane < b.lane || (a.lane == b.lane && a.instr_seq < b.instr_seq);
}

/// Union of overlaps with the conflicting entries in `candidates`. A load
/// conflicts with stores; a store conflicts with loads and stores.
inline ByteMask compute_vob(const LsqEntry& e, const std::vector<LsqEntry>& candidates)
{
    ByteMask m;
    for (const auto& c : candidates) {
        if (e.kind == AccessKind::Load && c.kind != AccessKind::Store) continue;
        m |= overlap(e, c);
    }
    return m;
}

/// Bytes of `vob` written by a store from a lower lane. Only a load can read
/// a value produced out of horizontal order, so a store's mask is always 0.
inline ByteMask compute_hob(const LsqEntry& e, ByteMask vob, const std::vector<LsqEntry>& candidates)
{
    if (e.kind != AccessKind::Load) return {};
    ByteMask m;
    for (const auto& c : candidates)
        if (c.kind == AccessKind::Store && c.lane < e.lane) m |= overlap(e, c);
    return m & vob;
}

/// Lanes that must replay.
struct ReplayRegister
{
    std::uint32_t bits = 0;

    bool empty() const { return bits == 0; }
    bool test(unsigned lane) const { return (bits >> lane) & 1u; }
    unsigned count() const { return static_cast<unsigned>(std::popcount(bits)); }
    unsigned lowest() const { return static_cast<unsigned>(std::countr_zero(bits)); }
    friend bool operator==(const ReplayRegister&, const ReplayRegister&) = default;
};

inline ReplayRegister mark_replay(const std::vector<LsqEntry>& entries)
{
    ReplayRegister r;
    for (const auto& e : entries)
        if (e.hob.any()) r.bits |= 1u << e.lane;
    return r;
}

/// LSQ of one vector region across all of its passes. Entries are kept in
/// execution order; squashed entries stay for the forwarding check.
class RegionLsq
{
public:
    struct Slot
    {
        LsqEntry entry;
        Word value = 0;   // loaded or stored value
        bool live = true; // false once its lane has been squashed
        std::vector<std::size_t> forwarded_from;
    };

    void clear() { slots_.clear(); }

    std::size_t add(const LsqEntry& e, Word value, std::vector<std::size_t> forwarded_from = {})
    {
        slots_.push_back({e, value, true, std::move(forwarded_from)});
        return slots_.size() - 1;
    }

    void squash(std::uint32_t lanes)
    {
        for (auto& s : slots_)
            if ((lanes >> s.entry.lane) & 1u) s.live = false;
    }

    const std::vector<Slot>& slots() const { return slots_; }

    /// Value seen by a load from `lane` at program position `seq`: memory as
    /// of region entry, overlaid with every live store that is older in
    /// horizontal time, applied oldest first. Returns the slots it read from.
    std::pair<Word, std::vector<std::size_t>> forward(const Memory& memory, Addr addr, unsigned size, unsigned lane,
        std::uint64_t seq) const
    {
        std::vector<std::size_t> src;
        for (std::size_t i = 0; i < slots_.size(); ++i) {
            const auto& s = slots_[i];
            if (!s.live || s.entry.kind != AccessKind::Store) continue;
            if (!(s.entry.lane < lane || (s.entry.lane == lane && s.entry.instr_seq < seq))) continue;
            if (s.entry.addr < addr + size && addr < s.entry.addr + s.entry.size) src.push_back(i);
        }
        std::stable_sort(src.begin(), src.end(),
            [&](std::size_t a, std::size_t b) { return is_older(slots_[a].entry, slots_[b].entry); });
        std::vector<WriteRecord> overlay;
        for (std::size_t i : src) overlay.push_back({slots_[i].entry.addr, slots_[i].entry.size, slots_[i].value});
        return {detail::overlaid_load(memory, overlay, addr, size), src};
    }

    /// Entries a slot is checked against. A load is checked against the
    /// stores that executed after it, plus any since-squashed store it read
    /// from. A store is checked against earlier accesses of other instructions.
    std::vector<LsqEntry> candidates(std::size_t i) const
    {
        std::vector<LsqEntry> out;
        const auto& self = slots_[i];
        if (self.entry.kind == AccessKind::Load) {
            for (std::size_t j = i + 1; j < slots_.size(); ++j)
                if (slots_[j].live && slots_[j].entry.kind == AccessKind::Store) out.push_back(slots_[j].entry);
            for (std::size_t j : self.forwarded_from)
                if (!slots_[j].live) out.push_back(slots_[j].entry);
        }
        else {
            for (std::size_t j = 0; j < i; ++j)
                if (slots_[j].live && slots_[j].entry.instr_seq != self.entry.instr_seq)
                    out.push_back(slots_[j].entry);
        }
        return out;
    }

    /// Recomputes VOB/HOB for every live entry; returns the live entries.
    std::vector<LsqEntry> evaluate()
    {
        std::vector<LsqEntry> live;
        for (std::size_t i = 0; i < slots_.size(); ++i) {
            auto& s = slots_[i];
            if (!s.live) continue;
            const auto cands = candidates(i);
            s.entry.vob = compute_vob(s.entry, cands);
            s.entry.hob = compute_hob(s.entry, s.entry.vob, cands);
            live.push_back(s.entry);
        }
        return live;
    }

    /// Live stores in horizontal order, ready to commit.
    std::vector<WriteRecord> commit_order() const
    {
        std::vector<const Slot*> st;
        for (const auto& s : slots_)
            if (s.live && s.entry.kind == AccessKind::Store) st.push_back(&s);
        std::stable_sort(st.begin(), st.end(), [](const Slot* a, const Slot* b) { return is_older(a->entry, b->entry); });
        std::vector<WriteRecord> out;
        for (const auto* s : st) out.push_back({s->entry.addr, s->entry.size, s->value});
        return out;
    }

private:
    std::vector<Slot> slots_;
};

} // namespace srvsim

#endif
