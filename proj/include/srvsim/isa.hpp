#ifndef SRVSIM_ISA_HPP
#define SRVSIM_ISA_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "srvsim/common.hpp"

namespace srvsim
{

// ---------------------------------------------------------------------------
// Loop IR
// ---------------------------------------------------------------------------

enum class ExprKind
{
    Literal,
    Induction,
    Param,
    Read,
    Binary,
    Select
};

enum class BinOp
{
    Add,
    Sub,
    Mul,
    Xor,
    Shl,
    Shr,
    LogAnd,
    LogOr,
    Eq,
    Ne,
    Lt
};

inline const char* to_string(BinOp op)
{
    switch (op) {
        case BinOp::Add: return "+";
        case BinOp::Sub: return "-";
        case BinOp::Mul: return "*";
        case BinOp::Xor: return "^";
        case BinOp::Shl: return "<<";
        case BinOp::Shr: return ">>";
        case BinOp::LogAnd: return "&&";
        case BinOp::LogOr: return "||";
        case BinOp::Eq: return "==";
        case BinOp::Ne: return "!=";
        case BinOp::Lt: return "<";
    }
    return "?";
}

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Immutable expression node. Index expressions use the same node type: an
/// array read's `index` is any expression whose nested read depth is at most 2.
struct Expr
{
    ExprKind kind = ExprKind::Literal;
    Word literal = 0;
    std::string name; // array (Read) or parameter (Param)
    BinOp op = BinOp::Add;
    ExprPtr a; // Read: index; Binary: lhs; Select: condition
    ExprPtr b; // Binary: rhs; Select: value if true
    ExprPtr c; // Select: value if false
};

namespace expr
{
inline ExprPtr lit(Word v)
{
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Literal;
    e->literal = v;
    return e;
}

inline ExprPtr z()
{
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Induction;
    return e;
}

inline ExprPtr param(std::string name)
{
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Param;
    e->name = std::move(name);
    return e;
}

inline ExprPtr read(std::string array, ExprPtr index)
{
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Read;
    e->name = std::move(array);
    e->a = std::move(index);
    return e;
}

inline ExprPtr bin(BinOp op, ExprPtr lhs, ExprPtr rhs)
{
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Binary;
    e->op = op;
    e->a = std::move(lhs);
    e->b = std::move(rhs);
    return e;
}

inline ExprPtr select(ExprPtr cond, ExprPtr if_true, ExprPtr if_false)
{
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Select;
    e->a = std::move(cond);
    e->b = std::move(if_true);
    e->c = std::move(if_false);
    return e;
}
} // namespace expr

inline bool structurally_equal(const ExprPtr& x, const ExprPtr& y)
{
    if (!x || !y) return !x && !y;
    if (x->kind != y->kind) return false;
    switch (x->kind) {
        case ExprKind::Literal: return x->literal == y->literal;
        case ExprKind::Induction: return true;
        case ExprKind::Param: return x->name == y->name;
        case ExprKind::Read: return x->name == y->name && structurally_equal(x->a, y->a);
        case ExprKind::Binary:
            return x->op == y->op && structurally_equal(x->a, y->a) && structurally_equal(x->b, y->b);
        case ExprKind::Select:
            return structurally_equal(x->a, y->a) && structurally_equal(x->b, y->b) &&
                structurally_equal(x->c, y->c);
    }
    return false;
}

/// Number of nested array reads, counting the node itself.
inline int read_depth(const Expr& e)
{
    switch (e.kind) {
        case ExprKind::Literal:
        case ExprKind::Induction:
        case ExprKind::Param: return 0;
        case ExprKind::Read: return 1 + read_depth(*e.a);
        case ExprKind::Binary: return std::max(read_depth(*e.a), read_depth(*e.b));
        case ExprKind::Select:
            return std::max({read_depth(*e.a), read_depth(*e.b), read_depth(*e.c)});
    }
    return 0;
}

inline bool references_memory(const Expr& e) { return read_depth(e) > 0; }

struct ArrayLink
{
    std::string target;
    std::uint64_t offset = 0; // element offset of `target` relative to this array
    friend bool operator==(const ArrayLink&, const ArrayLink&) = default;
};

struct ArrayDecl
{
    std::string name;
    unsigned elem_size = 1;
    std::uint64_t length = 0;
    std::optional<ArrayLink> link;

    std::uint64_t bytes() const { return length * elem_size; }
    friend bool operator==(const ArrayDecl&, const ArrayDecl&) = default;
};

struct Statement
{
    std::string dst;
    ExprPtr dst_index;
    ExprPtr rhs;
};

struct ElementInit
{
    std::string array;
    std::uint64_t index = 0;
    Word value = 0;
    friend bool operator==(const ElementInit&, const ElementInit&) = default;
};

struct Probe
{
    std::string array;
    std::uint64_t index = 0;
    friend bool operator==(const Probe&, const Probe&) = default;
};

struct GadgetProgram
{
    std::vector<ArrayDecl> arrays;
    std::vector<std::pair<std::string, Word>> params;
    std::vector<ElementInit> prologue;
    std::uint64_t trip_count = 0;
    std::vector<Statement> loop;
    std::vector<Probe> epilogue;

    const ArrayDecl* find_array(const std::string& name) const
    {
        for (const auto& a : arrays)
            if (a.name == name) return &a;
        return nullptr;
    }

    std::optional<Word> param(const std::string& name) const
    {
        for (const auto& [k, v] : params)
            if (k == name) return v;
        return std::nullopt;
    }

    void set_param(const std::string& name, Word value)
    {
        for (auto& [k, v] : params)
            if (k == name) {
                v = value;
                return;
            }
        params.emplace_back(name, value);
    }

    /// True when some other array declares `name` as its linked region.
    bool is_link_target(const std::string& name) const
    {
        return std::any_of(arrays.begin(), arrays.end(),
            [&](const ArrayDecl& a) { return a.link && a.link->target == name; });
    }
};

inline bool operator==(const Statement& x, const Statement& y)
{
    return x.dst == y.dst && structurally_equal(x.dst_index, y.dst_index) &&
        structurally_equal(x.rhs, y.rhs);
}

inline bool operator==(const GadgetProgram& x, const GadgetProgram& y)
{
    return x.arrays == y.arrays && x.params == y.params && x.prologue == y.prologue &&
        x.trip_count == y.trip_count && x.loop == y.loop && x.epilogue == y.epilogue;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail
{
inline void validate_expr(const GadgetProgram& p, const Expr& e, const std::string& where)
{
    switch (e.kind) {
        case ExprKind::Literal:
        case ExprKind::Induction: return;
        case ExprKind::Param:
            if (!p.param(e.name)) throw ValidationError(where + ": undeclared parameter '" + e.name + "'");
            return;
        case ExprKind::Read:
            if (!p.find_array(e.name)) throw ValidationError(where + ": undeclared array '" + e.name + "'");
            if (read_depth(*e.a) > 2)
                throw ValidationError(where + ": indirection depth exceeds 2 in index of '" + e.name + "'");
            validate_expr(p, *e.a, where);
            return;
        case ExprKind::Binary:
            if (e.op == BinOp::Shl || e.op == BinOp::Shr) {
                if (e.b->kind != ExprKind::Literal || e.b->literal < 0 || e.b->literal >= 64)
                    throw ValidationError(where + ": shift amount must be a literal in [0, 64)");
            }
            validate_expr(p, *e.a, where);
            validate_expr(p, *e.b, where);
            return;
        case ExprKind::Select:
            if (references_memory(*e.a))
                throw ValidationError(where + ": select condition must not read memory");
            validate_expr(p, *e.a, where);
            validate_expr(p, *e.b, where);
            validate_expr(p, *e.c, where);
            return;
    }
}

inline bool element_in_bounds(const GadgetProgram& p, const ArrayDecl& a, std::uint64_t index)
{
    if (index < a.length) return true;
    if (!a.link) return false;
    const auto* t = p.find_array(a.link->target);
    if (!t) return false;
    const std::uint64_t lo = a.link->offset * a.elem_size;
    const std::uint64_t byte = index * a.elem_size;
    return byte >= lo && byte + a.elem_size <= lo + t->bytes();
}
} // namespace detail

/// Throws ValidationError naming the first violated invariant.
inline void validate(const GadgetProgram& p)
{
    for (std::size_t i = 0; i < p.arrays.size(); ++i) {
        const auto& a = p.arrays[i];
        if (a.name.empty() || a.name == "z") throw ValidationError("invalid array name '" + a.name + "'");
        if (a.elem_size != 1 && a.elem_size != 4 && a.elem_size != 8)
            throw ValidationError("array '" + a.name + "': elem_size must be 1, 4 or 8");
        if (a.length == 0) throw ValidationError("array '" + a.name + "': length must be positive");
        if (a.length > (std::uint64_t{1} << 40))
            throw ValidationError("array '" + a.name + "': length overflows the address space");
        for (std::size_t j = 0; j < i; ++j)
            if (p.arrays[j].name == a.name) throw ValidationError("array '" + a.name + "' declared twice");
        if (a.link) {
            const auto* t = p.find_array(a.link->target);
            if (!t) throw ValidationError("array '" + a.name + "': linked array '" + a.link->target + "' not declared");
            if (t == &a) throw ValidationError("array '" + a.name + "' cannot link to itself");
            if (t->link) throw ValidationError("linked array '" + t->name + "' cannot itself declare a link");
            if (a.link->offset < a.length)
                throw ValidationError("array '" + a.name + "': link offset overlaps the array itself");
            if ((a.link->offset * a.elem_size) % t->elem_size != 0)
                throw ValidationError("array '" + a.name + "': linked array would be misaligned");
            for (std::size_t j = 0; j < p.arrays.size(); ++j)
                if (j != i && p.arrays[j].link && p.arrays[j].link->target == a.link->target)
                    throw ValidationError("array '" + a.link->target + "' is linked more than once");
        }
    }
    for (std::size_t i = 0; i < p.params.size(); ++i) {
        if (p.params[i].first == "z" || p.find_array(p.params[i].first))
            throw ValidationError("parameter '" + p.params[i].first + "' shadows a reserved name");
        for (std::size_t j = 0; j < i; ++j)
            if (p.params[j].first == p.params[i].first)
                throw ValidationError("parameter '" + p.params[i].first + "' declared twice");
    }
    if (p.trip_count < 1) throw ValidationError("trip_count must be at least 1");
    if (p.loop.empty()) throw ValidationError("loop has no statements");
    for (std::size_t s = 0; s < p.loop.size(); ++s) {
        const auto& st = p.loop[s];
        const std::string where = "statement " + std::to_string(s);
        const auto* dst = p.find_array(st.dst);
        if (!dst) throw ValidationError(where + ": undeclared array '" + st.dst + "'");
        if (p.is_link_target(st.dst)) throw ValidationError(where + ": array '" + st.dst + "' is not writable");
        if (read_depth(*st.dst_index) > 2) throw ValidationError(where + ": indirection depth exceeds 2 in store index");
        detail::validate_expr(p, *st.dst_index, where);
        detail::validate_expr(p, *st.rhs, where);
    }
    for (const auto& init : p.prologue) {
        const auto* a = p.find_array(init.array);
        if (!a) throw ValidationError("init: undeclared array '" + init.array + "'");
        if (init.index >= a->length) throw ValidationError("init: index out of bounds for '" + init.array + "'");
    }
    for (const auto& probe : p.epilogue) {
        const auto* a = p.find_array(probe.array);
        if (!a) throw ValidationError("probe: undeclared array '" + probe.array + "'");
        if (!detail::element_in_bounds(p, *a, probe.index))
            throw ValidationError("probe: index out of bounds for '" + probe.array + "'");
    }
}

// ---------------------------------------------------------------------------
// Memory layout
// ---------------------------------------------------------------------------

struct LayoutOptions
{
    Addr page_size = 4096;
    Addr origin = 0x100000;
    std::uint64_t memory_bytes = std::uint64_t{1} << 32;
    std::uint64_t seed = 0;
    unsigned max_gap_pages = 3; // extra seed-dependent guard pages between arrays
};

struct Placement
{
    std::string name;
    Addr base = 0;
    std::uint64_t bytes = 0;
};

using AddressMap = std::vector<Placement>;

inline const Placement& placement_of(const AddressMap& map, const std::string& name)
{
    for (const auto& p : map)
        if (p.name == name) return p;
    throw ValidationError("array '" + name + "' has no placement");
}

/// Page-aligned placement with at least one empty page between unrelated
/// arrays. A linked array is placed at its declared element offset from the
/// array that links to it.
inline AddressMap layout_memory(const GadgetProgram& program, const LayoutOptions& opt = {})
{
    if (!is_power_of_two(opt.page_size) || opt.page_size < 4096)
        throw ValidationError("page_size must be a power of two >= 4096");
    std::mt19937_64 rng(opt.seed);
    AddressMap map;
    Addr cursor = align_up(opt.origin, opt.page_size);
    for (const auto& a : program.arrays) {
        if (program.is_link_target(a.name)) continue;
        const Addr base = cursor;
        Addr end = base + a.bytes();
        map.push_back({a.name, base, a.bytes()});
        if (a.link) {
            const auto* t = program.find_array(a.link->target);
            const Addr tbase = base + a.link->offset * a.elem_size;
            map.push_back({t->name, tbase, t->bytes()});
            end = std::max(end, tbase + t->bytes());
        }
        const unsigned gap = opt.max_gap_pages ? static_cast<unsigned>(rng() % (opt.max_gap_pages + 1)) : 0;
        cursor = align_up(end, opt.page_size) + opt.page_size * (1 + gap);
        if (cursor - opt.origin > opt.memory_bytes)
            throw CapacityError("program footprint exceeds the simulated memory of " +
                std::to_string(opt.memory_bytes) + " bytes");
    }
    return map;
}

// ---------------------------------------------------------------------------
// Memory image
// ---------------------------------------------------------------------------

enum class AccessKind
{
    Load,
    Store
};

inline const char* to_string(AccessKind k) { return k == AccessKind::Load ? "load" : "store"; }

/// Byte-addressed image of every declared array. Values are little-endian;
/// loads zero-extend and stores truncate to the element size.
class Memory
{
public:
    struct Region
    {
        std::string name;
        Addr base = 0;
        unsigned elem_size = 1;
        std::uint64_t length = 0;
        int linked = -1;
        std::vector<std::uint8_t> bytes;

        Addr end() const { return base + bytes.size(); }
        friend bool operator==(const Region&, const Region&) = default;
    };

    Memory() = default;

    Memory(const GadgetProgram& program, const AddressMap& map)
    {
        for (const auto& a : program.arrays) {
            Region r;
            r.name = a.name;
            r.base = placement_of(map, a.name).base;
            r.elem_size = a.elem_size;
            r.length = a.length;
            r.bytes.assign(a.bytes(), 0);
            regions_.push_back(std::move(r));
        }
        for (std::size_t i = 0; i < program.arrays.size(); ++i)
            if (const auto& l = program.arrays[i].link) regions_[i].linked = index_of(l->target);
        for (const auto& init : program.prologue) set_element(init.array, init.index, init.value);
    }

    int index_of(const std::string& name) const
    {
        for (std::size_t i = 0; i < regions_.size(); ++i)
            if (regions_[i].name == name) return static_cast<int>(i);
        throw ValidationError("unknown array '" + name + "'");
    }

    const Region& region(int i) const { return regions_.at(i); }
    const std::vector<Region>& regions() const { return regions_; }

    /// Address of element `index` of region `r`, honoring a declared link.
    Addr element_address(int r, Word index) const
    {
        const Region& reg = regions_[r];
        if (index >= 0 && static_cast<std::uint64_t>(index) < reg.length)
            return reg.base + static_cast<Addr>(index) * reg.elem_size;
        if (index >= 0 && reg.linked >= 0) {
            const Region& t = regions_[reg.linked];
            const Addr addr = reg.base + static_cast<Addr>(index) * reg.elem_size;
            if (addr >= t.base && addr + reg.elem_size <= t.end()) return addr;
        }
        throw OutOfBounds("index " + std::to_string(index) + " out of bounds for array '" + reg.name + "'");
    }

    Addr element_address(const std::string& name, Word index) const
    {
        return element_address(index_of(name), index);
    }

    Word load(Addr addr, unsigned size) const
    {
        const Region& r = containing(addr, size);
        std::uint64_t v = 0;
        std::memcpy(&v, r.bytes.data() + (addr - r.base), size);
        return static_cast<Word>(v);
    }

    void store(Addr addr, unsigned size, Word value)
    {
        Region& r = regions_[static_cast<std::size_t>(&containing(addr, size) - regions_.data())];
        const auto v = static_cast<std::uint64_t>(value);
        std::memcpy(r.bytes.data() + (addr - r.base), &v, size);
    }

    std::uint8_t byte(Addr addr) const
    {
        const Region& r = containing(addr, 1);
        return r.bytes[addr - r.base];
    }

    Word element(const std::string& name, Word index) const
    {
        const int r = index_of(name);
        return load(element_address(r, index), regions_[r].elem_size);
    }

    void set_element(const std::string& name, Word index, Word value)
    {
        const int r = index_of(name);
        store(element_address(r, index), regions_[r].elem_size, value);
    }

    friend bool operator==(const Memory&, const Memory&) = default;

private:
    const Region& containing(Addr addr, unsigned size) const
    {
        for (const auto& r : regions_)
            if (addr >= r.base && addr + size <= r.end()) return r;
        throw OutOfBounds("address 0x" + to_hex(addr) + " is not inside any declared array");
    }

    static std::string to_hex(Addr a)
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(a));
        return buf;
    }

    std::vector<Region> regions_;
};

// ---------------------------------------------------------------------------
// Scalar reference semantics
// ---------------------------------------------------------------------------

inline Word apply_binop(BinOp op, Word x, Word y)
{
    const auto ux = static_cast<std::uint64_t>(x);
    const auto uy = static_cast<std::uint64_t>(y);
    switch (op) {
        case BinOp::Add: return static_cast<Word>(ux + uy);
        case BinOp::Sub: return static_cast<Word>(ux - uy);
        case BinOp::Mul: return static_cast<Word>(ux * uy);
        case BinOp::Xor: return static_cast<Word>(ux ^ uy);
        case BinOp::Shl: return static_cast<Word>(ux << (uy & 63));
        case BinOp::Shr: return static_cast<Word>(ux >> (uy & 63));
        case BinOp::LogAnd: return (x != 0 && y != 0) ? 1 : 0;
        case BinOp::LogOr: return (x != 0 || y != 0) ? 1 : 0;
        case BinOp::Eq: return x == y ? 1 : 0;
        case BinOp::Ne: return x != y ? 1 : 0;
        case BinOp::Lt: return x < y ? 1 : 0;
    }
    return 0;
}

/// Evaluates `e` for iteration `z`. `read(node, index)` performs the array
/// read for a Read node whose index has already been evaluated.
template<class ReadFn>
Word evaluate(const Expr& e, Word z, const GadgetProgram& program, ReadFn&& read)
{
    switch (e.kind) {
        case ExprKind::Literal: return e.literal;
        case ExprKind::Induction: return z;
        case ExprKind::Param: return *program.param(e.name);
        case ExprKind::Read: {
            const Word index = evaluate(*e.a, z, program, read);
            return read(e, index);
        }
        case ExprKind::Binary: {
            const Word x = evaluate(*e.a, z, program, read);
            const Word y = evaluate(*e.b, z, program, read);
            return apply_binop(e.op, x, y);
        }
        case ExprKind::Select: {
            // Both arms are evaluated, as in predicated vector code.
            const Word cond = evaluate(*e.a, z, program, read);
            const Word t = evaluate(*e.b, z, program, read);
            const Word f = evaluate(*e.c, z, program, read);
            return cond ? t : f;
        }
    }
    return 0;
}

struct AccessEvent
{
    AccessKind kind = AccessKind::Load;
    int statement = 0;
    int region = 0;
    Addr addr = 0;
    unsigned size = 0;
    Word value = 0;

    friend bool operator==(const AccessEvent&, const AccessEvent&) = default;
};

struct WriteRecord
{
    Addr addr = 0;
    unsigned size = 0;
    Word value = 0;
};

struct IterationEffect
{
    std::vector<AccessEvent> events;
    std::vector<WriteRecord> writes;
};

namespace detail
{
/// Memory view with a list of pending writes overlaid byte-wise in order.
inline Word overlaid_load(const Memory& mem, const std::vector<WriteRecord>& overlay, Addr addr, unsigned size)
{
    auto v = static_cast<std::uint64_t>(mem.load(addr, size));
    for (const auto& w : overlay) {
        const Addr lo = std::max(addr, w.addr);
        const Addr hi = std::min(addr + size, w.addr + w.size);
        for (Addr b = lo; b < hi; ++b) {
            const auto byte = (static_cast<std::uint64_t>(w.value) >> (8 * (b - w.addr))) & 0xff;
            const unsigned shift = 8 * static_cast<unsigned>(b - addr);
            v = (v & ~(std::uint64_t{0xff} << shift)) | (byte << shift);
        }
    }
    return static_cast<Word>(v);
}

inline Word truncate(Word v, unsigned size)
{
    if (size >= 8) return v;
    return static_cast<Word>(static_cast<std::uint64_t>(v) & ((std::uint64_t{1} << (8 * size)) - 1));
}
} // namespace detail

/// Executes every statement of iteration `z` in order without touching
/// `memory`; later statements observe earlier statements' writes. `on_load`
/// sees each load (with the writes so far) and may replace its value.
template<class LoadHook>
IterationEffect eval_iteration(const GadgetProgram& program, Word z, const Memory& memory, LoadHook&& on_load)
{
    IterationEffect fx;
    for (std::size_t s = 0; s < program.loop.size(); ++s) {
        const auto& st = program.loop[s];
        auto read = [&](const Expr& node, Word index) {
            const int r = memory.index_of(node.name);
            const Addr addr = memory.element_address(r, index);
            const unsigned size = memory.region(r).elem_size;
            AccessEvent ev{AccessKind::Load, static_cast<int>(s), r, addr, size,
                detail::overlaid_load(memory, fx.writes, addr, size)};
            on_load(ev, fx.writes);
            fx.events.push_back(ev);
            return ev.value;
        };
        const Word value = evaluate(*st.rhs, z, program, read);
        const Word index = evaluate(*st.dst_index, z, program, read);
        const int r = memory.index_of(st.dst);
        const Addr addr = memory.element_address(r, index);
        const unsigned size = memory.region(r).elem_size;
        const Word stored = detail::truncate(value, size);
        fx.events.push_back({AccessKind::Store, static_cast<int>(s), r, addr, size, stored});
        fx.writes.push_back({addr, size, stored});
    }
    return fx;
}

inline IterationEffect eval_scalar_iter(const GadgetProgram& program, std::uint64_t z, const Memory& memory)
{
    if (z >= program.trip_count)
        throw ValidationError("iteration " + std::to_string(z) + " is outside the trip count");
    return eval_iteration(program, static_cast<Word>(z), memory, [](AccessEvent&, const std::vector<WriteRecord>&) {});
}

inline void apply(Memory& memory, const IterationEffect& fx)
{
    for (const auto& w : fx.writes) memory.store(w.addr, w.size, w.value);
}

/// Convenience: lays out `program` and returns its initialized memory image.
inline Memory make_memory(const GadgetProgram& program, const LayoutOptions& opt = {})
{
    return Memory(program, layout_memory(program, opt));
}

} // namespace srvsim

#endif
