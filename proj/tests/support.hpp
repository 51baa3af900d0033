#ifndef SRVSIM_TESTS_SUPPORT_HPP
#define SRVSIM_TESTS_SUPPORT_HPP

// Shared test fixtures: a random gadget generator, a reference interpreter
// that shares no code with the simulator, and the hand-computed Listing-2
// fixture.

#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "srvsim/srvsim.hpp"

namespace testsupport
{

using srvsim::Word;

inline const std::vector<Word> kListing2Index{3, 0, 1, 2, 7, 4, 5, 6, 11, 8, 9, 10, 15, 12, 13, 14};

inline std::string listing2_source()
{
    std::ostringstream os;
    os << "array a 4 16\narray x 4 16\n";
    for (std::size_t i = 0; i < kListing2Index.size(); ++i) os << "init x[" << i << "] = " << kListing2Index[i] << "\n";
    os << "init a[*] = z * 10\n";
    os << "for z in 0..16 { a[x[z]] = a[z] + 2 }\n";
    return os.str();
}

/// Plain loop over C arrays, written out by hand.
inline std::vector<Word> listing2_expected()
{
    std::vector<Word> a(16);
    for (int i = 0; i < 16; ++i) a[i] = 10 * i;
    for (int z = 0; z < 16; ++z) a[kListing2Index[z]] = a[z] + 2;
    return a;
}

// ---------------------------------------------------------------------------
// Reference interpreter: arrays as vectors of element values, no addresses.
// ---------------------------------------------------------------------------

struct RefArray
{
    unsigned elem = 4;
    std::vector<Word> v;
};

using RefMemory = std::map<std::string, RefArray>;

inline Word ref_trunc(Word v, unsigned elem)
{
    if (elem == 8) return v;
    return static_cast<Word>(static_cast<std::uint64_t>(v) & ((std::uint64_t{1} << (8 * elem)) - 1));
}

inline RefMemory ref_memory(const srvsim::GadgetProgram& p)
{
    RefMemory m;
    for (const auto& a : p.arrays) m[a.name] = {a.elem_size, std::vector<Word>(a.length, 0)};
    for (const auto& i : p.prologue) m[i.array].v[i.index] = ref_trunc(i.value, m[i.array].elem);
    return m;
}

inline Word ref_eval(const srvsim::Expr& e, Word z, const srvsim::GadgetProgram& p, const RefMemory& m)
{
    using srvsim::BinOp;
    using srvsim::ExprKind;
    switch (e.kind) {
        case ExprKind::Literal: return e.literal;
        case ExprKind::Induction: return z;
        case ExprKind::Param: return *p.param(e.name);
        case ExprKind::Read: return m.at(e.name).v.at(static_cast<std::size_t>(ref_eval(*e.a, z, p, m)));
        case ExprKind::Select: return ref_eval(*e.a, z, p, m) ? ref_eval(*e.b, z, p, m) : ref_eval(*e.c, z, p, m);
        case ExprKind::Binary: {
            const auto x = static_cast<std::uint64_t>(ref_eval(*e.a, z, p, m));
            const auto y = static_cast<std::uint64_t>(ref_eval(*e.b, z, p, m));
            switch (e.op) {
                case BinOp::Add: return static_cast<Word>(x + y);
                case BinOp::Sub: return static_cast<Word>(x - y);
                case BinOp::Mul: return static_cast<Word>(x * y);
                case BinOp::Xor: return static_cast<Word>(x ^ y);
                case BinOp::Shl: return static_cast<Word>(x << y);
                case BinOp::Shr: return static_cast<Word>(x >> y);
                case BinOp::LogAnd: return (x && y) ? 1 : 0;
                case BinOp::LogOr: return (x || y) ? 1 : 0;
                case BinOp::Eq: return x == y ? 1 : 0;
                case BinOp::Ne: return x != y ? 1 : 0;
                case BinOp::Lt: return static_cast<Word>(x) < static_cast<Word>(y) ? 1 : 0;
            }
        }
    }
    return 0;
}

inline RefMemory ref_run(const srvsim::GadgetProgram& p)
{
    RefMemory m = ref_memory(p);
    for (std::uint64_t z = 0; z < p.trip_count; ++z)
        for (const auto& st : p.loop) {
            const Word v = ref_eval(*st.rhs, static_cast<Word>(z), p, m);
            const Word i = ref_eval(*st.dst_index, static_cast<Word>(z), p, m);
            auto& dst = m.at(st.dst);
            dst.v.at(static_cast<std::size_t>(i)) = ref_trunc(v, dst.elem);
        }
    return m;
}

inline bool matches(const RefMemory& ref, const srvsim::Memory& mem)
{
    for (const auto& [name, arr] : ref)
        for (std::size_t i = 0; i < arr.v.size(); ++i)
            if (mem.element(name, static_cast<Word>(i)) != arr.v[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Random gadgets
// ---------------------------------------------------------------------------

/// Programs over two writable arrays `a`, `b` and read-only index arrays `x`,
/// `y` whose values stay inside the trip count, so every access is in
/// bounds. Indices into writable arrays are z, z + c, x[z], x[z + c] or
/// y[x[z]]; writable arrays are never used as indices.
struct GadgetGen
{
    std::mt19937_64 rng;
    unsigned trip = 16;
    unsigned slack = 4;

    explicit GadgetGen(std::uint64_t seed)
        : rng(seed)
    {
    }

    unsigned pick(unsigned n) { return static_cast<unsigned>(rng() % n); }

    std::string index_expr()
    {
        switch (pick(6)) {
            case 0: return "z";
            case 1: return "z + " + std::to_string(pick(slack));
            case 2:
            case 3: return "x[z]";
            case 4: return "x[z + " + std::to_string(pick(slack)) + "]";
            default: return "y[x[z]]";
        }
    }

    std::string leaf()
    {
        switch (pick(5)) {
            case 0: return std::to_string(pick(100));
            case 1: return "z";
            case 2: return "b[" + index_expr() + "]";
            default: return "a[" + index_expr() + "]";
        }
    }

    std::string value_expr(int depth = 0)
    {
        if (depth > 1 || pick(3) == 0) return leaf();
        static const char* const ops[] = {"+", "-", "*", "^", "==", "!=", "<", "&&", "||"};
        if (pick(10) == 0) return "(z < " + std::to_string(pick(trip)) + " ? " + value_expr(depth + 1) + " : " + leaf() + ")";
        if (pick(8) == 0) return "(" + leaf() + " >> " + std::to_string(pick(4)) + ")";
        return "(" + value_expr(depth + 1) + " " + ops[pick(9)] + " " + value_expr(depth + 1) + ")";
    }

    /// `permutation`: x[0..trip) is a permutation of the iterations.
    std::string source(unsigned statements = 0, bool permutation = false)
    {
        static const unsigned elems[] = {1, 4, 8};
        const unsigned len = trip + slack;
        std::ostringstream os;
        os << "array a " << elems[pick(3)] << ' ' << len << "\n";
        os << "array b " << elems[pick(3)] << ' ' << len << "\n";
        os << "array x 4 " << len << "\n";
        os << "array y 4 " << len << "\n";
        std::vector<unsigned> perm(len);
        for (unsigned i = 0; i < len; ++i) perm[i] = i % trip;
        if (permutation) std::shuffle(perm.begin(), perm.begin() + trip, rng);
        for (unsigned i = 0; i < len; ++i) {
            os << "init x[" << i << "] = " << (permutation ? perm[i] : pick(trip)) << "\n";
            os << "init y[" << i << "] = " << pick(trip) << "\n";
            os << "init a[" << i << "] = " << pick(200) << "\n";
            os << "init b[" << i << "] = " << pick(200) << "\n";
        }
        const unsigned n = statements ? statements : 1 + pick(3);
        os << "loop " << trip << ":\n";
        for (unsigned s = 0; s < n; ++s) os << "    " << (pick(2) ? "a" : "b") << '[' << index_expr() << "] = " << value_expr() << "\n";
        return os.str();
    }
};

/// The scalar-order value of every load, per iteration, in issue order.
inline std::vector<std::vector<Word>> scalar_load_values(const srvsim::GadgetProgram& p, const srvsim::Memory& initial)
{
    std::vector<std::vector<Word>> out(p.trip_count);
    srvsim::Memory m = initial;
    for (std::uint64_t z = 0; z < p.trip_count; ++z) {
        const auto fx = srvsim::eval_scalar_iter(p, z, m);
        for (const auto& ev : fx.events)
            if (ev.kind == srvsim::AccessKind::Load) out[z].push_back(ev.value);
        srvsim::apply(m, fx);
    }
    return out;
}

} // namespace testsupport

#endif
