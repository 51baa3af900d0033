#ifndef SRVSIM_MEMHIER_HPP
#define SRVSIM_MEMHIER_HPP

#include <algorithm>
#include <bit>
#include <functional>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "srvsim/isa.hpp"

namespace srvsim
{

enum class Replacement
{
    LRU,
    Random
};

struct CacheLevelConfig
{
    std::uint64_t size = 0;
    unsigned line = 64;
    unsigned assoc = 8;
    Replacement replacement = Replacement::LRU;
    Tick hit_latency = 0;

    std::uint64_t sets() const { return size / (std::uint64_t{line} * assoc); }
};

struct CacheConfig
{
    std::vector<CacheLevelConfig> levels;
    Tick memory_latency = 400;
    std::uint64_t seed = 0;

    /// 64 KiB 8-way L1 in front of a 32 MiB 16-way inclusive LLC.
    static CacheConfig defaults()
    {
        CacheConfig c;
        c.levels = {{64 * 1024, 64, 8, Replacement::LRU, 40}, {32ull * 1024 * 1024, 64, 16, Replacement::LRU, 150}};
        return c;
    }

    std::uint64_t llc_size() const { return levels.empty() ? 0 : levels.back().size; }

    void validate() const
    {
        if (levels.empty()) throw ValidationError("cache needs at least one level");
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const auto& l = levels[i];
            const std::string where = "cache level " + std::to_string(i + 1);
            if (!is_power_of_two(l.line)) throw ValidationError(where + ": line size must be a power of two");
            if (l.line != levels[0].line) throw ValidationError(where + ": all levels must share one line size");
            if (l.assoc == 0 || l.size == 0 || l.size % (std::uint64_t{l.line} * l.assoc) != 0)
                throw ValidationError(where + ": size must be a multiple of line * assoc");
            if (!is_power_of_two(l.sets())) throw ValidationError(where + ": set count must be a power of two");
            if (i > 0 && l.size < levels[i - 1].size)
                throw ValidationError(where + ": an inclusive level cannot be smaller than the level inside it");
            if (i > 0 && l.hit_latency <= levels[i - 1].hit_latency)
                throw ValidationError(where + ": hit latency must exceed the level inside it");
        }
        if (memory_latency <= levels.back().hit_latency)
            throw ValidationError("memory latency must exceed the last cache level's hit latency");
    }
};

/// Inclusive set-associative hierarchy. Every access updates recency at every
/// level, and an eviction from an outer level removes the line from the
/// levels inside it.
class CacheHierarchy
{
public:
    struct Result
    {
        int hit_level = 0; // levels().size() means memory
        Tick latency = 0;
        friend bool operator==(const Result&, const Result&) = default;
    };

    explicit CacheHierarchy(CacheConfig cfg = CacheConfig::defaults())
        : cfg_(std::move(cfg))
        , rng_(cfg_.seed)
    {
        cfg_.validate();
        line_shift_ = static_cast<unsigned>(std::countr_zero(cfg_.levels[0].line));
        for (const auto& l : cfg_.levels) {
            Level lv;
            lv.sets = l.sets();
            lv.assoc = l.assoc;
            lv.random = l.replacement == Replacement::Random;
            lv.keys.assign(lv.sets * lv.assoc, 0);
            lv.stamps.assign(lv.sets * lv.assoc, 0);
            levels_.push_back(std::move(lv));
        }
        fast_ok_ = true;
        for (std::size_t i = 0; i < levels_.size(); ++i) {
            if (levels_[i].random) fast_ok_ = false;
            if (i > 0 && (levels_[i].sets % levels_[i - 1].sets != 0 || levels_[i].assoc < levels_[i - 1].assoc))
                fast_ok_ = false;
        }
    }

    const CacheConfig& config() const { return cfg_; }
    int memory_level() const { return static_cast<int>(levels_.size()); }
    unsigned line_size() const { return cfg_.levels[0].line; }

    Tick latency_of(int level) const
    {
        return level < memory_level() ? cfg_.levels[static_cast<std::size_t>(level)].hit_latency : cfg_.memory_latency;
    }

    bool contains(Addr addr, int level) const { return find(levels_[static_cast<std::size_t>(level)], key(addr)) >= 0; }

    /// Where `addr` would hit, without changing any state.
    Result peek(Addr addr) const
    {
        const std::uint64_t k = key(addr);
        for (std::size_t i = 0; i < levels_.size(); ++i)
            if (find(levels_[i], k) >= 0) return {static_cast<int>(i), latency_of(static_cast<int>(i))};
        return {memory_level(), cfg_.memory_latency};
    }

    Result access(Addr addr, AccessKind = AccessKind::Load)
    {
        const Result r = peek(addr);
        const std::uint64_t k = key(addr);
        ++clock_;
        // Outer levels first so back-invalidation never removes the new line.
        for (std::size_t i = levels_.size(); i-- > 0;) {
            Level& lv = levels_[i];
            const long w = find(lv, k);
            if (w >= 0) {
                lv.stamps[static_cast<std::size_t>(w)] = clock_;
                continue;
            }
            const std::size_t slot = victim(lv, k);
            const std::uint64_t old = lv.keys[slot];
            lv.keys[slot] = k;
            lv.stamps[slot] = clock_;
            if (old != 0)
                for (std::size_t j = 0; j < i; ++j) erase(levels_[j], old);
        }
        return r;
    }

    /// Touches every line of [base, base + bytes) once, in ascending order.
    /// Uses a closed-form update when all levels are LRU and nested, which is
    /// state-identical to issuing the accesses one by one.
    std::uint64_t touch_sequential(Addr base, std::uint64_t bytes, AccessKind kind = AccessKind::Store)
    {
        if (bytes == 0) return 0;
        const std::uint64_t first = base >> line_shift_;
        const std::uint64_t last = (base + bytes - 1) >> line_shift_;
        const std::uint64_t n = last - first + 1;
        if (!fast_ok_) {
            for (std::uint64_t l = first; l <= last; ++l) access(l << line_shift_, kind);
            return n;
        }
        for (auto& lv : levels_) fast_fill(lv, first, n);
        clock_ += n;
        return n;
    }

    /// Evicts everything by writing a buffer of `bytes` at a scratch address.
    std::uint64_t trash(std::uint64_t bytes) { return touch_sequential(kScratchBase, bytes, AccessKind::Store); }

    void flush_line(Addr addr)
    {
        for (auto& lv : levels_) erase(lv, key(addr));
    }

    void invalidate_all()
    {
        for (auto& lv : levels_) {
            std::fill(lv.keys.begin(), lv.keys.end(), 0);
            std::fill(lv.stamps.begin(), lv.stamps.end(), 0);
        }
    }

    /// Resident lines of level `level` (line numbers), sorted.
    std::vector<std::uint64_t> resident(int level) const
    {
        std::vector<std::uint64_t> out;
        for (auto k : levels_[static_cast<std::size_t>(level)].keys)
            if (k) out.push_back(k - 1);
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Same lines with the same recency in every set. Way position within a
    /// set carries no behavior under LRU and is ignored.
    bool same_state(const CacheHierarchy& o) const
    {
        if (levels_.size() != o.levels_.size() || clock_ != o.clock_) return false;
        for (std::size_t i = 0; i < levels_.size(); ++i) {
            const Level& x = levels_[i];
            const Level& y = o.levels_[i];
            if (x.sets != y.sets || x.assoc != y.assoc) return false;
            for (std::uint64_t set = 0; set < x.sets; ++set)
                if (set_contents(x, set) != set_contents(y, set)) return false;
        }
        return true;
    }

    static constexpr Addr kScratchBase = Addr{1} << 44;

private:
    struct Level
    {
        std::uint64_t sets = 0;
        unsigned assoc = 0;
        bool random = false;
        std::vector<std::uint64_t> keys;   // line number + 1, 0 = invalid
        std::vector<std::uint64_t> stamps; // last-use time
    };

    std::uint64_t key(Addr addr) const { return (addr >> line_shift_) + 1; }

    static long find(const Level& lv, std::uint64_t k)
    {
        const std::uint64_t set = (k - 1) % lv.sets;
        const std::size_t b = set * lv.assoc;
        for (unsigned w = 0; w < lv.assoc; ++w)
            if (lv.keys[b + w] == k) return static_cast<long>(b + w);
        return -1;
    }

    static std::vector<std::pair<std::uint64_t, std::uint64_t>> set_contents(const Level& lv, std::uint64_t set)
    {
        std::vector<std::pair<std::uint64_t, std::uint64_t>> v;
        for (unsigned w = 0; w < lv.assoc; ++w)
            if (lv.keys[set * lv.assoc + w]) v.emplace_back(lv.keys[set * lv.assoc + w], lv.stamps[set * lv.assoc + w]);
        std::sort(v.begin(), v.end());
        return v;
    }

    static void erase(Level& lv, std::uint64_t k)
    {
        const long w = find(lv, k);
        if (w >= 0) {
            lv.keys[static_cast<std::size_t>(w)] = 0;
            lv.stamps[static_cast<std::size_t>(w)] = 0;
        }
    }

    std::size_t victim(Level& lv, std::uint64_t k)
    {
        const std::size_t b = ((k - 1) % lv.sets) * lv.assoc;
        for (unsigned w = 0; w < lv.assoc; ++w)
            if (lv.keys[b + w] == 0) return b + w;
        if (lv.random) return b + static_cast<std::size_t>(rng_() % lv.assoc);
        std::size_t best = b;
        for (unsigned w = 1; w < lv.assoc; ++w)
            if (lv.stamps[b + w] < lv.stamps[best]) best = b + w;
        return best;
    }

    // Lines first..first+n-1 get stamps clock_+1..clock_+n. Under LRU a set
    // always holds the `assoc` most recently used lines it has seen, so each
    // touched set keeps the most recent of its old contents and new lines.
    void fast_fill(Level& lv, std::uint64_t first, std::uint64_t n) const
    {
        const std::uint64_t touched_sets = std::min<std::uint64_t>(n, lv.sets);
        std::vector<std::pair<std::uint64_t, std::uint64_t>> ways; // (stamp, key)
        for (std::uint64_t t = 0; t < touched_sets; ++t) {
            const std::uint64_t line0 = first + t;
            const std::size_t b = ((line0) % lv.sets) * lv.assoc;
            const std::uint64_t count = (n - t + lv.sets - 1) / lv.sets;
            const std::uint64_t take = std::min<std::uint64_t>(count, lv.assoc);
            const std::uint64_t new_lo = line0 + (count - take) * lv.sets;
            ways.clear();
            if (count < lv.assoc) {
                for (unsigned w = 0; w < lv.assoc; ++w) {
                    const std::uint64_t k = lv.keys[b + w];
                    if (k == 0) continue;
                    const std::uint64_t line = k - 1;
                    const bool renewed = line >= line0 && (line - line0) % lv.sets == 0 && (line - line0) / lv.sets < count;
                    if (!renewed) ways.emplace_back(lv.stamps[b + w], k);
                }
            }
            for (std::uint64_t i = 0; i < take; ++i) {
                const std::uint64_t line = new_lo + i * lv.sets;
                ways.emplace_back(clock_ + (line - first) + 1, line + 1);
            }
            std::sort(ways.begin(), ways.end(), std::greater<>());
            for (unsigned w = 0; w < lv.assoc; ++w) {
                lv.keys[b + w] = w < ways.size() ? ways[w].second : 0;
                lv.stamps[b + w] = w < ways.size() ? ways[w].first : 0;
            }
        }
    }

    CacheConfig cfg_;
    std::vector<Level> levels_;
    unsigned line_shift_ = 6;
    std::uint64_t clock_ = 0;
    bool fast_ok_ = false;
    std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Timer
// ---------------------------------------------------------------------------

struct TimerModel
{
    Tick granularity = 1;
    double jitter_stddev = 0.0;
    std::uint64_t seed = 0;
};

/// Observed latency: Gaussian jitter, then quantized down to the timer
/// granularity. The normal draw happens even at zero jitter so that streams
/// with and without jitter stay aligned.
class Timer
{
public:
    explicit Timer(TimerModel m = {})
        : m_(m)
        , rng_(m.seed)
    {
        if (m_.granularity == 0) throw ValidationError("timer granularity must be positive");
        if (m_.jitter_stddev < 0) throw ValidationError("timer jitter must be non-negative");
    }

    Tick observe(Tick latency)
    {
        const double z = normal_(rng_);
        const double v = static_cast<double>(latency) + z * m_.jitter_stddev;
        if (v <= 0) return 0;
        const auto g = static_cast<double>(m_.granularity);
        return static_cast<Tick>(std::floor(v / g) * g);
    }

    const TimerModel& model() const { return m_; }

private:
    TimerModel m_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

enum class Observation
{
    Hit,
    Miss
};

inline Observation classify(Tick observed, Tick threshold)
{
    if (threshold == 0) throw ValidationError("hit threshold must be positive");
    return observed < threshold ? Observation::Hit : Observation::Miss;
}

// ---------------------------------------------------------------------------
// Cache-size sweep
// ---------------------------------------------------------------------------

struct LatencyRow
{
    std::uint64_t size = 0;
    double mean = 0;
    std::vector<Tick> samples;
};

using LatencyTable = std::vector<LatencyRow>;

struct SweepOptions
{
    unsigned reps = 10;
    Addr page = 4096;
    unsigned probes = 10;         // one address per page, from the array start
    Addr array_base = Addr{1} << 40;
    std::uint64_t capacity = std::uint64_t{1} << 32;
};

inline std::vector<std::uint64_t> default_sweep_sizes()
{
    std::vector<std::uint64_t> s;
    for (std::uint64_t b = 4096; b <= 128ull * 1024 * 1024; b *= 2) s.push_back(b);
    return s;
}

/// For each size: evict everything, write then read the array once, and time
/// one load on each of its first pages.
inline LatencyTable sweep_latency(CacheHierarchy& cache, const std::vector<std::uint64_t>& sizes, Timer& timer,
    const SweepOptions& opt = {})
{
    if (opt.reps == 0) throw ValidationError("sweep needs at least one repetition");
    LatencyTable table;
    for (std::uint64_t size : sizes) {
        if (size == 0) throw ValidationError("sweep size must be positive");
        if (size > opt.capacity) throw CapacityError("sweep size " + std::to_string(size) + " exceeds simulated memory");
        LatencyRow row{size, 0, {}};
        double total = 0;
        for (unsigned r = 0; r < opt.reps; ++r) {
            cache.trash(2 * cache.config().llc_size());
            cache.touch_sequential(opt.array_base, size, AccessKind::Store);
            cache.touch_sequential(opt.array_base, size, AccessKind::Load);
            double sum = 0;
            unsigned n = 0;
            for (Addr off = 0; off < size && n < opt.probes; off += opt.page, ++n) {
                const Tick t = timer.observe(cache.access(opt.array_base + off).latency);
                row.samples.push_back(t);
                sum += static_cast<double>(t);
            }
            total += sum / n;
        }
        row.mean = total / opt.reps;
        table.push_back(std::move(row));
    }
    return table;
}

/// Largest size whose mean latency stays below the midpoint between the
/// lowest and highest plateau.
inline std::uint64_t estimate_llc_size(const LatencyTable& table)
{
    if (table.size() < 3) throw ValidationError("latency table needs at least 3 rows");
    for (std::size_t i = 1; i < table.size(); ++i)
        if (table[i].size <= table[i - 1].size) throw ValidationError("latency table sizes must increase");
    double lo = table[0].mean, hi = table[0].mean;
    for (const auto& r : table) {
        lo = std::min(lo, r.mean);
        hi = std::max(hi, r.mean);
    }
    if (lo <= 0 || hi / lo < 1.5) throw NoKnee("latency table shows no capacity knee");
    const double mid = (lo + hi) / 2;
    std::uint64_t best = 0;
    for (const auto& r : table)
        if (r.mean < mid) best = r.size;
    if (best == 0) throw NoKnee("no size falls below the latency midpoint");
    return best;
}

} // namespace srvsim

#endif
