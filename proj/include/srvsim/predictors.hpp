#ifndef SRVSIM_PREDICTORS_HPP
#define SRVSIM_PREDICTORS_HPP

#include <algorithm>
#include <map>
#include <utility>

namespace srvsim
{

/// Store-to-load alias predictor. A (store, load) pair earns one point each
/// time the load issues without aliasing the store; once the counter reaches
/// the threshold the load may bypass that store. An observed alias resets it.
class MemDepPredictor
{
public:
    using Key = std::pair<int, int>; // (store id, load id)

    explicit MemDepPredictor(unsigned threshold = 8)
        : threshold_(threshold)
    {
    }

    bool predicts_no_alias(const Key& k) const { return counter(k) >= threshold_; }
    unsigned counter(const Key& k) const
    {
        auto it = counters_.find(k);
        return it == counters_.end() ? 0 : it->second;
    }
    void observe_no_alias(const Key& k) { counters_[k] = std::min(counter(k) + 1, threshold_ * 2); }
    void observe_alias(const Key& k) { counters_[k] = 0; }
    unsigned threshold() const { return threshold_; }

    friend bool operator==(const MemDepPredictor&, const MemDepPredictor&) = default;

private:
    unsigned threshold_;
    std::map<Key, unsigned> counters_;
};

/// Saturating two-bit counters per branch site. A cold counter sits at 1
/// (weakly not taken); the branch is predicted taken from 2 upward.
class BranchPredictor
{
public:
    explicit BranchPredictor(unsigned bits = 2)
        : max_((1u << bits) - 1)
    {
    }

    unsigned counter(int site) const
    {
        auto it = counters_.find(site);
        return it == counters_.end() ? 1u : it->second;
    }
    bool predict(int site) const { return counter(site) >= (max_ + 1) / 2; }
    void update(int site, bool taken)
    {
        const unsigned c = counter(site);
        counters_[site] = taken ? std::min(c + 1, max_) : (c == 0 ? 0 : c - 1);
    }

    friend bool operator==(const BranchPredictor&, const BranchPredictor&) = default;

private:
    unsigned max_;
    std::map<int, unsigned> counters_;
};

} // namespace srvsim

#endif
