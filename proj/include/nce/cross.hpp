#pragma once

#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "nce/core.hpp"

namespace nce {

/// A CROSS exchange between two tours.
///
/// Cut points index the gaps after the depot: cut a lies between the a-th and
/// (a+1)-th city (a = 0 is right after the start depot). The segment of tour i
/// holds the cities at 1-based positions a_i+1 .. b_i and is empty when
/// b_i == a_i. One side may be empty (a relocation), never both.
struct CrossMove {
    int a1 = 0;
    int b1 = 0;
    int a2 = 0;
    int b2 = 0;
    double decrement = 0.0; ///< old pair cost minus new pair cost

    friend bool operator==(const CrossMove &x, const CrossMove &y) {
        return x.a1 == y.a1 && x.b1 == y.b1 && x.a2 == y.a2 && x.b2 == y.b2;
    }
};

/// Throws MoveError unless the move is well formed for tours of these lengths.
void validate_move(const CrossMove &m, int len1, int len2);

/// The move that swaps the two segments back.
CrossMove inverse(const CrossMove &m);

/// Number of (a1, b1, a2, b2) tuples searched for tours with the given lengths.
long long search_space_size(int len1, int len2);

/// Admissible (a1, b1, a2, b2) tuples. Unbounded unless built with a capacity.
class SearchRange {
public:
    static SearchRange unbounded() { return {}; }
    static SearchRange capacity(const Tour &t1, const Tour &t2, std::span<const double> demands, double capacity);
    /// Capacity range when the problem is capacitated, unbounded otherwise.
    static SearchRange for_problem(const Tour &t1, const Tour &t2, const Problem &problem);

    bool bounded() const { return bounded_; }

    /// O(1): both tours stay within capacity after the swap.
    bool admits(int a1, int b1, int a2, int b2) const {
        if (!bounded_) return true;
        const double s1 = pre1_[b1] - pre1_[a1];
        const double s2 = pre2_[b2] - pre2_[a2];
        return load1_ - s1 + s2 <= cap_ + kCapTol && load2_ - s2 + s1 <= cap_ + kCapTol;
    }

    /// True when some non-trivial (b1, b2) is admitted for these cut points.
    bool has_admissible(int a1, int a2, int len1, int len2) const;

private:
    static constexpr double kCapTol = 1e-9;
    bool bounded_ = false;
    double cap_ = 0.0;
    double load1_ = 0.0, load2_ = 0.0;
    std::vector<double> pre1_, pre2_;
};

/// Capacity-feasible end points (b1, b2) for fixed cut points (a1, a2).
std::vector<std::pair<int, int>> capacity_range(const Tour &t1, const Tour &t2, int a1, int a2,
                                                std::span<const double> demands, double capacity);

/// Constant-time evaluation of CROSS moves on a fixed pair of tours.
class CrossEvaluator {
public:
    CrossEvaluator(const Tour &t1, const Tour &t2, const Problem &problem);

    int len1() const { return first_.len; }
    int len2() const { return second_.len; }
    double cost1() const { return first_.cost; }
    double cost2() const { return second_.cost; }
    double pair_cost() const { return base_; }

    double new_cost1(int a1, int b1, int a2, int b2) const { return spliced(first_, a1, b1, second_, a2, b2); }
    double new_cost2(int a1, int b1, int a2, int b2) const { return spliced(second_, a2, b2, first_, a1, b1); }

    double decrement(int a1, int b1, int a2, int b2) const {
        return base_ - combine(objective_, new_cost1(a1, b1, a2, b2), new_cost2(a1, b1, a2, b2));
    }

private:
    struct Side {
        int len = 0;
        int start_node = 0;
        std::vector<int> nodes;      // start depot node, then city nodes
        std::vector<double> prefix;  // path cost up to nodes[k]
        double cost = 0.0;
    };

    Side make_side(const Tour &t) const;
    double end_cost(const Side &s, int last_node) const;
    double spliced(const Side &keep, int a, int b, const Side &give, int ga, int gb) const;

    const DistanceMatrix &dm_;
    Objective objective_;
    bool flexible_;
    Side first_, second_;
    double base_ = 0.0;
};

/// Applies the exchange; return depots are re-resolved for the variant.
std::pair<Tour, Tour> apply_cross(const Tour &t1, const Tour &t2, const CrossMove &move, Variant variant,
                                  const DistanceMatrix &dm);

double cross_decrement(const Tour &t1, const Tour &t2, const CrossMove &move, const Problem &problem);

struct InnerResult {
    int b1 = -1;
    int b2 = -1;
    double y = -std::numeric_limits<double>::infinity(); ///< -inf when no end point is admissible
};

/// Best end points for fixed cut points; ties resolve to the smallest (b1, b2).
InnerResult inner_search(const CrossEvaluator &ev, const SearchRange &range, int a1, int a2);
InnerResult inner_search(const Tour &t1, const Tour &t2, int a1, int a2, const Problem &problem,
                         const SearchRange &range);

struct SearchStats {
    long long evaluated = 0;
};

/// Exhaustive CROSS search; ties resolve to the lexicographically smallest
/// (a1, a2, b1, b2). Returns nothing when no move improves by more than eps.
std::optional<CrossMove> full_search(const Tour &t1, const Tour &t2, const Problem &problem, const SearchRange &range,
                                     double eps = kImprovementEps, SearchStats *stats = nullptr);

} // namespace nce
