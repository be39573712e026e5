#include "nce/cross.hpp"

#include <algorithm>

namespace nce {

void validate_move(const CrossMove &m, int len1, int len2) {
    if (m.a1 < 0 || m.a1 > m.b1 || m.b1 > len1) throw MoveError("cut points out of range on the first tour");
    if (m.a2 < 0 || m.a2 > m.b2 || m.b2 > len2) throw MoveError("cut points out of range on the second tour");
    if (m.a1 == m.b1 && m.a2 == m.b2) throw MoveError("both segments are empty");
}

CrossMove inverse(const CrossMove &m) {
    return {m.a1, m.a1 + (m.b2 - m.a2), m.a2, m.a2 + (m.b1 - m.a1), -m.decrement};
}

long long search_space_size(int len1, int len2) {
    const long long t1 = static_cast<long long>(len1 + 1) * (len1 + 2) / 2;
    const long long t2 = static_cast<long long>(len2 + 1) * (len2 + 2) / 2;
    return t1 * t2 - static_cast<long long>(len1 + 1) * (len2 + 1);
}

// ---------------------------------------------------------------------------

SearchRange SearchRange::capacity(const Tour &t1, const Tour &t2, std::span<const double> demands, double capacity) {
    SearchRange r;
    if (!(capacity < std::numeric_limits<double>::infinity())) return r;
    r.bounded_ = true;
    r.cap_ = capacity;
    auto prefix = [&](const Tour &t) {
        std::vector<double> p(t.cities.size() + 1, 0.0);
        for (std::size_t k = 0; k < t.cities.size(); ++k) p[k + 1] = p[k] + demands[t.cities[k]];
        return p;
    };
    r.pre1_ = prefix(t1);
    r.pre2_ = prefix(t2);
    r.load1_ = r.pre1_.back();
    r.load2_ = r.pre2_.back();
    return r;
}

SearchRange SearchRange::for_problem(const Tour &t1, const Tour &t2, const Problem &problem) {
    if (!problem.capacitated()) return unbounded();
    return capacity(t1, t2, problem.demands(), problem.capacity());
}

bool SearchRange::has_admissible(int a1, int a2, int len1, int len2) const {
    if (!bounded_) return !(a1 == len1 && a2 == len2);
    // s2 must fall in [s1 + load2 - cap, s1 + cap - load1]; s2 grows with b2.
    for (int b1 = a1; b1 <= len1; ++b1) {
        const double s1 = pre1_[b1] - pre1_[a1];
        const double lo = s1 + load2_ - cap_ - kCapTol;
        const double hi = s1 + cap_ - load1_ + kCapTol;
        const int first_b2 = b1 == a1 ? a2 + 1 : a2;
        if (first_b2 > len2) continue;
        const double base = pre2_[a2];
        auto it = std::lower_bound(pre2_.begin() + first_b2, pre2_.begin() + len2 + 1, base + lo);
        if (it == pre2_.begin() + len2 + 1) continue;
        if (*it - base <= hi) return true;
    }
    return false;
}

std::vector<std::pair<int, int>> capacity_range(const Tour &t1, const Tour &t2, int a1, int a2,
                                                std::span<const double> demands, double capacity) {
    const SearchRange r = SearchRange::capacity(t1, t2, demands, capacity);
    std::vector<std::pair<int, int>> out;
    for (int b1 = a1; b1 <= t1.size(); ++b1)
        for (int b2 = a2; b2 <= t2.size(); ++b2) {
            if (b1 == a1 && b2 == a2) continue;
            if (r.admits(a1, b1, a2, b2)) out.emplace_back(b1, b2);
        }
    return out;
}

// ---------------------------------------------------------------------------

CrossEvaluator::CrossEvaluator(const Tour &t1, const Tour &t2, const Problem &problem)
    : dm_(problem.dm()), objective_(problem.objective()), flexible_(flexible_return(problem.variant())) {
    first_ = make_side(t1);
    second_ = make_side(t2);
    base_ = combine(objective_, first_.cost, second_.cost);
}

CrossEvaluator::Side CrossEvaluator::make_side(const Tour &t) const {
    Side s;
    s.len = t.size();
    s.start_node = dm_.depot_node(t.start_depot);
    s.nodes.reserve(t.cities.size() + 1);
    s.nodes.push_back(s.start_node);
    for (int c : t.cities) s.nodes.push_back(dm_.city_node(c));
    s.prefix.assign(s.nodes.size(), 0.0);
    for (std::size_t k = 1; k < s.nodes.size(); ++k) s.prefix[k] = s.prefix[k - 1] + dm_(s.nodes[k - 1], s.nodes[k]);
    s.cost = s.prefix.back() + end_cost(s, s.nodes.back());
    return s;
}

double CrossEvaluator::end_cost(const Side &s, int last_node) const {
    if (dm_.is_depot_node(last_node)) return 0.0; // empty tour stays at its start depot
    if (flexible_) return dm_.nearest_depot_distance(last_node - dm_.num_depots());
    return dm_(last_node, s.start_node);
}

double CrossEvaluator::spliced(const Side &keep, int a, int b, const Side &give, int ga, int gb) const {
    int last = keep.nodes[a];
    double c = keep.prefix[a];
    if (gb > ga) {
        c += dm_(last, give.nodes[ga + 1]) + (give.prefix[gb] - give.prefix[ga + 1]);
        last = give.nodes[gb];
    }
    if (b < keep.len) {
        c += dm_(last, keep.nodes[b + 1]) + (keep.prefix[keep.len] - keep.prefix[b + 1]);
        last = keep.nodes[keep.len];
    }
    return c + end_cost(keep, last);
}

// ---------------------------------------------------------------------------

std::pair<Tour, Tour> apply_cross(const Tour &t1, const Tour &t2, const CrossMove &m, Variant variant,
                                  const DistanceMatrix &dm) {
    validate_move(m, t1.size(), t2.size());
    auto splice = [](const Tour &keep, int a, int b, const Tour &give, int ga, int gb) {
        Tour out = keep;
        out.cities.clear();
        out.cities.reserve(keep.cities.size() - (b - a) + (gb - ga));
        out.cities.insert(out.cities.end(), keep.cities.begin(), keep.cities.begin() + a);
        out.cities.insert(out.cities.end(), give.cities.begin() + ga, give.cities.begin() + gb);
        out.cities.insert(out.cities.end(), keep.cities.begin() + b, keep.cities.end());
        return out;
    };
    std::pair<Tour, Tour> r{splice(t1, m.a1, m.b1, t2, m.a2, m.b2), splice(t2, m.a2, m.b2, t1, m.a1, m.b1)};
    resolve_return_depot(r.first, variant, dm);
    resolve_return_depot(r.second, variant, dm);
    return r;
}

double cross_decrement(const Tour &t1, const Tour &t2, const CrossMove &m, const Problem &problem) {
    validate_move(m, t1.size(), t2.size());
    return CrossEvaluator(t1, t2, problem).decrement(m.a1, m.b1, m.a2, m.b2);
}

InnerResult inner_search(const CrossEvaluator &ev, const SearchRange &range, int a1, int a2) {
    InnerResult best;
    const int l1 = ev.len1(), l2 = ev.len2();
    for (int b1 = a1; b1 <= l1; ++b1)
        for (int b2 = a2; b2 <= l2; ++b2) {
            if (b1 == a1 && b2 == a2) continue;
            if (!range.admits(a1, b1, a2, b2)) continue;
            const double y = ev.decrement(a1, b1, a2, b2);
            if (y > best.y) best = {b1, b2, y};
        }
    return best;
}

InnerResult inner_search(const Tour &t1, const Tour &t2, int a1, int a2, const Problem &problem,
                         const SearchRange &range) {
    if (a1 < 0 || a1 > t1.size() || a2 < 0 || a2 > t2.size()) throw MoveError("cut point out of range");
    return inner_search(CrossEvaluator(t1, t2, problem), range, a1, a2);
}

std::optional<CrossMove> full_search(const Tour &t1, const Tour &t2, const Problem &problem, const SearchRange &range,
                                     double eps, SearchStats *stats) {
    const CrossEvaluator ev(t1, t2, problem);
    const int l1 = ev.len1(), l2 = ev.len2();
    std::optional<CrossMove> best;
    double best_y = eps;
    long long evaluated = 0;
    for (int a1 = 0; a1 <= l1; ++a1)
        for (int a2 = 0; a2 <= l2; ++a2)
            for (int b1 = a1; b1 <= l1; ++b1)
                for (int b2 = a2; b2 <= l2; ++b2) {
                    if (b1 == a1 && b2 == a2) continue;
                    ++evaluated;
                    if (!range.admits(a1, b1, a2, b2)) continue;
                    const double y = ev.decrement(a1, b1, a2, b2);
                    if (y > best_y) {
                        best_y = y;
                        best = CrossMove{a1, b1, a2, b2, y};
                    }
                }
    if (stats) stats->evaluated += evaluated;
    return best;
}

} // namespace nce
