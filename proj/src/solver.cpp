#include "nce/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

namespace nce {

std::string_view to_string(IntraOperator op) {
    switch (op) {
    case IntraOperator::None: return "none";
    case IntraOperator::TwoOpt: return "2opt";
    case IntraOperator::TwoOptOrOpt: return "2opt+oropt";
    }
    return "?";
}

std::string_view to_string(TourSelection s) { return s == TourSelection::MaxMin ? "maxmin" : "random"; }

IntraOperator parse_intra(std::string_view s) {
    if (s == "none") return IntraOperator::None;
    if (s == "2opt" || s == "2-opt") return IntraOperator::TwoOpt;
    if (s == "2opt+oropt" || s == "2-opt+or-opt" || s == "oropt") return IntraOperator::TwoOptOrOpt;
    throw ConfigError("unknown intra operator '" + std::string(s) + "'");
}

TourSelection parse_selection(std::string_view s) {
    if (s == "maxmin") return TourSelection::MaxMin;
    if (s == "random") return TourSelection::Random;
    throw ConfigError("unknown tour selection '" + std::string(s) + "'");
}

std::string_view to_string(TraceEvent e) {
    switch (e) {
    case TraceEvent::Initial: return "initial";
    case TraceEvent::Move: return "move";
    case TraceEvent::Perturb: return "perturb";
    }
    return "?";
}

void SolverConfig::validate() const {
    if (k < 1) throw ConfigError("candidate set size k must be at least 1");
    if (p < 0) throw ConfigError("perturbation budget p must be non-negative");
    if (!(eps >= 0.0)) throw ConfigError("improvement tolerance must be non-negative");
    if (inter == InterOperator::NeuroCross && !predictor) throw ConfigError("neuro cross exchange needs a predictor");
}

// ---------------------------------------------------------------------------
// Initial solution

namespace {

std::vector<Point> seed_centroids(const Instance &inst, std::uint64_t seed) {
    double minx = inst.depots[0].x, maxx = minx, miny = inst.depots[0].y, maxy = miny;
    auto grow = [&](Point q) {
        minx = std::min(minx, q.x);
        maxx = std::max(maxx, q.x);
        miny = std::min(miny, q.y);
        maxy = std::max(maxy, q.y);
    };
    for (auto q : inst.depots) grow(q);
    for (auto q : inst.cities) grow(q);
    const double radius = 0.05 * std::max(maxx - minx, maxy - miny);

    Rng rng(derive_seed(seed, 0x6b6d65616e73ULL));
    const double phase = 2.0 * std::numbers::pi * uniform01(rng);

    std::vector<int> per_depot(inst.num_depots(), 0);
    for (int d : inst.vehicle_start_depot) ++per_depot[d];
    std::vector<int> rank(inst.num_depots(), 0);
    std::vector<Point> c(inst.num_vehicles);
    for (int v = 0; v < inst.num_vehicles; ++v) {
        const int d = inst.vehicle_start_depot[v];
        const Point base = inst.depots[d];
        if (per_depot[d] == 1) {
            c[v] = base;
            continue;
        }
        const double ang = phase + 2.0 * std::numbers::pi * rank[d]++ / per_depot[d];
        c[v] = {base.x + radius * std::cos(ang), base.y + radius * std::sin(ang)};
    }
    return c;
}

std::vector<int> kmeans(const Instance &inst, std::vector<Point> centroids) {
    const int n = inst.num_cities(), k = static_cast<int>(centroids.size());
    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int c = 0; c < n; ++c) {
            int best = 0;
            double bd = euclidean(inst.cities[c], centroids[0]);
            for (int j = 1; j < k; ++j) {
                const double d = euclidean(inst.cities[c], centroids[j]);
                if (d < bd) bd = d, best = j;
            }
            if (assign[c] != best) assign[c] = best, changed = true;
        }
        if (!changed) break;
        std::vector<Point> sum(k);
        std::vector<int> cnt(k, 0);
        for (int c = 0; c < n; ++c) {
            sum[assign[c]].x += inst.cities[c].x;
            sum[assign[c]].y += inst.cities[c].y;
            ++cnt[assign[c]];
        }
        for (int j = 0; j < k; ++j)
            if (cnt[j] > 0) centroids[j] = {sum[j].x / cnt[j], sum[j].y / cnt[j]};
    }
    return assign;
}

// Nearest-neighbour walk from the start depot. Cities whose demand no longer
// fits are returned as overflow.
std::vector<int> greedy_route(Tour &tour, std::vector<int> members, const Problem &problem) {
    const auto &dm = problem.dm();
    const double cap = problem.capacity();
    double load = 0.0;
    int cur = dm.depot_node(tour.start_depot);
    std::vector<char> used(members.size(), 0);
    for (;;) {
        int pick = -1;
        double bd = 0.0;
        for (std::size_t m = 0; m < members.size(); ++m) {
            if (used[m]) continue;
            const int c = members[m];
            if (load + problem.demand(c) > cap + 1e-9) continue;
            const double d = dm(cur, dm.city_node(c));
            if (pick < 0 || d < bd || (d == bd && c < members[pick])) pick = static_cast<int>(m), bd = d;
        }
        if (pick < 0) break;
        used[pick] = 1;
        const int c = members[pick];
        tour.cities.push_back(c);
        load += problem.demand(c);
        cur = dm.city_node(c);
    }
    std::vector<int> overflow;
    for (std::size_t m = 0; m < members.size(); ++m)
        if (!used[m]) overflow.push_back(members[m]);
    std::sort(overflow.begin(), overflow.end());
    return overflow;
}

void cheapest_insert(Tour &tour, int city, const Problem &problem) {
    const auto &dm = problem.dm();
    Tour probe = tour;
    int best_pos = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int pos = 0; pos <= tour.size(); ++pos) {
        probe.cities = tour.cities;
        probe.cities.insert(probe.cities.begin() + pos, city);
        resolve_return_depot(probe, problem.variant(), dm);
        const double c = tour_cost(probe, dm);
        if (c < best) best = c, best_pos = pos;
    }
    tour.cities.insert(tour.cities.begin() + best_pos, city);
}

} // namespace

Solution initial_solution(const Problem &problem, std::uint64_t seed) {
    const auto &inst = problem.instance();
    Solution sol = empty_solution(problem);
    if (problem.capacitated()) {
        double total = 0.0;
        for (double q : problem.demands()) total += q;
        if (total > problem.capacity() * inst.num_vehicles + 1e-9)
            throw InfeasibleInstance("total demand exceeds the fleet capacity");
        for (int c = 0; c < inst.num_cities(); ++c)
            if (problem.demand(c) > problem.capacity() + 1e-9)
                throw InfeasibleInstance("city " + std::to_string(c) + " exceeds the vehicle capacity");
    }
    if (inst.num_cities() == 0) {
        refresh(sol, problem);
        return sol;
    }

    const auto assign = kmeans(inst, seed_centroids(inst, seed));
    std::vector<std::vector<int>> members(inst.num_vehicles);
    for (int c = 0; c < inst.num_cities(); ++c) members[assign[c]].push_back(c);

    std::vector<int> overflow;
    for (int v = 0; v < inst.num_vehicles; ++v) {
        auto rest = greedy_route(sol.tours[v], std::move(members[v]), problem);
        overflow.insert(overflow.end(), rest.begin(), rest.end());
    }
    std::sort(overflow.begin(), overflow.end());

    const auto &dm = problem.dm();
    for (int c : overflow) {
        int target = -1;
        double bd = 0.0;
        for (int v = 0; v < inst.num_vehicles; ++v) {
            const Tour &t = sol.tours[v];
            if (tour_demand(t, problem) + problem.demand(c) > problem.capacity() + 1e-9) continue;
            double d = dm.depot_city(t.start_depot, c);
            for (int o : t.cities) d = std::min(d, dm.city_city(o, c));
            if (target < 0 || d < bd) target = v, bd = d;
        }
        if (target < 0) throw InfeasibleInstance("no tour has capacity left for city " + std::to_string(c));
        cheapest_insert(sol.tours[target], c, problem);
    }
    refresh(sol, problem);
    return sol;
}

// ---------------------------------------------------------------------------
// Inter operators

std::optional<ExchangeResult> neuro_cross(const Tour &t1, const Tour &t2, const Predictor &predictor, std::size_t k,
                                          const Problem &problem, const SearchRange &range, double eps) {
    const auto ranked = ranked_pairs(predictor.predict_all(t1, t2, problem, range));
    const std::size_t take = std::min(k, ranked.size());
    const CrossEvaluator ev(t1, t2, problem);
    std::optional<CrossMove> best;
    for (std::size_t r = 0; r < take; ++r) {
        const auto &cp = ranked[r];
        const InnerResult in = inner_search(ev, range, cp.a1, cp.a2);
        if (in.b1 < 0) continue;
        const bool better = !best || in.y > best->decrement ||
                            (in.y == best->decrement && std::pair(cp.a1, cp.a2) < std::pair(best->a1, best->a2));
        if (better) best = CrossMove{cp.a1, in.b1, cp.a2, in.b2, in.y};
    }
    if (!best || !(best->decrement > eps)) return std::nullopt;
    auto [n1, n2] = apply_cross(t1, t2, *best, problem.variant(), problem.dm());
    return ExchangeResult{std::move(n1), std::move(n2), *best};
}

std::optional<ExchangeResult> cross_exchange(const Tour &t1, const Tour &t2, const Problem &problem,
                                             const SearchRange &range, double eps) {
    const auto m = full_search(t1, t2, problem, range, eps);
    if (!m) return std::nullopt;
    auto [n1, n2] = apply_cross(t1, t2, *m, problem.variant(), problem.dm());
    return ExchangeResult{std::move(n1), std::move(n2), *m};
}

// ---------------------------------------------------------------------------
// Intra operators

namespace {

class TourWalk {
public:
    TourWalk(const Tour &t, const Problem &problem)
        : dm_(problem.dm()), flexible_(flexible_return(problem.variant())) {
        nodes_.push_back(dm_.depot_node(t.start_depot));
        for (int c : t.cities) nodes_.push_back(dm_.city_node(c));
    }

    int n() const { return static_cast<int>(nodes_.size()) - 1; }

    // Edge weight between the nodes at positions i and j; position n()+1 is
    // the tour end, reached through the variant's return rule.
    double w(int i, int j) const {
        if (i == n() + 1) std::swap(i, j);
        if (j == n() + 1) return closing(nodes_[i]);
        return dm_(nodes_[i], nodes_[j]);
    }
    double wn(int node, int j) const {
        if (j == n() + 1) return closing(node);
        return dm_(node, nodes_[j]);
    }
    int node(int i) const { return nodes_[i]; }

    void reverse(int i, int j) { std::reverse(nodes_.begin() + i, nodes_.begin() + j + 1); }

    void move_segment(int i, int len, int q, bool reversed) {
        std::vector<int> seg(nodes_.begin() + i, nodes_.begin() + i + len);
        if (reversed) std::reverse(seg.begin(), seg.end());
        nodes_.erase(nodes_.begin() + i, nodes_.begin() + i + len);
        const int at = q < i ? q + 1 : q + 1 - len;
        nodes_.insert(nodes_.begin() + at, seg.begin(), seg.end());
    }

    std::vector<int> cities() const {
        std::vector<int> out;
        for (std::size_t k = 1; k < nodes_.size(); ++k) out.push_back(nodes_[k] - dm_.num_depots());
        return out;
    }

private:
    double closing(int node) const {
        if (dm_.is_depot_node(node)) return 0.0;
        if (flexible_) return dm_.nearest_depot_distance(node - dm_.num_depots());
        return dm_(node, nodes_[0]);
    }

    const DistanceMatrix &dm_;
    bool flexible_;
    std::vector<int> nodes_;
};

constexpr double kIntraEps = 1e-10;

bool two_opt(TourWalk &t) {
    const int n = t.n();
    bool any = false;
    bool improved = true;
    while (improved) {
        improved = false;
        for (int i = 1; i < n; ++i)
            for (int j = i + 1; j <= n; ++j) {
                const double delta = t.w(i - 1, j) + t.w(i, j + 1) - t.w(i - 1, i) - t.w(j, j + 1);
                if (delta < -kIntraEps) {
                    t.reverse(i, j);
                    improved = any = true;
                }
            }
    }
    return any;
}

bool or_opt(TourWalk &t) {
    const int n = t.n();
    bool any = false;
    bool improved = true;
    while (improved) {
        improved = false;
        for (int len = 1; len <= 3 && len < n; ++len)
            for (int i = 1; i + len - 1 <= n; ++i) {
                const int e = i + len - 1;
                const double gain = t.w(i - 1, i) + t.w(e, e + 1) - t.w(i - 1, e + 1);
                for (int q = 0; q <= n && !improved; ++q) {
                    if (q >= i - 1 && q <= e) continue;
                    const double base = t.w(q, q + 1);
                    const int first = t.node(i), last = t.node(e);
                    const double fwd = t.wn(first, q) + t.wn(last, q + 1) - base - gain;
                    const double rev = t.wn(last, q) + t.wn(first, q + 1) - base - gain;
                    if (fwd < -kIntraEps && fwd <= rev) {
                        t.move_segment(i, len, q, false);
                        improved = any = true;
                    } else if (rev < -kIntraEps) {
                        t.move_segment(i, len, q, true);
                        improved = any = true;
                    }
                }
                if (improved) break;
            }
    }
    return any;
}

} // namespace

Tour intra_improve(const Tour &tour, const Problem &problem, IntraOperator op) {
    if (op == IntraOperator::None || tour.size() < 2) return tour;
    TourWalk walk(tour, problem);
    if (op == IntraOperator::TwoOpt) {
        two_opt(walk);
    } else {
        two_opt(walk);
        while (or_opt(walk) && two_opt(walk)) {
        }
    }
    Tour out = tour;
    out.cities = walk.cities();
    resolve_return_depot(out, problem.variant(), problem.dm());
    // Guard against round-off in the incremental deltas.
    if (tour_cost(out, problem.dm()) > tour_cost(tour, problem.dm())) return tour;
    return out;
}

// ---------------------------------------------------------------------------

Solution perturb(const Solution &sol, const Problem &problem, Rng &rng) {
    const int nt = static_cast<int>(sol.tours.size());
    if (nt < 2) return sol;
    for (int attempt = 0; attempt < 100; ++attempt) {
        const int i = static_cast<int>(uniform_int(rng, 0, nt - 1));
        int j = static_cast<int>(uniform_int(rng, 0, nt - 2));
        if (j >= i) ++j;
        const int l1 = static_cast<int>(uniform_int(rng, 0, 3));
        const int l2 = static_cast<int>(uniform_int(rng, 0, 3));
        const Tour &t1 = sol.tours[i], &t2 = sol.tours[j];
        if ((l1 == 0 && l2 == 0) || l1 > t1.size() || l2 > t2.size()) continue;
        const int a1 = static_cast<int>(uniform_int(rng, 0, t1.size() - l1));
        const int a2 = static_cast<int>(uniform_int(rng, 0, t2.size() - l2));
        const SearchRange range = SearchRange::for_problem(t1, t2, problem);
        if (!range.admits(a1, a1 + l1, a2, a2 + l2)) continue;
        Solution out = sol;
        auto [n1, n2] = apply_cross(t1, t2, {a1, a1 + l1, a2, a2 + l2}, problem.variant(), problem.dm());
        out.tours[i] = std::move(n1);
        out.tours[j] = std::move(n2);
        refresh(out, problem);
        return out;
    }
    return sol;
}

// ---------------------------------------------------------------------------

namespace {

std::pair<int, int> select_pair(const Solution &sol, const Problem &problem, TourSelection how, Rng &rng) {
    const int nt = static_cast<int>(sol.tours.size());
    if (how == TourSelection::Random) {
        const int i = static_cast<int>(uniform_int(rng, 0, nt - 1));
        int j = static_cast<int>(uniform_int(rng, 0, nt - 2));
        if (j >= i) ++j;
        return {i, j};
    }
    int hi = 0, lo = 0;
    double chi = tour_cost(sol.tours[0], problem.dm()), clo = chi;
    for (int v = 1; v < nt; ++v) {
        const double c = tour_cost(sol.tours[v], problem.dm());
        if (c > chi) chi = c, hi = v;
        if (c < clo) clo = c, lo = v;
    }
    if (hi == lo) return {0, 1};
    return {hi, lo};
}

} // namespace

SolveReport solve(const Problem &problem, const SolverConfig &config) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    SolveReport rep;
    Rng rng(derive_seed(config.seed, 0x736f6c7665ULL));

    Solution cur = initial_solution(problem, config.seed);
    Solution best = cur;
    long iteration = 0;
    rep.trace.push_back({iteration, cur.objective_value, best.objective_value, TraceEvent::Initial});

    auto finish = [&] {
        rep.solution = best;
        rep.objective = best.objective_value;
        rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return rep;
    };

    if (cur.tours.size() < 2) {
        for (auto &t : cur.tours) {
            t = intra_improve(t, problem, config.intra);
            if (config.intra != IntraOperator::None) ++rep.intra_invocations;
        }
        refresh(cur, problem);
        if (cur.objective_value < best.objective_value) best = cur;
        if (config.intra != IntraOperator::None)
            rep.trace.push_back({++iteration, cur.objective_value, best.objective_value, TraceEvent::Move});
        return finish();
    }

    int c_per = 0;
    for (;;) {
        for (;;) {
            const auto [i, j] = select_pair(cur, problem, config.selection, rng);
            const Tour &t1 = cur.tours[i], &t2 = cur.tours[j];
            const SearchRange range = SearchRange::for_problem(t1, t2, problem);
            ++rep.inter_calls;
            auto res = config.inter == InterOperator::NeuroCross
                           ? neuro_cross(t1, t2, *config.predictor, config.k, problem, range, config.eps)
                           : cross_exchange(t1, t2, problem, range, config.eps);
            if (!res) break;
            rep.moves.push_back({i, j, res->move});
            ++rep.accepted_moves;
            cur.tours[i] = std::move(res->t1);
            cur.tours[j] = std::move(res->t2);
            if (config.intra != IntraOperator::None) {
                cur.tours[i] = intra_improve(cur.tours[i], problem, config.intra);
                cur.tours[j] = intra_improve(cur.tours[j], problem, config.intra);
                rep.intra_invocations += 2;
            }
            refresh(cur, problem);
            rep.trace.push_back({++iteration, cur.objective_value, std::min(best.objective_value, cur.objective_value),
                                 TraceEvent::Move});
        }
        if (cur.objective_value < best.objective_value) best = cur;
        if (c_per == config.p) break;
        ++c_per;
        cur = perturb(cur, problem, rng);
        ++rep.perturbations;
        rep.trace.push_back({++iteration, cur.objective_value, std::min(best.objective_value, cur.objective_value),
                             TraceEvent::Perturb});
    }
    return finish();
}

} // namespace nce
