#include "nce/core.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace nce {

std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::FMDVRP: return "fmdvrp";
    case Variant::MDVRP: return "mdvrp";
    case Variant::MTSP: return "mtsp";
    case Variant::CVRP: return "cvrp";
    }
    return "?";
}

std::string_view to_string(Objective o) { return o == Objective::MinMax ? "minmax" : "minsum"; }

Variant parse_variant(std::string_view s) {
    if (s == "fmdvrp") return Variant::FMDVRP;
    if (s == "mdvrp") return Variant::MDVRP;
    if (s == "mtsp") return Variant::MTSP;
    if (s == "cvrp") return Variant::CVRP;
    throw ParseError("unknown variant '" + std::string(s) + "'");
}

Objective parse_objective(std::string_view s) {
    if (s == "minmax") return Objective::MinMax;
    if (s == "minsum") return Objective::MinSum;
    throw ParseError("unknown objective '" + std::string(s) + "'");
}

Objective default_objective(Variant v) { return v == Variant::CVRP ? Objective::MinSum : Objective::MinMax; }

double euclidean(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

void Instance::validate() const {
    auto fail = [&](const std::string &msg) { throw InstanceError(name.empty() ? msg : name + ": " + msg); };
    if (cities.empty()) fail("instance has no cities");
    if (depots.empty()) fail("instance has no depots");
    for (const auto &p : depots)
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) fail("non-finite depot coordinate");
    for (const auto &p : cities)
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) fail("non-finite city coordinate");
    if (num_vehicles < 1) fail("num_vehicles must be positive");
    if (static_cast<int>(vehicle_start_depot.size()) != num_vehicles)
        fail("vehicle_start_depot must list one depot per vehicle");
    for (int d : vehicle_start_depot)
        if (d < 0 || d >= num_depots()) fail("vehicle start depot out of range");
    if (variant == Variant::MTSP && depots.size() != 1) fail("mtsp requires exactly one depot");
    if (variant == Variant::CVRP) {
        if (!demands || !capacity) fail("cvrp requires demands and capacity");
    }
    if (capacity && !(*capacity > 0.0 && std::isfinite(*capacity))) fail("capacity must be positive");
    if (demands) {
        if (static_cast<int>(demands->size()) != num_cities()) fail("demands must list one value per city");
        for (double q : *demands) {
            if (!(q >= 0.0) || !std::isfinite(q)) fail("demands must be finite and non-negative");
            if (capacity && q > *capacity) fail("a city demand exceeds the vehicle capacity");
        }
    }
}

DistanceMatrix::DistanceMatrix(const Instance &inst)
    : num_depots_(inst.num_depots()), num_cities_(inst.num_cities()), n_(num_depots_ + num_cities_),
      d_(static_cast<std::size_t>(n_) * n_, 0.0), nearest_(num_cities_, 0) {
    std::vector<Point> pts = inst.depots;
    pts.insert(pts.end(), inst.cities.begin(), inst.cities.end());
    for (int i = 0; i < n_; ++i)
        for (int j = i + 1; j < n_; ++j) {
            const double d = euclidean(pts[i], pts[j]);
            d_[static_cast<std::size_t>(i) * n_ + j] = d;
            d_[static_cast<std::size_t>(j) * n_ + i] = d;
        }
    for (int c = 0; c < num_cities_; ++c) {
        int best = 0;
        for (int d = 1; d < num_depots_; ++d)
            if (depot_city(d, c) < depot_city(best, c)) best = d;
        nearest_[c] = best;
    }
}

Problem::Problem(Instance inst) : inst_(std::move(inst)) {
    inst_.validate();
    dm_ = DistanceMatrix(inst_);
}

double Problem::capacity() const {
    return inst_.capacity ? *inst_.capacity : std::numeric_limits<double>::infinity();
}

std::span<const double> Problem::demands() const {
    if (!inst_.demands) return {};
    return *inst_.demands;
}

void resolve_return_depot(Tour &tour, Variant variant, const DistanceMatrix &dm) {
    if (!flexible_return(variant) || tour.cities.empty())
        tour.return_depot = tour.start_depot;
    else
        tour.return_depot = dm.nearest_depot(tour.cities.back());
}

double tour_cost(const Tour &tour, const DistanceMatrix &dm) {
    if (tour.cities.empty()) return 0.0;
    double c = dm.depot_city(tour.start_depot, tour.cities.front());
    for (std::size_t k = 1; k < tour.cities.size(); ++k) c += dm.city_city(tour.cities[k - 1], tour.cities[k]);
    return c + dm.depot_city(tour.return_depot, tour.cities.back());
}

double tour_demand(const Tour &tour, const Problem &problem) {
    double q = 0.0;
    for (int c : tour.cities) q += problem.demand(c);
    return q;
}

double pair_cost(const Tour &t1, const Tour &t2, const DistanceMatrix &dm, Objective objective) {
    return combine(objective, tour_cost(t1, dm), tour_cost(t2, dm));
}

double solution_objective(const Solution &sol, const DistanceMatrix &dm, Objective objective) {
    double acc = 0.0;
    for (const auto &t : sol.tours) acc = combine(objective, acc, tour_cost(t, dm));
    return acc;
}

Solution empty_solution(const Problem &problem) {
    const auto &inst = problem.instance();
    Solution sol;
    sol.tours.resize(inst.num_vehicles);
    for (int v = 0; v < inst.num_vehicles; ++v) {
        sol.tours[v].vehicle = v;
        sol.tours[v].start_depot = inst.vehicle_start_depot[v];
        sol.tours[v].return_depot = inst.vehicle_start_depot[v];
    }
    return sol;
}

void refresh(Solution &sol, const Problem &problem) {
    for (auto &t : sol.tours) resolve_return_depot(t, problem.variant(), problem.dm());
    sol.objective_value = solution_objective(sol, problem.dm(), problem.objective());
}

std::vector<std::string> check_solution(const Solution &sol, const Problem &problem) {
    const auto &inst = problem.instance();
    std::vector<std::string> issues;
    if (static_cast<int>(sol.tours.size()) != inst.num_vehicles) issues.push_back("tour count differs from vehicle count");
    std::vector<int> seen(inst.num_cities(), 0);
    for (std::size_t k = 0; k < sol.tours.size(); ++k) {
        const Tour &t = sol.tours[k];
        std::ostringstream id;
        id << "tour " << k;
        if (t.vehicle != static_cast<int>(k)) issues.push_back(id.str() + ": vehicle index mismatch");
        if (k < inst.vehicle_start_depot.size() && t.start_depot != inst.vehicle_start_depot[k])
            issues.push_back(id.str() + ": wrong start depot");
        for (int c : t.cities) {
            if (c < 0 || c >= inst.num_cities()) {
                issues.push_back(id.str() + ": city index out of range");
                continue;
            }
            ++seen[c];
        }
        Tour resolved = t;
        resolve_return_depot(resolved, inst.variant, problem.dm());
        if (resolved.return_depot != t.return_depot) issues.push_back(id.str() + ": return depot violates the variant rule");
        if (problem.capacitated() && tour_demand(t, problem) > problem.capacity() + 1e-9)
            issues.push_back(id.str() + ": capacity exceeded");
    }
    for (int c = 0; c < inst.num_cities(); ++c)
        if (seen[c] != 1) issues.push_back("city " + std::to_string(c) + " visited " + std::to_string(seen[c]) + " times");
    if (issues.empty()) {
        const double obj = solution_objective(sol, problem.dm(), problem.objective());
        if (std::abs(obj - sol.objective_value) > 1e-9) issues.push_back("objective value is stale");
    }
    return issues;
}

} // namespace nce
