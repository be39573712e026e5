#pragma once

// Deliberately broken solutions for MILP validation.

#include <optional>
#include <string>
#include <vector>

#include "nce/milp.hpp"

namespace corrupt {

/// Arc/order assignment written directly from the tours.
inline std::vector<double> assignment(const nce::MilpModel &m, const nce::Solution &sol) {
    std::vector<double> v(m.vars.size(), 0.0);
    double q = 0.0;
    for (int k = 0; k < m.num_vehicles; ++k) {
        const nce::Tour &t = sol.tours[k];
        if (t.cities.empty()) continue;
        int prev = m.start_node(t.start_depot), pos = 0;
        for (int c : t.cities) {
            v[m.x(prev, m.city_node(c), k)] = 1.0;
            v[m.u(m.city_node(c), k)] = ++pos;
            prev = m.city_node(c);
        }
        v[m.x(prev, m.return_node(t.return_depot), k)] = 1.0;
    }
    for (int k = 0; k < m.num_vehicles; ++k) {
        double len = 0.0;
        for (const auto &term : m.cons[k].terms)
            if (term.var != m.objective_var) len += term.coef * v[term.var];
        q = std::max(q, len);
    }
    v[m.objective_var] = q;
    return v;
}

/// Cuts two consecutive cities out of the longest tour into a separate cycle.
/// Degrees and flow stay balanced, so only the order constraints can catch it.
inline std::optional<std::vector<double>> subtour(const nce::MilpModel &m, const nce::Solution &sol) {
    int k = -1;
    for (int v = 0; v < m.num_vehicles; ++v)
        if (sol.tours[v].size() >= 3 && (k < 0 || sol.tours[v].size() > sol.tours[k].size())) k = v;
    if (k < 0) return std::nullopt;
    nce::Solution s = sol;
    const int a = s.tours[k].cities[1], b = s.tours[k].cities[2];
    s.tours[k].cities.erase(s.tours[k].cities.begin() + 1, s.tours[k].cities.begin() + 3);
    auto v = assignment(m, s);
    v[m.x(m.city_node(a), m.city_node(b), k)] = 1.0;
    v[m.x(m.city_node(b), m.city_node(a), k)] = 1.0;
    v[m.u(m.city_node(a), k)] = 1.0;
    v[m.u(m.city_node(b), k)] = 2.0;
    v[m.objective_var] += 10.0; // Q must not be the reason for rejection
    return v;
}

/// Copies one city into a second tour (visited twice).
inline nce::Solution duplicate_city(nce::Solution s) {
    for (auto &t : s.tours)
        if (!t.cities.empty()) {
            const int c = t.cities.front();
            for (auto &o : s.tours)
                if (&o != &t) {
                    o.cities.push_back(c);
                    return s;
                }
            t.cities.push_back(c);
            return s;
        }
    return s;
}

/// Removes one city from its tour (never visited).
inline nce::Solution drop_city(nce::Solution s) {
    for (auto &t : s.tours)
        if (!t.cities.empty()) {
            t.cities.pop_back();
            break;
        }
    return s;
}

} // namespace corrupt
