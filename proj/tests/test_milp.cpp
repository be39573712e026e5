#include <doctest.h>

#include <map>

#include "corrupt.hpp"
#include "nce/bench.hpp"
#include "nce/milp.hpp"
#include "nce/solver.hpp"
#include "oracles.hpp"

using namespace nce;

namespace {

std::map<std::string, int> family_counts(const MilpModel &m) {
    std::map<std::string, int> out;
    for (const auto &c : m.cons) ++out[std::string(c.family())];
    return out;
}

bool has_family(const FeasibilityReport &r, const std::string &f) {
    for (const auto &v : r.violated)
        if (v.family == f) return true;
    return false;
}

} // namespace

TEST_CASE("mtsp model sizes") {
    const Instance inst = [] {
        Instance i = oracle::random_instance(1, 3, 1, 2, Variant::MTSP);
        return i;
    }();
    const MilpModel m = build_milp(inst);
    const int V = 4, K = 2;
    CHECK(m.num_nodes == V);
    int bin = 0, integer = 0, cont = 0;
    for (const auto &v : m.vars) (v.type == VarType::Binary ? bin : v.type == VarType::Integer ? integer : cont)++;
    CHECK(bin == V * V * K);
    CHECK(integer == V * K);
    CHECK(cont == 1);
    const auto f = family_counts(m);
    CHECK(f.at("city_visit") == 3);
    CHECK(f.at("makespan") == K);
    CHECK(f.at("depot_departure") == K);
    CHECK(f.at("flow_balance") == 3 * K);
    CHECK(f.at("mtz") == K * 3 * (V - 1));
}

TEST_CASE("constraint counts follow the closed forms") {
    for (Variant var : {Variant::MTSP, Variant::MDVRP, Variant::FMDVRP}) {
        const Instance inst = oracle::random_instance(3, 6, 3, 4, var);
        const MilpModel m = build_milp(inst);
        const int C = 6, K = 4, D = inst.num_depots();
        const int S = var == Variant::FMDVRP ? 2 * D : D, V = S + C;
        int expected = K + C + C * K + K * C * (V - 1);
        if (var == Variant::MTSP) expected += K * S;
        else expected += C;
        if (var == Variant::MDVRP) expected += 2 * K;
        if (var == Variant::FMDVRP) expected += K + K * (S - 1) + 2 * K + 2 * K * D + K;
        CHECK(static_cast<int>(m.cons.size()) == expected);
        CHECK(static_cast<int>(m.vars.size()) == V * V * K + V * K + 1);
    }
}

TEST_CASE("cvrp has no formulation") {
    GeneratorConfig g;
    g.variant = Variant::CVRP;
    g.num_depots = IntRange::fixed(1);
    g.num_vehicles = IntRange::fixed(4);
    try {
        build_milp(generate(g));
        FAIL("expected an error");
    } catch (const UnsupportedVariant &e) {
        CHECK(std::string(e.what()).find("unsupported variant") != std::string::npos);
    }
}

TEST_CASE("single-vehicle flexible model is a tsp") {
    Instance inst;
    inst.variant = Variant::FMDVRP;
    inst.depots = {{0, 0}};
    inst.cities = {{1, 0}, {1, 1}, {0, 1}};
    inst.num_vehicles = 1;
    inst.vehicle_start_depot = {0};
    const Problem p(inst);
    const Solution opt = exact_tiny(p, true);
    CHECK(opt.objective_value == doctest::Approx(4.0).epsilon(1e-12));
    const auto rep = check_milp_feasibility(build_milp(inst), inst, opt);
    CHECK(rep.feasible);
    CHECK(rep.q == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("brute-force mtsp optimum satisfies every row") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Instance inst = oracle::random_instance(50 + s, 5, 1, 2, Variant::MTSP);
        const Problem p(inst);
        const Solution opt = exact_tiny(p, true);
        const auto rep = check_milp_feasibility(build_milp(inst), inst, opt);
        CHECK(rep.feasible);
        CHECK(rep.q == doctest::Approx(opt.objective_value).epsilon(1e-12));
    }
}

TEST_CASE("broken solutions are rejected by family") {
    const Instance inst = oracle::random_instance(8, 7, 2, 2, Variant::MDVRP);
    const Problem p(inst);
    const MilpModel m = build_milp(inst);
    const Solution sol = solve(p, [] {
        SolverConfig c;
        c.inter = InterOperator::CrossExchange;
        return c;
    }()).solution;
    CHECK(check_milp_feasibility(m, inst, sol).feasible);
    CHECK(has_family(check_milp_feasibility(m, inst, corrupt::duplicate_city(sol)), "city_visit"));
    CHECK(has_family(check_milp_feasibility(m, inst, corrupt::drop_city(sol)), "city_visit"));
    const auto sub = corrupt::subtour(m, sol);
    REQUIRE(sub);
    const auto rep = evaluate_assignment(m, *sub);
    CHECK_FALSE(rep.feasible);
    for (const auto &v : rep.violated) CHECK(v.family == "mtz");
    CHECK_THROWS(evaluate_assignment(m, {1.0, 2.0}));
}

TEST_CASE("random feasible solutions pass with matching makespan") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const Variant var = trial % 2 ? Variant::FMDVRP : Variant::MDVRP;
        const Instance inst = oracle::random_instance(200 + trial, 7, 2, 2, var);
        const Problem p(inst);
        Solution s = empty_solution(p);
        for (int c = 0; c < 7; ++c) s.tours[uniform_int(rng, 0, 1)].cities.push_back(c);
        if (var == Variant::FMDVRP && (s.tours[0].empty() || s.tours[1].empty())) continue;
        refresh(s, p);
        const auto rep = check_milp_feasibility(build_milp(inst), inst, s);
        CHECK(rep.feasible);
        CHECK(rep.q == doctest::Approx(s.objective_value).epsilon(1e-12));
    }
}

TEST_CASE("one-depot flexible and fixed models accept the same solutions") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        Instance a = oracle::random_instance(300 + trial, 4, 1, 2, Variant::MDVRP);
        Instance b = a;
        b.variant = Variant::FMDVRP;
        const MilpModel ma = build_milp(a), mb = build_milp(b);
        const Problem pa(a), pb(b);
        // Enumerate assignments of cities to vehicles in index order.
        for (int mask = 0; mask < 16; ++mask) {
            Solution s = empty_solution(pa);
            for (int c = 0; c < 4; ++c) s.tours[(mask >> c) & 1].cities.push_back(c);
            refresh(s, pa);
            const bool fa = check_milp_feasibility(ma, a, s).feasible;
            Solution t = s;
            refresh(t, pb);
            const bool fb = check_milp_feasibility(mb, b, t).feasible;
            // The flexible rows require every vehicle to leave its depot.
            const bool nonempty = !s.tours[0].empty() && !s.tours[1].empty();
            CHECK(fa);
            CHECK(fb == nonempty);
        }
    }
}

TEST_CASE("lp export round trip") {
    const Instance inst = oracle::random_instance(4, 2, 1, 1, Variant::MTSP);
    const MilpModel m = build_milp(inst);
    const std::string lp = export_lp(m);
    CHECK(lp.find("\r") == std::string::npos);
    CHECK(lp.find("x_0_1_0") != std::string::npos);
    CHECK(parse_lp(lp) == m);
    const MilpModel f = build_milp(oracle::random_instance(5, 7, 2, 2, Variant::FMDVRP));
    CHECK(parse_lp(export_lp(f)) == f);
    CHECK_THROWS_AS(parse_lp("Minimize\n obj: Q\nSubject To\n c.1: x_0 >=\nEnd\n"), ParseError);
}
