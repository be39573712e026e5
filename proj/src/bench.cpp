#include "nce/bench.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>

#include "nce/parallel.hpp"
#include "nce/rng.hpp"

namespace nce {

// ---------------------------------------------------------------------------
// Exact solver for tiny instances

Solution exact_tiny(const Problem &problem, bool require_nonempty) {
    const auto &inst = problem.instance();
    const auto &dm = problem.dm();
    const int n = inst.num_cities();
    if (n > kExactTinyMaxCities)
        throw ConfigError("exact_tiny supports at most " + std::to_string(kExactTinyMaxCities) + " cities, got " +
                          std::to_string(n));
    const int full = 1 << n;
    const double inf = std::numeric_limits<double>::infinity();
    const bool flexible = flexible_return(inst.variant);

    std::vector<double> demand(full, 0.0);
    for (int s = 1; s < full; ++s) {
        const int c = std::countr_zero(static_cast<unsigned>(s));
        demand[s] = demand[s & (s - 1)] + problem.demand(c);
    }

    // Best closed tour per (depot, subset), with its city order.
    struct DepotTable {
        std::vector<double> cost;
        std::vector<int> last;
        std::vector<double> path;  // [subset * n + last]
        std::vector<int> parent;   // predecessor city, -1 from the depot
    };
    std::vector<std::optional<DepotTable>> tables(inst.num_depots());
    for (int d : inst.vehicle_start_depot) {
        if (tables[d]) continue;
        DepotTable t;
        t.path.assign(static_cast<std::size_t>(full) * std::max(n, 1), inf);
        t.parent.assign(t.path.size(), -1);
        for (int c = 0; c < n; ++c) t.path[(1u << c) * n + c] = dm.depot_city(d, c);
        for (int s = 1; s < full; ++s)
            for (int c = 0; c < n; ++c) {
                if (!(s >> c & 1) || s == (1 << c)) continue;
                const int prev = s ^ (1 << c);
                double best = inf;
                int arg = -1;
                for (int p = 0; p < n; ++p) {
                    if (!(prev >> p & 1)) continue;
                    const double v = t.path[static_cast<std::size_t>(prev) * n + p] + dm.city_city(p, c);
                    if (v < best) best = v, arg = p;
                }
                t.path[static_cast<std::size_t>(s) * n + c] = best;
                t.parent[static_cast<std::size_t>(s) * n + c] = arg;
            }
        t.cost.assign(full, inf);
        t.last.assign(full, -1);
        t.cost[0] = 0.0;
        for (int s = 1; s < full; ++s) {
            if (demand[s] > problem.capacity() + 1e-9) continue;
            for (int c = 0; c < n; ++c) {
                if (!(s >> c & 1)) continue;
                const double close = flexible ? dm.nearest_depot_distance(c) : dm.depot_city(d, c);
                const double v = t.path[static_cast<std::size_t>(s) * n + c] + close;
                if (v < t.cost[s]) t.cost[s] = v, t.last[s] = c;
            }
        }
        tables[d] = std::move(t);
    }

    const int nv = inst.num_vehicles;
    std::vector<std::vector<double>> f(nv + 1, std::vector<double>(full, inf));
    std::vector<std::vector<int>> pick(nv + 1, std::vector<int>(full, -1));
    f[0][0] = 0.0;
    for (int v = 1; v <= nv; ++v) {
        const auto &tc = tables[inst.vehicle_start_depot[v - 1]]->cost;
        for (int s = 0; s < full; ++s) {
            // Enumerate subsets t of s, including the empty one last.
            for (int t = s;; t = (t - 1) & s) {
                if (!(require_nonempty && t == 0) && tc[t] < inf && f[v - 1][s ^ t] < inf) {
                    const double val = combine(inst.objective, f[v - 1][s ^ t], tc[t]);
                    if (val < f[v][s]) f[v][s] = val, pick[v][s] = t;
                }
                if (t == 0) break;
            }
        }
    }
    if (!(f[nv][full - 1] < inf)) throw InfeasibleInstance("no feasible assignment of cities to vehicles");

    Solution sol = empty_solution(problem);
    int rest = full - 1;
    for (int v = nv; v >= 1; --v) {
        const int t = pick[v][rest];
        const auto &tab = *tables[inst.vehicle_start_depot[v - 1]];
        std::vector<int> order;
        int s = t, c = tab.last[t];
        while (s) {
            order.push_back(c);
            const int p = tab.parent[static_cast<std::size_t>(s) * n + c];
            s ^= 1 << c;
            c = p;
        }
        std::reverse(order.begin(), order.end());
        sol.tours[v - 1].cities = std::move(order);
        rest ^= t;
    }
    refresh(sol, problem);
    return sol;
}

// ---------------------------------------------------------------------------
// Bench

std::string_view to_string(Method m) {
    switch (m) {
    case Method::CE: return "ce";
    case Method::NCEExact: return "nce-exact";
    case Method::NCELearned: return "nce-learned";
    case Method::ExactTiny: return "exact-tiny";
    }
    return "?";
}

Method parse_method(std::string_view s) {
    if (s == "ce") return Method::CE;
    if (s == "nce-exact") return Method::NCEExact;
    if (s == "nce-learned") return Method::NCELearned;
    if (s == "exact-tiny") return Method::ExactTiny;
    throw ConfigError("unknown method '" + std::string(s) + "'");
}

void BenchSpec::validate() const {
    if (cells.empty()) throw ConfigError("bench needs at least one cell");
    if (instances_per_cell < 1) throw ConfigError("instances per cell must be positive");
    if (methods.empty()) throw ConfigError("bench needs at least one method");
    if (k < 1) throw ConfigError("k must be at least 1");
    if (p < 0) throw ConfigError("p must be non-negative");
    for (const auto &c : cells) {
        GeneratorConfig g{IntRange::fixed(c.num_cities), IntRange::fixed(c.num_depots),
                          IntRange::fixed(c.num_vehicles), c.variant, 0};
        g.validate();
        for (Method m : methods)
            if (m == Method::ExactTiny && c.num_cities > kExactTinyMaxCities)
                throw ConfigError("exact-tiny needs at most " + std::to_string(kExactTinyMaxCities) + " cities");
    }
    for (Method m : methods)
        if (m == Method::NCELearned && !learned) throw ConfigError("nce-learned needs a trained checkpoint");
}

Instance bench_instance(const BenchSpec &spec, std::size_t cell, int i) {
    const auto &c = spec.cells[cell];
    GeneratorConfig g{IntRange::fixed(c.num_cities), IntRange::fixed(c.num_depots), IntRange::fixed(c.num_vehicles),
                      c.variant, derive_seed(derive_seed(spec.seed, cell), static_cast<std::uint64_t>(i))};
    return generate(g);
}

std::optional<Method> reference_method(const std::vector<Method> &methods) {
    if (std::find(methods.begin(), methods.end(), Method::CE) != methods.end()) return Method::CE;
    if (std::find(methods.begin(), methods.end(), Method::ExactTiny) != methods.end()) return Method::ExactTiny;
    return std::nullopt;
}

SolverConfig method_config(const BenchSpec &spec, Method m, std::uint64_t seed) {
    SolverConfig c;
    c.k = spec.k;
    c.p = spec.p;
    c.intra = spec.intra;
    c.selection = spec.selection;
    c.seed = seed;
    switch (m) {
    case Method::CE: c.inter = InterOperator::CrossExchange; break;
    case Method::NCEExact:
        c.inter = InterOperator::NeuroCross;
        c.predictor = std::make_shared<ExactOracle>();
        break;
    case Method::NCELearned:
        c.inter = InterOperator::NeuroCross;
        c.predictor = spec.learned;
        break;
    case Method::ExactTiny: throw ConfigError("exact-tiny is not a solver configuration");
    }
    return c;
}

BenchResult run_bench(const BenchSpec &spec) {
    spec.validate();
    BenchResult res;
    res.spec = spec;
    const std::size_t per = static_cast<std::size_t>(spec.instances_per_cell);
    const std::size_t jobs = spec.cells.size() * per;
    std::vector<std::vector<BenchRun>> out(jobs);
    parallel_for(jobs, [&](std::size_t job) {
        const std::size_t cell = job / per;
        const int i = static_cast<int>(job % per);
        const Problem problem(bench_instance(spec, cell, i));
        const std::uint64_t seed = derive_seed(derive_seed(spec.seed ^ 0x5eedULL, cell), static_cast<std::uint64_t>(i));
        for (Method m : spec.methods) {
            BenchRun run{cell, i, m};
            if (m == Method::ExactTiny) {
                const auto t0 = std::chrono::steady_clock::now();
                run.cost = exact_tiny(problem).objective_value;
                run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            } else {
                const SolveReport rep = solve(problem, method_config(spec, m, seed));
                run.cost = rep.objective;
                run.seconds = rep.wall_seconds;
                run.accepted_moves = rep.accepted_moves;
            }
            out[job].push_back(run);
        }
    });
    for (auto &v : out) res.runs.insert(res.runs.end(), v.begin(), v.end());

    const auto ref = reference_method(spec.methods);
    for (std::size_t cell = 0; cell < spec.cells.size(); ++cell)
        for (Method m : spec.methods) {
            BenchSummary s{cell, m};
            double ref_sum = 0.0;
            for (const auto &r : res.runs) {
                if (r.cell != cell) continue;
                if (r.method == m) {
                    ++s.instances;
                    s.mean_cost += r.cost;
                    s.mean_seconds += r.seconds;
                }
                if (ref && r.method == *ref) ref_sum += r.cost;
            }
            s.mean_cost /= s.instances;
            s.mean_seconds /= s.instances;
            if (ref) {
                s.mean_ref = ref_sum / s.instances;
                s.gap = (s.mean_cost - s.mean_ref) / s.mean_ref;
            } else {
                s.mean_ref = s.gap = std::numeric_limits<double>::quiet_NaN();
            }
            res.summary.push_back(s);
        }
    return res;
}

std::string fmt_num(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

namespace {

void cell_fields(const BenchCell &c, std::ostream &out) {
    out << c.num_cities << "," << c.num_depots << "," << c.num_vehicles << "," << to_string(c.variant);
}

} // namespace

void write_bench_csv(const BenchResult &r, std::ostream &out) {
    out << "n_cities,n_depots,n_vehicles,variant,method,instances,mean_cost,ref_cost,gap\n";
    for (const auto &s : r.summary) {
        cell_fields(r.spec.cells[s.cell], out);
        out << "," << to_string(s.method) << "," << s.instances << "," << fmt_num(s.mean_cost) << ","
            << fmt_num(s.mean_ref) << "," << fmt_num(s.gap) << "\n";
    }
}

void write_bench_runs_csv(const BenchResult &r, std::ostream &out) {
    out << "n_cities,n_depots,n_vehicles,variant,instance,method,cost,accepted_moves\n";
    for (const auto &run : r.runs) {
        cell_fields(r.spec.cells[run.cell], out);
        out << "," << run.instance << "," << to_string(run.method) << "," << fmt_num(run.cost) << ","
            << run.accepted_moves << "\n";
    }
}

void write_bench_timing_csv(const BenchResult &r, std::ostream &out) {
    out << "n_cities,n_depots,n_vehicles,variant,method,mean_seconds\n";
    for (const auto &s : r.summary) {
        cell_fields(r.spec.cells[s.cell], out);
        out << "," << to_string(s.method) << "," << fmt_num(s.mean_seconds) << "\n";
    }
}

void write_bench_table(const BenchResult &r, std::ostream &out) {
    char line[256];
    std::snprintf(line, sizeof line, "%-22s %-12s %10s %9s %10s\n", "cell", "method", "cost", "gap(%)", "time(s)");
    out << line;
    for (const auto &s : r.summary) {
        const auto &c = r.spec.cells[s.cell];
        char cell[64];
        std::snprintf(cell, sizeof cell, "(%d,%d,%d) %s", c.num_cities, c.num_depots, c.num_vehicles,
                      std::string(to_string(c.variant)).c_str());
        char gap[32] = "-";
        if (!std::isnan(s.gap)) std::snprintf(gap, sizeof gap, "%.2f", 100.0 * s.gap);
        std::snprintf(line, sizeof line, "%-22s %-12s %10.4f %9s %10.4f\n", cell,
                      std::string(to_string(s.method)).c_str(), s.mean_cost, gap, s.mean_seconds);
        out << line;
    }
}

// ---------------------------------------------------------------------------
// Ablations

std::string_view to_string(AblationKind k) {
    switch (k) {
    case AblationKind::K: return "k";
    case AblationKind::P: return "p";
    case AblationKind::Intra: return "intra";
    case AblationKind::Selection: return "selection";
    }
    return "?";
}

AblationKind parse_ablation(std::string_view s) {
    if (s == "k" || s == "K") return AblationKind::K;
    if (s == "p") return AblationKind::P;
    if (s == "intra") return AblationKind::Intra;
    if (s == "selection") return AblationKind::Selection;
    throw ConfigError("unknown ablation '" + std::string(s) + "'");
}

std::vector<std::string> ablation_grid(AblationKind kind) {
    switch (kind) {
    case AblationKind::K: return {"1", "2", "3", "5", "7", "10", "20", "30"};
    case AblationKind::P: return {"0", "1", "2", "3", "5", "7", "10", "20"};
    case AblationKind::Intra: return {"2opt", "2opt+oropt"};
    case AblationKind::Selection: return {"maxmin", "random"};
    }
    return {};
}

AblationResult run_ablation(AblationKind kind, const BenchSpec &spec) {
    AblationResult res;
    res.kind = kind;
    res.spec = spec;
    BenchSpec base = spec;
    base.methods.erase(std::remove(base.methods.begin(), base.methods.end(), Method::ExactTiny), base.methods.end());
    if (base.methods.empty()) throw ConfigError("ablation needs a solver method");
    for (const auto &value : ablation_grid(kind)) {
        BenchSpec s = base;
        switch (kind) {
        case AblationKind::K: s.k = std::stoul(value); break;
        case AblationKind::P: s.p = std::stoi(value); break;
        case AblationKind::Intra: s.intra = parse_intra(value); break;
        case AblationKind::Selection: s.selection = parse_selection(value); break;
        }
        const BenchResult r = run_bench(s);
        for (const auto &sum : r.summary)
            res.rows.push_back({value, sum.cell, sum.method, sum.instances, sum.mean_cost, sum.mean_seconds});
    }
    return res;
}

void write_ablation_csv(const AblationResult &r, std::ostream &out) {
    out << "param,value,n_cities,n_depots,n_vehicles,variant,method,instances,mean_cost\n";
    for (const auto &row : r.rows) {
        out << to_string(r.kind) << "," << row.value << ",";
        cell_fields(r.spec.cells[row.cell], out);
        out << "," << to_string(row.method) << "," << row.instances << "," << fmt_num(row.mean_cost) << "\n";
    }
}

void write_ablation_timing_csv(const AblationResult &r, std::ostream &out) {
    out << "param,value,n_cities,n_depots,n_vehicles,variant,method,mean_seconds\n";
    for (const auto &row : r.rows) {
        out << to_string(r.kind) << "," << row.value << ",";
        cell_fields(r.spec.cells[row.cell], out);
        out << "," << to_string(row.method) << "," << fmt_num(row.mean_seconds) << "\n";
    }
}

// ---------------------------------------------------------------------------
// Plot data

void write_scatter_csv(const PredictorEval &ev, std::ostream &out) {
    out << "pair,a1,a2,predicted,true\n";
    for (const auto &s : ev.scatter)
        out << s.pair << "," << s.a1 << "," << s.a2 << "," << fmt_num(s.predicted) << "," << fmt_num(s.truth) << "\n";
}

void write_argmax_csv(const PredictorEval &ev, std::ostream &out) {
    out << "k,argmax_ratio,pairs\n";
    for (std::size_t i = 0; i < ev.ks.size(); ++i)
        out << ev.ks[i] << "," << fmt_num(ev.argmax_ratio[i]) << "," << ev.pairs << "\n";
}

void write_trace_csv(const SolveReport &rep, std::ostream &out) {
    out << "iteration,objective,best,event\n";
    for (const auto &t : rep.trace)
        out << t.iteration << "," << fmt_num(t.objective) << "," << fmt_num(t.best_objective) << ","
            << to_string(t.event) << "\n";
}

void write_routes_csv(const Solution &sol, const Instance &inst, std::ostream &out) {
    out << "tour,order,x,y,kind\n";
    for (std::size_t v = 0; v < sol.tours.size(); ++v) {
        const Tour &t = sol.tours[v];
        int order = 0;
        auto row = [&](Point q, const char *kind) {
            out << v << "," << order++ << "," << fmt_num(q.x) << "," << fmt_num(q.y) << "," << kind << "\n";
        };
        row(inst.depots[t.start_depot], "start_depot");
        for (int c : t.cities) row(inst.cities[c], "city");
        row(inst.depots[t.empty() ? t.start_depot : t.return_depot], "return_depot");
    }
}

} // namespace nce
