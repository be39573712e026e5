#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nce/core.hpp"
#include "nce/instances.hpp"
#include "nce/solver.hpp"
#include "nce/trainer.hpp"

namespace nce {

inline constexpr int kExactTinyMaxCities = 9;

/// Optimal solution by dynamic programming over city subsets: a Held-Karp
/// table per start depot, then an assignment of disjoint subsets to vehicles.
/// With require_nonempty every vehicle must visit at least one city.
Solution exact_tiny(const Problem &problem, bool require_nonempty = false);

enum class Method { CE, NCEExact, NCELearned, ExactTiny };
std::string_view to_string(Method m);
Method parse_method(std::string_view s);

struct BenchCell {
    int num_cities = 20;
    int num_depots = 2;
    int num_vehicles = 2;
    Variant variant = Variant::FMDVRP;
    friend bool operator==(const BenchCell &, const BenchCell &) = default;
};

struct BenchSpec {
    std::vector<BenchCell> cells;
    int instances_per_cell = 100;
    std::vector<Method> methods{Method::CE, Method::NCEExact};
    std::size_t k = 10;
    int p = 5;
    IntraOperator intra = IntraOperator::TwoOptOrOpt;
    TourSelection selection = TourSelection::MaxMin;
    std::uint64_t seed = 0;
    std::shared_ptr<const Predictor> learned; ///< needed for NCELearned

    void validate() const;
};

/// Instance i of a cell; identical for every method.
Instance bench_instance(const BenchSpec &spec, std::size_t cell, int i);

struct BenchRun {
    std::size_t cell = 0;
    int instance = 0;
    Method method = Method::CE;
    double cost = 0.0;
    double seconds = 0.0;
    long accepted_moves = 0;
};

struct BenchSummary {
    std::size_t cell = 0;
    Method method = Method::CE;
    int instances = 0;
    double mean_cost = 0.0;
    double mean_ref = 0.0; ///< NaN without a reference method
    double gap = 0.0;      ///< (mean_cost - mean_ref) / mean_ref
    double mean_seconds = 0.0;
};

struct BenchResult {
    BenchSpec spec;
    std::vector<BenchRun> runs; ///< sorted by (cell, instance, method)
    std::vector<BenchSummary> summary;
};

/// Reference method of a bench: CE when present, else exact-tiny, else none.
std::optional<Method> reference_method(const std::vector<Method> &methods);

BenchResult run_bench(const BenchSpec &spec);

/// Solver configuration a bench uses for one method.
SolverConfig method_config(const BenchSpec &spec, Method m, std::uint64_t seed);

void write_bench_csv(const BenchResult &r, std::ostream &out);
void write_bench_runs_csv(const BenchResult &r, std::ostream &out);
void write_bench_timing_csv(const BenchResult &r, std::ostream &out);
void write_bench_table(const BenchResult &r, std::ostream &out);

enum class AblationKind { K, P, Intra, Selection };
std::string_view to_string(AblationKind k);
AblationKind parse_ablation(std::string_view s);

/// Parameter grid of an ablation, as printable labels.
std::vector<std::string> ablation_grid(AblationKind kind);

struct AblationRow {
    std::string value;
    std::size_t cell = 0;
    Method method = Method::NCEExact;
    int instances = 0;
    double mean_cost = 0.0;
    double mean_seconds = 0.0;
};

struct AblationResult {
    AblationKind kind = AblationKind::K;
    BenchSpec spec;
    std::vector<AblationRow> rows;
};

/// Runs every configured method except exact-tiny at each grid value.
AblationResult run_ablation(AblationKind kind, const BenchSpec &spec);
void write_ablation_csv(const AblationResult &r, std::ostream &out);
void write_ablation_timing_csv(const AblationResult &r, std::ostream &out);

// Plot data.
void write_scatter_csv(const PredictorEval &ev, std::ostream &out);
void write_argmax_csv(const PredictorEval &ev, std::ostream &out);
void write_trace_csv(const SolveReport &rep, std::ostream &out);
void write_routes_csv(const Solution &sol, const Instance &inst, std::ostream &out);

/// Fixed-precision number formatting shared by every CSV writer.
std::string fmt_num(double v);

} // namespace nce
