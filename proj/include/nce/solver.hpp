#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "nce/core.hpp"
#include "nce/cross.hpp"
#include "nce/predictor.hpp"
#include "nce/rng.hpp"

namespace nce {

enum class InterOperator { CrossExchange, NeuroCross };
enum class IntraOperator { None, TwoOpt, TwoOptOrOpt };
enum class TourSelection { MaxMin, Random };

std::string_view to_string(IntraOperator op);
std::string_view to_string(TourSelection s);
IntraOperator parse_intra(std::string_view s);
TourSelection parse_selection(std::string_view s);

inline constexpr std::size_t kAllPairs = std::numeric_limits<std::size_t>::max();

struct SolverConfig {
    InterOperator inter = InterOperator::NeuroCross;
    std::shared_ptr<const Predictor> predictor; ///< required for NeuroCross
    std::size_t k = 10;                         ///< candidate set size
    int p = 5;                                  ///< perturbation budget
    IntraOperator intra = IntraOperator::TwoOptOrOpt;
    TourSelection selection = TourSelection::MaxMin;
    std::uint64_t seed = 0;
    double eps = kImprovementEps;

    void validate() const;
};

/// k-means clustering seeded at the vehicles' depots, then a nearest-neighbour
/// route per cluster. Vehicles sharing a depot start from centroids spread on a
/// small ring around it; the seed rotates that ring.
Solution initial_solution(const Problem &problem, std::uint64_t seed);

struct ExchangeResult {
    Tour t1;
    Tour t2;
    CrossMove move;
};

/// Two-stage search: rank every (a1, a2) with the predictor, then search the end
/// points exactly for the top k and apply the best improving move.
std::optional<ExchangeResult> neuro_cross(const Tour &t1, const Tour &t2, const Predictor &predictor, std::size_t k,
                                          const Problem &problem, const SearchRange &range,
                                          double eps = kImprovementEps);

/// Full CROSS search followed by the application of the best move.
std::optional<ExchangeResult> cross_exchange(const Tour &t1, const Tour &t2, const Problem &problem,
                                             const SearchRange &range, double eps = kImprovementEps);

/// Single-tour local search; never increases the tour cost.
Tour intra_improve(const Tour &tour, const Problem &problem, IntraOperator op);

/// Random CROSS move between two random tours (segment lengths 0..3 each).
Solution perturb(const Solution &sol, const Problem &problem, Rng &rng);

struct AcceptedMove {
    int tour1 = 0;
    int tour2 = 0;
    CrossMove move;
    friend bool operator==(const AcceptedMove &x, const AcceptedMove &y) {
        return x.tour1 == y.tour1 && x.tour2 == y.tour2 && x.move == y.move && x.move.decrement == y.move.decrement;
    }
};

enum class TraceEvent { Initial, Move, Perturb };
std::string_view to_string(TraceEvent e);

struct TraceEntry {
    long iteration = 0;
    double objective = 0.0;      ///< current solution
    double best_objective = 0.0; ///< best seen so far
    TraceEvent event = TraceEvent::Initial;
    friend bool operator==(const TraceEntry &, const TraceEntry &) = default;
};

struct SolveReport {
    Solution solution; ///< best solution seen
    double objective = 0.0;
    double wall_seconds = 0.0;
    long inter_calls = 0;
    long accepted_moves = 0;
    long perturbations = 0;
    long intra_invocations = 0;
    std::vector<TraceEntry> trace;
    std::vector<AcceptedMove> moves;
};

/// Alternating inter/intra improvement with random perturbations on stalls.
SolveReport solve(const Problem &problem, const SolverConfig &config);

} // namespace nce
