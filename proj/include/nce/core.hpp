#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nce {

/// Moves whose decrement does not exceed this value are treated as null.
inline constexpr double kImprovementEps = 1e-9;

// ---------------------------------------------------------------------------
// Errors. Every error carries a short machine-readable kind used by the CLI.

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string &what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string &kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string &w) : Error("config_error", w) {}
};
struct ParseError : Error {
    explicit ParseError(const std::string &w) : Error("parse_error", w) {}
};
struct InstanceError : Error {
    explicit InstanceError(const std::string &w) : Error("invalid_instance", w) {}
};
struct InfeasibleInstance : Error {
    explicit InfeasibleInstance(const std::string &w) : Error("infeasible_instance", w) {}
};
struct UnsupportedVariant : Error {
    explicit UnsupportedVariant(const std::string &w) : Error("unsupported_variant", w) {}
};
struct MoveError : Error {
    explicit MoveError(const std::string &w) : Error("invalid_move", w) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string &w) : Error("numeric_error", w) {}
};

// ---------------------------------------------------------------------------

enum class Variant { FMDVRP, MDVRP, MTSP, CVRP };
enum class Objective { MinMax, MinSum };

std::string_view to_string(Variant v);
std::string_view to_string(Objective o);
Variant parse_variant(std::string_view s);
Objective parse_objective(std::string_view s);

/// Default objective for a variant: min-sum for CVRP, min-max otherwise.
Objective default_objective(Variant v);

/// True when a vehicle may end its tour at any depot.
inline bool flexible_return(Variant v) { return v == Variant::FMDVRP; }

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point &, const Point &) = default;
};

double euclidean(Point a, Point b);

struct Instance {
    std::string name;
    Variant variant = Variant::FMDVRP;
    Objective objective = Objective::MinMax;
    std::vector<Point> depots;
    std::vector<Point> cities;
    int num_vehicles = 1;
    std::vector<int> vehicle_start_depot;
    std::optional<std::vector<double>> demands;
    std::optional<double> capacity;

    int num_depots() const { return static_cast<int>(depots.size()); }
    int num_cities() const { return static_cast<int>(cities.size()); }

    /// Throws InstanceError when an invariant does not hold.
    void validate() const;

    friend bool operator==(const Instance &, const Instance &) = default;
};

struct NodeId {
    enum class Kind { Depot, City };
    Kind kind = Kind::City;
    int index = 0;
    friend bool operator==(const NodeId &, const NodeId &) = default;
};

/// Euclidean distances over the node list [depots | cities].
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(const Instance &inst);

    int num_depots() const { return num_depots_; }
    int num_cities() const { return num_cities_; }
    int size() const { return n_; }

    int depot_node(int d) const { return d; }
    int city_node(int c) const { return num_depots_ + c; }
    bool is_depot_node(int node) const { return node < num_depots_; }

    double operator()(int node_a, int node_b) const {
        return d_[static_cast<std::size_t>(node_a) * n_ + node_b];
    }
    double depot_city(int d, int c) const { return (*this)(d, num_depots_ + c); }
    double city_city(int a, int b) const { return (*this)(num_depots_ + a, num_depots_ + b); }

    /// Nearest depot to a city; ties resolve to the lowest index.
    int nearest_depot(int c) const { return nearest_[c]; }
    double nearest_depot_distance(int c) const { return depot_city(nearest_[c], c); }

private:
    int num_depots_ = 0;
    int num_cities_ = 0;
    int n_ = 0;
    std::vector<double> d_;
    std::vector<int> nearest_;
};

struct Tour {
    int vehicle = 0;
    int start_depot = 0;
    std::vector<int> cities;
    int return_depot = 0;

    int size() const { return static_cast<int>(cities.size()); }
    bool empty() const { return cities.empty(); }
    friend bool operator==(const Tour &, const Tour &) = default;
};

struct Solution {
    std::vector<Tour> tours;
    double objective_value = 0.0;
    friend bool operator==(const Solution &, const Solution &) = default;
};

/// Immutable bundle of an instance and its distance matrix, shareable across solves.
class Problem {
public:
    explicit Problem(Instance inst);

    const Instance &instance() const { return inst_; }
    const DistanceMatrix &dm() const { return dm_; }
    Variant variant() const { return inst_.variant; }
    Objective objective() const { return inst_.objective; }
    bool capacitated() const { return inst_.capacity.has_value(); }
    double capacity() const;
    double demand(int city) const { return inst_.demands ? (*inst_.demands)[city] : 0.0; }
    std::span<const double> demands() const;

private:
    Instance inst_;
    DistanceMatrix dm_;
};

/// Sets the return depot according to the variant's rule.
void resolve_return_depot(Tour &tour, Variant variant, const DistanceMatrix &dm);

double tour_cost(const Tour &tour, const DistanceMatrix &dm);
double tour_demand(const Tour &tour, const Problem &problem);

inline double combine(Objective obj, double a, double b) {
    return obj == Objective::MinMax ? (a > b ? a : b) : a + b;
}

double pair_cost(const Tour &t1, const Tour &t2, const DistanceMatrix &dm, Objective objective);
double solution_objective(const Solution &sol, const DistanceMatrix &dm, Objective objective);

/// One tour per vehicle, each starting at its vehicle's depot, no cities.
Solution empty_solution(const Problem &problem);

/// Recomputes the return depots and the objective value in place.
void refresh(Solution &sol, const Problem &problem);

/// Lists every violated solution invariant; empty means feasible.
std::vector<std::string> check_solution(const Solution &sol, const Problem &problem);

} // namespace nce
