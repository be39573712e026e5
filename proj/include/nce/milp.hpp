#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "nce/core.hpp"

namespace nce {

enum class VarType { Binary, Integer, Continuous };
enum class Sense { LessEqual, Equal, GreaterEqual };

struct MilpVariable {
    std::string name;
    VarType type = VarType::Continuous;
    double lb = 0.0;
    double ub = 0.0;
    friend bool operator==(const MilpVariable &, const MilpVariable &) = default;
};

struct MilpTerm {
    int var = 0;
    double coef = 0.0;
    friend bool operator==(const MilpTerm &, const MilpTerm &) = default;
};

struct MilpConstraint {
    std::string name; ///< "<family>.<indices>"
    std::vector<MilpTerm> terms;
    Sense sense = Sense::LessEqual;
    double rhs = 0.0;

    std::string_view family() const;
    friend bool operator==(const MilpConstraint &, const MilpConstraint &) = default;
};

/// Min-max routing MILP with arc variables x_ijk, MTZ order variables u_ik and
/// the makespan Q, over the node set V = depots | cities. The flexible variant
/// doubles the depots into start copies followed by return copies.
struct MilpModel {
    std::string name;
    Variant variant = Variant::MTSP;
    int num_nodes = 0;      ///< |V|
    int num_vehicles = 0;   ///< |K|
    int num_depots = 0;     ///< depots of the instance
    int num_depot_nodes = 0; ///< |S| (2 * num_depots for the flexible variant)
    std::vector<MilpVariable> vars;
    std::vector<MilpConstraint> cons;
    int objective_var = -1; ///< Q

    int city_node(int c) const { return num_depot_nodes + c; }
    int start_node(int depot) const { return depot; }
    int return_node(int depot) const { return variant == Variant::FMDVRP ? num_depots + depot : depot; }
    int x(int i, int j, int k) const { return (i * num_nodes + j) * num_vehicles + k; }
    int u(int i, int k) const { return num_nodes * num_nodes * num_vehicles + i * num_vehicles + k; }

    friend bool operator==(const MilpModel &, const MilpModel &) = default;
};

/// Builds the formulation matching the instance variant. CVRP is rejected.
MilpModel build_milp(const Instance &inst);

struct Violation {
    std::string constraint; ///< constraint or variable name
    std::string family;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct FeasibilityReport {
    bool feasible = false;
    double q = 0.0;
    std::vector<Violation> violated;
};

/// Translates a solution into (x, u, Q) and evaluates every row and bound.
FeasibilityReport check_milp_feasibility(const MilpModel &model, const Instance &inst, const Solution &sol);

/// Evaluates every row and bound for an explicit variable assignment.
FeasibilityReport evaluate_assignment(const MilpModel &model, const std::vector<double> &values);

/// CPLEX LP text.
std::string export_lp(const MilpModel &model);

/// Reads the LP dialect written by export_lp back into a model.
MilpModel parse_lp(std::string_view text);

} // namespace nce
