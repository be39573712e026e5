#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "nce/core.hpp"

namespace nce {

struct IntRange {
    int lo = 1;
    int hi = 1;
    static IntRange fixed(int v) { return {v, v}; }
    /// Accepts "7" or "10:100".
    static IntRange parse(std::string_view text);
};

struct GeneratorConfig {
    IntRange num_cities = IntRange::fixed(20);
    IntRange num_depots = IntRange::fixed(2);
    IntRange num_vehicles = IntRange::fixed(2);
    Variant variant = Variant::FMDVRP;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Uniform instances on the unit square. Same config and seed give the same instance.
///
/// Sizes are drawn first (cities, depots, vehicles), then depot coordinates, then
/// city coordinates, then (CVRP only) integer demands in 1..9. Vehicles are assigned
/// to depots round-robin. CVRP capacity is 30, 40 or 50 for up to 20, up to 50 and
/// more than 50 cities respectively.
Instance generate(const GeneratorConfig &config);

/// CVRP capacity convention used by the generator.
double cvrp_capacity_for(int num_cities);

/// EUC_2D TSPLIB reader. Node 1 becomes the single depot of an mTSP instance.
Instance parse_tsplib(std::string_view text, int num_vehicles);

/// Rescales all coordinates into the unit square, keeping the aspect ratio.
void normalize_to_unit_square(Instance &inst);

std::string write_instance_json(const Instance &inst);
Instance read_instance_json(std::string_view text);

/// Solution documents: {"objective": q, "tours": [{"vehicle", "start_depot", "cities", "return_depot"}]}.
std::string write_solution_json(const Solution &sol);
Solution read_solution_json(std::string_view text);

Instance load_instance_file(const std::string &path);
void save_instance_file(const Instance &inst, const std::string &path);

} // namespace nce
