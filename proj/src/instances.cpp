#include "nce/instances.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "nce/rng.hpp"

namespace nce {

namespace {

int parse_int(std::string_view s, const char *what) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError(std::string("malformed integer for ") + what + ": '" + std::string(s) + "'");
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

} // namespace

IntRange IntRange::parse(std::string_view text) {
    text = trim(text);
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) return fixed(parse_int(text, "range"));
    return {parse_int(trim(text.substr(0, colon)), "range"), parse_int(trim(text.substr(colon + 1)), "range")};
}

void GeneratorConfig::validate() const {
    auto check = [](const IntRange &r, const char *what) {
        if (r.lo > r.hi) throw ConfigError(std::string(what) + " range is empty");
        if (r.lo < 1) throw ConfigError(std::string(what) + " must be positive");
    };
    check(num_cities, "num_cities");
    check(num_depots, "num_depots");
    check(num_vehicles, "num_vehicles");
    if (variant == Variant::MTSP && !(num_depots.lo == 1 && num_depots.hi == 1))
        throw ConfigError("mtsp instances have exactly one depot");
}

double cvrp_capacity_for(int num_cities) {
    if (num_cities <= 20) return 30.0;
    if (num_cities <= 50) return 40.0;
    return 50.0;
}

Instance generate(const GeneratorConfig &config) {
    config.validate();
    Rng rng(config.seed);
    Instance inst;
    inst.variant = config.variant;
    inst.objective = default_objective(config.variant);
    const int nc = static_cast<int>(uniform_int(rng, config.num_cities.lo, config.num_cities.hi));
    const int nd = static_cast<int>(uniform_int(rng, config.num_depots.lo, config.num_depots.hi));
    const int nv = static_cast<int>(uniform_int(rng, config.num_vehicles.lo, config.num_vehicles.hi));
    inst.name = std::string(to_string(config.variant)) + "_" + std::to_string(nc) + "_" + std::to_string(nd) + "_" +
                std::to_string(nv) + "_s" + std::to_string(config.seed);
    inst.depots.resize(nd);
    for (auto &p : inst.depots) {
        p.x = uniform01(rng);
        p.y = uniform01(rng);
    }
    inst.cities.resize(nc);
    for (auto &p : inst.cities) {
        p.x = uniform01(rng);
        p.y = uniform01(rng);
    }
    inst.num_vehicles = nv;
    inst.vehicle_start_depot.resize(nv);
    for (int v = 0; v < nv; ++v) inst.vehicle_start_depot[v] = v % nd;
    if (config.variant == Variant::CVRP) {
        std::vector<double> q(nc);
        for (auto &x : q) x = static_cast<double>(uniform_int(rng, 1, 9));
        inst.demands = std::move(q);
        inst.capacity = cvrp_capacity_for(nc);
    }
    inst.validate();
    return inst;
}

// ---------------------------------------------------------------------------
// TSPLIB

Instance parse_tsplib(std::string_view text, int num_vehicles) {
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    std::string name = "tsplib";
    int dimension = -1;
    bool saw_weight_type = false;
    bool saw_coords = false;
    std::vector<Point> nodes;
    auto fail = [&](const std::string &msg) {
        throw ParseError("tsplib line " + std::to_string(line_no) + ": " + msg);
    };
    bool in_coords = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view sv = trim(line);
        if (sv.empty()) continue;
        if (sv == "EOF") break;
        if (in_coords) {
            if (std::isdigit(static_cast<unsigned char>(sv.front()))) {
                std::istringstream ls{std::string(sv)};
                long id = 0;
                double x = 0, y = 0;
                if (!(ls >> id >> x >> y)) fail("malformed coordinate record");
                std::string extra;
                if (ls >> extra) fail("unexpected trailing token '" + extra + "'");
                if (!std::isfinite(x) || !std::isfinite(y)) fail("non-finite coordinate");
                if (id != static_cast<long>(nodes.size()) + 1) fail("node ids must be consecutive starting at 1");
                nodes.push_back({x, y});
                continue;
            }
            in_coords = false;
        }
        if (sv == "NODE_COORD_SECTION") {
            if (!saw_weight_type) fail("NODE_COORD_SECTION before EDGE_WEIGHT_TYPE");
            in_coords = true;
            saw_coords = true;
            continue;
        }
        const auto colon = sv.find(':');
        if (colon == std::string_view::npos) fail("unrecognised line '" + std::string(sv) + "'");
        const std::string key(trim(sv.substr(0, colon)));
        const std::string value(trim(sv.substr(colon + 1)));
        if (key == "NAME") {
            name = value;
        } else if (key == "TYPE" || key == "COMMENT") {
            // informational only
        } else if (key == "DIMENSION") {
            try {
                dimension = parse_int(value, "DIMENSION");
            } catch (const ConfigError &) {
                fail("malformed DIMENSION");
            }
        } else if (key == "EDGE_WEIGHT_TYPE") {
            if (value != "EUC_2D") fail("unsupported EDGE_WEIGHT_TYPE '" + value + "'");
            saw_weight_type = true;
        } else {
            fail("unsupported key '" + key + "'");
        }
    }
    if (!saw_weight_type) fail("missing EDGE_WEIGHT_TYPE");
    if (dimension < 0) fail("missing DIMENSION");
    if (!saw_coords) fail("missing NODE_COORD_SECTION");
    if (static_cast<int>(nodes.size()) != dimension)
        fail("DIMENSION " + std::to_string(dimension) + " but " + std::to_string(nodes.size()) + " coordinates");
    if (dimension < 2) fail("need a depot and at least one city");
    if (num_vehicles < 1) throw ConfigError("num_vehicles must be positive");

    Instance inst;
    inst.name = name;
    inst.variant = Variant::MTSP;
    inst.objective = Objective::MinMax;
    inst.depots = {nodes.front()};
    inst.cities.assign(nodes.begin() + 1, nodes.end());
    inst.num_vehicles = num_vehicles;
    inst.vehicle_start_depot.assign(num_vehicles, 0);
    inst.validate();
    return inst;
}

void normalize_to_unit_square(Instance &inst) {
    double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
    double hi_x = -lo_x, hi_y = -lo_x;
    auto scan = [&](const std::vector<Point> &ps) {
        for (const auto &p : ps) {
            lo_x = std::min(lo_x, p.x);
            lo_y = std::min(lo_y, p.y);
            hi_x = std::max(hi_x, p.x);
            hi_y = std::max(hi_y, p.y);
        }
    };
    scan(inst.depots);
    scan(inst.cities);
    const double span = std::max(hi_x - lo_x, hi_y - lo_y);
    const double s = span > 0 ? 1.0 / span : 1.0;
    auto apply = [&](std::vector<Point> &ps) {
        for (auto &p : ps) p = {(p.x - lo_x) * s, (p.y - lo_y) * s};
    };
    apply(inst.depots);
    apply(inst.cities);
}

// ---------------------------------------------------------------------------
// JSON

std::string write_instance_json(const Instance &inst) {
    nlohmann::ordered_json j;
    j["name"] = inst.name;
    j["variant"] = to_string(inst.variant);
    j["objective"] = to_string(inst.objective);
    j["num_vehicles"] = inst.num_vehicles;
    auto pts = [](const std::vector<Point> &ps) {
        nlohmann::ordered_json a = nlohmann::ordered_json::array();
        for (const auto &p : ps) a.push_back({p.x, p.y});
        return a;
    };
    j["depots"] = pts(inst.depots);
    j["cities"] = pts(inst.cities);
    j["vehicle_start_depot"] = inst.vehicle_start_depot;
    if (inst.demands) j["demands"] = *inst.demands;
    if (inst.capacity) j["capacity"] = *inst.capacity;
    return j.dump() + "\n";
}

Instance read_instance_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(std::string("instance json: ") + e.what());
    }
    auto need = [&](const char *key) -> const nlohmann::json & {
        if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("instance json: missing \"") + key + "\"");
        return j.at(key);
    };
    Instance inst;
    try {
        inst.name = j.value("name", std::string{});
        inst.variant = parse_variant(need("variant").get<std::string>());
        inst.objective = j.contains("objective") ? parse_objective(j.at("objective").get<std::string>())
                                                 : default_objective(inst.variant);
        inst.num_vehicles = need("num_vehicles").get<int>();
        auto pts = [](const nlohmann::json &a, const char *key) {
            if (!a.is_array()) throw ParseError(std::string("instance json: \"") + key + "\" must be an array");
            std::vector<Point> ps;
            for (const auto &p : a) {
                if (!p.is_array() || p.size() != 2)
                    throw ParseError(std::string("instance json: \"") + key + "\" entries must be [x, y]");
                ps.push_back({p[0].get<double>(), p[1].get<double>()});
            }
            return ps;
        };
        inst.depots = pts(need("depots"), "depots");
        inst.cities = pts(need("cities"), "cities");
        if (j.contains("vehicle_start_depot")) {
            inst.vehicle_start_depot = j.at("vehicle_start_depot").get<std::vector<int>>();
        } else {
            const int nd = static_cast<int>(inst.depots.size());
            for (int v = 0; v < inst.num_vehicles; ++v) inst.vehicle_start_depot.push_back(nd ? v % nd : 0);
        }
        if (j.contains("demands")) inst.demands = j.at("demands").get<std::vector<double>>();
        if (j.contains("capacity")) inst.capacity = j.at("capacity").get<double>();
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("instance json: ") + e.what());
    }
    if (inst.variant == Variant::CVRP && !inst.capacity) throw ParseError("instance json: cvrp requires \"capacity\"");
    if (inst.variant == Variant::CVRP && !inst.demands) throw ParseError("instance json: cvrp requires \"demands\"");
    try {
        inst.validate();
    } catch (const InstanceError &e) {
        throw ParseError(std::string("instance json: ") + e.what());
    }
    return inst;
}

std::string write_solution_json(const Solution &sol) {
    nlohmann::ordered_json j;
    j["objective"] = sol.objective_value;
    auto &tours = j["tours"] = nlohmann::ordered_json::array();
    for (const auto &t : sol.tours)
        tours.push_back({{"vehicle", t.vehicle},
                         {"start_depot", t.start_depot},
                         {"cities", t.cities},
                         {"return_depot", t.return_depot}});
    return j.dump() + "\n";
}

Solution read_solution_json(std::string_view text) {
    Solution sol;
    try {
        const auto j = nlohmann::json::parse(text);
        sol.objective_value = j.value("objective", 0.0);
        for (const auto &t : j.at("tours"))
            sol.tours.push_back({t.at("vehicle").get<int>(), t.at("start_depot").get<int>(),
                                 t.at("cities").get<std::vector<int>>(), t.at("return_depot").get<int>()});
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("solution json: ") + e.what());
    }
    return sol;
}

Instance load_instance_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (path.size() > 4 && (path.ends_with(".tsp") || path.ends_with(".TSP")))
        return parse_tsplib(text, 1);
    return read_instance_json(text);
}

void save_instance_file(const Instance &inst, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << write_instance_json(inst);
}

} // namespace nce
