#include "nce/milp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace nce {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string cname(const char *family, std::initializer_list<std::pair<char, int>> idx) {
    std::string s(family);
    for (auto [c, v] : idx) {
        s += '.';
        s += c;
        s += std::to_string(v);
    }
    return s;
}

class Builder {
public:
    Builder(const Instance &inst, MilpModel &m) : inst_(inst), m_(m) {}

    void add(std::string name, std::vector<MilpTerm> terms, Sense sense, double rhs) {
        m_.cons.push_back({std::move(name), std::move(terms), sense, rhs});
    }

    double dist(int i, int j) const { return euclidean(point(i), point(j)); }

    Point point(int node) const {
        if (node < m_.num_depot_nodes) return inst_.depots[node % m_.num_depots];
        return inst_.cities[node - m_.num_depot_nodes];
    }

    bool is_city(int node) const { return node >= m_.num_depot_nodes; }

private:
    const Instance &inst_;
    MilpModel &m_;
};

} // namespace

std::string_view MilpConstraint::family() const {
    std::string_view s(name);
    return s.substr(0, s.find('.'));
}

MilpModel build_milp(const Instance &inst) {
    if (inst.variant == Variant::CVRP) throw UnsupportedVariant("unsupported variant cvrp: no MILP formulation");
    inst.validate();
    MilpModel m;
    m.name = inst.name.empty() ? "routing" : inst.name;
    m.variant = inst.variant;
    m.num_depots = inst.num_depots();
    m.num_depot_nodes = inst.variant == Variant::FMDVRP ? 2 * m.num_depots : m.num_depots;
    m.num_nodes = m.num_depot_nodes + inst.num_cities();
    m.num_vehicles = inst.num_vehicles;
    const int n = m.num_nodes;
    const int nk = m.num_vehicles;
    const int ns = m.num_depot_nodes;

    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < nk; ++k)
                m.vars.push_back({"x_" + std::to_string(i) + "_" + std::to_string(j) + "_" + std::to_string(k),
                                  VarType::Binary, 0.0, 1.0});
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < nk; ++k) {
            const bool city = i >= ns;
            m.vars.push_back({"u_" + std::to_string(i) + "_" + std::to_string(k), VarType::Integer,
                              city ? 0.0 : -kInf, city ? static_cast<double>(n - 1) : kInf});
        }
    m.objective_var = static_cast<int>(m.vars.size());
    m.vars.push_back({"Q", VarType::Continuous, 0.0, kInf});

    Builder b(inst, m);
    const int q = m.objective_var;

    // Makespan bound per vehicle.
    for (int k = 0; k < nk; ++k) {
        std::vector<MilpTerm> t;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) t.push_back({m.x(i, j, k), b.dist(i, j)});
        t.push_back({q, -1.0});
        b.add(cname("makespan", {{'k', k}}), std::move(t), Sense::LessEqual, 0.0);
    }

    if (inst.variant == Variant::MTSP) {
        for (int k = 0; k < nk; ++k)
            for (int i = 0; i < ns; ++i) {
                std::vector<MilpTerm> t;
                for (int j = 0; j < n; ++j)
                    if (j != i) t.push_back({m.x(i, j, k), 1.0});
                b.add(cname("depot_departure", {{'k', k}, {'i', i}}), std::move(t), Sense::Equal, 1.0);
            }
    } else {
        for (int i = ns; i < n; ++i) {
            std::vector<MilpTerm> t;
            for (int j = 0; j < n; ++j)
                if (j != i)
                    for (int k = 0; k < nk; ++k) t.push_back({m.x(i, j, k), 1.0});
            b.add(cname("city_departure", {{'i', i}}), std::move(t), Sense::Equal, 1.0);
        }
    }

    for (int j = ns; j < n; ++j) {
        std::vector<MilpTerm> t;
        for (int i = 0; i < n; ++i)
            if (i != j)
                for (int k = 0; k < nk; ++k) t.push_back({m.x(i, j, k), 1.0});
        b.add(cname("city_visit", {{'j', j}}), std::move(t), Sense::Equal, 1.0);
    }

    for (int j = ns; j < n; ++j)
        for (int k = 0; k < nk; ++k) {
            std::vector<MilpTerm> t;
            for (int i = 0; i < n; ++i)
                if (i != j) t.push_back({m.x(i, j, k), 1.0});
            for (int h = 0; h < n; ++h)
                if (h != j) t.push_back({m.x(j, h, k), -1.0});
            b.add(cname("flow_balance", {{'j', j}, {'k', k}}), std::move(t), Sense::Equal, 0.0);
        }

    for (int k = 0; k < nk; ++k)
        for (int j = ns; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                if (i == j) continue;
                b.add(cname("mtz", {{'k', k}, {'i', i}, {'j', j}}),
                      {{m.u(i, k), 1.0}, {m.u(j, k), -1.0}, {m.x(i, j, k), static_cast<double>(n)}}, Sense::LessEqual,
                      static_cast<double>(n - 1));
            }

    auto depot_vehicles = [&](int depot) {
        std::vector<int> ks;
        for (int k = 0; k < nk; ++k)
            if (inst.vehicle_start_depot[k] == depot) ks.push_back(k);
        return ks;
    };
    auto out_to_cities = [&](int i, int k) {
        std::vector<MilpTerm> t;
        for (int j = ns; j < n; ++j) t.push_back({m.x(i, j, k), 1.0});
        return t;
    };
    auto in_from_cities = [&](int j, int k) {
        std::vector<MilpTerm> t;
        for (int i = ns; i < n; ++i) t.push_back({m.x(i, j, k), 1.0});
        return t;
    };

    if (inst.variant == Variant::MDVRP) {
        for (int i = 0; i < ns; ++i)
            for (int k : depot_vehicles(i))
                b.add(cname("depot_departure_at_most_once", {{'i', i}, {'k', k}}), out_to_cities(i, k),
                      Sense::LessEqual, 1.0);
        for (int j = 0; j < ns; ++j)
            for (int k : depot_vehicles(j))
                b.add(cname("depot_return_at_most_once", {{'j', j}, {'k', k}}), in_from_cities(j, k),
                      Sense::LessEqual, 1.0);
    }

    if (inst.variant == Variant::FMDVRP) {
        const int nd = m.num_depots;
        for (int k = 0; k < nk; ++k)
            b.add(cname("start_at_own_depot", {{'k', k}}), out_to_cities(m.start_node(inst.vehicle_start_depot[k]), k),
                  Sense::Equal, 1.0);
        for (int k = 0; k < nk; ++k)
            for (int i = 0; i < ns; ++i) {
                if (i == m.start_node(inst.vehicle_start_depot[k])) continue;
                b.add(cname("no_departure_from_other_depot", {{'k', k}, {'i', i}}), out_to_cities(i, k), Sense::Equal,
                      0.0);
            }
        for (int d = 0; d < nd; ++d)
            for (int k : depot_vehicles(d))
                b.add(cname("start_depot_at_most_once", {{'i', m.start_node(d)}, {'k', k}}),
                      out_to_cities(m.start_node(d), k), Sense::LessEqual, 1.0);
        for (int d = 0; d < nd; ++d)
            for (int k : depot_vehicles(d))
                b.add(cname("return_depot_at_most_once", {{'j', m.return_node(d)}, {'k', k}}),
                      in_from_cities(m.return_node(d), k), Sense::LessEqual, 1.0);
        for (int k = 0; k < nk; ++k)
            for (int d = 0; d < nd; ++d)
                b.add(cname("no_departure_from_return_depot", {{'k', k}, {'i', m.return_node(d)}}),
                      out_to_cities(m.return_node(d), k), Sense::Equal, 0.0);
        for (int k = 0; k < nk; ++k)
            for (int d = 0; d < nd; ++d)
                b.add(cname("no_arrival_at_start_depot", {{'k', k}, {'j', m.start_node(d)}}),
                      in_from_cities(m.start_node(d), k), Sense::Equal, 0.0);
        for (int k = 0; k < nk; ++k) {
            std::vector<MilpTerm> t;
            for (int d = 0; d < nd; ++d)
                for (int j = ns; j < n; ++j) t.push_back({m.x(m.start_node(d), j, k), 1.0});
            for (int i = ns; i < n; ++i)
                for (int d = 0; d < nd; ++d) t.push_back({m.x(i, m.return_node(d), k), -1.0});
            b.add(cname("depot_balance", {{'k', k}}), std::move(t), Sense::Equal, 0.0);
        }
    }
    return m;
}

// ---------------------------------------------------------------------------

FeasibilityReport evaluate_assignment(const MilpModel &model, const std::vector<double> &values) {
    if (values.size() != model.vars.size()) throw Error("dimension_mismatch", "assignment size differs from variable count");
    FeasibilityReport rep;
    auto tol = [](double rhs) { return 1e-9 * std::max(1.0, std::abs(rhs)); };
    for (std::size_t v = 0; v < model.vars.size(); ++v) {
        const auto &var = model.vars[v];
        const double x = values[v];
        bool ok = x >= var.lb - tol(var.lb) && x <= var.ub + tol(var.ub);
        if (var.type != VarType::Continuous && std::abs(x - std::round(x)) > 1e-9) ok = false;
        if (!ok) {
            std::string family = var.type == VarType::Binary ? "x_domain" : var.type == VarType::Integer ? "mtz_bounds" : "q_bounds";
            rep.violated.push_back({var.name, family, x, x < var.lb ? var.lb : var.ub});
        }
    }
    for (const auto &c : model.cons) {
        double lhs = 0.0;
        for (const auto &t : c.terms) lhs += t.coef * values[t.var];
        const double e = tol(c.rhs);
        bool ok = true;
        switch (c.sense) {
        case Sense::LessEqual: ok = lhs <= c.rhs + e; break;
        case Sense::GreaterEqual: ok = lhs >= c.rhs - e; break;
        case Sense::Equal: ok = std::abs(lhs - c.rhs) <= e; break;
        }
        if (!ok) rep.violated.push_back({c.name, std::string(c.family()), lhs, c.rhs});
    }
    rep.q = model.objective_var >= 0 ? values[model.objective_var] : 0.0;
    rep.feasible = rep.violated.empty();
    return rep;
}

FeasibilityReport check_milp_feasibility(const MilpModel &model, const Instance &inst, const Solution &sol) {
    if (static_cast<int>(sol.tours.size()) != model.num_vehicles || inst.num_depots() != model.num_depots ||
        model.num_depot_nodes + inst.num_cities() != model.num_nodes)
        throw Error("dimension_mismatch", "solution and model describe different instances");
    std::vector<double> val(model.vars.size(), 0.0);
    for (std::size_t k = 0; k < sol.tours.size(); ++k) {
        const Tour &t = sol.tours[k];
        const int kk = static_cast<int>(k);
        for (int c : t.cities)
            if (c < 0 || c >= inst.num_cities()) throw Error("dimension_mismatch", "city index out of range");
        if (t.start_depot < 0 || t.start_depot >= model.num_depots || t.return_depot < 0 ||
            t.return_depot >= model.num_depots)
            throw Error("dimension_mismatch", "depot index out of range");
        if (t.cities.empty()) continue;
        int prev = model.start_node(t.start_depot);
        int pos = 0;
        for (int c : t.cities) {
            const int node = model.city_node(c);
            if (prev != node) val[model.x(prev, node, kk)] += 1.0;
            val[model.u(node, kk)] = ++pos;
            prev = node;
        }
        val[model.x(prev, model.return_node(t.return_depot), kk)] += 1.0;
    }
    // Q is the largest arc-cost sum of any vehicle, exactly as the makespan rows measure it.
    double q = 0.0;
    for (int k = 0; k < model.num_vehicles; ++k) {
        double len = 0.0;
        for (const auto &term : model.cons[k].terms)
            if (term.var != model.objective_var) len += term.coef * val[term.var];
        q = std::max(q, len);
    }
    val[model.objective_var] = q;
    return evaluate_assignment(model, val);
}

// ---------------------------------------------------------------------------
// LP text

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_terms(std::ostringstream &out, const MilpModel &m, const std::vector<MilpTerm> &terms) {
    int on_line = 0;
    for (std::size_t t = 0; t < terms.size(); ++t) {
        const auto &term = terms[t];
        if (on_line == 8) {
            out << "\n   ";
            on_line = 0;
        }
        const double c = term.coef;
        out << (c < 0 || std::signbit(c) ? " - " : (t == 0 ? " " : " + "));
        const double a = std::abs(c);
        if (a != 1.0) out << num(a) << ' ';
        out << m.vars[term.var].name;
        ++on_line;
    }
    if (terms.empty()) out << " 0 " << m.vars[m.objective_var].name;
}

} // namespace

std::string export_lp(const MilpModel &m) {
    std::ostringstream out;
    out << "\\ Problem: " << m.name << "\n";
    out << "\\ nce: variant=" << to_string(m.variant) << " nodes=" << m.num_nodes << " vehicles=" << m.num_vehicles
        << " depots=" << m.num_depots << " depot_nodes=" << m.num_depot_nodes << "\n";
    out << "Minimize\n obj: " << m.vars[m.objective_var].name << "\n";
    out << "Subject To\n";
    for (const auto &c : m.cons) {
        out << " " << c.name << ":";
        write_terms(out, m, c.terms);
        out << (c.sense == Sense::LessEqual ? " <= " : c.sense == Sense::Equal ? " = " : " >= ") << num(c.rhs) << "\n";
    }
    out << "Bounds\n";
    // Every variable is listed so that the reader can restore the column order.
    for (const auto &v : m.vars) {
        const bool lo_inf = std::isinf(v.lb), hi_inf = std::isinf(v.ub);
        if (lo_inf && hi_inf)
            out << " " << v.name << " free\n";
        else if (hi_inf)
            out << " " << v.name << " >= " << num(v.lb) << "\n";
        else
            out << " " << num(v.lb) << " <= " << v.name << " <= " << num(v.ub) << "\n";
    }
    auto section = [&](const char *title, VarType type) {
        out << title << "\n";
        int on_line = 0;
        for (const auto &v : m.vars) {
            if (v.type != type) continue;
            out << " " << v.name;
            if (++on_line == 10) {
                out << "\n";
                on_line = 0;
            }
        }
        if (on_line) out << "\n";
    };
    section("Binaries", VarType::Binary);
    section("Generals", VarType::Integer);
    out << "End\n";
    return out.str();
}

MilpModel parse_lp(std::string_view text) {
    MilpModel m;
    std::istringstream in{std::string(text)};
    std::string line;
    enum class Sec { None, Objective, Constraints, Bounds, Binaries, Generals, Done } sec = Sec::None;
    std::map<std::string, int> index;
    std::vector<int> bound_order;
    int line_no = 0;
    auto fail = [&](const std::string &msg) { throw ParseError("lp line " + std::to_string(line_no) + ": " + msg); };
    auto var_of = [&](const std::string &name) {
        auto it = index.find(name);
        if (it != index.end()) return it->second;
        const int id = static_cast<int>(m.vars.size());
        index.emplace(name, id);
        m.vars.push_back({name, VarType::Continuous, 0.0, kInf});
        return id;
    };
    auto to_num = [&](const std::string &tok) {
        if (tok == "inf" || tok == "+inf" || tok == "infinity" || tok == "+infinity") return kInf;
        if (tok == "-inf" || tok == "-infinity") return -kInf;
        try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) fail("bad number '" + tok + "'");
            return v;
        } catch (const std::logic_error &) {
            fail("bad number '" + tok + "'");
        }
        return 0.0;
    };
    auto is_number = [](const std::string &tok) {
        return !tok.empty() && (std::isdigit(static_cast<unsigned char>(tok[0])) || tok[0] == '.' ||
                                ((tok[0] == '-' || tok[0] == '+') && tok.size() > 1));
    };

    std::string pending; // a constraint may span several lines
    auto finish_constraint = [&](const std::string &stmt) {
        std::istringstream ts(stmt);
        std::string name;
        ts >> name;
        if (name.empty() || name.back() != ':') fail("constraint without name");
        name.pop_back();
        MilpConstraint c;
        c.name = name;
        double sign = 1.0;
        double coef = 1.0;
        bool have_coef = false;
        std::string tok;
        while (ts >> tok) {
            if (tok == "+") {
                sign = 1.0;
            } else if (tok == "-") {
                sign = -1.0;
            } else if (tok == "<=" || tok == "=" || tok == ">=" || tok == "=<" || tok == "=>") {
                c.sense = tok == "=" ? Sense::Equal : (tok == "<=" || tok == "=<") ? Sense::LessEqual : Sense::GreaterEqual;
                std::string rhs;
                if (!(ts >> rhs)) fail("missing right-hand side");
                c.rhs = to_num(rhs);
                break;
            } else if (is_number(tok) && !have_coef) {
                coef = to_num(tok);
                have_coef = true;
            } else {
                c.terms.push_back({var_of(tok), sign * coef});
                sign = 1.0;
                coef = 1.0;
                have_coef = false;
            }
        }
        m.cons.push_back(std::move(c));
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.starts_with("\\")) {
            const auto p = line.find("nce:");
            if (line.starts_with("\\ Problem: ")) m.name = line.substr(11);
            if (p != std::string::npos) {
                std::istringstream ms(line.substr(p + 4));
                std::string kv;
                while (ms >> kv) {
                    const auto eq = kv.find('=');
                    if (eq == std::string::npos) continue;
                    const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
                    if (k == "variant") m.variant = parse_variant(v);
                    else if (k == "nodes") m.num_nodes = std::stoi(v);
                    else if (k == "vehicles") m.num_vehicles = std::stoi(v);
                    else if (k == "depots") m.num_depots = std::stoi(v);
                    else if (k == "depot_nodes") m.num_depot_nodes = std::stoi(v);
                }
            }
            continue;
        }
        std::string t = line;
        while (!t.empty() && (t.back() == '\r' || t.back() == ' ')) t.pop_back();
        if (t.empty()) continue;
        const bool indented = t[0] == ' ' || t[0] == '\t';
        if (!indented) {
            if (!pending.empty()) {
                finish_constraint(pending);
                pending.clear();
            }
            if (t == "Minimize" || t == "Minimise") sec = Sec::Objective;
            else if (t == "Subject To") sec = Sec::Constraints;
            else if (t == "Bounds") sec = Sec::Bounds;
            else if (t == "Binaries" || t == "Binary" || t == "Bin") sec = Sec::Binaries;
            else if (t == "Generals" || t == "General" || t == "Gen") sec = Sec::Generals;
            else if (t == "End") sec = Sec::Done;
            else fail("unknown section '" + t + "'");
            continue;
        }
        std::istringstream ts(t);
        switch (sec) {
        case Sec::Objective: {
            std::string label, var;
            ts >> label >> var;
            if (var.empty()) fail("objective must name one variable");
            m.objective_var = var_of(var);
            break;
        }
        case Sec::Constraints: {
            std::string first;
            ts >> first;
            const bool starts_new = !first.empty() && first.back() == ':';
            if (starts_new && !pending.empty()) {
                finish_constraint(pending);
                pending.clear();
            }
            pending += " " + t;
            break;
        }
        case Sec::Bounds: {
            std::vector<std::string> tok;
            std::string s;
            while (ts >> s) tok.push_back(s);
            const std::string &vname = tok.size() == 5 ? tok[2] : tok.empty() ? std::string() : tok[0];
            if (!vname.empty()) bound_order.push_back(var_of(vname));
            if (tok.size() == 2 && tok[1] == "free") {
                auto &v = m.vars[var_of(tok[0])];
                v.lb = -kInf;
                v.ub = kInf;
            } else if (tok.size() == 3 && tok[1] == ">=") {
                m.vars[var_of(tok[0])].lb = to_num(tok[2]);
            } else if (tok.size() == 3 && tok[1] == "<=") {
                m.vars[var_of(tok[0])].ub = to_num(tok[2]);
            } else if (tok.size() == 5 && tok[1] == "<=" && tok[3] == "<=") {
                auto &v = m.vars[var_of(tok[2])];
                v.lb = to_num(tok[0]);
                v.ub = to_num(tok[4]);
            } else {
                fail("unsupported bound");
            }
            break;
        }
        case Sec::Binaries:
        case Sec::Generals: {
            std::string s;
            while (ts >> s) {
                auto &v = m.vars[var_of(s)];
                if (sec == Sec::Binaries) {
                    v.type = VarType::Binary;
                    v.lb = 0.0;
                    v.ub = 1.0;
                } else {
                    v.type = VarType::Integer;
                }
            }
            break;
        }
        default: fail("content outside of a section");
        }
    }
    if (!pending.empty()) finish_constraint(pending);
    if (sec != Sec::Done) fail("missing End");

    // Restore the column order given by the bounds listing.
    std::vector<int> order;
    std::vector<char> placed(m.vars.size(), 0);
    for (int v : bound_order)
        if (!placed[v]) {
            placed[v] = 1;
            order.push_back(v);
        }
    for (int v = 0; v < static_cast<int>(m.vars.size()); ++v)
        if (!placed[v]) order.push_back(v);
    std::vector<int> remap(m.vars.size());
    std::vector<MilpVariable> vars;
    vars.reserve(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        remap[order[r]] = static_cast<int>(r);
        vars.push_back(std::move(m.vars[order[r]]));
    }
    m.vars = std::move(vars);
    for (auto &c : m.cons)
        for (auto &t : c.terms) t.var = remap[t.var];
    if (m.objective_var >= 0) m.objective_var = remap[m.objective_var];
    return m;
}

} // namespace nce
