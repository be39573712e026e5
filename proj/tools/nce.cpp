// Command-line front end: data generation, training, evaluation, solving,
// benchmarks, ablations and MILP export.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "nce/bench.hpp"
#include "nce/core.hpp"
#include "nce/gnn.hpp"
#include "nce/instances.hpp"
#include "nce/milp.hpp"
#include "nce/solver.hpp"
#include "nce/trainer.hpp"

namespace fs = std::filesystem;
using namespace nce;

namespace {

std::vector<std::string> split(const std::string &s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

// `--config f.json` holds an object of option names to values. Its entries are
// placed before the command-line tokens so that explicit flags win.
std::vector<std::string> config_tokens(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw ParseError("config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    std::vector<std::string> out;
    for (const auto &[key, value] : j.items()) {
        const std::string flag = "--" + key;
        if (value.is_boolean()) {
            if (value.get<bool>()) out.push_back(flag);
        } else if (value.is_array()) {
            std::string joined;
            for (const auto &v : value) {
                if (!joined.empty()) joined += (key == "cells" ? ";" : ",");
                joined += v.is_string() ? v.get<std::string>() : v.dump();
            }
            out.push_back(flag);
            out.push_back(joined);
        } else {
            out.push_back(flag);
            out.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    return out;
}

std::vector<std::string> expand_args(int argc, char **argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::vector<std::string> out;
    std::string config;
    std::size_t sub = 0;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (!sub && !args[i].starts_with("-")) sub = i;
        if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
        else if (args[i].starts_with("--config=")) config = args[i].substr(9);
    }
    if (config.empty() || !sub) return args;
    out.assign(args.begin(), args.begin() + static_cast<long>(sub) + 1);
    for (auto &t : config_tokens(config)) out.push_back(std::move(t));
    out.insert(out.end(), args.begin() + static_cast<long>(sub) + 1, args.end());
    return out;
}

void write_file(const fs::path &p, const std::string &text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("io_error", "cannot write " + p.string());
    out << text;
}

template <class F>
void write_stream(const fs::path &p, F &&f) {
    std::ostringstream s;
    f(s);
    write_file(p, s.str());
}

BenchCell parse_cell(const std::string &text) {
    const auto f = split(text, ',');
    if (f.size() != 3 && f.size() != 4) throw ConfigError("cell '" + text + "' must be nc,nd,nv[,variant]");
    BenchCell c;
    c.num_cities = std::stoi(f[0]);
    c.num_depots = std::stoi(f[1]);
    c.num_vehicles = std::stoi(f[2]);
    if (f.size() == 4) c.variant = parse_variant(f[3]);
    return c;
}

std::shared_ptr<const Predictor> load_learned(const std::string &checkpoint) {
    if (checkpoint.empty()) return nullptr;
    return std::make_shared<LearnedPredictor>(std::make_shared<const GnnModel<float>>(load_checkpoint(checkpoint)));
}

struct Common {
    std::uint64_t seed = 0;
    std::string config;
};

void add_common(CLI::App *app, Common &c) {
    app->add_option("--seed", c.seed, "Random seed");
    app->add_option("--config", c.config, "JSON file of option values");
}

struct SolverOpts {
    std::string predictor = "exact";
    std::string checkpoint;
    std::string k = "10";
    int p = 5;
    std::string intra = "2opt+oropt";
    std::string selection = "maxmin";
};

void add_solver_opts(CLI::App *app, SolverOpts &o) {
    app->add_option("--predictor", o.predictor, "ce, exact or learned");
    app->add_option("--checkpoint", o.checkpoint, "Model manifest for the learned predictor");
    app->add_option("--k", o.k, "Candidate set size, or 'all'");
    app->add_option("--p", o.p, "Perturbation budget");
    app->add_option("--intra", o.intra, "none, 2opt or 2opt+oropt");
    app->add_option("--selection", o.selection, "maxmin or random");
}

std::size_t parse_k(const std::string &s) {
    if (s == "all") return kAllPairs;
    const long v = std::stol(s);
    if (v < 1) throw ConfigError("k must be at least 1");
    return static_cast<std::size_t>(v);
}

} // namespace

int main(int argc, char **argv) {
    try {
        CLI::App app{"Neural CROSS exchange toolkit for vehicle routing"};
        app.require_subcommand(1);
        app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

        // gen-instances ------------------------------------------------------
        Common gi_c;
        std::string gi_out, gi_cities = "20", gi_depots = "2", gi_vehicles = "2", gi_variant = "fmdvrp";
        int gi_count = 10;
        auto *gi = app.add_subcommand("gen-instances", "Write random instances as JSON files");
        add_common(gi, gi_c);
        gi->add_option("--out", gi_out, "Output directory")->required();
        gi->add_option("--count", gi_count, "Number of instances");
        gi->add_option("--cities", gi_cities, "City count or lo:hi range");
        gi->add_option("--depots", gi_depots, "Depot count or range");
        gi->add_option("--vehicles", gi_vehicles, "Vehicle count or range");
        gi->add_option("--variant", gi_variant, "fmdvrp, mdvrp, mtsp or cvrp");

        // gen-data -------------------------------------------------------------
        Common gd_c;
        std::string gd_out, gd_cities = "10:100", gd_depots = "2:9", gd_variant = "fmdvrp";
        int gd_instances = 2000;
        bool gd_gzip = false;
        auto *gd = app.add_subcommand("gen-data", "Generate labelled training samples");
        add_common(gd, gd_c);
        gd->add_option("--out", gd_out, "Dataset directory")->required();
        gd->add_option("--instances", gd_instances, "Number of instances");
        gd->add_option("--cities", gd_cities, "City count range");
        gd->add_option("--depots", gd_depots, "Depot count range");
        gd->add_option("--variant", gd_variant, "Instance variant");
        gd->add_flag("--gzip", gd_gzip, "Compress the sample file");

        // train ----------------------------------------------------------------
        Common tr_c;
        std::string tr_data, tr_out, tr_loss;
        TrainConfig tr_cfg;
        bool tr_no_types = false;
        auto *tr = app.add_subcommand("train", "Train the cost-decrement predictor");
        add_common(tr, tr_c);
        tr->add_option("--data", tr_data, "Dataset directory")->required();
        tr->add_option("--out", tr_out, "Checkpoint manifest path")->required();
        tr->add_option("--loss-csv", tr_loss, "Loss history CSV path");
        tr->add_option("--epochs", tr_cfg.epochs, "Epochs");
        tr->add_option("--lr", tr_cfg.optimizer.lr, "Learning rate");
        tr->add_option("--weight-decay", tr_cfg.optimizer.weight_decay, "AdamW weight decay");
        tr->add_option("--batch", tr_cfg.batch_size, "Samples per batch");
        tr->add_option("--val-fraction", tr_cfg.validation_fraction, "Validation share of instances");
        tr->add_option("--layers", tr_cfg.gnn.layers, "Embedding layers");
        tr->add_option("--width", tr_cfg.gnn.width, "Embedding width");
        tr->add_flag("--no-edge-types", tr_no_types, "Distance-only edge features");
        tr->add_flag("--zero-head", tr_cfg.zero_head, "Start from an all-zero head");

        // eval-predictor -------------------------------------------------------
        Common ev_c;
        std::string ev_checkpoint, ev_out, ev_cities = "10:40", ev_depots = "2:9", ev_ks = "1,3,5,10,20";
        std::string ev_predictor = "learned";
        int ev_pairs = 200;
        auto *ev = app.add_subcommand("eval-predictor", "Argmax ratio and scatter data on held-out tour pairs");
        add_common(ev, ev_c);
        ev->add_option("--predictor", ev_predictor, "learned or exact");
        ev->add_option("--checkpoint", ev_checkpoint, "Model manifest");
        ev->add_option("--pairs", ev_pairs, "Number of tour pairs");
        ev->add_option("--cities", ev_cities, "City count range");
        ev->add_option("--depots", ev_depots, "Depot count range");
        ev->add_option("--ks", ev_ks, "Comma-separated candidate sizes");
        ev->add_option("--out", ev_out, "Output directory")->required();

        // solve ----------------------------------------------------------------
        Common so_c;
        SolverOpts so_o;
        std::string so_instance, so_report, so_trace, so_routes;
        auto *so = app.add_subcommand("solve", "Improve one instance");
        add_common(so, so_c);
        add_solver_opts(so, so_o);
        so->add_option("--instance", so_instance, "Instance JSON or TSPLIB file")->required();
        so->add_option("--report", so_report, "Solution report JSON");
        so->add_option("--trace", so_trace, "Objective trace CSV");
        so->add_option("--routes", so_routes, "Route polyline CSV");

        // bench / ablate -------------------------------------------------------
        Common be_c;
        SolverOpts be_o;
        std::string be_cells, be_methods = "ce,nce-exact", be_out, ab_kind = "k";
        int be_instances = 100;
        auto add_bench = [&](CLI::App *a) {
            add_common(a, be_c);
            add_solver_opts(a, be_o);
            a->add_option("--cells", be_cells, "Cells nc,nd,nv[,variant] separated by ';'");
            a->add_option("--instances", be_instances, "Instances per cell");
            a->add_option("--methods", be_methods, "ce,nce-exact,nce-learned,exact-tiny");
            a->add_option("--out", be_out, "Output directory");
        };
        auto *be = app.add_subcommand("bench", "Cost, gap and time table over instance cells");
        add_bench(be);
        auto *ab = app.add_subcommand("ablate", "Sweep one solver parameter");
        add_bench(ab);
        ab->add_option("--kind", ab_kind, "k, p, intra or selection");

        // export-milp ----------------------------------------------------------
        Common mi_c;
        std::string mi_instance, mi_out, mi_solution;
        auto *mi = app.add_subcommand("export-milp", "Write the MILP model as an LP file");
        add_common(mi, mi_c);
        mi->add_option("--instance", mi_instance, "Instance file")->required();
        mi->add_option("--out", mi_out, "LP file path")->required();
        mi->add_option("--solution", mi_solution, "Check this solution JSON against the model");

        const auto args = expand_args(argc, argv);
        std::vector<const char *> cargv;
        for (const auto &a : args) cargv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(cargv.size()), const_cast<char **>(cargv.data()));
        } catch (const CLI::CallForHelp &e) {
            return app.exit(e);
        } catch (const CLI::ParseError &e) {
            std::string msg = e.what();
            for (auto &ch : msg)
                if (ch == '\n') ch = ' ';
            std::fprintf(stderr, "error: usage: %s\n", msg.c_str());
            return 2;
        }

        auto bench_spec = [&]() {
            BenchSpec s;
            for (const auto &c : split(be_cells, ';')) s.cells.push_back(parse_cell(c));
            s.instances_per_cell = be_instances;
            s.methods.clear();
            for (const auto &m : split(be_methods, ',')) s.methods.push_back(parse_method(m));
            s.k = parse_k(be_o.k);
            s.p = be_o.p;
            s.intra = parse_intra(be_o.intra);
            s.selection = parse_selection(be_o.selection);
            s.seed = be_c.seed;
            s.learned = load_learned(be_o.checkpoint);
            return s;
        };

        if (*gi) {
            GeneratorConfig g{IntRange::parse(gi_cities), IntRange::parse(gi_depots), IntRange::parse(gi_vehicles),
                              parse_variant(gi_variant), 0};
            if (gi_count < 1) throw ConfigError("count must be positive");
            fs::create_directories(gi_out);
            for (int i = 0; i < gi_count; ++i) {
                g.seed = derive_seed(gi_c.seed, static_cast<std::uint64_t>(i));
                char name[32];
                std::snprintf(name, sizeof name, "inst_%04d.json", i);
                save_instance_file(generate(g), (fs::path(gi_out) / name).string());
            }
            std::printf("wrote %d instances to %s\n", gi_count, gi_out.c_str());
        } else if (*gd) {
            DatasetConfig dc;
            dc.num_instances = gd_instances;
            dc.num_cities = IntRange::parse(gd_cities);
            dc.num_depots = IntRange::parse(gd_depots);
            dc.variant = parse_variant(gd_variant);
            dc.seed = gd_c.seed;
            const Dataset data = generate_dataset(dc);
            write_dataset(data, gd_out, gd_gzip);
            std::printf("wrote %zu samples from %zu instances to %s\n", data.samples.size(), data.instances.size(),
                        gd_out.c_str());
        } else if (*tr) {
            tr_cfg.seed = tr_c.seed;
            tr_cfg.gnn.edge_types = !tr_no_types;
            const Dataset data = read_dataset(tr_data);
            const TrainResult res = train(data, tr_cfg, [](const LossRecord &r) {
                std::printf("epoch %d %s loss %.6f\n", r.epoch, r.split.c_str(), r.loss);
                std::fflush(stdout);
            });
            if (fs::path(tr_out).has_parent_path()) fs::create_directories(fs::path(tr_out).parent_path());
            save_checkpoint(res.model, tr_out);
            if (!tr_loss.empty()) write_stream(tr_loss, [&](std::ostream &o) { write_loss_csv(res.history, o); });
            std::printf("best epoch %d validation loss %.6f (initial %.6f)\n", res.best_epoch,
                        res.best_validation_loss, res.initial_validation_loss);
        } else if (*ev) {
            DatasetConfig dc;
            dc.num_cities = IntRange::parse(ev_cities);
            dc.num_depots = IntRange::parse(ev_depots);
            dc.seed = ev_c.seed;
            dc.num_instances = ev_pairs;
            dc.validate();
            std::shared_ptr<const Predictor> pred;
            if (ev_predictor == "exact") pred = std::make_shared<ExactOracle>();
            else if (ev_predictor == "learned") {
                if (ev_checkpoint.empty()) throw ConfigError("learned predictor needs --checkpoint");
                pred = load_learned(ev_checkpoint);
            } else throw ConfigError("unknown predictor '" + ev_predictor + "'");
            std::vector<int> ks;
            for (const auto &k : split(ev_ks, ',')) ks.push_back(std::stoi(k));
            const auto pairs = make_eval_pairs(dc, ev_pairs);
            const PredictorEval r = evaluate_predictor(*pred, pairs, ks);
            write_stream(fs::path(ev_out) / "argmax.csv", [&](std::ostream &o) { write_argmax_csv(r, o); });
            write_stream(fs::path(ev_out) / "scatter.csv", [&](std::ostream &o) { write_scatter_csv(r, o); });
            for (std::size_t i = 0; i < ks.size(); ++i)
                std::printf("K=%d argmax ratio %.3f\n", ks[i], r.argmax_ratio[i]);
            std::printf("mean spearman %.3f over %d pairs\n", r.mean_spearman, r.pairs);
        } else if (*so) {
            const Problem problem(load_instance_file(so_instance));
            SolverConfig cfg;
            cfg.k = parse_k(so_o.k);
            cfg.p = so_o.p;
            cfg.intra = parse_intra(so_o.intra);
            cfg.selection = parse_selection(so_o.selection);
            cfg.seed = so_c.seed;
            if (so_o.predictor == "ce") cfg.inter = InterOperator::CrossExchange;
            else if (so_o.predictor == "exact") cfg.predictor = std::make_shared<ExactOracle>();
            else if (so_o.predictor == "learned") {
                if (so_o.checkpoint.empty()) throw ConfigError("learned predictor needs --checkpoint");
                cfg.predictor = load_learned(so_o.checkpoint);
            } else throw ConfigError("unknown predictor '" + so_o.predictor + "'");
            const SolveReport rep = solve(problem, cfg);
            if (!so_report.empty()) {
                nlohmann::ordered_json j;
                j["instance"] = problem.instance().name;
                j["objective"] = rep.objective;
                j["solution"] = nlohmann::ordered_json::parse(write_solution_json(rep.solution));
                j["counts"] = {{"inter_calls", rep.inter_calls},
                               {"accepted_moves", rep.accepted_moves},
                               {"perturbations", rep.perturbations},
                               {"intra_invocations", rep.intra_invocations}};
                write_file(so_report, j.dump(2) + "\n");
            }
            if (!so_trace.empty()) write_stream(so_trace, [&](std::ostream &o) { write_trace_csv(rep, o); });
            if (!so_routes.empty())
                write_stream(so_routes, [&](std::ostream &o) { write_routes_csv(rep.solution, problem.instance(), o); });
            std::printf("objective %.6f\n", rep.objective);
            std::printf("moves %ld perturbations %ld time %.3fs\n", rep.accepted_moves, rep.perturbations,
                        rep.wall_seconds);
        } else if (*be) {
            const BenchResult r = run_bench(bench_spec());
            if (!be_out.empty()) {
                write_stream(fs::path(be_out) / "bench.csv", [&](std::ostream &o) { write_bench_csv(r, o); });
                write_stream(fs::path(be_out) / "bench_runs.csv", [&](std::ostream &o) { write_bench_runs_csv(r, o); });
                write_stream(fs::path(be_out) / "bench_timing.csv",
                             [&](std::ostream &o) { write_bench_timing_csv(r, o); });
            }
            write_bench_table(r, std::cout);
        } else if (*ab) {
            const AblationResult r = run_ablation(parse_ablation(ab_kind), bench_spec());
            if (!be_out.empty()) {
                write_stream(fs::path(be_out) / "ablation.csv", [&](std::ostream &o) { write_ablation_csv(r, o); });
                write_stream(fs::path(be_out) / "ablation_timing.csv",
                             [&](std::ostream &o) { write_ablation_timing_csv(r, o); });
            }
            write_ablation_csv(r, std::cout);
        } else if (*mi) {
            const Instance inst = load_instance_file(mi_instance);
            const MilpModel model = build_milp(inst);
            write_file(mi_out, export_lp(model));
            std::printf("wrote %zu variables and %zu constraints to %s\n", model.vars.size(), model.cons.size(),
                        mi_out.c_str());
            if (!mi_solution.empty()) {
                std::ifstream in(mi_solution);
                if (!in) throw ConfigError("cannot read " + mi_solution);
                std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                auto j = nlohmann::json::parse(text, nullptr, false);
                if (!j.is_discarded() && j.contains("solution")) text = j["solution"].dump();
                const auto rep = check_milp_feasibility(model, inst, read_solution_json(text));
                if (rep.feasible) {
                    std::printf("solution feasible, Q = %.9f\n", rep.q);
                } else {
                    std::printf("solution infeasible: %zu violated rows\n", rep.violated.size());
                    for (std::size_t k = 0; k < rep.violated.size() && k < 10; ++k)
                        std::printf("  %s (%s)\n", rep.violated[k].constraint.c_str(),
                                    rep.violated[k].family.c_str());
                    return 3;
                }
            }
        }
        return 0;
    } catch (const Error &e) {
        std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
        return 1;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
}
