#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nce/solver.hpp"
#include "nce/trainer.hpp"
#include "oracles.hpp"

using namespace nce;
namespace fs = std::filesystem;

namespace {

DatasetConfig tiny_config() {
    DatasetConfig c;
    c.num_instances = 6;
    c.num_cities = {10, 16};
    c.num_depots = {2, 4};
    c.seed = 11;
    return c;
}

GnnConfig small_gnn() {
    GnnConfig g;
    g.layers = 1;
    g.width = 16;
    g.mlp_depth = 3;
    return g;
}

fs::path temp_dir(const std::string &name) {
    const fs::path d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

} // namespace

TEST_CASE("dataset generation is deterministic") {
    const Dataset a = generate_dataset(tiny_config()), b = generate_dataset(tiny_config());
    CHECK(a.samples == b.samples);
    CHECK(a.instances == b.instances);
    CHECK(a.instances.size() == 6);
    for (const auto &s : a.samples) {
        const Problem p(a.instances[s.iid]);
        const auto [t1, t2] = sample_tours(s, p);
        CHECK(inner_search(t1, t2, s.a1, s.a2, p, SearchRange::for_problem(t1, t2, p)).y == s.y);
    }
    DatasetConfig c = tiny_config();
    c.seed = 12;
    CHECK(generate_dataset(c).samples != a.samples);
}

TEST_CASE("samples per pair follow the cut-point count") {
    const Instance inst = oracle::random_instance(3, 10, 2, 2, Variant::FMDVRP);
    const Problem p(inst);
    Tour t1{0, 0, {0, 1, 2, 3, 4}, 0}, t2{1, 1, {5, 6, 7, 8, 9}, 1};
    resolve_return_depot(t1, inst.variant, p.dm());
    resolve_return_depot(t2, inst.variant, p.dm());
    const auto samples = label_pair(t1, t2, p);
    // Only (5, 5) leaves both segments empty for every end point.
    CHECK(samples.size() == 6 * 6 - 1);
    bool negative = false;
    for (const auto &s : samples) negative = negative || s.y < 0;
    CHECK(negative);
}

TEST_CASE("training pair comes from the initial solution") {
    const Problem p(oracle::random_instance(5, 30, 3, 2, Variant::FMDVRP));
    const auto [t1, t2] = training_pair(p, 4);
    const Solution s = initial_solution(p, 4);
    CHECK(t1 == s.tours[0]);
    CHECK(t2 == s.tours[1]);
}

TEST_CASE("dataset files round trip with an audit") {
    const Dataset d = generate_dataset(tiny_config());
    for (bool gz : {false, true}) {
        const fs::path dir = temp_dir(gz ? "nce_ds_gz" : "nce_ds");
        write_dataset(d, dir, gz);
        CHECK(fs::exists(dir / (gz ? "samples.jsonl.gz" : "samples.jsonl")));
        CHECK(fs::exists(dir / "instances.jsonl"));
        const auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
        CHECK(manifest.at("num_samples") == d.samples.size());
        const Dataset back = read_dataset(dir, 1.0);
        CHECK(back.samples == d.samples);
        CHECK(back.instances == d.instances);
        fs::remove_all(dir);
    }
    // A tampered label fails the audit.
    const fs::path dir = temp_dir("nce_ds_bad");
    write_dataset(d, dir, false);
    std::ifstream in(dir / "samples.jsonl");
    std::string first;
    std::getline(in, first);
    std::stringstream rest;
    rest << in.rdbuf();
    in.close();
    auto j = nlohmann::json::parse(first);
    j["y"] = j["y"].get<double>() + 0.5;
    std::ofstream(dir / "samples.jsonl") << j.dump() << "\n" << rest.str();
    CHECK_THROWS_AS(read_dataset(dir, 1.0), ParseError);
    fs::remove_all(dir);
}

TEST_CASE("sample records use the documented keys") {
    const Dataset d = generate_dataset(tiny_config());
    const fs::path dir = temp_dir("nce_ds_keys");
    write_dataset(d, dir, false);
    std::ifstream in(dir / "samples.jsonl");
    std::string line;
    std::getline(in, line);
    const auto j = nlohmann::json::parse(line);
    for (const char *k : {"iid", "t1", "t2", "d1", "d2", "a1", "a2", "y"}) CHECK(j.contains(k));
    fs::remove_all(dir);
}

TEST_CASE("validation split is by instance") {
    const auto v = validation_split(100, 0.05, 3);
    CHECK(v.size() == 5);
    CHECK(v == validation_split(100, 0.05, 3));
    CHECK(std::is_sorted(v.begin(), v.end()));
    CHECK(validation_split(100, 0.0, 3).empty());
    CHECK(validation_split(3, 0.05, 3).size() == 1);
}

TEST_CASE("memorizing identical samples") {
    Dataset d;
    d.config = tiny_config();
    d.instances.push_back(oracle::random_instance(1, 8, 2, 2));
    const Problem p(d.instances[0]);
    const auto [t1, t2] = training_pair(p, 0);
    for (int k = 0; k < 64; ++k) d.samples.push_back({0, t1.cities, t2.cities, t1.start_depot, t2.start_depot, 1, 1, 0.37});
    TrainConfig c;
    c.gnn = small_gnn();
    c.epochs = 300;
    c.batch_size = 64;
    c.validation_fraction = 0.0;
    c.optimizer.lr = 1e-3;
    const TrainResult r = train(d, c);
    CHECK(r.best_validation_loss < 1e-4);
    CHECK(r.best_validation_loss < 1e-3 * r.initial_validation_loss);
}

TEST_CASE("zero head on zero targets starts at zero loss") {
    Dataset d = generate_dataset(tiny_config());
    for (auto &s : d.samples) s.y = 0.0;
    TrainConfig c;
    c.gnn = small_gnn();
    c.epochs = 1;
    c.zero_head = true;
    const TrainResult r = train(d, c);
    CHECK(r.initial_validation_loss == 0.0);
    CHECK(r.history.front().loss == 0.0);
}

TEST_CASE("training reduces validation loss and logs history") {
    DatasetConfig dc = tiny_config();
    dc.num_instances = 40;
    const Dataset d = generate_dataset(dc);
    TrainConfig c;
    c.gnn = small_gnn();
    c.epochs = 4;
    c.batch_size = 256;
    c.validation_fraction = 0.1;
    const TrainResult a = train(d, c);
    CHECK(a.best_validation_loss < a.initial_validation_loss);
    CHECK(a.validation_iids.size() == 4);
    int vals = 0;
    for (const auto &h : a.history) vals += h.split == "val";
    CHECK(vals == c.epochs + 1);
    std::ostringstream csv;
    write_loss_csv(a.history, csv);
    CHECK(csv.str().rfind("epoch,split,loss\n0,train,", 0) == 0);
    // Same seed, same trajectory.
    const TrainResult b = train(d, c);
    std::ostringstream csv2;
    write_loss_csv(b.history, csv2);
    CHECK(csv.str() == csv2.str());
}

TEST_CASE("non-finite loss aborts") {
    Dataset d = generate_dataset(tiny_config());
    d.samples[0].y = std::numeric_limits<double>::infinity();
    TrainConfig c;
    c.gnn = small_gnn();
    c.epochs = 1;
    CHECK_THROWS_AS(train(d, c), NumericError);
}

TEST_CASE("predictor evaluation") {
    DatasetConfig dc = tiny_config();
    const auto pairs = make_eval_pairs(dc, 12);
    CHECK(pairs.size() == 12);
    const ExactOracle exact;
    const PredictorEval ev = evaluate_predictor(exact, pairs, {1, 3, 5, 10, 20});
    for (double r : ev.argmax_ratio) CHECK(r == 1.0);
    CHECK(ev.mean_spearman == doctest::Approx(1.0));
    std::size_t admissible = 0;
    for (const auto &pr : pairs) {
        const auto m = exact.predict_all(pr.t1, pr.t2, *pr.problem, SearchRange::for_problem(pr.t1, pr.t2, *pr.problem));
        for (double v : m.values()) admissible += !std::isinf(v);
    }
    CHECK(ev.scatter.size() == admissible);

    GnnModel<float> m(small_gnn());
    m.init(2);
    const LearnedPredictor lp(std::make_shared<const GnnModel<float>>(m));
    const PredictorEval le = evaluate_predictor(lp, pairs, {1, 3, 5, 10, 20});
    for (std::size_t k = 1; k < le.argmax_ratio.size(); ++k) CHECK(le.argmax_ratio[k] >= le.argmax_ratio[k - 1]);
}

TEST_CASE("spearman rank correlation") {
    const std::vector<double> x{1, 2, 3, 4, 5}, y{5, 6, 7, 8, 7}, z{5, 4, 3, 2, 1};
    CHECK(spearman(x, x) == doctest::Approx(1.0));
    CHECK(spearman(x, z) == doctest::Approx(-1.0));
    // Average ranks for the tie: y ranks 1, 2, 3.5, 5, 3.5.
    CHECK(spearman(x, y) == doctest::Approx(0.8207826817).epsilon(1e-9));
}
