#include "nce/trainer.hpp"

#include <json.hpp>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "nce/parallel.hpp"
#include "nce/rng.hpp"
#include "nce/solver.hpp"

namespace nce {

using json = nlohmann::json;

void DatasetConfig::validate() const {
    if (num_instances < 1) throw ConfigError("num_instances must be positive");
    if (num_vehicles != 2) throw ConfigError("training pairs need exactly two vehicles");
    GeneratorConfig g{num_cities, num_depots, IntRange::fixed(num_vehicles), variant, seed};
    g.validate();
}

std::vector<std::pair<std::size_t, std::size_t>> Dataset::groups() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t b = 0;
    while (b < samples.size()) {
        std::size_t e = b + 1;
        while (e < samples.size() && samples[e].iid == samples[b].iid) ++e;
        out.emplace_back(b, e);
        b = e;
    }
    return out;
}

GeneratorConfig instance_config(const DatasetConfig &config, int iid) {
    return {config.num_cities, config.num_depots, IntRange::fixed(config.num_vehicles), config.variant,
            derive_seed(config.seed, static_cast<std::uint64_t>(iid))};
}

std::pair<Tour, Tour> training_pair(const Problem &problem, std::uint64_t seed) {
    const Solution s = initial_solution(problem, seed);
    if (s.tours.size() < 2) throw ConfigError("training pairs need two tours");
    return {s.tours[0], s.tours[1]};
}

std::vector<HeadSample> label_pair(const Tour &t1, const Tour &t2, const Problem &problem) {
    const CrossEvaluator ev(t1, t2, problem);
    const SearchRange range = SearchRange::for_problem(t1, t2, problem);
    std::vector<HeadSample> out;
    for (int a1 = 0; a1 <= t1.size(); ++a1)
        for (int a2 = 0; a2 <= t2.size(); ++a2) {
            const InnerResult r = inner_search(ev, range, a1, a2);
            if (r.b1 >= 0) out.push_back({a1, a2, r.y});
        }
    return out;
}

Dataset generate_dataset(const DatasetConfig &config) {
    config.validate();
    Dataset data;
    data.config = config;
    data.instances.resize(config.num_instances);
    std::vector<std::vector<TrainingSample>> per(config.num_instances);
    parallel_for(config.num_instances, [&](std::size_t i) {
        const int iid = static_cast<int>(i);
        const GeneratorConfig gc = instance_config(config, iid);
        Instance inst = generate(gc);
        const Problem problem(inst);
        const auto [t1, t2] = training_pair(problem, gc.seed);
        for (const auto &h : label_pair(t1, t2, problem))
            per[i].push_back({iid, t1.cities, t2.cities, t1.start_depot, t2.start_depot, h.a1, h.a2, h.y});
        data.instances[i] = std::move(inst);
    });
    for (auto &v : per)
        for (auto &s : v) data.samples.push_back(std::move(s));
    return data;
}

// ---------------------------------------------------------------------------
// Storage

namespace {

std::string sample_line(const TrainingSample &s) {
    json j;
    j["iid"] = s.iid;
    j["t1"] = s.t1;
    j["t2"] = s.t2;
    j["d1"] = s.d1;
    j["d2"] = s.d2;
    j["a1"] = s.a1;
    j["a2"] = s.a2;
    j["y"] = s.y;
    return j.dump() + "\n";
}

class LineWriter {
public:
    LineWriter(const std::filesystem::path &p, bool gz) : gz_(gz) {
        if (gz_) {
            gzf_ = gzopen(p.string().c_str(), "wb9");
            if (!gzf_) throw Error("io_error", "cannot write " + p.string());
        } else {
            out_.open(p, std::ios::binary);
            if (!out_) throw Error("io_error", "cannot write " + p.string());
        }
    }
    ~LineWriter() {
        if (gzf_) gzclose(gzf_);
    }
    void write(const std::string &s) {
        if (gz_) {
            if (gzwrite(gzf_, s.data(), static_cast<unsigned>(s.size())) != static_cast<int>(s.size()))
                throw Error("io_error", "gzip write failed");
        } else {
            out_ << s;
        }
    }

private:
    bool gz_;
    gzFile gzf_ = nullptr;
    std::ofstream out_;
};

// zlib reads plain files transparently, so one reader serves both forms.
std::vector<std::string> read_lines(const std::filesystem::path &p) {
    gzFile f = gzopen(p.string().c_str(), "rb");
    if (!f) throw Error("io_error", "cannot read " + p.string());
    std::vector<std::string> lines;
    std::string cur;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) {
        for (int k = 0; k < n; ++k) {
            if (buf[k] == '\n') {
                if (!cur.empty()) lines.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(buf[k]);
            }
        }
    }
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw Error("io_error", "read failed for " + p.string());
    if (!cur.empty()) lines.push_back(std::move(cur));
    return lines;
}

json config_json(const DatasetConfig &c) {
    return {{"num_instances", c.num_instances},
            {"num_cities", std::to_string(c.num_cities.lo) + ":" + std::to_string(c.num_cities.hi)},
            {"num_depots", std::to_string(c.num_depots.lo) + ":" + std::to_string(c.num_depots.hi)},
            {"num_vehicles", c.num_vehicles},
            {"variant", std::string(to_string(c.variant))},
            {"seed", c.seed}};
}

} // namespace

void write_dataset(const Dataset &data, const std::filesystem::path &dir, bool gzip) {
    std::filesystem::create_directories(dir);
    const auto samples_name = gzip ? "samples.jsonl.gz" : "samples.jsonl";
    {
        LineWriter w(dir / samples_name, gzip);
        for (const auto &s : data.samples) w.write(sample_line(s));
    }
    {
        std::ofstream out(dir / "instances.jsonl", std::ios::binary);
        if (!out) throw Error("io_error", "cannot write " + (dir / "instances.jsonl").string());
        for (std::size_t i = 0; i < data.instances.size(); ++i) {
            json j;
            j["iid"] = i;
            j["instance"] = json::parse(write_instance_json(data.instances[i]));
            out << j.dump() << "\n";
        }
    }
    json man;
    man["config"] = config_json(data.config);
    man["samples_file"] = samples_name;
    man["instances_file"] = "instances.jsonl";
    man["num_instances"] = data.instances.size();
    man["num_samples"] = data.samples.size();
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << man.dump(2) << "\n";
}

std::pair<Tour, Tour> sample_tours(const TrainingSample &s, const Problem &problem) {
    Tour t1{0, s.d1, s.t1, s.d1}, t2{1, s.d2, s.t2, s.d2};
    resolve_return_depot(t1, problem.variant(), problem.dm());
    resolve_return_depot(t2, problem.variant(), problem.dm());
    return {t1, t2};
}

Dataset read_dataset(const std::filesystem::path &dir, double audit_fraction, std::uint64_t audit_seed) {
    Dataset data;
    json man;
    {
        std::ifstream in(dir / "manifest.json");
        if (!in) throw Error("io_error", "cannot read " + (dir / "manifest.json").string());
        try {
            man = json::parse(in);
        } catch (const json::exception &e) {
            throw ParseError(std::string("manifest: ") + e.what());
        }
    }
    try {
        const auto &c = man.at("config");
        data.config.num_instances = c.at("num_instances");
        data.config.num_cities = IntRange::parse(c.at("num_cities").get<std::string>());
        data.config.num_depots = IntRange::parse(c.at("num_depots").get<std::string>());
        data.config.num_vehicles = c.at("num_vehicles");
        data.config.variant = parse_variant(c.at("variant").get<std::string>());
        data.config.seed = c.at("seed");

        for (const auto &line : read_lines(dir / man.at("instances_file").get<std::string>())) {
            const json j = json::parse(line);
            const std::size_t iid = j.at("iid");
            if (iid != data.instances.size()) throw ParseError("instances sidecar is not in iid order");
            data.instances.push_back(read_instance_json(j.at("instance").dump()));
        }
        for (const auto &line : read_lines(dir / man.at("samples_file").get<std::string>())) {
            const json j = json::parse(line);
            TrainingSample s;
            s.iid = j.at("iid");
            s.t1 = j.at("t1").get<std::vector<int>>();
            s.t2 = j.at("t2").get<std::vector<int>>();
            s.d1 = j.at("d1");
            s.d2 = j.at("d2");
            s.a1 = j.at("a1");
            s.a2 = j.at("a2");
            s.y = j.at("y");
            if (s.iid < 0 || s.iid >= static_cast<int>(data.instances.size()))
                throw ParseError("sample refers to unknown instance " + std::to_string(s.iid));
            data.samples.push_back(std::move(s));
        }
        if (man.at("num_samples").get<std::size_t>() != data.samples.size())
            throw ParseError("sample count differs from the manifest");
    } catch (const json::exception &e) {
        throw ParseError(std::string("dataset: ") + e.what());
    }

    Rng rng(derive_seed(audit_seed, 0x6175646974ULL));
    for (const auto &s : data.samples) {
        if (!(uniform01(rng) < audit_fraction)) continue;
        const Problem problem(data.instances[s.iid]);
        const auto [t1, t2] = sample_tours(s, problem);
        const InnerResult r = inner_search(t1, t2, s.a1, s.a2, problem, SearchRange::for_problem(t1, t2, problem));
        if (r.y != s.y)
            throw ParseError("label audit failed for instance " + std::to_string(s.iid) + " at (" +
                             std::to_string(s.a1) + "," + std::to_string(s.a2) + ")");
    }
    return data;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw ConfigError("validation fraction must be in [0, 1)");
    if (!(optimizer.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(huber_delta > 0.0)) throw ConfigError("huber delta must be positive");
}

std::vector<int> validation_split(int num_instances, double fraction, std::uint64_t seed) {
    std::vector<int> ids(num_instances);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(derive_seed(seed, 0x76616c6964ULL));
    for (int i = num_instances - 1; i > 0; --i) std::swap(ids[i], ids[uniform_int(rng, 0, i)]);
    int n = static_cast<int>(std::ceil(fraction * num_instances));
    if (fraction > 0.0 && num_instances >= 2) n = std::clamp(n, 1, num_instances - 1);
    else n = 0;
    ids.resize(n);
    std::sort(ids.begin(), ids.end());
    return ids;
}

namespace {

struct Group {
    std::shared_ptr<const Problem> problem;
    TourPairGraph graph;
    std::vector<HeadSample> samples;
};

std::vector<Group> build_groups(const Dataset &data, const std::vector<int> &iids, bool edge_types) {
    const auto ranges = data.groups();
    std::vector<std::size_t> by_iid(data.instances.size(), ranges.size());
    for (std::size_t g = 0; g < ranges.size(); ++g) by_iid[data.samples[ranges[g].first].iid] = g;
    std::vector<Group> out;
    out.reserve(iids.size());
    for (int iid : iids) {
        if (by_iid[iid] == ranges.size()) continue;
        const auto [b, e] = ranges[by_iid[iid]];
        Group g;
        g.problem = std::make_shared<const Problem>(data.instances[iid]);
        const auto [t1, t2] = sample_tours(data.samples[b], *g.problem);
        g.graph = build_graph(t1, t2, *g.problem, edge_types);
        for (std::size_t k = b; k < e; ++k) g.samples.push_back({data.samples[k].a1, data.samples[k].a2, data.samples[k].y});
        out.push_back(std::move(g));
    }
    return out;
}

double mean_loss(const GnnModel<float> &model, const std::vector<Group> &groups, double delta) {
    std::vector<double> sums(groups.size());
    parallel_for(groups.size(), [&](std::size_t g) {
        sums[g] = graph_loss<float>(model, groups[g].graph, groups[g].samples, 1.0, nullptr, delta);
    });
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) total += sums[g], n += groups[g].samples.size();
    return n ? total / static_cast<double>(n) : 0.0;
}

} // namespace

TrainResult train(const Dataset &data, const TrainConfig &config, const TrainProgress &progress) {
    config.validate();
    TrainResult res;
    const int n = static_cast<int>(data.instances.size());
    res.validation_iids = validation_split(n, config.validation_fraction, config.seed);
    std::vector<char> is_val(n, 0);
    for (int i : res.validation_iids) is_val[i] = 1;
    std::vector<int> train_ids;
    for (int i = 0; i < n; ++i)
        if (!is_val[i]) train_ids.push_back(i);

    const auto train_groups = build_groups(data, train_ids, config.gnn.edge_types);
    const auto val_groups = build_groups(data, res.validation_iids, config.gnn.edge_types);

    GnnModel<float> model(config.gnn);
    model.init(config.seed, config.zero_head);
    nn::AdamW<float> opt(config.optimizer);
    const auto params = model.parameters();

    auto log = [&](int epoch, const char *split, double loss) {
        res.history.push_back({epoch, split, loss});
        if (progress) progress(res.history.back());
    };

    const bool have_val = !val_groups.empty();
    const auto &score_groups = have_val ? val_groups : train_groups;
    log(0, "train", mean_loss(model, train_groups, config.huber_delta));
    const double v0 = mean_loss(model, score_groups, config.huber_delta);
    if (have_val) log(0, "val", v0);
    res.initial_validation_loss = res.best_validation_loss = v0;
    res.model = model;

    Rng rng(derive_seed(config.seed, 0x736875ULL));
    std::vector<std::size_t> order(train_groups.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_int(rng, 0, i - 1)]);
        double epoch_loss = 0.0;
        std::size_t epoch_count = 0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            // A batch is a run of whole tour pairs holding at least batch_size samples.
            std::vector<std::size_t> batch;
            std::size_t count = 0;
            while (pos < order.size() && count < static_cast<std::size_t>(config.batch_size)) {
                batch.push_back(order[pos]);
                count += train_groups[order[pos]].samples.size();
                ++pos;
            }
            const double scale = 1.0 / static_cast<double>(count);
            std::vector<GnnModel<float>> grads(batch.size());
            std::vector<double> losses(batch.size());
            parallel_for(batch.size(), [&](std::size_t b) {
                grads[b] = model.zeros_like();
                const auto &g = train_groups[batch[b]];
                losses[b] = graph_loss<float>(model, g.graph, g.samples, scale, &grads[b], config.huber_delta);
            });
            for (std::size_t b = 1; b < batch.size(); ++b) {
                auto dst = grads[0].parameters();
                auto src = grads[b].parameters();
                for (std::size_t k = 0; k < dst.size(); ++k) *dst[k] += *src[k];
            }
            std::vector<const nn::Tensor<float> *> gp;
            for (auto *t : grads[0].parameters()) gp.push_back(t);
            opt.step(params, gp);
            ++res.steps;
            for (double l : losses) epoch_loss += l;
            epoch_count += count;
        }
        log(epoch, "train", epoch_count ? epoch_loss / static_cast<double>(epoch_count) : 0.0);
        const double v = mean_loss(model, score_groups, config.huber_delta);
        if (have_val) log(epoch, "val", v);
        if (v < res.best_validation_loss) {
            res.best_validation_loss = v;
            res.best_epoch = epoch;
            res.model = model;
        }
    }
    return res;
}

void write_loss_csv(const std::vector<LossRecord> &history, std::ostream &out) {
    out << "epoch,split,loss\n";
    char buf[64];
    for (const auto &r : history) {
        std::snprintf(buf, sizeof buf, "%.10g", r.loss);
        out << r.epoch << "," << r.split << "," << buf << "\n";
    }
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<EvalPair> make_eval_pairs(const DatasetConfig &config, int count) {
    DatasetConfig held = config;
    held.seed = derive_seed(config.seed, 0x68656c646f7574ULL);
    std::vector<EvalPair> out(count);
    parallel_for(count, [&](std::size_t i) {
        const GeneratorConfig gc = instance_config(held, static_cast<int>(i));
        auto problem = std::make_shared<const Problem>(generate(gc));
        auto [t1, t2] = training_pair(*problem, gc.seed);
        out[i] = {problem, std::move(t1), std::move(t2)};
    });
    return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
        i = j + 1;
    }
    return r;
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) return 0.0;
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

PredictorEval evaluate_predictor(const Predictor &predictor, std::span<const EvalPair> pairs, std::vector<int> ks) {
    PredictorEval ev;
    ev.ks = ks;
    ev.pairs = static_cast<int>(pairs.size());
    std::vector<std::vector<char>> hits(pairs.size(), std::vector<char>(ks.size(), 0));
    std::vector<double> rho(pairs.size(), 0.0);
    std::vector<std::vector<ScatterRow>> rows(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t p) {
        const auto &pr = pairs[p];
        const SearchRange range = SearchRange::for_problem(pr.t1, pr.t2, *pr.problem);
        const DecrementMatrix pred = predictor.predict_all(pr.t1, pr.t2, *pr.problem, range);
        const DecrementMatrix truth = ExactOracle().predict_all(pr.t1, pr.t2, *pr.problem, range);
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> xs, ys;
        for (int a1 = 0; a1 < truth.rows(); ++a1)
            for (int a2 = 0; a2 < truth.cols(); ++a2) {
                const double t = truth.at(a1, a2);
                if (std::isinf(t)) continue;
                best = std::max(best, t);
                xs.push_back(pred.at(a1, a2));
                ys.push_back(t);
                rows[p].push_back({static_cast<int>(p), a1, a2, pred.at(a1, a2), t});
            }
        rho[p] = spearman(xs, ys);
        const auto ranked = ranked_pairs(pred);
        for (std::size_t k = 0; k < ks.size(); ++k) {
            const std::size_t take = std::min<std::size_t>(ks[k], ranked.size());
            for (std::size_t r = 0; r < take; ++r)
                if (truth.at(ranked[r].a1, ranked[r].a2) >= best - 1e-12) {
                    hits[p][k] = 1;
                    break;
                }
        }
    });
    ev.argmax_ratio.assign(ks.size(), 0.0);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        for (std::size_t k = 0; k < ks.size(); ++k) ev.argmax_ratio[k] += hits[p][k];
        ev.mean_spearman += rho[p];
        ev.scatter.insert(ev.scatter.end(), rows[p].begin(), rows[p].end());
    }
    if (!pairs.empty()) {
        for (auto &r : ev.argmax_ratio) r /= static_cast<double>(pairs.size());
        ev.mean_spearman /= static_cast<double>(pairs.size());
    }
    return ev;
}

} // namespace nce
