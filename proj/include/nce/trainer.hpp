#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nce/core.hpp"
#include "nce/gnn.hpp"
#include "nce/instances.hpp"
#include "nce/nn.hpp"

namespace nce {

/// One cut-point pair of one tour pair with its exact best decrement.
struct TrainingSample {
    int iid = 0;
    std::vector<int> t1, t2; ///< city sequences
    int d1 = 0, d2 = 0;      ///< start depots
    int a1 = 0, a2 = 0;
    double y = 0.0;
    friend bool operator==(const TrainingSample &, const TrainingSample &) = default;
};

struct DatasetConfig {
    int num_instances = 2000;
    IntRange num_cities{10, 100};
    IntRange num_depots{2, 9};
    int num_vehicles = 2;
    Variant variant = Variant::FMDVRP;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Samples of one instance share its tour pair and are stored contiguously.
struct Dataset {
    DatasetConfig config;
    std::vector<Instance> instances; ///< indexed by iid
    std::vector<TrainingSample> samples;

    /// [begin, end) sample ranges per instance.
    std::vector<std::pair<std::size_t, std::size_t>> groups() const;
};

/// Generator configuration of instance iid: its own seed, one fixed size draw.
GeneratorConfig instance_config(const DatasetConfig &config, int iid);

/// The tour pair used for an instance: the first two tours of its initial solution.
std::pair<Tour, Tour> training_pair(const Problem &problem, std::uint64_t seed);

/// Every cut-point pair with at least one admissible end point, labelled with
/// the inner search result.
std::vector<HeadSample> label_pair(const Tour &t1, const Tour &t2, const Problem &problem);

Dataset generate_dataset(const DatasetConfig &config);

/// Writes samples.jsonl[.gz], instances.jsonl and manifest.json into dir.
void write_dataset(const Dataset &data, const std::filesystem::path &dir, bool gzip = false);

/// Reads a dataset directory and re-checks a seeded fraction of the labels
/// against the inner search; a mismatch raises ParseError.
Dataset read_dataset(const std::filesystem::path &dir, double audit_fraction = 0.01, std::uint64_t audit_seed = 0);

/// Rebuilds the tours of a sample with return depots resolved.
std::pair<Tour, Tour> sample_tours(const TrainingSample &s, const Problem &problem);

// ---------------------------------------------------------------------------

struct TrainConfig {
    GnnConfig gnn;
    int epochs = 3;
    int batch_size = 512;
    double validation_fraction = 0.05;
    nn::AdamWConfig optimizer;
    double huber_delta = 1.0;
    bool zero_head = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossRecord {
    int epoch = 0;
    std::string split;
    double loss = 0.0;
};

struct TrainResult {
    GnnModel<float> model; ///< best validation checkpoint
    std::vector<LossRecord> history;
    int best_epoch = 0;
    double initial_validation_loss = 0.0;
    double best_validation_loss = 0.0;
    long steps = 0;
    std::vector<int> validation_iids;
};

using TrainProgress = std::function<void(const LossRecord &)>;

TrainResult train(const Dataset &data, const TrainConfig &config, const TrainProgress &progress = {});

/// Instance ids held out for validation: a seeded 5%-style split by instance.
std::vector<int> validation_split(int num_instances, double fraction, std::uint64_t seed);

void write_loss_csv(const std::vector<LossRecord> &history, std::ostream &out);

// ---------------------------------------------------------------------------

struct EvalPair {
    std::shared_ptr<const Problem> problem;
    Tour t1, t2;
};

/// Held-out tour pairs drawn like the training pairs but from another seed.
std::vector<EvalPair> make_eval_pairs(const DatasetConfig &config, int count);

struct ScatterRow {
    int pair = 0;
    int a1 = 0, a2 = 0;
    double predicted = 0.0;
    double truth = 0.0;
};

struct PredictorEval {
    std::vector<int> ks;
    std::vector<double> argmax_ratio; ///< parallel to ks
    double mean_spearman = 0.0;
    int pairs = 0;
    std::vector<ScatterRow> scatter;
};

/// For each pair: does a true best (a1, a2) appear among the top-k predictions?
/// Ties in the true maximum all count as hits.
PredictorEval evaluate_predictor(const Predictor &predictor, std::span<const EvalPair> pairs, std::vector<int> ks);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

} // namespace nce
