#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nce/core.hpp"
#include "nce/nn.hpp"
#include "nce/predictor.hpp"

namespace nce {

/// Tour pair as a directed complete graph.
///
/// Nodes follow the first tour (start depot, cities, return depot) and then the
/// second; a depot already present is not repeated. Edge (i, j) has index
/// i * (m - 1) + (j < i ? j : j - 1).
struct TourPairGraph {
    enum EdgeType { Successor = 0, Predecessor, Forward, Backward, InterTour, kEdgeTypes };

    int m = 0;
    bool edge_types = true;
    std::vector<int> dm_node;     ///< graph node -> distance-matrix node
    nn::Tensor<double> node_x;    ///< m x 3: x, y, depot indicator
    nn::Tensor<double> edge_x;    ///< E x (1 + 5 or 1): distance, type one-hot
    std::vector<int> seq1, seq2;  ///< graph node at each tour position, including both depots
    std::vector<int> type;        ///< edge type per edge

    int num_edges() const { return m * (m - 1); }
    int edge(int i, int j) const { return i * (m - 1) + (j < i ? j : j - 1); }
    int len1() const { return static_cast<int>(seq1.size()) - 2; }
    int len2() const { return static_cast<int>(seq2.size()) - 2; }
};

inline int edge_feature_dim(bool edge_types) { return edge_types ? 1 + TourPairGraph::kEdgeTypes : 1; }
inline constexpr int kNodeFeatures = 3;

/// Throws InstanceError when the tours share a city.
TourPairGraph build_graph(const Tour &t1, const Tour &t2, const Problem &problem, bool edge_types = true);

struct GnnConfig {
    int layers = 5;
    int width = 64;
    int mlp_depth = 4; ///< linear layers per MLP
    bool edge_types = true;

    int head_inputs() const { return 8 * width; }
    friend bool operator==(const GnnConfig &, const GnnConfig &) = default;
};

template <class T>
struct GnnLayer {
    nn::Mlp<T> phi_e, phi_w, phi_n;
};

template <class T>
struct GnnModel {
    GnnConfig config;
    nn::Linear<T> node_enc, edge_enc;
    std::vector<GnnLayer<T>> layers;
    nn::Mlp<T> head;

    GnnModel() = default;
    explicit GnnModel(const GnnConfig &cfg);

    /// Kaiming-uniform weights, zero biases; optionally an all-zero head.
    void init(std::uint64_t seed, bool zero_head = false);

    /// Same architecture, every parameter zero.
    GnnModel zeros_like() const { return GnnModel(config); }

    template <class U>
    GnnModel<U> cast() const;

    /// Calls f(name, tensor&) for every parameter in a fixed order.
    template <class F>
    void visit(F &&f) {
        f(std::string("node_enc.weight"), node_enc.w);
        f(std::string("node_enc.bias"), node_enc.b);
        f(std::string("edge_enc.weight"), edge_enc.w);
        f(std::string("edge_enc.bias"), edge_enc.b);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string p = "layer" + std::to_string(l);
            layers[l].phi_e.visit(p + ".phi_e", f);
            layers[l].phi_w.visit(p + ".phi_w", f);
            layers[l].phi_n.visit(p + ".phi_n", f);
        }
        head.visit("phi_c", f);
    }

    std::vector<nn::Tensor<T> *> parameters();
    std::size_t num_parameters() const;
};

template <class T>
struct Embedding {
    nn::Tensor<T> node; ///< m x width
    nn::Tensor<T> edge; ///< E x width
};

template <class T>
struct EmbedTape {
    struct Layer {
        nn::MlpTape<T> e, w, n;
        nn::Tensor<T> node_in, edge_in; ///< layer inputs
        std::vector<T> attn;       ///< softmax weight per edge
        nn::Tensor<T> edge_out;    ///< updated edge embeddings
    };
    nn::Tensor<T> node_x, edge_x;
    std::vector<Layer> layers;
};

template <class T>
Embedding<T> embed(const GnnModel<T> &model, const TourPairGraph &g, EmbedTape<T> *tape = nullptr);

/// Accumulates parameter gradients for embedding-output gradients.
template <class T>
void embed_backward(const GnnModel<T> &model, const TourPairGraph &g, const EmbedTape<T> &tape,
                    const Embedding<T> &d_out, GnnModel<T> &grad);

/// Attention weights of one layer, for inspection: row i holds w_ij over j != i.
template <class T>
std::vector<std::vector<T>> attention_weights(const GnnModel<T> &model, const TourPairGraph &g, int layer);

/// Concatenated head inputs, one row per (a1, a2).
template <class T>
nn::Tensor<T> head_inputs(const TourPairGraph &g, const Embedding<T> &emb, std::span<const std::pair<int, int>> cuts);

template <class T>
T predict_head(const GnnModel<T> &model, const TourPairGraph &g, const Embedding<T> &emb, int a1, int a2);

struct HeadSample {
    int a1 = 0;
    int a2 = 0;
    double y = 0.0;
};

/// Huber loss over the samples of one graph. Gradients scaled by `scale` are
/// added to grad when given. Returns the unscaled loss sum.
template <class T>
double graph_loss(const GnnModel<T> &model, const TourPairGraph &g, std::span<const HeadSample> samples,
                  double scale = 1.0, GnnModel<T> *grad = nullptr, double delta = 1.0);

class LearnedPredictor final : public Predictor {
public:
    explicit LearnedPredictor(std::shared_ptr<const GnnModel<float>> model) : model_(std::move(model)) {}
    std::string name() const override { return "learned"; }
    DecrementMatrix predict_all(const Tour &t1, const Tour &t2, const Problem &problem,
                                const SearchRange &range) const override;
    const GnnModel<float> &model() const { return *model_; }

private:
    std::shared_ptr<const GnnModel<float>> model_;
};

/// Writes a JSON manifest at `path` and the raw float blob next to it
/// (same stem, ".bin").
void save_checkpoint(const GnnModel<float> &model, const std::filesystem::path &path);
GnnModel<float> load_checkpoint(const std::filesystem::path &path);

} // namespace nce
