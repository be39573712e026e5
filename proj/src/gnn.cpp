#include "nce/gnn.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace nce {

using nn::Tensor;

// ---------------------------------------------------------------------------
// Graph

namespace {

// Which relation node j has to node i inside one tour, or -1 if the tour does
// not contain both.
int relation(const std::vector<int> &pi, const std::vector<int> &pj) {
    if (pi.empty() || pj.empty()) return -1;
    auto has = [](const std::vector<int> &v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); };
    for (int p : pi)
        if (has(pj, p + 1)) return TourPairGraph::Successor;
    for (int p : pi)
        if (has(pj, p - 1)) return TourPairGraph::Predecessor;
    const int mi = *std::min_element(pi.begin(), pi.end());
    const int mj = *std::min_element(pj.begin(), pj.end());
    return mi < mj ? TourPairGraph::Forward : TourPairGraph::Backward;
}

} // namespace

TourPairGraph build_graph(const Tour &t1, const Tour &t2, const Problem &problem, bool edge_types) {
    const auto &dm = problem.dm();
    const auto &inst = problem.instance();
    TourPairGraph g;
    g.edge_types = edge_types;

    std::unordered_map<int, int> index;
    std::vector<std::vector<int>> pos1, pos2;
    auto add = [&](int node, bool second, int position, std::vector<int> &seq) {
        auto [it, fresh] = index.try_emplace(node, static_cast<int>(g.dm_node.size()));
        if (fresh) {
            g.dm_node.push_back(node);
            pos1.emplace_back();
            pos2.emplace_back();
        } else if (!dm.is_depot_node(node)) {
            throw InstanceError("tours share city " + std::to_string(node - dm.num_depots()));
        }
        (second ? pos2 : pos1)[it->second].push_back(position);
        seq.push_back(it->second);
    };
    auto add_tour = [&](const Tour &t, bool second, std::vector<int> &seq) {
        std::unordered_map<int, int> local;
        int pos = 0;
        add(dm.depot_node(t.start_depot), second, pos++, seq);
        for (int c : t.cities) {
            if (!local.try_emplace(c, 0).second) throw InstanceError("city repeated within a tour");
            add(dm.city_node(c), second, pos++, seq);
        }
        add(dm.depot_node(t.empty() ? t.start_depot : t.return_depot), second, pos, seq);
    };
    add_tour(t1, false, g.seq1);
    add_tour(t2, true, g.seq2);
    g.m = static_cast<int>(g.dm_node.size());

    g.node_x.resize(g.m, kNodeFeatures);
    for (int i = 0; i < g.m; ++i) {
        const int node = g.dm_node[i];
        const bool depot = dm.is_depot_node(node);
        const Point q = depot ? inst.depots[node] : inst.cities[node - dm.num_depots()];
        g.node_x(i, 0) = q.x;
        g.node_x(i, 1) = q.y;
        g.node_x(i, 2) = depot ? 1.0 : 0.0;
    }

    const int f = edge_feature_dim(edge_types);
    g.edge_x = Tensor<double>::Zero(g.num_edges(), f);
    g.type.assign(g.num_edges(), TourPairGraph::InterTour);
    for (int i = 0; i < g.m; ++i)
        for (int j = 0; j < g.m; ++j) {
            if (i == j) continue;
            const int e = g.edge(i, j);
            const int r1 = relation(pos1[i], pos1[j]);
            const int r2 = relation(pos2[i], pos2[j]);
            int t = TourPairGraph::InterTour;
            if (r1 >= 0 && r2 >= 0)
                t = r1 == r2 ? r1 : TourPairGraph::InterTour;
            else if (r1 >= 0)
                t = r1;
            else if (r2 >= 0)
                t = r2;
            g.type[e] = t;
            g.edge_x(e, 0) = dm(g.dm_node[i], g.dm_node[j]);
            if (edge_types) g.edge_x(e, 1 + t) = 1.0;
        }
    return g;
}

// ---------------------------------------------------------------------------
// Model

template <class T>
GnnModel<T>::GnnModel(const GnnConfig &cfg) : config(cfg) {
    if (cfg.layers < 0 || cfg.width < 1 || cfg.mlp_depth < 1) throw ConfigError("invalid network shape");
    const int w = cfg.width;
    const int f = edge_feature_dim(cfg.edge_types);
    auto widths = [&](int in, int out) {
        std::vector<int> v{in};
        for (int k = 1; k < cfg.mlp_depth; ++k) v.push_back(w);
        v.push_back(out);
        return v;
    };
    node_enc = nn::Linear<T>(kNodeFeatures, w);
    edge_enc = nn::Linear<T>(f, w);
    for (int l = 0; l < cfg.layers; ++l) {
        GnnLayer<T> layer;
        layer.phi_e = nn::Mlp<T>(widths(3 * w + f, w));
        layer.phi_w = nn::Mlp<T>(widths(3 * w + f, 1));
        layer.phi_n = nn::Mlp<T>(widths(2 * w, w));
        layers.push_back(std::move(layer));
    }
    head = nn::Mlp<T>(widths(cfg.head_inputs(), 1));
}

template <class T>
void GnnModel<T>::init(std::uint64_t seed, bool zero_head) {
    Rng rng(derive_seed(seed, 0x696e6974ULL));
    node_enc.init_kaiming(rng);
    edge_enc.init_kaiming(rng);
    for (auto &l : layers) {
        l.phi_e.init_kaiming(rng);
        l.phi_w.init_kaiming(rng);
        l.phi_n.init_kaiming(rng);
    }
    head.init_kaiming(rng);
    if (zero_head)
        for (auto &l : head.layers) l.w.setZero(), l.b.setZero();
}

template <class T>
template <class U>
GnnModel<U> GnnModel<T>::cast() const {
    GnnModel<U> o;
    o.config = config;
    o.node_enc = node_enc.template cast<U>();
    o.edge_enc = edge_enc.template cast<U>();
    for (const auto &l : layers)
        o.layers.push_back({l.phi_e.template cast<U>(), l.phi_w.template cast<U>(), l.phi_n.template cast<U>()});
    o.head = head.template cast<U>();
    return o;
}

template <class T>
std::vector<Tensor<T> *> GnnModel<T>::parameters() {
    std::vector<Tensor<T> *> out;
    visit([&](const std::string &, Tensor<T> &t) { out.push_back(&t); });
    return out;
}

template <class T>
std::size_t GnnModel<T>::num_parameters() const {
    std::size_t n = 0;
    const_cast<GnnModel *>(this)->visit([&](const std::string &, Tensor<T> &t) { n += t.size(); });
    return n;
}

// ---------------------------------------------------------------------------
// Embedding

namespace {

// First linear layer of an edge MLP applied to [h_i, h_j, h_ij, x_ij] without
// materialising the concatenation: the node blocks are multiplied once per
// node and broadcast over edges.
template <class T>
Tensor<T> edge_pre(const nn::Linear<T> &lin, const TourPairGraph &g, const Tensor<T> &hn, const Tensor<T> &he,
                   const Tensor<T> &x) {
    const int w = static_cast<int>(hn.cols());
    const int f = static_cast<int>(x.cols());
    nn::require_shape(lin.w, lin.out(), 3 * w + f, "edge mlp weight");
    const Tensor<T> src = hn * lin.w.leftCols(w).transpose();
    const Tensor<T> dst = hn * lin.w.middleCols(w, w).transpose();
    Tensor<T> p = he * lin.w.middleCols(2 * w, w).transpose();
    p.noalias() += x * lin.w.rightCols(f).transpose();
    p.rowwise() += lin.b.row(0);
    const int deg = g.m - 1;
    for (int i = 0; i < g.m; ++i)
        for (int k = 0; k < deg; ++k) {
            const int j = k < i ? k : k + 1;
            p.row(i * deg + k) += src.row(i) + dst.row(j);
        }
    return p;
}

// Backward of edge_pre: parameter gradients into glin, input gradients added
// to dhn and dhe.
template <class T>
void edge_pre_backward(const nn::Linear<T> &lin, const TourPairGraph &g, const Tensor<T> &hn, const Tensor<T> &he,
                       const Tensor<T> &x, const Tensor<T> &dp, nn::Linear<T> &glin, Tensor<T> &dhn, Tensor<T> &dhe) {
    const int w = static_cast<int>(hn.cols());
    const int f = static_cast<int>(x.cols());
    const int deg = g.m - 1;
    Tensor<T> dsrc = Tensor<T>::Zero(g.m, dp.cols());
    Tensor<T> ddst = Tensor<T>::Zero(g.m, dp.cols());
    for (int i = 0; i < g.m; ++i)
        for (int k = 0; k < deg; ++k) {
            const int j = k < i ? k : k + 1;
            dsrc.row(i) += dp.row(i * deg + k);
            ddst.row(j) += dp.row(i * deg + k);
        }
    glin.w.leftCols(w).noalias() += dsrc.transpose() * hn;
    glin.w.middleCols(w, w).noalias() += ddst.transpose() * hn;
    glin.w.middleCols(2 * w, w).noalias() += dp.transpose() * he;
    glin.w.rightCols(f).noalias() += dp.transpose() * x;
    glin.b.row(0) += dp.colwise().sum();
    dhn.noalias() += dsrc * lin.w.leftCols(w);
    dhn.noalias() += ddst * lin.w.middleCols(w, w);
    dhe.noalias() += dp * lin.w.middleCols(2 * w, w);
}

template <class T>
std::vector<T> softmax_blocks(const Tensor<T> &logits, int m) {
    std::vector<T> attn(logits.rows());
    const int deg = m - 1;
    std::vector<T> z(deg);
    for (int i = 0; i < m; ++i) {
        for (int k = 0; k < deg; ++k) z[k] = logits(i * deg + k, 0);
        const auto s = nn::softmax(z);
        for (int k = 0; k < deg; ++k) attn[i * deg + k] = s[k];
    }
    return attn;
}

} // namespace

template <class T>
Embedding<T> embed(const GnnModel<T> &model, const TourPairGraph &g, EmbedTape<T> *tape) {
    const int w = model.config.width;
    if (g.edge_types != model.config.edge_types) throw ConfigError("graph edge features do not match the model");
    nn::require_shape(g.edge_x, g.num_edges(), edge_feature_dim(model.config.edge_types), "edge features");
    const Tensor<T> nx = g.node_x.template cast<T>();
    const Tensor<T> ex = g.edge_x.template cast<T>();
    Embedding<T> cur{model.node_enc.forward(nx), model.edge_enc.forward(ex)};
    if (tape) {
        tape->node_x = nx;
        tape->edge_x = ex;
        tape->layers.assign(model.layers.size(), {});
    }
    const int deg = g.m - 1;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto &layer = model.layers[l];
        typename EmbedTape<T>::Layer local;
        auto &lt = tape ? tape->layers[l] : local;

        Tensor<T> he = layer.phi_e.forward_from_pre(edge_pre(layer.phi_e.layers[0], g, cur.node, cur.edge, ex), &lt.e);
        const Tensor<T> logits =
            layer.phi_w.forward_from_pre(edge_pre(layer.phi_w.layers[0], g, cur.node, cur.edge, ex), &lt.w);
        const auto attn = softmax_blocks(logits, g.m);

        Tensor<T> ni(g.m, 2 * w);
        ni.leftCols(w) = cur.node;
        ni.rightCols(w).setZero();
        for (int i = 0; i < g.m; ++i)
            for (int k = 0; k < deg; ++k) {
                const int e = i * deg + k;
                ni.row(i).tail(w) += attn[e] * he.row(e);
            }
        Tensor<T> hn = layer.phi_n.forward(ni, &lt.n);
        nn::require_finite(hn, "node embeddings");
        nn::require_finite(he, "edge embeddings");
        if (tape) {
            lt.node_in = cur.node;
            lt.edge_in = cur.edge;
            lt.attn = attn;
            lt.edge_out = he;
        }
        cur.node = std::move(hn);
        cur.edge = std::move(he);
    }
    return cur;
}

template <class T>
void embed_backward(const GnnModel<T> &model, const TourPairGraph &g, const EmbedTape<T> &tape,
                    const Embedding<T> &d_out, GnnModel<T> &grad) {
    const int w = model.config.width;
    const int deg = g.m - 1;
    Tensor<T> dn = d_out.node;
    Tensor<T> de = d_out.edge;
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        const auto &layer = model.layers[l];
        auto &gl = grad.layers[l];
        const auto &lt = tape.layers[l];

        const Tensor<T> dni = layer.phi_n.backward(lt.n, dn, gl.phi_n);
        Tensor<T> dnode = dni.leftCols(w);
        Tensor<T> dlogit(g.num_edges(), 1);
        for (int i = 0; i < g.m; ++i) {
            const auto dagg = dni.row(i).tail(w);
            T dot = 0;
            for (int k = 0; k < deg; ++k) {
                const int e = i * deg + k;
                de.row(e) += lt.attn[e] * dagg;
                dlogit(e, 0) = dagg.dot(lt.edge_out.row(e));
                dot += lt.attn[e] * dlogit(e, 0);
            }
            for (int k = 0; k < deg; ++k) {
                const int e = i * deg + k;
                dlogit(e, 0) = lt.attn[e] * (dlogit(e, 0) - dot);
            }
        }
        const Tensor<T> dpe = layer.phi_e.backward_to_pre(lt.e, de, gl.phi_e);
        const Tensor<T> dpw = layer.phi_w.backward_to_pre(lt.w, dlogit, gl.phi_w);
        Tensor<T> dprev_edge = Tensor<T>::Zero(g.num_edges(), w);
        edge_pre_backward(layer.phi_e.layers[0], g, lt.node_in, lt.edge_in, tape.edge_x, dpe, gl.phi_e.layers[0], dnode,
                          dprev_edge);
        edge_pre_backward(layer.phi_w.layers[0], g, lt.node_in, lt.edge_in, tape.edge_x, dpw, gl.phi_w.layers[0], dnode,
                          dprev_edge);
        dn = std::move(dnode);
        de = std::move(dprev_edge);
    }
    model.node_enc.backward(tape.node_x, dn, grad.node_enc);
    model.edge_enc.backward(tape.edge_x, de, grad.edge_enc);
}

template <class T>
std::vector<std::vector<T>> attention_weights(const GnnModel<T> &model, const TourPairGraph &g, int layer) {
    EmbedTape<T> tape;
    embed(model, g, &tape);
    const auto &attn = tape.layers.at(layer).attn;
    std::vector<std::vector<T>> out(g.m);
    for (int i = 0; i < g.m; ++i) out[i].assign(attn.begin() + i * (g.m - 1), attn.begin() + (i + 1) * (g.m - 1));
    return out;
}

// ---------------------------------------------------------------------------
// Head

namespace {

struct HeadIndex {
    int node[4];
    int edge[4]; // -1 for a self loop
};

HeadIndex head_index(const TourPairGraph &g, int a1, int a2) {
    if (a1 < 0 || a1 > g.len1() || a2 < 0 || a2 > g.len2()) throw MoveError("cut point out of range");
    const int u1 = g.seq1[a1], u1n = g.seq1[a1 + 1];
    const int u2 = g.seq2[a2], u2n = g.seq2[a2 + 1];
    auto e = [&](int i, int j) { return i == j ? -1 : g.edge(i, j); };
    return {{u1, u1n, u2, u2n}, {e(u1, u2n), e(u2, u1n), e(u1, u1n), e(u2, u2n)}};
}

} // namespace

template <class T>
Tensor<T> head_inputs(const TourPairGraph &g, const Embedding<T> &emb, std::span<const std::pair<int, int>> cuts) {
    const int w = static_cast<int>(emb.node.cols());
    Tensor<T> x = Tensor<T>::Zero(static_cast<Eigen::Index>(cuts.size()), 8 * w);
    for (std::size_t r = 0; r < cuts.size(); ++r) {
        const HeadIndex h = head_index(g, cuts[r].first, cuts[r].second);
        for (int k = 0; k < 4; ++k) x.row(r).segment(k * w, w) = emb.node.row(h.node[k]);
        for (int k = 0; k < 4; ++k)
            if (h.edge[k] >= 0) x.row(r).segment((4 + k) * w, w) = emb.edge.row(h.edge[k]);
    }
    return x;
}

template <class T>
T predict_head(const GnnModel<T> &model, const TourPairGraph &g, const Embedding<T> &emb, int a1, int a2) {
    const std::pair<int, int> cut{a1, a2};
    return model.head.forward(head_inputs<T>(g, emb, std::span(&cut, 1)))(0, 0);
}

template <class T>
double graph_loss(const GnnModel<T> &model, const TourPairGraph &g, std::span<const HeadSample> samples, double scale,
                  GnnModel<T> *grad, double delta) {
    if (samples.empty()) return 0.0;
    EmbedTape<T> tape;
    const Embedding<T> emb = embed(model, g, grad ? &tape : nullptr);
    std::vector<std::pair<int, int>> cuts;
    cuts.reserve(samples.size());
    for (const auto &s : samples) cuts.emplace_back(s.a1, s.a2);
    const Tensor<T> x = head_inputs<T>(g, emb, cuts);
    nn::MlpTape<T> htape;
    const Tensor<T> pred = model.head.forward(x, &htape);
    nn::require_finite(pred, "predictions");

    double loss = 0.0;
    Tensor<T> dpred(pred.rows(), 1);
    for (std::size_t r = 0; r < samples.size(); ++r) {
        const double p = static_cast<double>(pred(r, 0));
        loss += nn::huber(p, samples[r].y, delta);
        dpred(r, 0) = static_cast<T>(scale * nn::huber_grad(p, samples[r].y, delta));
    }
    if (!std::isfinite(loss)) throw NumericError("non-finite loss");
    if (!grad) return loss;

    const Tensor<T> dx = model.head.backward(htape, dpred, grad->head);
    const int w = model.config.width;
    Embedding<T> d{Tensor<T>::Zero(emb.node.rows(), w), Tensor<T>::Zero(emb.edge.rows(), w)};
    for (std::size_t r = 0; r < samples.size(); ++r) {
        const HeadIndex h = head_index(g, samples[r].a1, samples[r].a2);
        for (int k = 0; k < 4; ++k) d.node.row(h.node[k]) += dx.row(r).segment(k * w, w);
        for (int k = 0; k < 4; ++k)
            if (h.edge[k] >= 0) d.edge.row(h.edge[k]) += dx.row(r).segment((4 + k) * w, w);
    }
    embed_backward(model, g, tape, d, *grad);
    return loss;
}

// ---------------------------------------------------------------------------

DecrementMatrix LearnedPredictor::predict_all(const Tour &t1, const Tour &t2, const Problem &problem,
                                              const SearchRange &range) const {
    const TourPairGraph g = build_graph(t1, t2, problem, model_->config.edge_types);
    const Embedding<float> emb = embed(*model_, g);
    std::vector<std::pair<int, int>> cuts;
    for (int a1 = 0; a1 <= t1.size(); ++a1)
        for (int a2 = 0; a2 <= t2.size(); ++a2)
            if (range.has_admissible(a1, a2, t1.size(), t2.size())) cuts.emplace_back(a1, a2);
    DecrementMatrix out(t1.size() + 1, t2.size() + 1);
    if (cuts.empty()) return out;
    const Tensor<float> pred = model_->head.forward(head_inputs<float>(g, emb, cuts));
    for (std::size_t r = 0; r < cuts.size(); ++r) out.at(cuts[r].first, cuts[r].second) = pred(r, 0);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::filesystem::path blob_path(const std::filesystem::path &manifest) {
    auto p = manifest;
    p.replace_extension(".bin");
    return p;
}

} // namespace

void save_checkpoint(const GnnModel<float> &model, const std::filesystem::path &path) {
    static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");
    nlohmann::ordered_json man;
    man["format"] = "nce-gnn/1";
    man["arch"] = {{"layers", model.config.layers},
                   {"width", model.config.width},
                   {"mlp_depth", model.config.mlp_depth},
                   {"edge_types", model.config.edge_types},
                   {"node_features", kNodeFeatures},
                   {"edge_features", edge_feature_dim(model.config.edge_types)}};
    const auto blob = blob_path(path);
    man["blob"] = blob.filename().string();
    std::ofstream bin(blob, std::ios::binary);
    if (!bin) throw Error("io_error", "cannot write " + blob.string());
    std::size_t offset = 0;
    auto &tensors = man["tensors"] = nlohmann::ordered_json::array();
    const_cast<GnnModel<float> &>(model).visit([&](const std::string &name, Tensor<float> &t) {
        tensors.push_back({{"name", name},
                           {"shape", {t.rows(), t.cols()}},
                           {"dtype", "f32"},
                           {"offset", offset}});
        bin.write(reinterpret_cast<const char *>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        offset += t.size() * sizeof(float);
    });
    if (!bin) throw Error("io_error", "failed writing " + blob.string());
    std::ofstream out(path);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    out << man.dump(2) << "\n";
}

GnnModel<float> load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot read " + path.string());
    nlohmann::json man;
    try {
        man = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    GnnModel<float> model;
    try {
        if (man.at("format") != "nce-gnn/1") throw ParseError("unknown checkpoint format");
        const auto &a = man.at("arch");
        GnnConfig cfg;
        cfg.layers = a.at("layers");
        cfg.width = a.at("width");
        cfg.mlp_depth = a.at("mlp_depth");
        cfg.edge_types = a.at("edge_types");
        model = GnnModel<float>(cfg);

        auto blob = path.parent_path() / man.at("blob").get<std::string>();
        std::ifstream bin(blob, std::ios::binary);
        if (!bin) throw Error("io_error", "cannot read " + blob.string());
        std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

        std::unordered_map<std::string, const nlohmann::json *> byname;
        for (const auto &t : man.at("tensors")) byname[t.at("name").get<std::string>()] = &t;
        model.visit([&](const std::string &name, Tensor<float> &t) {
            auto it = byname.find(name);
            if (it == byname.end()) throw ParseError("checkpoint lacks tensor " + name);
            const auto &e = *it->second;
            if (e.at("dtype") != "f32") throw ParseError(name + ": unsupported dtype");
            const auto shape = e.at("shape").get<std::vector<long>>();
            if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols())
                throw ParseError(name + ": shape does not match the architecture");
            const std::size_t off = e.at("offset");
            const std::size_t n = t.size() * sizeof(float);
            if (off + n > bytes.size()) throw ParseError(name + ": blob too short");
            std::memcpy(t.data(), bytes.data() + off, n);
        });
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return model;
}

// ---------------------------------------------------------------------------

#define NCE_INSTANTIATE(T)                                                                                           \
    template struct GnnModel<T>;                                                                                     \
    template Embedding<T> embed(const GnnModel<T> &, const TourPairGraph &, EmbedTape<T> *);                         \
    template void embed_backward(const GnnModel<T> &, const TourPairGraph &, const EmbedTape<T> &,                   \
                                 const Embedding<T> &, GnnModel<T> &);                                               \
    template std::vector<std::vector<T>> attention_weights(const GnnModel<T> &, const TourPairGraph &, int);         \
    template Tensor<T> head_inputs(const TourPairGraph &, const Embedding<T> &, std::span<const std::pair<int, int>>); \
    template T predict_head(const GnnModel<T> &, const TourPairGraph &, const Embedding<T> &, int, int);             \
    template double graph_loss(const GnnModel<T> &, const TourPairGraph &, std::span<const HeadSample>, double,      \
                               GnnModel<T> *, double);

NCE_INSTANTIATE(float)
NCE_INSTANTIATE(double)
#undef NCE_INSTANTIATE

template GnnModel<double> GnnModel<float>::cast<double>() const;
template GnnModel<float> GnnModel<double>::cast<float>() const;
template GnnModel<float> GnnModel<float>::cast<float>() const;
template GnnModel<double> GnnModel<double>::cast<double>() const;

} // namespace nce
