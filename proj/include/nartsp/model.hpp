#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nartsp/autodiff.hpp"
#include "nartsp/batch_norm.hpp"
#include "nartsp/instances.hpp"

namespace nartsp {

struct ModelConfig {
    std::size_t hidden = 128;
    std::size_t gnn_layers = 6;
    std::size_t fc_layers = 2;
    std::size_t heads = 8;
    double leaky_slope = 0.2;
    /// Sparse neighborhoods keep the ceil(n / divisor) nearest nodes...
    std::size_t neighbor_divisor = 5;
    /// ...but only once n exceeds this threshold; smaller graphs are dense.
    std::size_t neighbor_threshold = 25;
    /// When false the start is fixed to node 0 (pointer ablation).
    bool pointer_enabled = true;
    /// Per-node input features: 2 for TSP coordinates, 3 for CVRP (+ demand / capacity).
    std::size_t input_dim = 2;

    void validate() const;

    /// h=128, 6 GNN modules, 2 FC layers, 8 heads.
    static ModelConfig reference();
    /// h=64, 3 GNN modules, 2 FC layers, 4 heads.
    static ModelConfig desk();

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Network outputs for one instance: start-node logits and the n x n edge
/// score matrix.
struct ModelOutput {
    std::vector<double> beta;
    SquareMatrix scores;

    std::size_t size() const noexcept { return scores.size(); }
};

/// Dense model inputs for B instances of equal size n.
struct GraphBatch {
    std::size_t batch = 0;
    std::size_t nodes = 0;
    std::size_t features = 0;
    std::vector<double> node_features;  // [B, n, features]
    std::vector<double> distances;      // [B, n, n]
    Mask excluded;                      // [B, n, n, 1]; 1 where j is not a neighbor of i
};

/// n x n neighbor indicator (1 = neighbor). Self is never a neighbor.
Mask neighbor_mask(const DistanceMatrix& dm, const ModelConfig& cfg);

GraphBatch make_batch(std::span<const TspInstance> instances, const ModelConfig& cfg);
GraphBatch make_cvrp_batch(std::span<const CvrpInstance> instances, const ModelConfig& cfg);

template <typename T>
struct GnnLayer {
    // node update
    Parameter<T> W_vv;  // [2h, h]: projects [v_i || v_j]
    Parameter<T> W_ve;  // [h, h]: projects e_ij
    Parameter<T> attn;  // [2h]: per-head scoring vector over [node part || edge part]
    BatchNorm<T> node_bn;
    // edge update
    Parameter<T> W_e1, b_e1, W_e2, b_e2, W_ee, b_ee;
    BatchNorm<T> edge_bn;
    // starting symbol; the last layer keeps only W_q/W_k for the pointer
    Parameter<T> W_q, W_k, W_v;
    BatchNorm<T> symbol_bn;
    bool has_symbol = false;
    bool has_symbol_update = false;
};

template <typename T>
class Model {
public:
    struct Outputs {
        Var<T> beta;    // [B, n]
        Var<T> scores;  // [B, n, n]
    };

    Model() = default;
    Model(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return cfg_; }

    Outputs forward(const GraphBatch& batch, Mode mode);

    /// Eval-mode forward without graph recording, converted to doubles.
    std::vector<ModelOutput> infer(const GraphBatch& batch);

    // Stages, exposed for inspection and testing.
    std::pair<Var<T>, Var<T>> embed(const GraphBatch& batch);
    Var<T> node_update(std::size_t layer, const Var<T>& v, const Var<T>& e, const Mask& excluded, Mode mode,
                       Var<T>* attention = nullptr);
    Var<T> edge_update(std::size_t layer, const Var<T>& v, const Var<T>& e, Mode mode);
    Var<T> symbol_update(std::size_t layer, const Var<T>& vh, const Var<T>& v, Mode mode);
    Var<T> pointer(const Var<T>& vh_prev, const Var<T>& v);
    Var<T> edge_scores(const Var<T>& e);
    /// Starting symbol broadcast to [B, 1, h].
    Var<T> initial_symbol(std::size_t batch);
    /// Constant logits that force node 0 as the start.
    Var<T> fixed_start_logits(std::size_t batch, std::size_t n) const;

    GnnLayer<T>& layer(std::size_t l) { return layers_.at(l); }
    Parameter<T>& symbol() { return v_h_; }

    template <typename F>
    void for_each_parameter(F&& f);
    template <typename F>
    void for_each_parameter(F&& f) const;
    template <typename F>
    void for_each_batch_norm(F&& f);

    std::size_t parameter_count() const;
    void zero_grad();

    std::uint64_t forward_count() const noexcept { return forward_count_; }
    void reset_forward_count() noexcept { forward_count_ = 0; }

private:
    ModelConfig cfg_;
    Parameter<T> W_v_, b_v_, W_e_, b_e_;
    std::vector<GnnLayer<T>> layers_;
    Parameter<T> v_h_;
    std::vector<Parameter<T>> fc_w_, fc_b_;
    std::uint64_t forward_count_ = 0;
};

template <typename T>
template <typename F>
void Model<T>::for_each_parameter(F&& f) {
    f(W_v_);
    f(b_v_);
    f(W_e_);
    f(b_e_);
    for (auto& L : layers_) {
        f(L.W_vv);
        f(L.W_ve);
        f(L.attn);
        f(L.node_bn.gamma());
        f(L.node_bn.beta());
        f(L.W_e1);
        f(L.b_e1);
        f(L.W_e2);
        f(L.b_e2);
        f(L.W_ee);
        f(L.b_ee);
        f(L.edge_bn.gamma());
        f(L.edge_bn.beta());
        if (L.has_symbol) {
            f(L.W_q);
            f(L.W_k);
        }
        if (L.has_symbol_update) {
            f(L.W_v);
            f(L.symbol_bn.gamma());
            f(L.symbol_bn.beta());
        }
    }
    if (cfg_.pointer_enabled) f(v_h_);
    for (std::size_t i = 0; i < fc_w_.size(); ++i) {
        f(fc_w_[i]);
        f(fc_b_[i]);
    }
}

template <typename T>
template <typename F>
void Model<T>::for_each_parameter(F&& f) const {
    const_cast<Model*>(this)->for_each_parameter([&](Parameter<T>& p) { f(static_cast<const Parameter<T>&>(p)); });
}

template <typename T>
template <typename F>
void Model<T>::for_each_batch_norm(F&& f) {
    for (auto& L : layers_) {
        f(L.node_bn);
        f(L.edge_bn);
        if (L.has_symbol_update) f(L.symbol_bn);
    }
}

/// Per-instance double copies of batched network outputs.
template <typename T>
std::vector<ModelOutput> to_outputs(const typename Model<T>::Outputs& out);

/// Copies parameter values and batch-norm statistics from `src` into `dst`
/// (configs must match).
template <typename T>
void copy_state(const Model<T>& src, Model<T>& dst);

}  // namespace nartsp
