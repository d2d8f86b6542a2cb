#include "nartsp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nartsp/ops.hpp"

namespace nartsp {

void ModelConfig::validate() const {
    if (hidden == 0) throw ConfigError("hidden width must be positive");
    if (heads == 0 || hidden % heads != 0) throw ConfigError("hidden width must be divisible by heads");
    if (gnn_layers == 0) throw ConfigError("at least one GNN module is required");
    if (fc_layers == 0) throw ConfigError("at least one FC layer is required");
    if (neighbor_divisor == 0) throw ConfigError("neighbor_divisor must be positive");
    if (input_dim == 0) throw ConfigError("input_dim must be positive");
    if (!std::isfinite(leaky_slope)) throw ConfigError("leaky slope must be finite");
}

ModelConfig ModelConfig::reference() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.hidden = 64;
    c.gnn_layers = 3;
    c.fc_layers = 2;
    c.heads = 4;
    return c;
}

Mask neighbor_mask(const DistanceMatrix& dm, const ModelConfig& cfg) {
    const std::size_t n = dm.size();
    if (n < 2) throw ContractError("neighbor_mask needs n >= 2");
    Mask m({n, n}, 0);
    if (n <= cfg.neighbor_threshold) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) m[i * n + j] = i != j;
        return m;
    }
    const std::size_t k = std::min(n - 1, (n + cfg.neighbor_divisor - 1) / cfg.neighbor_divisor);
    std::vector<std::uint32_t> order(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t w = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) order[w++] = static_cast<std::uint32_t>(j);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](std::uint32_t a, std::uint32_t b) {
                              const double da = dm(i, a), db = dm(i, b);
                              return da < db || (da == db && a < b);
                          });
        for (std::size_t t = 0; t < k; ++t) m[i * n + order[t]] = 1;
    }
    return m;
}

namespace {

void fill_graph(GraphBatch& g, std::size_t b, const DistanceMatrix& dm, const ModelConfig& cfg) {
    const std::size_t n = g.nodes;
    const auto nb = neighbor_mask(dm, cfg);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            g.distances[(b * n + i) * n + j] = dm(i, j);
            g.excluded[(b * n + i) * n + j] = nb[i * n + j] ? 0 : 1;
        }
    }
}

GraphBatch empty_batch(std::size_t batch, std::size_t n, std::size_t features) {
    GraphBatch g;
    g.batch = batch;
    g.nodes = n;
    g.features = features;
    g.node_features.assign(batch * n * features, 0.0);
    g.distances.assign(batch * n * n, 0.0);
    g.excluded = Mask({batch, n, n, 1}, 0);
    return g;
}

}  // namespace

GraphBatch make_batch(std::span<const TspInstance> instances, const ModelConfig& cfg) {
    if (instances.empty()) throw ContractError("make_batch needs at least one instance");
    if (cfg.input_dim != 2) throw DimensionError("TSP inputs have 2 features; model expects " + std::to_string(cfg.input_dim));
    const std::size_t n = instances.front().size();
    auto g = empty_batch(instances.size(), n, 2);
    for (std::size_t b = 0; b < instances.size(); ++b) {
        const auto& inst = instances[b];
        if (inst.size() != n) throw DimensionError("batched instances must share the node count");
        if (!inst.has_coords()) throw ContractError("the model needs node coordinates (instance '" + inst.name + "')");
        for (std::size_t i = 0; i < n; ++i) {
            g.node_features[(b * n + i) * 2] = inst.coords[i][0];
            g.node_features[(b * n + i) * 2 + 1] = inst.coords[i][1];
        }
        fill_graph(g, b, distance_matrix(inst), cfg);
    }
    return g;
}

GraphBatch make_cvrp_batch(std::span<const CvrpInstance> instances, const ModelConfig& cfg) {
    if (instances.empty()) throw ContractError("make_cvrp_batch needs at least one instance");
    if (cfg.input_dim != 3) throw DimensionError("CVRP inputs have 3 features; model expects " + std::to_string(cfg.input_dim));
    const std::size_t n = instances.front().customers() + 1;
    auto g = empty_batch(instances.size(), n, 3);
    for (std::size_t b = 0; b < instances.size(); ++b) {
        const auto& inst = instances[b];
        inst.validate();
        if (inst.customers() + 1 != n) throw DimensionError("batched instances must share the node count");
        double* f = g.node_features.data() + b * n * 3;
        f[0] = inst.depot[0];
        f[1] = inst.depot[1];
        f[2] = 0.0;
        for (std::size_t i = 0; i < inst.customers(); ++i) {
            f[(i + 1) * 3] = inst.coords[i][0];
            f[(i + 1) * 3 + 1] = inst.coords[i][1];
            f[(i + 1) * 3 + 2] = inst.demands[i] / inst.capacity;
        }
        fill_graph(g, b, inst.distances(), cfg);
    }
    return g;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Parameter<T> weight(const std::string& name, std::size_t fan_in, Shape shape) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Array<T> a(std::move(shape));
        for (auto& x : a.values()) x = static_cast<T>(u(rng_));
        return Parameter<T>(name, std::move(a));
    }

    Parameter<T> zeros(const std::string& name, std::size_t n) { return Parameter<T>(name, Array<T>({n}, T{0})); }

private:
    std::mt19937_64 rng_;
};

template <typename T>
Var<T> as_vector(const Var<T>& x, std::size_t begin, std::size_t end) {
    const std::size_t len = x.value().size();
    return reshape(slice_rows(reshape(x, {len, 1}), begin, end), {end - begin});
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t h = cfg_.hidden;
    Initializer<T> init(seed);
    W_v_ = init.weight("input.W_v", cfg_.input_dim, {cfg_.input_dim, h});
    b_v_ = init.zeros("input.b_v", h);
    W_e_ = init.weight("input.W_e", 1, {1, h});
    b_e_ = init.zeros("input.b_e", h);
    layers_.resize(cfg_.gnn_layers);
    for (std::size_t l = 0; l < cfg_.gnn_layers; ++l) {
        auto& L = layers_[l];
        const std::string p = "gnn." + std::to_string(l) + ".";
        L.W_vv = init.weight(p + "node.W_vv", 2 * h, {2 * h, h});
        L.W_ve = init.weight(p + "node.W_ve", h, {h, h});
        L.attn = init.weight(p + "node.attn", 2 * h, {2 * h});
        L.node_bn = BatchNorm<T>(p + "node.bn", h);
        L.W_e1 = init.weight(p + "edge.W_e1", h, {h, h});
        L.b_e1 = init.zeros(p + "edge.b_e1", h);
        L.W_e2 = init.weight(p + "edge.W_e2", h, {h, h});
        L.b_e2 = init.zeros(p + "edge.b_e2", h);
        L.W_ee = init.weight(p + "edge.W_ee", h, {h, h});
        L.b_ee = init.zeros(p + "edge.b_ee", h);
        L.edge_bn = BatchNorm<T>(p + "edge.bn", h);
        L.has_symbol = cfg_.pointer_enabled;
        L.has_symbol_update = cfg_.pointer_enabled && l + 1 < cfg_.gnn_layers;
        if (L.has_symbol) {
            L.W_q = init.weight(p + "symbol.W_q", h, {h, h});
            L.W_k = init.weight(p + "symbol.W_k", h, {h, h});
        }
        if (L.has_symbol_update) {
            L.W_v = init.weight(p + "symbol.W_v", h, {h, h});
            L.symbol_bn = BatchNorm<T>(p + "symbol.bn", h);
        }
    }
    if (cfg_.pointer_enabled) v_h_ = init.weight("symbol.v_h", h, {h});
    for (std::size_t l = 0; l < cfg_.fc_layers; ++l) {
        const bool last = l + 1 == cfg_.fc_layers;
        const std::string p = "fc." + std::to_string(l) + ".";
        fc_w_.push_back(init.weight(p + "W", h, {h, last ? std::size_t{1} : h}));
        fc_b_.push_back(init.zeros(p + "b", last ? 1 : h));
    }
}

template <typename T>
std::pair<Var<T>, Var<T>> Model<T>::embed(const GraphBatch& g) {
    if (g.features != cfg_.input_dim) {
        throw DimensionError("node features have width " + std::to_string(g.features) + ", model expects " +
                             std::to_string(cfg_.input_dim));
    }
    const std::size_t B = g.batch, n = g.nodes;
    if (g.node_features.size() != B * n * g.features || g.distances.size() != B * n * n) {
        throw DimensionError("graph batch arrays do not match its dimensions");
    }
    Array<T> x({B, n, g.features});
    std::transform(g.node_features.begin(), g.node_features.end(), x.data(), [](double d) { return static_cast<T>(d); });
    Array<T> d({B, n, n, 1});
    std::transform(g.distances.begin(), g.distances.end(), d.data(), [](double v) { return static_cast<T>(v); });
    auto v0 = linear(Var<T>::constant(std::move(x)), W_v_.var(), b_v_.var());
    auto e0 = linear(Var<T>::constant(std::move(d)), W_e_.var(), b_e_.var());
    return {v0, e0};
}

template <typename T>
Var<T> Model<T>::node_update(std::size_t l, const Var<T>& v, const Var<T>& e, const Mask& excluded, Mode mode,
                             Var<T>* attention) {
    auto& L = layers_.at(l);
    const std::size_t h = cfg_.hidden, H = cfg_.heads;
    const T slope = static_cast<T>(cfg_.leaky_slope);
    auto a_node = as_vector(L.attn.var(), 0, h);
    auto a_edge = as_vector(L.attn.var(), h, 2 * h);
    // a·[W(v_i||v_j) || W e_ij] splits into per-node and per-edge terms.
    auto si = head_dot(linear(v, slice_rows(L.W_vv.var(), 0, h)), a_node, H);
    auto sj = head_dot(linear(v, slice_rows(L.W_vv.var(), h, 2 * h)), a_node, H);
    auto se = linear(e, head_dot(L.W_ve.var(), a_edge, H));
    auto lambda = leaky_relu(add(pair_add(si, sj), se), slope);
    auto alpha = softmax(masked_fill(lambda, excluded, masked_logit<T>()), 2);
    if (attention) *attention = alpha;
    return L.node_bn(add(head_aggregate(alpha, v), v), mode);
}

template <typename T>
Var<T> Model<T>::edge_update(std::size_t l, const Var<T>& v, const Var<T>& e, Mode mode) {
    auto& L = layers_.at(l);
    auto c = pair_add(linear(v, L.W_e1.var(), L.b_e1.var()), linear(v, L.W_e2.var(), L.b_e2.var()));
    auto gate = sigmoid(add(c, linear(e, L.W_ee.var(), L.b_ee.var())));
    return L.edge_bn(add(gate, e), mode);
}

template <typename T>
Var<T> Model<T>::symbol_update(std::size_t l, const Var<T>& vh, const Var<T>& v, Mode mode) {
    auto& L = layers_.at(l);
    if (!L.has_symbol_update) throw ContractError("layer " + std::to_string(l) + " has no symbol update");
    auto q = linear(vh, L.W_q.var());
    auto k = linear(v, L.W_k.var());
    auto val = linear(v, L.W_v.var());
    auto w = leaky_relu(head_scores(q, k, 1), static_cast<T>(cfg_.leaky_slope));
    return L.symbol_bn(add(head_aggregate(w, val), vh), mode);
}

template <typename T>
Var<T> Model<T>::pointer(const Var<T>& vh_prev, const Var<T>& v) {
    auto& L = layers_.back();
    if (!L.has_symbol) throw ContractError("pointer is disabled in this model");
    auto q = linear(vh_prev, L.W_q.var());
    auto k = linear(v, L.W_k.var());
    auto beta = leaky_relu(head_scores(q, k, 1), static_cast<T>(cfg_.leaky_slope));
    return reshape(beta, {v.shape()[0], v.shape()[1]});
}

template <typename T>
Var<T> Model<T>::edge_scores(const Var<T>& e) {
    Var<T> a = e;
    for (std::size_t l = 0; l < fc_w_.size(); ++l) {
        a = linear(a, fc_w_[l].var(), fc_b_[l].var());
        if (l + 1 < fc_w_.size()) a = relu(a);
    }
    const auto& s = e.shape();
    return reshape(a, {s[0], s[1], s[2]});
}

template <typename T>
Var<T> Model<T>::initial_symbol(std::size_t batch) {
    if (!cfg_.pointer_enabled) throw ContractError("pointer is disabled in this model");
    return tile_leading(reshape(v_h_.var(), {1, cfg_.hidden}), batch);
}

template <typename T>
Var<T> Model<T>::fixed_start_logits(std::size_t batch, std::size_t n) const {
    Array<T> a({batch, n}, masked_logit<T>());
    for (std::size_t b = 0; b < batch; ++b) a[b * n] = T{0};
    return Var<T>::constant(std::move(a));
}

template <typename T>
typename Model<T>::Outputs Model<T>::forward(const GraphBatch& g, Mode mode) {
    ++forward_count_;
    auto [v, e] = embed(g);
    Var<T> vh;
    if (cfg_.pointer_enabled) vh = initial_symbol(g.batch);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        v = node_update(l, v, e, g.excluded, mode);
        e = edge_update(l, v, e, mode);
        if (layers_[l].has_symbol_update) vh = symbol_update(l, vh, v, mode);
    }
    Outputs out;
    out.beta = cfg_.pointer_enabled ? pointer(vh, v) : fixed_start_logits(g.batch, g.nodes);
    out.scores = edge_scores(e);
    return out;
}

template <typename T>
std::vector<ModelOutput> to_outputs(const typename Model<T>::Outputs& out) {
    const auto& beta = out.beta.value();
    const auto& sc = out.scores.value();
    const std::size_t B = sc.dim(0), n = sc.dim(1);
    std::vector<ModelOutput> res(B);
    for (std::size_t b = 0; b < B; ++b) {
        auto& r = res[b];
        r.beta.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const T x = beta[b * n + i];
            r.beta[i] = x == masked_logit<T>() ? masked_logit<double>() : static_cast<double>(x);
        }
        std::vector<double> m(n * n);
        for (std::size_t i = 0; i < n * n; ++i) m[i] = static_cast<double>(sc[b * n * n + i]);
        r.scores = SquareMatrix(n, std::move(m));
    }
    return res;
}

template <typename T>
std::vector<ModelOutput> Model<T>::infer(const GraphBatch& g) {
    NoGradGuard guard;
    return to_outputs<T>(forward(g, Mode::eval));
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
    std::size_t total = 0;
    for_each_parameter([&](const Parameter<T>& p) { total += p.size(); });
    return total;
}

template <typename T>
void Model<T>::zero_grad() {
    for_each_parameter([](Parameter<T>& p) { p.zero_grad(); });
}

template <typename T>
void copy_state(const Model<T>& src, Model<T>& dst) {
    if (!(src.config() == dst.config())) throw ContractError("copy_state needs identical model configurations");
    std::vector<const Parameter<T>*> from;
    src.for_each_parameter([&](const Parameter<T>& p) { from.push_back(&p); });
    std::size_t i = 0;
    dst.for_each_parameter([&](Parameter<T>& p) { p.mutable_value() = from[i++]->value(); });
    std::vector<const BatchNorm<T>*> bn_from;
    const_cast<Model<T>&>(src).for_each_batch_norm([&](BatchNorm<T>& b) { bn_from.push_back(&b); });
    i = 0;
    dst.for_each_batch_norm([&](BatchNorm<T>& b) {
        b.running_mean() = bn_from[i]->running_mean();
        b.running_var() = bn_from[i]->running_var();
        ++i;
    });
}

template class Model<float>;
template class Model<double>;
template std::vector<ModelOutput> to_outputs<float>(const Model<float>::Outputs&);
template std::vector<ModelOutput> to_outputs<double>(const Model<double>::Outputs&);
template void copy_state<float>(const Model<float>&, Model<float>&);
template void copy_state<double>(const Model<double>&, Model<double>&);

}  // namespace nartsp
