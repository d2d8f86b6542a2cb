#include "nartsp/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "json.hpp"

#include "nartsp/io.hpp"

namespace nartsp {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'N', 'A', 'R', 'T', 'S', 'P', 'C', 'K'};

template <typename T>
const Array<T>& expect_array(const Checkpoint& ck, const std::string& name) {
    const auto* a = ck.find(name);
    if (!a) throw ParseError("checkpoint lacks array '" + name + "'");
    const auto* typed = std::get_if<Array<T>>(a);
    if (!typed) throw ParseError("checkpoint array '" + name + "' has an unexpected element type");
    return *typed;
}

template <typename T>
void assign_checked(Array<T>& dst, const Array<T>& src, const std::string& name) {
    if (dst.shape() != src.shape()) {
        throw ParseError("checkpoint array '" + name + "' has shape " + shape_string(src.shape()) + ", model expects " +
                         shape_string(dst.shape()));
    }
    dst = src;
}

class Writer {
public:
    template <typename U>
    void pod(U v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        out.append(p, sizeof(U));
    }
    void bytes(const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); }
    std::string out;
};

class Reader {
public:
    explicit Reader(std::string_view s) : s_(s) {}
    template <typename U>
    U pod() {
        U v;
        std::memcpy(&v, take(sizeof(U)), sizeof(U));
        return v;
    }
    const char* take(std::size_t n) {
        if (n > s_.size() - pos_) throw ParseError("checkpoint is truncated");
        const char* p = s_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == s_.size(); }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace

const StoredArray* Checkpoint::find(const std::string& name) const {
    for (const auto& [k, v] : arrays)
        if (k == name) return &v;
    return nullptr;
}

template <typename T>
Checkpoint make_checkpoint(const TrainConfig& cfg, Model<T>& model, const AdamState<T>* adam) {
    if (!(cfg.model == model.config())) throw ContractError("checkpoint config does not describe the model");
    Checkpoint ck;
    ck.config = cfg;
    std::size_t k = 0;
    model.for_each_parameter([&](Parameter<T>& p) {
        ck.arrays.emplace_back("param/" + p.name(), p.value());
        if (adam && !adam->m.empty()) {
            ck.arrays.emplace_back("adam/m/" + p.name(), adam->m.at(k));
            ck.arrays.emplace_back("adam/v/" + p.name(), adam->v.at(k));
        }
        ++k;
    });
    model.for_each_batch_norm([&](BatchNorm<T>& bn) {
        ck.arrays.emplace_back("bn/" + bn.prefix() + "/mean", bn.running_mean());
        ck.arrays.emplace_back("bn/" + bn.prefix() + "/var", bn.running_var());
    });
    if (adam) {
        ck.has_adam = true;
        ck.adam_step = adam->step;
    }
    return ck;
}

template <typename T>
void restore_state(const Checkpoint& ck, Model<T>& model) {
    if (!(ck.config.model == model.config())) throw ContractError("checkpoint was written for a different model configuration");
    model.for_each_parameter([&](Parameter<T>& p) {
        const std::string name = "param/" + p.name();
        assign_checked(p.mutable_value(), expect_array<T>(ck, name), name);
    });
    model.for_each_batch_norm([&](BatchNorm<T>& bn) {
        const std::string m = "bn/" + bn.prefix() + "/mean", v = "bn/" + bn.prefix() + "/var";
        assign_checked(bn.running_mean(), expect_array<T>(ck, m), m);
        assign_checked(bn.running_var(), expect_array<T>(ck, v), v);
    });
}

template <typename T>
Model<T> restore_model(const Checkpoint& ck) {
    Model<T> model(ck.config.model, 0);
    restore_state(ck, model);
    return model;
}

template <typename T>
AdamState<T> restore_adam(const Checkpoint& ck, Model<T>& model) {
    AdamState<T> st;
    if (!ck.has_adam) return st;
    st.step = ck.adam_step;
    if (st.step == 0) return st;
    model.for_each_parameter([&](Parameter<T>& p) {
        const std::string m = "adam/m/" + p.name(), v = "adam/v/" + p.name();
        st.m.push_back(expect_array<T>(ck, m));
        st.v.push_back(expect_array<T>(ck, v));
        if (st.m.back().shape() != p.shape() || st.v.back().shape() != p.shape()) {
            throw ParseError("optimizer moments for " + p.name() + " do not match the parameter shape");
        }
    });
    return st;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
    nlohmann::json meta;
    meta["config"] = to_key_values(ck.config);
    meta["epoch"] = ck.epoch;
    meta["best_validation"] = std::isfinite(ck.best_validation) ? nlohmann::json(ck.best_validation) : nlohmann::json();
    meta["elapsed_s"] = ck.elapsed_s;
    meta["rng_state"] = ck.rng_state;
    meta["has_adam"] = ck.has_adam;
    meta["adam_step"] = ck.adam_step;
    const std::string text = meta.dump();

    Writer w;
    w.bytes(kMagic, sizeof(kMagic));
    w.pod<std::uint32_t>(Checkpoint::kVersion);
    w.pod<std::uint64_t>(text.size());
    w.bytes(text.data(), text.size());
    w.pod<std::uint64_t>(ck.arrays.size());
    for (const auto& [name, arr] : ck.arrays) {
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        std::visit(
            [&](const auto& a) {
                using E = typename std::decay_t<decltype(a)>::value_type;
                w.pod<std::uint8_t>(std::is_same_v<E, double> ? 1 : 0);
                w.pod<std::uint32_t>(static_cast<std::uint32_t>(a.rank()));
                for (auto d : a.shape()) w.pod<std::uint64_t>(d);
                w.bytes(a.data(), a.size() * sizeof(E));
            },
            arr);
    }
    return std::move(w.out);
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) throw ParseError("not a checkpoint file");
    const auto version = r.pod<std::uint32_t>();
    if (version != Checkpoint::kVersion) {
        throw ParseError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(Checkpoint::kVersion) + ")");
    }
    Checkpoint ck;
    const auto len = r.pod<std::uint64_t>();
    nlohmann::json meta;
    try {
        const char* p = r.take(len);
        meta = nlohmann::json::parse(p, p + len);
        TrainConfig cfg;
        for (const auto& [k, v] : meta.at("config").items()) apply_key_value(cfg, k, v.get<std::string>());
        ck.config = cfg;
        ck.epoch = meta.at("epoch").get<std::uint64_t>();
        const auto& bv = meta.at("best_validation");
        ck.best_validation = bv.is_null() ? std::numeric_limits<double>::infinity() : bv.get<double>();
        ck.elapsed_s = meta.at("elapsed_s").get<double>();
        ck.rng_state = meta.at("rng_state").get<std::string>();
        ck.has_adam = meta.at("has_adam").get<bool>();
        ck.adam_step = meta.at("adam_step").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad checkpoint metadata: ") + e.what());
    } catch (const ConfigError& e) {
        throw ParseError(std::string("bad checkpoint config: ") + e.what());
    }
    const auto count = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto nlen = r.pod<std::uint32_t>();
        std::string name(r.take(nlen), nlen);
        const auto dtype = r.pod<std::uint8_t>();
        const auto rank = r.pod<std::uint32_t>();
        Shape shape(rank);
        for (auto& d : shape) d = r.pod<std::uint64_t>();
        const std::size_t size = shape_size(shape);
        if (dtype == 0) {
            Array<float> a(shape);
            std::memcpy(a.data(), r.take(size * sizeof(float)), size * sizeof(float));
            ck.arrays.emplace_back(std::move(name), std::move(a));
        } else if (dtype == 1) {
            Array<double> a(shape);
            std::memcpy(a.data(), r.take(size * sizeof(double)), size * sizeof(double));
            ck.arrays.emplace_back(std::move(name), std::move(a));
        } else {
            throw ParseError("unknown array dtype in checkpoint");
        }
    }
    if (!r.done()) throw ParseError("trailing bytes after checkpoint arrays");
    return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file_atomic(path, serialize_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

#define NARTSP_INSTANTIATE_CHECKPOINT(T)                                                        \
    template Checkpoint make_checkpoint<T>(const TrainConfig&, Model<T>&, const AdamState<T>*); \
    template Model<T> restore_model<T>(const Checkpoint&);                                      \
    template void restore_state<T>(const Checkpoint&, Model<T>&);                               \
    template AdamState<T> restore_adam<T>(const Checkpoint&, Model<T>&);

NARTSP_INSTANTIATE_CHECKPOINT(float)
NARTSP_INSTANTIATE_CHECKPOINT(double)

}  // namespace nartsp
