#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "nartsp/adam.hpp"
#include "nartsp/model.hpp"
#include "nartsp/train_config.hpp"

namespace nartsp {

using StoredArray = std::variant<Array<float>, Array<double>>;

/// Training snapshot. On disk:
///   "NARTSPCK" | u32 version | u64 n | n bytes of JSON metadata |
///   u64 count | count x (u32 len, name, u8 dtype 0=f32 1=f64, u32 rank,
///   rank x u64 dims, raw little-endian values)
/// Array names: "param/<name>", "bn/<prefix>/mean", "bn/<prefix>/var",
/// "adam/m/<name>", "adam/v/<name>".
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    TrainConfig config;
    std::uint64_t epoch = 0;  // completed epochs
    double best_validation = std::numeric_limits<double>::infinity();
    double elapsed_s = 0.0;
    std::string rng_state;
    bool has_adam = false;
    std::uint64_t adam_step = 0;
    std::vector<std::pair<std::string, StoredArray>> arrays;

    const StoredArray* find(const std::string& name) const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

template <typename T>
Checkpoint make_checkpoint(const TrainConfig& cfg, Model<T>& model, const AdamState<T>* adam);

/// Builds a model from the stored configuration and loads its state.
template <typename T>
Model<T> restore_model(const Checkpoint& ck);

template <typename T>
void restore_state(const Checkpoint& ck, Model<T>& model);

/// Empty state when the checkpoint carries no optimizer moments.
template <typename T>
AdamState<T> restore_adam(const Checkpoint& ck, Model<T>& model);

std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nartsp
