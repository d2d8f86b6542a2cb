#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "nartsp/model.hpp"

namespace nartsp {

enum class CriticMode { enhanced, original_two_module };
/// centered: (L(π) − L(b)) − ω. literal: the printed (L(π) − L(b)) + ω.
enum class AdvantageMode { centered, literal };

struct TrainConfig {
    ModelConfig model;
    std::size_t n = 50;
    std::size_t epochs = 1000;
    std::size_t steps = 2500;
    std::size_t batch = 64;
    std::size_t val_size = 10000;
    double lr = 1e-4;
    std::uint64_t seed = 1;
    std::uint64_t val_seed = 987654321;
    CriticMode critic = CriticMode::enhanced;
    AdvantageMode advantage = AdvantageMode::centered;
    Metric metric = Metric::euclid;
    /// Batch size used when greedy-evaluating the validation set.
    std::size_t val_batch = 250;

    void validate() const;

    static TrainConfig paper();
    /// TSP20, h=64, 3 modules, 4 heads, 80 epochs of 250 steps.
    static TrainConfig desk();

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Flat key=value view used by config files, manifests and checkpoints.
std::map<std::string, std::string> to_key_values(const TrainConfig& cfg);
/// Sets one key; throws ConfigError for unknown keys or malformed values.
void apply_key_value(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Parses "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> parse_key_value_text(std::string_view text);

std::string critic_mode_name(CriticMode m);
std::string advantage_mode_name(AdvantageMode m);

}  // namespace nartsp
