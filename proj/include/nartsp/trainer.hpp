#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nartsp/adam.hpp"
#include "nartsp/checkpoint.hpp"
#include "nartsp/decoder.hpp"
#include "nartsp/model.hpp"
#include "nartsp/train_config.hpp"

namespace nartsp {

struct StepStats {
    double mean_sample = 0.0;  // mean L(π)
    double mean_greedy = 0.0;  // mean L(b(o))
    double omega = 0.0;        // batch mean of L(π) − L(b(o))
    double grad_norm = 0.0;
    double loss = 0.0;
};

struct ReinforceResult {
    StepStats stats;
    std::vector<double> advantages;
    std::vector<Tour> sampled;
    std::vector<Tour> greedy;
};

/// Advantages from rollout lengths: (L(π) − L(b)) ∓ ω with ω the batch mean
/// of L(π) − L(b). Also returns ω.
std::vector<double> advantages(std::span<const double> sampled, std::span<const double> greedy, AdvantageMode mode,
                               double* omega = nullptr);

/// Surrogate Σ_i adv_i · log P(π_i) / B for recorded decisions; its gradient
/// is the REINFORCE estimate. The advantages are constants.
template <typename T>
Var<T> reinforce_loss(const typename Model<T>::Outputs& out, const std::vector<ChoiceSequence>& choices,
                      std::span<const double> adv);

/// One REINFORCE gradient evaluation, accumulated into the model's parameter
/// gradients (which the caller zeroes). With `baseline` set, b(o) comes from
/// a greedy rollout of that frozen model instead of the same forward pass.
template <typename T>
ReinforceResult reinforce_gradient(Model<T>& model, std::span<const TspInstance> batch, AdvantageMode mode,
                                   std::mt19937_64& rng, Model<T>* baseline = nullptr);

template <typename T>
double gradient_norm(Model<T>& model);

/// Uniform instances drawn from `rng` (training data on the fly).
std::vector<TspInstance> random_instances(std::size_t n, std::size_t count, std::mt19937_64& rng, Metric metric);

/// Greedy mean tour length, evaluated in batches of `batch_size`.
template <typename T>
double greedy_mean_length(Model<T>& model, std::span<const TspInstance> instances, std::size_t batch_size);

struct TrainOptions {
    std::string out_dir = "run";
    /// Called after every step and every epoch; return false to stop early.
    std::function<bool(std::uint64_t epoch, std::uint64_t step, const StepStats&)> on_step;
    std::function<void(std::uint64_t epoch, double validation, bool improved)> on_epoch;
    bool quiet = true;
};

struct TrainSummary {
    std::uint64_t epochs_run = 0;
    double initial_validation = 0.0;
    double best_validation = 0.0;
    std::vector<double> validation_history;
    std::vector<double> saved_validations;  // L_tmp at each best-checkpoint save
    double elapsed_s = 0.0;
    std::string best_path;
    std::string last_path;
};

/// Owns the model, optimizer and RNG for one training run.
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);
    /// Resumes from a checkpoint's model, optimizer, RNG and epoch counter.
    explicit Trainer(const Checkpoint& ck);
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    const TrainConfig& config() const noexcept { return cfg_; }
    Model<float>& model() noexcept { return model_; }
    Model<float>* baseline() noexcept { return baseline_.get(); }
    AdamState<float>& adam() noexcept { return adam_; }
    std::mt19937_64& rng() noexcept { return rng_; }
    std::uint64_t epoch() const noexcept { return epoch_; }
    double best_validation() const noexcept { return best_; }
    const std::vector<TspInstance>& validation_set();

    /// Draws a fresh batch and computes its gradient without updating.
    ReinforceResult compute_gradient();
    /// compute_gradient followed by an Adam update.
    StepStats train_step();
    double validate();

    Checkpoint checkpoint();

    /// Runs the remaining epochs of Algorithm-1 style training, writing
    /// best.ckpt, last.ckpt, train_log.csv and validation.csv to out_dir.
    TrainSummary run(const TrainOptions& opt);

    /// Total model forwards (predictor plus frozen baseline).
    std::uint64_t forward_count() const;

private:
    TrainConfig cfg_;
    Model<float> model_;
    std::unique_ptr<Model<float>> baseline_;
    AdamState<float> adam_;
    std::vector<Parameter<float>*> params_;
    std::mt19937_64 rng_;
    std::uint64_t epoch_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
    double elapsed_ = 0.0;
    std::vector<TspInstance> val_;
};

inline constexpr const char* kTrainLogHeader = "epoch,step,mean_L_sample,mean_L_greedy,omega,grad_norm,elapsed_s";

}  // namespace nartsp
