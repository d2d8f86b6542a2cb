#include "nartsp/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "nartsp/io.hpp"
#include "nartsp/ops.hpp"

namespace nartsp {

std::vector<double> advantages(std::span<const double> sampled, std::span<const double> greedy, AdvantageMode mode,
                               double* omega) {
    if (sampled.size() != greedy.size() || sampled.empty()) throw ContractError("advantages need equal, nonempty batches");
    std::vector<double> adv(sampled.size());
    double w = 0.0;
    for (std::size_t i = 0; i < adv.size(); ++i) {
        adv[i] = sampled[i] - greedy[i];
        w += adv[i];
    }
    w /= static_cast<double>(adv.size());
    for (auto& a : adv) a = mode == AdvantageMode::centered ? a - w : a + w;
    if (omega) *omega = w;
    return adv;
}

template <typename T>
Var<T> reinforce_loss(const typename Model<T>::Outputs& out, const std::vector<ChoiceSequence>& choices,
                      std::span<const double> adv) {
    const std::size_t B = choices.size();
    if (adv.size() != B) throw DimensionError("one advantage per recorded tour is required");
    auto logp = choice_log_prob(out.beta, out.scores, choices);
    Array<T> w({B});
    for (std::size_t i = 0; i < B; ++i) w[i] = static_cast<T>(adv[i] / static_cast<double>(B));
    return weighted_sum(logp, w);
}

template <typename T>
double gradient_norm(Model<T>& model) {
    double s = 0.0;
    model.for_each_parameter([&](Parameter<T>& p) {
        for (T g : p.grad().values()) s += static_cast<double>(g) * static_cast<double>(g);
    });
    return std::sqrt(s);
}

template <typename T>
ReinforceResult reinforce_gradient(Model<T>& model, std::span<const TspInstance> batch, AdvantageMode mode,
                                   std::mt19937_64& rng, Model<T>* baseline) {
    const auto g = make_batch(batch, model.config());
    const auto out = model.forward(g, Mode::train);
    const auto outs = to_outputs<T>(out);
    const std::size_t B = batch.size();
    const bool sampled_start = model.config().pointer_enabled;

    ReinforceResult r;
    std::vector<double> ls(B), lg(B);
    std::vector<ChoiceSequence> choices(B);
    std::vector<ModelOutput> base_outs;
    if (baseline) base_outs = baseline->infer(g);
    for (std::size_t i = 0; i < B; ++i) {
        const auto dm = distance_matrix(batch[i]);
        auto pi = sample_decode(outs[i], rng).tour;
        auto b = greedy_decode(baseline ? base_outs[i] : outs[i]).tour;
        ls[i] = tour_length(pi, dm);
        lg[i] = tour_length(b, dm);
        choices[i] = tour_choices(pi, sampled_start);
        r.sampled.push_back(std::move(pi));
        r.greedy.push_back(std::move(b));
    }
    r.advantages = advantages(ls, lg, mode, &r.stats.omega);
    auto loss = reinforce_loss<T>(out, choices, r.advantages);
    backward(loss);
    r.stats.loss = static_cast<double>(loss.value().item());
    for (std::size_t i = 0; i < B; ++i) {
        r.stats.mean_sample += ls[i] / static_cast<double>(B);
        r.stats.mean_greedy += lg[i] / static_cast<double>(B);
    }
    r.stats.grad_norm = gradient_norm(model);
    return r;
}

std::vector<TspInstance> random_instances(std::size_t n, std::size_t count, std::mt19937_64& rng, Metric metric) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<TspInstance> out(count);
    for (auto& inst : out) {
        inst.metric = metric;
        inst.coords.resize(n);
        for (auto& p : inst.coords) {
            p[0] = u(rng);
            p[1] = u(rng);
        }
    }
    return out;
}

template <typename T>
double greedy_mean_length(Model<T>& model, std::span<const TspInstance> instances, std::size_t batch_size) {
    if (instances.empty()) throw ContractError("greedy_mean_length needs instances");
    double total = 0.0;
    for (std::size_t start = 0; start < instances.size(); start += batch_size) {
        const auto chunk = instances.subspan(start, std::min(batch_size, instances.size() - start));
        const auto outs = model.infer(make_batch(chunk, model.config()));
        for (std::size_t i = 0; i < chunk.size(); ++i) total += tour_length(greedy_decode(outs[i]).tour, distance_matrix(chunk[i]));
    }
    return total / static_cast<double>(instances.size());
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kRngSalt = 0x9E3779B97F4A7C15ULL;

std::string rng_to_string(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
    std::mt19937_64 rng;
    std::istringstream is(s);
    is >> rng;
    if (!is) throw ParseError("checkpoint RNG state is corrupt");
    return rng;
}

std::string num(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

Checkpoint sub_checkpoint(const Checkpoint& ck, const std::string& prefix) {
    Checkpoint out;
    out.config = ck.config;
    for (const auto& [name, arr] : ck.arrays) {
        if (name.rfind(prefix, 0) == 0) out.arrays.emplace_back(name.substr(prefix.size()), arr);
    }
    return out;
}

const char* kBaselinePrefix = "baseline/";

}  // namespace

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg), model_(cfg.model, cfg.seed), rng_(cfg.seed ^ kRngSalt) {
    cfg_.validate();
    if (cfg_.critic == CriticMode::original_two_module) {
        baseline_ = std::make_unique<Model<float>>(model_);
        baseline_->reset_forward_count();
    }
    model_.for_each_parameter([&](Parameter<float>& p) { params_.push_back(&p); });
}

Trainer::Trainer(const Checkpoint& ck)
    : cfg_(ck.config), model_(restore_model<float>(ck)), rng_(rng_from_string(ck.rng_state)) {
    cfg_.validate();
    adam_ = restore_adam<float>(ck, model_);
    epoch_ = ck.epoch;
    best_ = ck.best_validation;
    elapsed_ = ck.elapsed_s;
    if (cfg_.critic == CriticMode::original_two_module) {
        const auto sub = sub_checkpoint(ck, kBaselinePrefix);
        baseline_ = std::make_unique<Model<float>>(sub.arrays.empty() ? model_ : restore_model<float>(sub));
        baseline_->reset_forward_count();
    }
    model_.for_each_parameter([&](Parameter<float>& p) { params_.push_back(&p); });
}

const std::vector<TspInstance>& Trainer::validation_set() {
    if (val_.empty()) val_ = generate_uniform_batch(cfg_.n, cfg_.val_size, cfg_.val_seed, cfg_.metric);
    return val_;
}

ReinforceResult Trainer::compute_gradient() {
    const auto batch = random_instances(cfg_.n, cfg_.batch, rng_, cfg_.metric);
    model_.zero_grad();
    auto r = reinforce_gradient<float>(model_, batch, cfg_.advantage, rng_, baseline_.get());
    if (!std::isfinite(r.stats.grad_norm) || !std::isfinite(r.stats.loss)) {
        std::ostringstream os;
        os << "non-finite gradient at epoch " << epoch_ << " (loss " << r.stats.loss << ", grad norm " << r.stats.grad_norm
           << ", mean sampled length " << r.stats.mean_sample << ")";
        throw NumericError(os.str());
    }
    return r;
}

StepStats Trainer::train_step() {
    auto r = compute_gradient();
    adam_step(params_, adam_, cfg_.lr);
    return r.stats;
}

double Trainer::validate() { return greedy_mean_length(model_, validation_set(), cfg_.val_batch); }

Checkpoint Trainer::checkpoint() {
    auto ck = make_checkpoint(cfg_, model_, &adam_);
    ck.epoch = epoch_;
    ck.best_validation = best_;
    ck.elapsed_s = elapsed_;
    ck.rng_state = rng_to_string(rng_);
    if (baseline_) {
        auto b = make_checkpoint<float>(cfg_, *baseline_, nullptr);
        for (auto& [name, arr] : b.arrays) ck.arrays.emplace_back(kBaselinePrefix + name, std::move(arr));
    }
    return ck;
}

std::uint64_t Trainer::forward_count() const {
    return model_.forward_count() + (baseline_ ? baseline_->forward_count() : 0);
}

TrainSummary Trainer::run(const TrainOptions& opt) {
    namespace fs = std::filesystem;
    using clock = std::chrono::steady_clock;
    fs::create_directories(opt.out_dir);
    const std::string log_path = (fs::path(opt.out_dir) / "train_log.csv").string();
    const std::string val_path = (fs::path(opt.out_dir) / "validation.csv").string();
    TrainSummary sum;
    sum.best_path = (fs::path(opt.out_dir) / "best.ckpt").string();
    sum.last_path = (fs::path(opt.out_dir) / "last.ckpt").string();

    std::string log = std::string(kTrainLogHeader) + "\n";
    std::string vlog = "epoch,validation_mean,best,improved,elapsed_s\n";
    if (epoch_ > 0) {
        if (fs::exists(log_path)) log = read_file(log_path);
        if (fs::exists(val_path)) vlog = read_file(val_path);
    }
    auto started = clock::now();
    const double elapsed_before = elapsed_;
    auto elapsed_now = [&] { return elapsed_before + std::chrono::duration<double>(clock::now() - started).count(); };

    if (epoch_ == 0) {
        sum.initial_validation = validate();
        vlog += "0," + num(sum.initial_validation) + ",," + "0," + num(elapsed_now()) + "\n";
        write_file_atomic(val_path, vlog);
        if (!opt.quiet) std::cerr << "epoch 0 validation " << sum.initial_validation << "\n";
    }

    bool stop = false;
    while (epoch_ < cfg_.epochs && !stop) {
        for (std::size_t s = 0; s < cfg_.steps; ++s) {
            const auto st = train_step();
            const std::uint64_t global = epoch_ * cfg_.steps + s + 1;
            log += std::to_string(epoch_ + 1) + "," + std::to_string(global) + "," + num(st.mean_sample) + "," +
                   num(st.mean_greedy) + "," + num(st.omega) + "," + num(st.grad_norm) + "," + num(elapsed_now()) + "\n";
            if (opt.on_step && !opt.on_step(epoch_ + 1, global, st)) {
                stop = true;
                break;
            }
        }
        if (stop) break;
        ++epoch_;
        const double v = validate();
        const bool improved = v < best_;
        sum.validation_history.push_back(v);
        elapsed_ = elapsed_now();
        if (improved) {
            best_ = v;
            if (baseline_) {
                copy_state(model_, *baseline_);
            }
            save_checkpoint(sum.best_path, checkpoint());
            sum.saved_validations.push_back(v);
        }
        save_checkpoint(sum.last_path, checkpoint());
        vlog += std::to_string(epoch_) + "," + num(v) + "," + num(best_) + "," + (improved ? "1" : "0") + "," + num(elapsed_) + "\n";
        write_file_atomic(log_path, log);
        write_file_atomic(val_path, vlog);
        ++sum.epochs_run;
        if (!opt.quiet) {
            std::cerr << "epoch " << epoch_ << "/" << cfg_.epochs << " validation " << v << (improved ? " (saved)" : "")
                      << " elapsed " << elapsed_ << "s\n";
        }
        if (opt.on_epoch) opt.on_epoch(epoch_, v, improved);
    }
    write_file_atomic(log_path, log);
    elapsed_ = elapsed_now();
    sum.best_validation = best_;
    sum.elapsed_s = elapsed_;
    return sum;
}

#define NARTSP_INSTANTIATE_TRAINER(T)                                                                                  \
    template Var<T> reinforce_loss<T>(const Model<T>::Outputs&, const std::vector<ChoiceSequence>&,                   \
                                      std::span<const double>);                                                        \
    template ReinforceResult reinforce_gradient<T>(Model<T>&, std::span<const TspInstance>, AdvantageMode,            \
                                                   std::mt19937_64&, Model<T>*);                                       \
    template double gradient_norm<T>(Model<T>&);                                                                       \
    template double greedy_mean_length<T>(Model<T>&, std::span<const TspInstance>, std::size_t);

NARTSP_INSTANTIATE_TRAINER(float)
NARTSP_INSTANTIATE_TRAINER(double)

}  // namespace nartsp
