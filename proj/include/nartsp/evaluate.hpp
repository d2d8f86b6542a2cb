#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nartsp/baselines.hpp"
#include "nartsp/decoder.hpp"
#include "nartsp/model.hpp"

namespace nartsp {

enum class Policy { greedy, sample, beam };

Policy parse_policy(std::string_view name);
std::string_view policy_name(Policy p);
FinalRule parse_final_rule(std::string_view name);
std::string_view final_rule_name(FinalRule r);

struct SolveOptions {
    Policy policy = Policy::greedy;
    BeamConfig beam;
    std::uint64_t seed = 1;
};

/// Decodes one network output under the chosen policy.
Tour decode_output(const ModelOutput& out, const DistanceMatrix& dm, const SolveOptions& opt);

/// Eval-mode outputs for instances of possibly mixed sizes; consecutive
/// equal-size instances share a batch of at most `batch_size`.
template <typename T>
std::vector<ModelOutput> infer_all(Model<T>& model, std::span<const TspInstance> instances, std::size_t batch_size);

/// Best available comparison tour. Exact (brute force / Held–Karp) up to
/// `exact_limit` nodes, otherwise farthest insertion followed by 2-opt.
struct Reference {
    Tour tour;
    double length = 0.0;
    std::string label;  // "brute_force", "held_karp" or "fi+2opt"
    bool optimal = false;
};

Reference reference_solution(const DistanceMatrix& dm, std::size_t exact_limit = kHeldKarpDefaultMaxNodes);

/// mean / reference_mean − 1.
double optimality_gap(double mean, double reference_mean);

struct AllStartsStats {
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
};

/// Greedy decodes from every start node.
AllStartsStats all_starts(const ModelOutput& out, const DistanceMatrix& dm);

struct EvalOptions {
    SolveOptions solve;
    bool oracle = true;
    std::size_t exact_limit = kHeldKarpDefaultMaxNodes;
    bool all_starts = false;
    std::size_t batch_size = 64;
    /// Workers for the per-instance oracle and all-starts work. Results do
    /// not depend on the count; the network itself always runs on one thread.
    std::size_t threads = 1;
};

struct InstanceResult {
    std::string name;
    std::size_t n = 0;
    Tour tour;
    double length = 0.0;
    std::optional<double> reference_length;
    std::string reference_label;
    std::optional<AllStartsStats> starts;
};

struct EvalReport {
    std::vector<InstanceResult> instances;
    double mean_length = 0.0;
    std::optional<double> reference_mean;
    std::optional<double> gap;
    std::string reference_label;  // "optimal" when every reference was exact
    double s_time = 0.0;          // mean seconds per single-instance solve
    double t_time = 0.0;          // total seconds for the batched solve
    std::size_t t_batch = 0;
};

template <typename T>
EvalReport evaluate(Model<T>& model, std::span<const TspInstance> instances, const EvalOptions& opt);

/// One CSV row per instance plus a summary row.
std::string eval_report_csv(const EvalReport& r);

}  // namespace nartsp
