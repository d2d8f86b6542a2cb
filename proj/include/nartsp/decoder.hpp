#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "nartsp/instances.hpp"
#include "nartsp/model.hpp"
#include "nartsp/ops.hpp"

namespace nartsp {

/// A decoded tour together with the probability of each decision. The tour
/// starts at the chosen starting node.
struct DecodeTrace {
    Tour tour;
    std::vector<double> step_probs;  // softmax(β)[π₁], then γ_i(π_i); the closing edge is implicit
    double log_prob = 0.0;
};

enum class FinalRule { highest_prob, shortest_tour };

struct BeamConfig {
    std::size_t width = 1;
    FinalRule final_rule = FinalRule::shortest_tour;
};

/// One completed beam hypothesis.
struct BeamCandidate {
    Tour tour;
    double log_prob = 0.0;
};

/// log softmax over `logits` restricted to entries with allowed[j] != 0.
/// Disallowed entries get -inf. Logits equal to the masked-logit sentinel
/// count as disallowed. Throws ContractError when nothing is allowed and
/// NumericError on a NaN logit.
std::vector<double> masked_log_softmax(std::span<const double> logits, std::span<const std::uint8_t> allowed);

/// softmax(β) over start nodes.
std::vector<double> start_distribution(const ModelOutput& out);

/// γ: softmax over row A[current] with visited nodes masked out.
std::vector<double> step_distribution(const ModelOutput& out, std::span<const std::uint8_t> visited, std::uint32_t current);

DecodeTrace greedy_decode(const ModelOutput& out);
/// Greedy continuation from a forced start node; its probability term is
/// still softmax(β)[start].
DecodeTrace greedy_decode_from(const ModelOutput& out, std::uint32_t start);

DecodeTrace sample_decode(const ModelOutput& out, std::mt19937_64& rng);
DecodeTrace sample_decode(const ModelOutput& out, std::uint64_t seed);

/// All completed hypotheses, best-scored first. The first step branches
/// over start nodes weighted by softmax(β).
std::vector<BeamCandidate> beam_search(const ModelOutput& out, std::size_t width);

/// `dm` is required when cfg.final_rule is shortest_tour.
Tour beam_decode(const ModelOutput& out, const BeamConfig& cfg, const DistanceMatrix* dm = nullptr);

/// Σ_t log P(a_t | s_t) for a tour read from its first element.
double tour_log_prob(const ModelOutput& out, const Tour& tour);

/// Recorded decisions of a TSP tour in the form the choice likelihood takes.
/// `sampled_start` selects whether π₁ came from β or was fixed.
ChoiceSequence tour_choices(const Tour& tour, bool sampled_start);

enum class CvrpPolicy { greedy, sample };

struct CvrpTrace {
    CvrpSolution solution;
    std::vector<std::uint32_t> sequence;  // node indices over depot(0) + customers(1..n), starting at 0
    double log_prob = 0.0;
    ChoiceSequence choices;
};

/// Decodes over n+1 nodes with the depot at index 0. The pointer is not
/// used; decoding always starts at the depot.
CvrpTrace cvrp_decode(const ModelOutput& out, const CvrpInstance& inst, CvrpPolicy policy, std::mt19937_64* rng = nullptr);

}  // namespace nartsp
