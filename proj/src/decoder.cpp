#include "nartsp/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nartsp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t argmax_allowed(const std::vector<double>& logp) {
    std::size_t best = logp.size();
    for (std::size_t j = 0; j < logp.size(); ++j) {
        if (logp[j] == kNegInf) continue;
        if (best == logp.size() || logp[j] > logp[best]) best = j;
    }
    return best;
}

std::size_t sample_index(const std::vector<double>& logp, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = u(rng);
    double acc = 0.0;
    std::size_t last = logp.size();
    for (std::size_t j = 0; j < logp.size(); ++j) {
        if (logp[j] == kNegInf) continue;
        const double p = std::exp(logp[j]);
        if (p <= 0.0) continue;
        last = j;
        acc += p;
        if (r < acc) return j;
    }
    // Rounding left acc slightly below 1.
    if (last == logp.size()) return argmax_allowed(logp);
    return last;
}

std::vector<std::uint8_t> all_allowed(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

std::vector<std::uint8_t> unvisited(std::span<const std::uint8_t> visited) {
    std::vector<std::uint8_t> a(visited.size());
    for (std::size_t j = 0; j < visited.size(); ++j) a[j] = visited[j] ? 0 : 1;
    return a;
}

void check_output(const ModelOutput& out) {
    const std::size_t n = out.size();
    if (n < 2) throw ContractError("decoding needs n >= 2");
    if (out.beta.size() != n) throw DimensionError("beta length does not match the score matrix");
}

// Shared by greedy and sampling: start choice, then n-1 row-wise choices.
template <typename Pick>
DecodeTrace decode(const ModelOutput& out, Pick&& pick, std::int64_t forced_start) {
    check_output(out);
    const std::size_t n = out.size();
    DecodeTrace tr;
    tr.tour.reserve(n);
    tr.step_probs.reserve(n);
    const auto lp0 = masked_log_softmax(out.beta, all_allowed(n));
    const std::size_t s = forced_start >= 0 ? static_cast<std::size_t>(forced_start) : pick(lp0);
    if (s >= n) throw ContractError("start node out of range");
    tr.tour.push_back(static_cast<std::uint32_t>(s));
    tr.log_prob = lp0[s];
    tr.step_probs.push_back(std::exp(lp0[s]));
    std::vector<std::uint8_t> visited(n, 0);
    visited[s] = 1;
    std::uint32_t cur = static_cast<std::uint32_t>(s);
    for (std::size_t t = 1; t < n; ++t) {
        const auto lp = masked_log_softmax(out.scores.row(cur), unvisited(visited));
        const std::size_t j = pick(lp);
        tr.tour.push_back(static_cast<std::uint32_t>(j));
        tr.log_prob += lp[j];
        tr.step_probs.push_back(std::exp(lp[j]));
        visited[j] = 1;
        cur = static_cast<std::uint32_t>(j);
    }
    return tr;
}

}  // namespace

std::vector<double> masked_log_softmax(std::span<const double> logits, std::span<const std::uint8_t> allowed) {
    if (logits.size() != allowed.size()) throw DimensionError("masked_log_softmax: mask length mismatch");
    const double sentinel = std::numeric_limits<double>::lowest();
    double m = kNegInf;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (std::isnan(logits[j])) throw NumericError("NaN logit in network output");
        if (allowed[j] && logits[j] != sentinel) m = std::max(m, logits[j]);
    }
    if (m == kNegInf) throw ContractError("no admissible choice left");
    double z = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (allowed[j] && logits[j] != sentinel) z += std::exp(logits[j] - m);
    }
    const double lz = std::log(z);
    std::vector<double> out(logits.size(), kNegInf);
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (allowed[j] && logits[j] != sentinel) out[j] = (logits[j] - m) - lz;
    }
    return out;
}

std::vector<double> start_distribution(const ModelOutput& out) {
    auto lp = masked_log_softmax(out.beta, all_allowed(out.beta.size()));
    for (auto& x : lp) x = std::exp(x);
    return lp;
}

std::vector<double> step_distribution(const ModelOutput& out, std::span<const std::uint8_t> visited, std::uint32_t current) {
    const std::size_t n = out.size();
    if (visited.size() != n) throw DimensionError("visited mask length must equal n");
    if (current >= n) throw ContractError("current node out of range");
    if (std::all_of(visited.begin(), visited.end(), [](std::uint8_t v) { return v != 0; })) {
        throw ContractError("every node is already visited");
    }
    auto lp = masked_log_softmax(out.scores.row(current), unvisited(visited));
    for (auto& x : lp) x = std::exp(x);
    return lp;
}

DecodeTrace greedy_decode(const ModelOutput& out) {
    return decode(out, [](const std::vector<double>& lp) { return argmax_allowed(lp); }, -1);
}

DecodeTrace greedy_decode_from(const ModelOutput& out, std::uint32_t start) {
    return decode(out, [](const std::vector<double>& lp) { return argmax_allowed(lp); }, start);
}

DecodeTrace sample_decode(const ModelOutput& out, std::mt19937_64& rng) {
    return decode(out, [&](const std::vector<double>& lp) { return sample_index(lp, rng); }, -1);
}

DecodeTrace sample_decode(const ModelOutput& out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_decode(out, rng);
}

namespace {

struct Expansion {
    double score;
    double step;
    std::uint32_t parent;
    std::uint32_t node;
};

// Higher score first; ties broken by the larger step probability, then the
// earlier parent, then the lower node index. With one parent this reduces
// to greedy's lowest-index argmax.
bool ranks_before(const Expansion& a, const Expansion& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.step != b.step) return a.step > b.step;
    if (a.parent != b.parent) return a.parent < b.parent;
    return a.node < b.node;
}

void keep_best(std::vector<Expansion>& cand, std::size_t width) {
    if (cand.size() > width) {
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(width), cand.end(), ranks_before);
        cand.resize(width);
    } else {
        std::sort(cand.begin(), cand.end(), ranks_before);
    }
}

}  // namespace

std::vector<BeamCandidate> beam_search(const ModelOutput& out, std::size_t width) {
    check_output(out);
    if (width == 0) throw ContractError("beam width must be at least 1");
    const std::size_t n = out.size();

    struct Hyp {
        Tour prefix;
        std::vector<std::uint8_t> visited;
        double score;
    };

    std::vector<Expansion> cand;
    const auto lp0 = masked_log_softmax(out.beta, all_allowed(n));
    for (std::size_t j = 0; j < n; ++j) {
        if (lp0[j] != kNegInf) cand.push_back({lp0[j], lp0[j], 0, static_cast<std::uint32_t>(j)});
    }
    keep_best(cand, width);
    std::vector<Hyp> beams;
    beams.reserve(cand.size());
    for (const auto& c : cand) {
        Hyp h{{c.node}, std::vector<std::uint8_t>(n, 0), c.score};
        h.prefix.reserve(n);
        h.visited[c.node] = 1;
        beams.push_back(std::move(h));
    }

    std::vector<std::uint8_t> allowed(n);
    for (std::size_t t = 1; t < n; ++t) {
        cand.clear();
        for (std::size_t p = 0; p < beams.size(); ++p) {
            const auto& h = beams[p];
            for (std::size_t j = 0; j < n; ++j) allowed[j] = h.visited[j] ? 0 : 1;
            const auto lp = masked_log_softmax(out.scores.row(h.prefix.back()), allowed);
            for (std::size_t j = 0; j < n; ++j) {
                if (lp[j] != kNegInf) cand.push_back({h.score + lp[j], lp[j], static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(j)});
            }
        }
        keep_best(cand, width);
        std::vector<Hyp> next;
        next.reserve(cand.size());
        for (const auto& c : cand) {
            Hyp h = beams[c.parent];
            h.prefix.push_back(c.node);
            h.visited[c.node] = 1;
            h.score = c.score;
            next.push_back(std::move(h));
        }
        beams = std::move(next);
    }

    std::vector<BeamCandidate> res;
    res.reserve(beams.size());
    for (auto& h : beams) res.push_back({std::move(h.prefix), h.score});
    return res;
}

Tour beam_decode(const ModelOutput& out, const BeamConfig& cfg, const DistanceMatrix* dm) {
    if (cfg.final_rule == FinalRule::shortest_tour) {
        if (!dm) throw ContractError("shortest_tour final rule needs the distance matrix");
        if (dm->size() != out.size()) throw DimensionError("distance matrix does not match the model output");
    }
    auto cands = beam_search(out, cfg.width);
    if (cfg.final_rule == FinalRule::highest_prob) return std::move(cands.front().tour);
    std::size_t best = 0;
    double best_len = tour_length(cands[0].tour, *dm);
    for (std::size_t i = 1; i < cands.size(); ++i) {
        const double len = tour_length(cands[i].tour, *dm);
        if (len < best_len) {
            best_len = len;
            best = i;
        }
    }
    return std::move(cands[best].tour);
}

double tour_log_prob(const ModelOutput& out, const Tour& tour) {
    check_output(out);
    const std::size_t n = out.size();
    validate_tour(tour, n);
    double total = masked_log_softmax(out.beta, all_allowed(n))[tour[0]];
    std::vector<std::uint8_t> allowed(n, 1);
    allowed[tour[0]] = 0;
    for (std::size_t t = 1; t < n; ++t) {
        total += masked_log_softmax(out.scores.row(tour[t - 1]), allowed)[tour[t]];
        allowed[tour[t]] = 0;
    }
    return total;
}

ChoiceSequence tour_choices(const Tour& tour, bool sampled_start) {
    const std::size_t n = tour.size();
    validate_tour(tour, n);
    ChoiceSequence seq;
    seq.start = sampled_start ? static_cast<std::int64_t>(tour[0]) : -1;
    std::vector<std::uint8_t> allowed(n, 1);
    allowed[tour[0]] = 0;
    // The final choice is forced (probability 1) and carries no gradient.
    for (std::size_t t = 1; t + 1 < n; ++t) {
        seq.steps.push_back({tour[t - 1], tour[t], allowed});
        allowed[tour[t]] = 0;
    }
    return seq;
}

CvrpTrace cvrp_decode(const ModelOutput& out, const CvrpInstance& inst, CvrpPolicy policy, std::mt19937_64* rng) {
    inst.validate();
    const std::size_t n = inst.customers() + 1;
    if (out.size() != n) throw DimensionError("model output must cover the depot and every customer");
    if (policy == CvrpPolicy::sample && !rng) throw ContractError("sampling needs a random generator");
    const double limit = inst.capacity * (1.0 + 1e-12);

    CvrpTrace tr;
    tr.choices.start = -1;
    tr.sequence.push_back(0);
    std::vector<std::uint8_t> done(n, 0);
    std::size_t remaining = n - 1;
    std::size_t since_depot = 0;
    double load = 0.0;
    std::uint32_t cur = 0;
    std::vector<std::uint32_t> route;
    std::vector<std::uint8_t> allowed(n);
    while (remaining > 0) {
        allowed[0] = since_depot > 0 ? 1 : 0;
        for (std::size_t j = 1; j < n; ++j) allowed[j] = !done[j] && load + inst.demands[j - 1] <= limit;
        if (std::none_of(allowed.begin(), allowed.end(), [](std::uint8_t a) { return a != 0; })) {
            throw ContractError("CVRP decoding reached a state with no feasible move");
        }
        const auto lp = masked_log_softmax(out.scores.row(cur), allowed);
        const std::size_t j = policy == CvrpPolicy::greedy ? argmax_allowed(lp) : sample_index(lp, *rng);
        tr.log_prob += lp[j];
        tr.choices.steps.push_back({cur, static_cast<std::uint32_t>(j), allowed});
        tr.sequence.push_back(static_cast<std::uint32_t>(j));
        if (j == 0) {
            tr.solution.routes.push_back(std::move(route));
            route.clear();
            load = 0.0;
            since_depot = 0;
        } else {
            done[j] = 1;
            --remaining;
            load += inst.demands[j - 1];
            ++since_depot;
            route.push_back(static_cast<std::uint32_t>(j - 1));
        }
        cur = static_cast<std::uint32_t>(j);
    }
    if (!route.empty()) tr.solution.routes.push_back(std::move(route));
    return tr;
}

}  // namespace nartsp
