#include "nartsp/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <exception>
#include <limits>
#include <random>
#include <thread>

namespace nartsp {

Policy parse_policy(std::string_view name) {
    if (name == "greedy") return Policy::greedy;
    if (name == "sample") return Policy::sample;
    if (name == "beam") return Policy::beam;
    throw ConfigError("unknown policy '" + std::string(name) + "' (greedy, sample, beam)");
}

std::string_view policy_name(Policy p) {
    switch (p) {
        case Policy::greedy: return "greedy";
        case Policy::sample: return "sample";
        case Policy::beam: return "beam";
    }
    return "greedy";
}

FinalRule parse_final_rule(std::string_view name) {
    if (name == "shortest_tour" || name == "shortest") return FinalRule::shortest_tour;
    if (name == "highest_prob" || name == "prob") return FinalRule::highest_prob;
    throw ConfigError("unknown final rule '" + std::string(name) + "' (shortest_tour, highest_prob)");
}

std::string_view final_rule_name(FinalRule r) { return r == FinalRule::shortest_tour ? "shortest_tour" : "highest_prob"; }

Tour decode_output(const ModelOutput& out, const DistanceMatrix& dm, const SolveOptions& opt) {
    switch (opt.policy) {
        case Policy::greedy: return greedy_decode(out).tour;
        case Policy::sample: return sample_decode(out, opt.seed).tour;
        case Policy::beam: return beam_decode(out, opt.beam, &dm);
    }
    throw ContractError("unknown policy");
}

template <typename T>
std::vector<ModelOutput> infer_all(Model<T>& model, std::span<const TspInstance> instances, std::size_t batch_size) {
    if (batch_size == 0) throw ContractError("batch size must be positive");
    std::vector<ModelOutput> outs;
    outs.reserve(instances.size());
    std::size_t i = 0;
    while (i < instances.size()) {
        std::size_t j = i + 1;
        while (j < instances.size() && j - i < batch_size && instances[j].size() == instances[i].size()) ++j;
        auto part = model.infer(make_batch(instances.subspan(i, j - i), model.config()));
        for (auto& o : part) outs.push_back(std::move(o));
        i = j;
    }
    return outs;
}

Reference reference_solution(const DistanceMatrix& dm, std::size_t exact_limit) {
    Reference r;
    if (dm.size() <= exact_limit) {
        auto o = held_karp(dm, exact_limit);
        r.tour = std::move(o.tour);
        r.length = o.length;
        r.label = std::string(oracle_method_name(o.method));
        r.optimal = true;
    } else {
        r.tour = two_opt(farthest_insertion(dm), dm);
        r.length = tour_length(r.tour, dm);
        r.label = "fi+2opt";
    }
    return r;
}

double optimality_gap(double mean, double reference_mean) {
    if (!(reference_mean > 0.0)) throw ContractError("reference mean must be positive");
    return mean / reference_mean - 1.0;
}

AllStartsStats all_starts(const ModelOutput& out, const DistanceMatrix& dm) {
    AllStartsStats s{std::numeric_limits<double>::infinity(), 0.0, -std::numeric_limits<double>::infinity()};
    const std::size_t n = out.size();
    for (std::size_t k = 0; k < n; ++k) {
        const double len = tour_length(greedy_decode_from(out, static_cast<std::uint32_t>(k)).tour, dm);
        s.min = std::min(s.min, len);
        s.max = std::max(s.max, len);
        s.mean += len / static_cast<double>(n);
    }
    return s;
}

namespace {

/// Runs fn(i) for i in [0, count) on up to `threads` workers, striding so
/// the large-index (often larger) instances spread out.
template <typename F>
void parallel_for(std::size_t count, std::size_t threads, F fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += threads) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

template <typename T>
EvalReport evaluate(Model<T>& model, std::span<const TspInstance> instances, const EvalOptions& opt) {
    using clock = std::chrono::steady_clock;
    if (instances.empty()) throw ContractError("evaluate needs instances");
    EvalReport rep;
    std::vector<DistanceMatrix> dms;
    dms.reserve(instances.size());
    for (const auto& inst : instances) dms.push_back(distance_matrix(inst));

    // Batched ("T time") pass; these tours are the reported ones.
    auto t0 = clock::now();
    const auto outs = infer_all(model, instances, opt.batch_size);
    std::vector<Tour> tours(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        auto so = opt.solve;
        so.seed = opt.solve.seed + i;
        tours[i] = decode_output(outs[i], dms[i], so);
    }
    rep.t_time = std::chrono::duration<double>(clock::now() - t0).count();
    rep.t_batch = std::min(opt.batch_size, instances.size());

    // Single-instance ("S time") pass.
    double s_total = 0.0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        auto s0 = clock::now();
        const auto single = model.infer(make_batch(instances.subspan(i, 1), model.config()));
        auto so = opt.solve;
        so.seed = opt.solve.seed + i;
        (void)decode_output(single[0], dms[i], so);
        s_total += std::chrono::duration<double>(clock::now() - s0).count();
    }
    rep.s_time = s_total / static_cast<double>(instances.size());

    std::vector<Reference> refs(opt.oracle ? instances.size() : 0);
    std::vector<AllStartsStats> starts(opt.all_starts ? instances.size() : 0);
    parallel_for(instances.size(), opt.threads, [&](std::size_t i) {
        if (opt.oracle) refs[i] = reference_solution(dms[i], opt.exact_limit);
        if (opt.all_starts) starts[i] = all_starts(outs[i], dms[i]);
    });

    double ref_total = 0.0;
    bool all_exact = true;
    std::string label;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        InstanceResult r;
        r.name = instances[i].name;
        r.n = instances[i].size();
        r.tour = tours[i];
        r.length = tour_length(tours[i], dms[i]);
        rep.mean_length += r.length / static_cast<double>(instances.size());
        if (opt.oracle) {
            const auto& ref = refs[i];
            r.reference_length = ref.length;
            r.reference_label = ref.label;
            ref_total += ref.length;
            all_exact = all_exact && ref.optimal;
            if (label.empty()) label = ref.label;
            else if (label != ref.label) label = "mixed";
        }
        if (opt.all_starts) r.starts = starts[i];
        rep.instances.push_back(std::move(r));
    }
    if (opt.oracle) {
        rep.reference_mean = ref_total / static_cast<double>(instances.size());
        rep.gap = optimality_gap(rep.mean_length, *rep.reference_mean);
        rep.reference_label = all_exact ? "optimal" : label;
    }
    return rep;
}

namespace {

std::string num(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string eval_report_csv(const EvalReport& r) {
    std::string out = "name,n,length,reference_length,reference,gap,start_min,start_mean,start_max\n";
    double smin = 0, smean = 0, smax = 0;
    bool starts = false;
    for (const auto& i : r.instances) {
        out += csv_field(i.name) + "," + std::to_string(i.n) + "," + num(i.length) + ",";
        if (i.reference_length) out += num(*i.reference_length) + "," + i.reference_label + "," + num(optimality_gap(i.length, *i.reference_length));
        else out += ",,";
        out += ",";
        if (i.starts) {
            out += num(i.starts->min) + "," + num(i.starts->mean) + "," + num(i.starts->max);
            starts = true;
            smin += i.starts->min;
            smean += i.starts->mean;
            smax += i.starts->max;
        } else {
            out += ",,";
        }
        out += "\n";
    }
    const double k = static_cast<double>(r.instances.size());
    out += "summary," + std::to_string(r.instances.size()) + "," + num(r.mean_length) + ",";
    if (r.reference_mean) out += num(*r.reference_mean) + "," + r.reference_label + "," + num(*r.gap);
    else out += ",,";
    out += ",";
    if (starts) out += num(smin / k) + "," + num(smean / k) + "," + num(smax / k);
    else out += ",,";
    out += "\n";
    return out;
}

template std::vector<ModelOutput> infer_all<float>(Model<float>&, std::span<const TspInstance>, std::size_t);
template std::vector<ModelOutput> infer_all<double>(Model<double>&, std::span<const TspInstance>, std::size_t);
template EvalReport evaluate<float>(Model<float>&, std::span<const TspInstance>, const EvalOptions&);
template EvalReport evaluate<double>(Model<double>&, std::span<const TspInstance>, const EvalOptions&);

}  // namespace nartsp
