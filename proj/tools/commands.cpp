#include "commands.hpp"

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "nartsp/bench.hpp"
#include "nartsp/evaluate.hpp"
#include "nartsp/io.hpp"
#include "nartsp/svg.hpp"
#include "nartsp/trainer.hpp"

namespace nartsp::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::string join(const std::vector<std::uint32_t>& xs, char sep = ' ') {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) s += sep;
        s += std::to_string(xs[i]);
    }
    return s;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") std::cout << text;
    else write_file_atomic(path, text);
}

struct LoadedModel {
    Model<float> model;
    std::optional<Metric> trained_metric;
    std::string source;
};

LoadedModel load_model(const ModelSource& src, std::size_t input_dim) {
    if (!src.checkpoint.empty() && src.init_seed) throw ConfigError("use either --checkpoint or --init-seed");
    if (src.checkpoint.empty()) {
        if (!src.init_seed) throw ConfigError("a --checkpoint is required (or --init-seed for an untrained model)");
        auto cfg = ModelConfig::desk();
        cfg.input_dim = input_dim;
        return {Model<float>(cfg, *src.init_seed), std::nullopt, "init-seed " + std::to_string(*src.init_seed)};
    }
    const auto ck = load_checkpoint(src.checkpoint);
    if (ck.config.model.input_dim != input_dim) {
        throw ConfigError("checkpoint model takes " + std::to_string(ck.config.model.input_dim) +
                          " input features; these instances need " + std::to_string(input_dim));
    }
    return {restore_model<float>(ck), ck.config.metric, src.checkpoint};
}

std::vector<InstanceRecord> read_instances(const std::string& path, const std::string& format) {
    std::string fmt = format;
    if (fmt == "auto") {
        const auto ext = fs::path(path).extension().string();
        if (ext == ".tsp") fmt = "tsplib";
        else if (ext == ".jsonl" || ext == ".json") fmt = "jsonl";
        else {
            const auto text = read_file(path);
            const auto p = text.find_first_not_of(" \t\r\n");
            fmt = p != std::string::npos && text[p] == '{' ? "jsonl" : "tsplib";
        }
    }
    if (fmt == "tsplib") return {InstanceRecord{load_tsplib(path), std::nullopt}};
    if (fmt == "jsonl") {
        auto recs = read_jsonl(path);
        if (recs.empty()) throw ConfigError("no instances in " + path);
        return recs;
    }
    throw ConfigError("unknown input format '" + format + "' (auto, tsplib, jsonl)");
}

std::vector<TspInstance> tsp_only(const std::vector<InstanceRecord>& recs) {
    std::vector<TspInstance> out;
    for (const auto& r : recs) {
        if (!r.tsp) throw ConfigError("this command handles TSP instances only");
        if (!r.tsp->has_coords()) throw ConfigError("instance '" + r.tsp->name + "' has no node coordinates");
        out.push_back(*r.tsp);
    }
    return out;
}

SolveOptions solve_options(const std::string& policy, std::size_t width, const std::string& rule, std::uint64_t seed) {
    SolveOptions o;
    o.policy = parse_policy(policy);
    if (width == 0) throw ConfigError("--beam-width must be positive");
    o.beam = {width, parse_final_rule(rule)};
    o.seed = seed;
    return o;
}

/// "out.svg" -> "out-3.svg" when several instances are rendered.
std::string indexed_path(const std::string& path, std::size_t i, std::size_t count) {
    if (count == 1) return path;
    fs::path p(path);
    return (p.parent_path() / (p.stem().string() + "-" + std::to_string(i) + p.extension().string())).string();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void write_manifest(const std::string& path, const json& manifest, bool is_dir) {
    const auto target = is_dir ? (fs::path(path) / "manifest.json").string() : path + ".manifest.json";
    write_file_atomic(target, manifest.dump(2) + "\n");
}

int cmd_generate(const GenerateArgs& a, const json& manifest) {
    if (a.n == 0 || a.count == 0) throw ConfigError("--n and --count must be positive");
    std::string text;
    if (a.cvrp) {
        std::mt19937_64 seeder(a.seed);
        for (std::size_t i = 0; i < a.count; ++i) {
            auto inst = generate_cvrp(a.n, seeder());
            inst.name = "cvrp" + std::to_string(a.n) + "_" + std::to_string(a.seed) + "_" + std::to_string(i);
            text += to_json_line(inst) + "\n";
        }
    } else {
        for (const auto& inst : generate_uniform_batch(a.n, a.count, a.seed, parse_metric(a.metric)))
            text += to_json_line(inst) + "\n";
    }
    write_output(a.out, text);
    if (!a.out.empty() && a.out != "-") {
        write_manifest(a.out, manifest);
        std::cerr << "wrote " << a.count << " instances to " << a.out << "\n";
    }
    return 0;
}

int cmd_train(const TrainArgs& a, json manifest) {
    auto apply_overrides = [&](TrainConfig& cfg) {
        if (!a.config.empty())
            for (const auto& [k, v] : parse_key_value_text(read_file(a.config))) apply_key_value(cfg, k, v);
        for (const auto& kv : a.set) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            apply_key_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (a.epochs) cfg.epochs = *a.epochs;
        if (a.seed) cfg.seed = *a.seed;
        cfg.validate();
    };

    const auto last = (fs::path(a.out_dir) / "last.ckpt").string();
    std::unique_ptr<Trainer> trainer;
    if (a.resume) {
        auto ck = load_checkpoint(last);
        auto cfg = ck.config;
        apply_overrides(cfg);
        auto want = to_key_values(cfg), have = to_key_values(ck.config);
        want.erase("epochs");
        have.erase("epochs");
        if (want != have) throw ConfigError("--resume can only change epochs; other settings differ from " + last);
        ck.config.epochs = cfg.epochs;
        std::cerr << "resuming " << last << " after epoch " << ck.epoch << "\n";
        trainer = std::make_unique<Trainer>(ck);
    } else {
        TrainConfig cfg;
        if (a.preset == "desk") cfg = TrainConfig::desk();
        else if (a.preset == "paper") cfg = TrainConfig::paper();
        else throw ConfigError("unknown preset '" + a.preset + "' (desk, paper)");
        apply_overrides(cfg);
        if (fs::exists(last)) throw ConfigError(a.out_dir + " already holds a run; pass --resume or pick another --out-dir");
        trainer = std::make_unique<Trainer>(cfg);
    }
    manifest["train_config"] = to_key_values(trainer->config());
    fs::create_directories(a.out_dir);
    write_manifest(a.out_dir, manifest, true);

    TrainOptions opt;
    opt.out_dir = a.out_dir;
    opt.quiet = a.quiet;
    const auto sum = trainer->run(opt);
    std::cout << "epochs " << trainer->epoch() << "/" << trainer->config().epochs << ", best validation "
              << num(sum.best_validation) << ", elapsed " << num(sum.elapsed_s) << " s\n"
              << "best checkpoint " << sum.best_path << "\nlast checkpoint " << sum.last_path << "\n";
    return 0;
}

int cmd_solve(const SolveArgs& a, json manifest) {
    const auto recs = read_instances(a.input, a.format);
    const bool cvrp = recs.front().cvrp.has_value();
    for (const auto& r : recs)
        if (r.cvrp.has_value() != cvrp) throw ConfigError("input mixes TSP and CVRP instances");
    auto lm = load_model(a.model, cvrp ? 3 : 2);
    auto& model = lm.model;
    const auto so = solve_options(a.policy, a.beam_width, a.final_rule, a.seed);
    std::vector<std::string> warnings;
    std::string csv = "name,n,length,time_s,solution\n";

    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        if (cvrp) {
            if (so.policy == Policy::beam) throw ConfigError("CVRP decoding supports greedy and sample");
            const auto& inst = *recs[i].cvrp;
            const auto out = model.infer(make_cvrp_batch(std::span(&inst, 1), model.config()))[0];
            std::mt19937_64 rng(so.seed + i);
            const auto tr = cvrp_decode(out, inst, so.policy == Policy::greedy ? CvrpPolicy::greedy : CvrpPolicy::sample, &rng);
            const double secs = seconds_since(t0);
            const double len = cvrp_length(tr.solution, inst);
            std::string routes;
            for (const auto& r : tr.solution.routes) routes += (routes.empty() ? "" : " | ") + join(r);
            std::cout << inst.name << " customers=" << inst.customers() << " routes=" << tr.solution.routes.size()
                      << " length=" << num(len) << " time_s=" << num(secs) << "\n  " << routes << "\n";
            csv += inst.name + "," + std::to_string(inst.customers()) + "," + num(len) + "," + num(secs) + "," + routes + "\n";
            if (!a.svg.empty()) write_file_atomic(indexed_path(a.svg, i, recs.size()), render_cvrp_svg(inst, tr.solution));
            continue;
        }

        const auto& inst = *recs[i].tsp;
        if (!inst.has_coords()) throw ConfigError("instance '" + inst.name + "' has no node coordinates");
        const auto input = a.normalize ? normalize_coords(inst) : inst;
        if (lm.trained_metric && input.metric != *lm.trained_metric) {
            warnings.push_back(inst.name + ": model trained on " + std::string(metric_name(*lm.trained_metric)) +
                               ", instance metric " + std::string(metric_name(input.metric)));
            std::cerr << "warning: " << warnings.back() << "\n";
        }
        // Lengths are always measured on the original instance.
        const auto dm = distance_matrix(inst);
        const auto out = model.infer(make_batch(std::span(&input, 1), model.config()))[0];
        auto opts = so;
        opts.seed = so.seed + i;
        const auto tour = decode_output(out, dm, opts);
        const double secs = seconds_since(t0);
        const double len = tour_length(tour, dm);
        std::cout << inst.name << " n=" << inst.size() << " length=" << num(len) << " time_s=" << num(secs)
                  << " policy=" << a.policy << "\n  " << join(tour) << "\n";
        csv += inst.name + "," + std::to_string(inst.size()) + "," + num(len) + "," + num(secs) + "," + join(tour) + "\n";
        if (!a.svg.empty()) write_file_atomic(indexed_path(a.svg, i, recs.size()), render_tour_svg(inst, tour));
    }
    if (!a.out.empty()) write_file_atomic(a.out, csv);
    manifest["model_source"] = lm.source;
    manifest["warnings"] = warnings;
    if (!a.out.empty()) write_manifest(a.out, manifest);
    else if (!a.svg.empty()) write_manifest(a.svg, manifest);
    return 0;
}

int cmd_eval(const EvalArgs& a, json manifest) {
    const auto insts = tsp_only(read_instances(a.input, a.format));
    auto lm = load_model(a.model, 2);
    EvalOptions opt;
    opt.solve = solve_options(a.policy, a.beam_width, a.final_rule, a.seed);
    if (a.oracle == "auto") opt.oracle = true;
    else if (a.oracle == "none") opt.oracle = false;
    else throw ConfigError("unknown --oracle '" + a.oracle + "' (auto, none)");
    opt.exact_limit = a.exact_limit;
    opt.all_starts = a.all_starts;
    if (a.batch_size == 0 || a.threads == 0) throw ConfigError("--batch-size and --threads must be positive");
    opt.batch_size = a.batch_size;
    opt.threads = a.threads;
    const auto rep = evaluate(lm.model, std::span<const TspInstance>(insts), opt);
    write_output(a.out, eval_report_csv(rep));
    std::ostream& log = a.out.empty() || a.out == "-" ? std::cerr : std::cout;
    log << "instances " << insts.size() << ", mean length " << num(rep.mean_length);
    if (rep.gap) log << ", reference (" << rep.reference_label << ") " << num(*rep.reference_mean) << ", gap " << num(100 * *rep.gap) << "%";
    log << ", S time " << num(rep.s_time) << " s, T time " << num(rep.t_time) << " s (batch " << rep.t_batch << ")\n";
    manifest["model_source"] = lm.source;
    if (!a.out.empty() && a.out != "-") write_manifest(a.out, manifest);
    return 0;
}

int cmd_bench(const BenchArgs& a, json manifest) {
    auto lm = load_model(a.model, 2);
    BenchOptions opt;
    opt.sizes = a.sizes;
    opt.beam_widths = a.beam_widths;
    opt.batch_sizes = a.batch_sizes;
    opt.count = a.count;
    opt.repeats = a.repeats;
    opt.seed = a.seed;
    opt.final_rule = parse_final_rule(a.final_rule);
    for (auto v : {opt.count, opt.repeats})
        if (v == 0) throw ConfigError("--count and --repeats must be positive");
    write_output(a.out, bench_csv(run_bench(lm.model, opt)));
    manifest["model_source"] = lm.source;
    if (!a.out.empty() && a.out != "-") write_manifest(a.out, manifest);
    return 0;
}

}  // namespace nartsp::cli
