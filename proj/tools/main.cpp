// nartsp command-line tool: generate, train, solve, eval, bench.
// Exit codes: 0 success, 1 other failure, 2 configuration error, 3 numeric abort.

#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "nartsp/io.hpp"
#include "nartsp/train_config.hpp"

#ifndef NARTSP_VERSION
#define NARTSP_VERSION "unknown"
#endif

using namespace nartsp;
using namespace nartsp::cli;

namespace {

/// Fills options not given on the command line from a key = value file whose
/// keys are the long option names.
void apply_config_file(CLI::App* sub, const std::string& path) {
    for (const auto& [key, value] : parse_key_value_text(read_file(path))) {
        auto* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr || key == "config") throw ConfigError("unknown key '" + key + "' in " + path);
        if (opt->count() > 0) continue;  // the flag wins
        opt->clear();
        if (opt->get_expected_max() > 1) {
            // "a, b, c" or "[a, b, c]" for list options
            std::string v = value;
            if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
            std::size_t start = 0;
            while (start <= v.size()) {
                auto end = v.find(',', start);
                if (end == std::string::npos) end = v.size();
                auto item = v.substr(start, end - start);
                item.erase(0, item.find_first_not_of(" \t"));
                item.erase(item.find_last_not_of(" \t") + 1);
                if (!item.empty()) opt->add_result(item);
                start = end + 1;
            }
        } else {
            opt->add_result(value);
        }
        opt->run_callback();
    }
}

void add_model_source(CLI::App* sub, ModelSource& m) {
    sub->add_option("--checkpoint", m.checkpoint, "Checkpoint written by train");
    sub->add_option("--init-seed", m.init_seed, "Use an untrained desk-shaped network with this seed instead");
}

void add_decoding(CLI::App* sub, std::string& policy, std::size_t& width, std::string& rule, std::uint64_t& seed) {
    sub->add_option("--policy", policy, "greedy, sample or beam")->check(CLI::IsMember({"greedy", "sample", "beam"}));
    sub->add_option("--beam-width", width, "Beam width B");
    sub->add_option("--final-rule", rule, "Beam pick: shortest_tour or highest_prob")
        ->check(CLI::IsMember({"shortest_tour", "highest_prob"}));
    sub->add_option("--seed", seed, "Seed for sampling");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-autoregressive GNN solver for the travelling salesman problem"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.set_version_flag("--version", NARTSP_VERSION);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write random instances as JSON lines");
    g->add_option("--n", gen.n, "Nodes per instance (customers for --cvrp)");
    g->add_option("--count", gen.count, "Number of instances");
    g->add_option("--seed", gen.seed, "Generator seed");
    g->add_option("--metric", gen.metric, "euclid or manhattan")->check(CLI::IsMember({"euclid", "manhattan"}));
    g->add_flag("--cvrp", gen.cvrp, "Capacitated routing instances (depot first)");
    g->add_option("--out", gen.out, "Output file; stdout when omitted");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model with single-module REINFORCE");
    t->add_option("--config", tr.config, "key = value file with training settings (see README)");
    t->add_option("--preset", tr.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    t->add_option("--set", tr.set, "Override one setting, key=value (repeatable)");
    t->add_option("--epochs", tr.epochs, "Number of epochs");
    t->add_option("--seed", tr.seed, "Training seed");
    t->add_option("--out-dir", tr.out_dir, "Run directory for checkpoints and logs");
    t->add_flag("--resume", tr.resume, "Continue from <out-dir>/last.ckpt");
    t->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

    SolveArgs so;
    auto* s = app.add_subcommand("solve", "Solve TSPLIB or JSON-lines instances");
    add_model_source(s, so.model);
    s->add_option("--input", so.input, "Instance file")->required();
    s->add_option("--format", so.format, "auto, tsplib or jsonl")->check(CLI::IsMember({"auto", "tsplib", "jsonl"}));
    add_decoding(s, so.policy, so.beam_width, so.final_rule, so.seed);
    s->add_flag("--normalize", so.normalize, "Rescale coordinates into the unit square before inference");
    s->add_option("--svg", so.svg, "Render the solution (one file per instance)");
    s->add_option("--out", so.out, "CSV of solutions");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a model on a set of instances");
    add_model_source(e, ev.model);
    e->add_option("--input", ev.input, "Instance file")->required();
    e->add_option("--format", ev.format, "auto, tsplib or jsonl")->check(CLI::IsMember({"auto", "tsplib", "jsonl"}));
    add_decoding(e, ev.policy, ev.beam_width, ev.final_rule, ev.seed);
    e->add_option("--oracle", ev.oracle, "auto: exact up to --exact-limit nodes, else fi+2opt; none")
        ->check(CLI::IsMember({"auto", "none"}));
    e->add_option("--exact-limit", ev.exact_limit, "Largest n solved exactly");
    e->add_flag("--all-starts", ev.all_starts, "Also greedy-decode from every start node");
    e->add_option("--batch-size", ev.batch_size, "Instances per forward pass");
    e->add_option("--threads", ev.threads, "Workers for oracle and all-starts work (results do not depend on it)");
    e->add_option("--out", ev.out, "CSV report; stdout when omitted");

    BenchArgs be;
    auto* b = app.add_subcommand("bench", "Measure inference latency");
    add_model_source(b, be.model);
    b->add_option("--sizes", be.sizes, "Instance sizes")->delimiter(',');
    b->add_option("--beam-widths", be.beam_widths, "Beam widths (1 = greedy)")->delimiter(',');
    b->add_option("--batch-sizes", be.batch_sizes, "Batch sizes for the T time")->delimiter(',');
    b->add_option("--count", be.count, "Instances per configuration");
    b->add_option("--repeats", be.repeats, "Timing repeats (median)");
    b->add_option("--seed", be.seed, "Instance seed");
    b->add_option("--final-rule", be.final_rule, "Beam pick")->check(CLI::IsMember({"shortest_tour", "highest_prob"}));
    b->add_option("--out", be.out, "CSV; stdout when omitted");

    std::string config_file;
    for (auto* sub : {g, s, e, b}) sub->add_option("--config", config_file, "key = value file of option defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (sub != t && !config_file.empty()) apply_config_file(sub, config_file);

        nlohmann::json manifest;
        manifest["command"] = sub->get_name();
        manifest["argv"] = std::vector<std::string>(argv, argv + argc);
        manifest["options"] = parse_key_value_text(sub->config_to_str(true, false));
        manifest["versions"] = {{"nartsp", NARTSP_VERSION}, {"compiler", __VERSION__}, {"cxx", __cplusplus}};

        if (sub == g) return cmd_generate(gen, manifest);
        if (sub == t) return cmd_train(tr, manifest);
        if (sub == s) return cmd_solve(so, manifest);
        if (sub == e) return cmd_eval(ev, manifest);
        return cmd_bench(be, manifest);
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return 2;
    } catch (const NumericError& err) {
        std::cerr << "numeric abort: " << err.what() << "\n";
        return 3;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
}
