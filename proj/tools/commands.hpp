#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace nartsp::cli {

struct GenerateArgs {
    std::size_t n = 50;
    std::size_t count = 1000;
    std::uint64_t seed = 1;
    std::string metric = "euclid";
    bool cvrp = false;
    std::string out;
};

struct TrainArgs {
    std::string config;
    std::string preset = "desk";
    std::vector<std::string> set;  // key=value overrides
    std::optional<std::size_t> epochs;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "run";
    bool resume = false;
    bool quiet = false;
};

/// Where the network comes from: a checkpoint, or a freshly initialized
/// desk-shaped model (smoke tests and latency runs).
struct ModelSource {
    std::string checkpoint;
    std::optional<std::uint64_t> init_seed;
};

struct SolveArgs {
    ModelSource model;
    std::string input;
    std::string format = "auto";  // auto, tsplib, jsonl
    std::string policy = "greedy";
    std::size_t beam_width = 1;
    std::string final_rule = "shortest_tour";
    std::uint64_t seed = 1;
    bool normalize = false;
    std::string svg;
    std::string out;  // optional CSV
};

struct EvalArgs {
    ModelSource model;
    std::string input;
    std::string format = "auto";
    std::string policy = "greedy";
    std::size_t beam_width = 1;
    std::string final_rule = "shortest_tour";
    std::uint64_t seed = 1;
    std::string oracle = "auto";  // auto, none
    std::size_t exact_limit = 16;
    bool all_starts = false;
    std::size_t batch_size = 64;
    std::size_t threads = 1;
    std::string out;
};

struct BenchArgs {
    ModelSource model;
    std::vector<std::size_t> sizes{50, 100, 200, 500};
    std::vector<std::size_t> beam_widths{1};
    std::vector<std::size_t> batch_sizes{1};
    std::size_t count = 8;
    std::size_t repeats = 5;
    std::uint64_t seed = 1;
    std::string final_rule = "shortest_tour";
    std::string out;
};

int cmd_generate(const GenerateArgs& a, const nlohmann::json& manifest);
int cmd_train(const TrainArgs& a, nlohmann::json manifest);
int cmd_solve(const SolveArgs& a, nlohmann::json manifest);
int cmd_eval(const EvalArgs& a, nlohmann::json manifest);
int cmd_bench(const BenchArgs& a, nlohmann::json manifest);

/// Writes `<path>.manifest.json`, or `<dir>/manifest.json` for directories.
void write_manifest(const std::string& path, const nlohmann::json& manifest, bool is_dir = false);

}  // namespace nartsp::cli
