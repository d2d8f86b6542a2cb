#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nartsp/decoder.hpp"
#include "nartsp/model.hpp"

namespace nartsp {

struct BenchOptions {
    std::vector<std::size_t> sizes{50, 100, 200, 500};
    std::vector<std::size_t> beam_widths{1};
    std::vector<std::size_t> batch_sizes{1};
    std::size_t count = 8;    // instances per configuration
    std::size_t repeats = 5;  // timings are medians over repeats
    std::uint64_t seed = 1;
    FinalRule final_rule = FinalRule::shortest_tour;
};

struct BenchRow {
    std::size_t n = 0;
    std::size_t beam_width = 1;
    std::size_t batch = 1;
    double mean_s_time = 0.0;   // seconds per single-instance solve (forward + decode)
    double total_t_time = 0.0;  // seconds to solve all `count` instances in batches
    std::size_t count = 0;
    std::string status = "ok";
};

/// Greedy decoding when the width is 1, beam search otherwise.
std::vector<BenchRow> run_bench(Model<float>& model, const BenchOptions& opt);

std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace nartsp
