#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "nartsp/bench.hpp"
#include "nartsp/evaluate.hpp"
#include "nartsp/svg.hpp"
#include "support/model_checks.hpp"

using namespace nartsp;
using nartsp::testing::toy_config;

namespace {

std::size_t count_of(const std::string& s, const std::string& needle) {
    std::size_t c = 0;
    for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++c;
    return c;
}

}  // namespace

TEST_CASE("policy and final-rule names round-trip") {
    for (auto p : {Policy::greedy, Policy::sample, Policy::beam}) CHECK(parse_policy(policy_name(p)) == p);
    for (auto r : {FinalRule::highest_prob, FinalRule::shortest_tour}) CHECK(parse_final_rule(final_rule_name(r)) == r);
    CHECK_THROWS_AS(parse_policy("best"), ConfigError);
    CHECK_THROWS_AS(parse_final_rule("longest"), ConfigError);
}

TEST_CASE("reference solution is exact up to the limit, then a heuristic") {
    const auto small = distance_matrix(generate_uniform(9, 1));
    const auto r = reference_solution(small, 16);
    CHECK(r.optimal);
    CHECK(r.length == held_karp(small).length);
    CHECK(optimality_gap(r.length, r.length) == 0.0);
    CHECK(optimality_gap(1.05, 1.0) == doctest::Approx(0.05));
    CHECK_THROWS_AS(optimality_gap(1.0, 0.0), ContractError);
    const auto big = distance_matrix(generate_uniform(30, 2));
    const auto h = reference_solution(big, 16);
    CHECK_FALSE(h.optimal);
    CHECK(h.label == "fi+2opt");
    CHECK(is_permutation_of(h.tour, 30));
}

TEST_CASE("infer_all over mixed sizes matches one-by-one inference") {
    Model<double> m(toy_config(8, 2, 2), 3);
    std::vector<TspInstance> insts;
    for (std::size_t n : {5, 5, 5, 7, 7, 5}) insts.push_back(generate_uniform(n, 10 + insts.size()));
    const auto outs = infer_all(m, std::span<const TspInstance>(insts), 2);
    REQUIRE(outs.size() == insts.size());
    for (std::size_t i = 0; i < insts.size(); ++i) {
        const auto one = m.infer(make_batch(std::span(&insts[i], 1), m.config()))[0];
        CHECK(outs[i].size() == insts[i].size());
        for (std::size_t j = 0; j < one.beta.size(); ++j) CHECK(outs[i].beta[j] == doctest::Approx(one.beta[j]).epsilon(1e-12));
    }
}

TEST_CASE("all-starts statistics bracket the greedy tour") {
    Model<float> m(ModelConfig::desk(), 4);
    const auto insts = generate_uniform_batch(12, 5, 5);
    const auto outs = m.infer(make_batch(insts, m.config()));
    for (std::size_t i = 0; i < 5; ++i) {
        const auto dm = distance_matrix(insts[i]);
        const auto s = all_starts(outs[i], dm);
        const double g = tour_length(greedy_decode(outs[i]).tour, dm);
        CHECK(s.min <= g);
        CHECK(g <= s.max);
        CHECK(s.min <= s.mean);
        CHECK(s.mean <= s.max);
    }
}

TEST_CASE("evaluation report and CSV") {
    Model<float> m(ModelConfig::desk(), 6);
    const auto insts = generate_uniform_batch(8, 6, 7);
    EvalOptions opt;
    opt.all_starts = true;
    opt.batch_size = 4;
    for (auto policy : {Policy::greedy, Policy::sample, Policy::beam}) {
        opt.solve.policy = policy;
        opt.solve.beam = {8, FinalRule::shortest_tour};
        const auto rep = evaluate(m, std::span<const TspInstance>(insts), opt);
        REQUIRE(rep.instances.size() == 6);
        CHECK(rep.reference_label == "optimal");
        REQUIRE(rep.gap);
        CHECK(*rep.gap >= -1e-12);
        double mean = 0;
        for (const auto& r : rep.instances) {
            CHECK(is_permutation_of(r.tour, 8));
            CHECK(r.length >= *r.reference_length - 1e-12);
            mean += r.length / 6;
        }
        CHECK(rep.mean_length == doctest::Approx(mean));
        CHECK(rep.t_batch == 4);
        const auto csv = eval_report_csv(rep);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);  // header, 6 rows, summary
        CHECK(csv.find("\nsummary,6,") != std::string::npos);
    }
    // Beam with the shortest-tour rule never loses to greedy on the same outputs.
    opt.all_starts = false;
    opt.solve.policy = Policy::greedy;
    const double greedy = evaluate(m, std::span<const TspInstance>(insts), opt).mean_length;
    opt.solve.policy = Policy::beam;
    CHECK(evaluate(m, std::span<const TspInstance>(insts), opt).mean_length <= greedy + 1e-12);
    opt.oracle = false;
    const auto rep = evaluate(m, std::span<const TspInstance>(insts), opt);
    CHECK_FALSE(rep.gap);
    CHECK(eval_report_csv(rep).find("summary,6,") != std::string::npos);
}

TEST_CASE("worker threads do not change the report") {
    Model<float> m(toy_config(8, 2, 2), 12);
    std::vector<TspInstance> insts;
    for (std::size_t i = 0; i < 7; ++i) insts.push_back(generate_uniform(6 + i, 40 + i));
    EvalOptions opt;
    opt.all_starts = true;
    const auto one = evaluate(m, std::span<const TspInstance>(insts), opt);
    opt.threads = 3;
    const auto three = evaluate(m, std::span<const TspInstance>(insts), opt);
    CHECK(eval_report_csv(one) == eval_report_csv(three));
}

TEST_CASE("SVG rendering draws every node and route") {
    const auto inst = generate_uniform(7, 8);
    Tour t(7);
    std::iota(t.begin(), t.end(), 0u);
    const auto svg = render_tour_svg(inst, t);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count_of(svg, "<circle") == 7);
    CHECK(count_of(svg, "<polygon") + count_of(svg, "<path") + count_of(svg, "<polyline") >= 1);

    const auto cv = generate_cvrp(6, 9);
    CvrpSolution sol{{{0, 1, 2}, {3, 4}, {5}}};
    const auto csvg = render_cvrp_svg(cv, sol);
    CHECK(count_of(csvg, "<circle") == 6);
    CHECK(count_of(csvg, "<rect") >= 1);
}

TEST_CASE("bench produces one row per configuration") {
    Model<float> m(toy_config(8, 1, 2), 1);
    BenchOptions opt;
    opt.sizes = {6, 10};
    opt.beam_widths = {1, 3};
    opt.batch_sizes = {1, 2};
    opt.count = 2;
    opt.repeats = 1;
    const auto rows = run_bench(m, opt);
    CHECK(rows.size() == 8);
    for (const auto& r : rows) {
        CHECK(r.status == "ok");
        CHECK(r.mean_s_time > 0);
    }
    const auto csv = bench_csv(rows);
    CHECK(csv.rfind("n,B,batch,mean_s_time,total_t_time,count,status\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
}
