#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "doctest.h"
#include "nartsp/baselines.hpp"

using namespace nartsp;

namespace {

TspInstance from_points(std::vector<Point> pts) {
    TspInstance inst;
    inst.name = "pts";
    inst.coords = std::move(pts);
    return inst;
}

}  // namespace

TEST_CASE("unit square optimum is its perimeter") {
    const auto inst = from_points({{0, 0}, {1, 1}, {1, 0}, {0, 1}});
    CHECK(brute_force(inst).length == doctest::Approx(4.0));
    CHECK(held_karp(inst).length == doctest::Approx(4.0));
    CHECK(held_karp(inst).tour == Tour{0, 2, 1, 3});
}

TEST_CASE("collinear points: the optimum is twice the span") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 10);
    for (int t = 0; t < 20; ++t) {
        std::vector<Point> pts(7);
        double lo = 1e9, hi = -1e9;
        for (auto& p : pts) {
            p = {u(rng), 0.0};
            lo = std::min(lo, p[0]);
            hi = std::max(hi, p[0]);
        }
        CHECK(held_karp(from_points(pts)).length == doctest::Approx(2 * (hi - lo)).epsilon(1e-12));
    }
}

TEST_CASE("points on a circle are visited in angular order") {
    const std::size_t n = 12;
    std::vector<Point> pts(n);
    std::vector<std::uint32_t> order{0, 7, 3, 10, 5, 1, 8, 11, 2, 6, 9, 4};
    for (std::size_t k = 0; k < n; ++k) {
        const double a = 2 * std::numbers::pi * static_cast<double>(k) / n;
        pts[order[k]] = {std::cos(a), std::sin(a)};
    }
    const auto r = held_karp(from_points(pts));
    CHECK(r.length == doctest::Approx(2 * n * std::sin(std::numbers::pi / n)));
    // Hull order starting from node 0, oriented canonically.
    CHECK(r.tour == canonical_tour(Tour(order.begin(), order.end())));
    const auto dm = distance_matrix(from_points(pts));
    CHECK(tour_length(two_opt(nearest_insertion(dm), dm), dm) == doctest::Approx(r.length));
}

TEST_CASE("held_karp and brute_force agree exactly") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const auto inst = generate_uniform(5 + seed % 4, seed);
        const auto a = brute_force(inst);
        const auto b = held_karp(inst);
        CHECK(a.length == b.length);
        CHECK(a.tour == b.tour);
        CHECK(a.method == OracleMethod::brute_force);
        CHECK(oracle_method_name(b.method) == "held_karp");
    }
}

TEST_CASE("oracle size limits") {
    CHECK_THROWS_AS(brute_force(generate_uniform(11, 1)), ContractError);
    CHECK_THROWS_AS(held_karp(generate_uniform(17, 1)), ContractError);
    CHECK_NOTHROW(held_karp(generate_uniform(17, 1), 17));
    CHECK_THROWS_AS(held_karp(generate_uniform(1, 1)), ContractError);
    CHECK(held_karp(generate_uniform(2, 1)).tour == Tour{0, 1});
}

TEST_CASE("canonical tour") {
    CHECK(canonical_tour({2, 0, 3, 1}) == Tour{0, 2, 1, 3});
    CHECK(canonical_tour({3, 0, 1, 2}) == Tour{0, 1, 2, 3});
    CHECK_THROWS(canonical_tour({0, 0, 1}));
}

TEST_CASE("heuristics give valid tours no shorter than the optimum") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto inst = generate_uniform(9, 500 + seed);
        const auto dm = distance_matrix(inst);
        const double opt = held_karp(dm).length;
        for (const auto& t : {nearest_insertion(dm), farthest_insertion(dm)}) {
            CHECK(is_permutation_of(t, 9));
            CHECK(tour_length(t, dm) >= opt - 1e-12);
            const auto improved = two_opt(t, dm);
            CHECK(is_permutation_of(improved, 9));
            CHECK(tour_length(improved, dm) <= tour_length(t, dm) + 1e-12);
            CHECK(tour_length(improved, dm) >= opt - 1e-12);
        }
    }
}

TEST_CASE("two_opt output is a local optimum and a fixed point") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 10; ++t) {
        const auto dm = distance_matrix(generate_uniform(40, 900 + t));
        Tour start(40);
        std::iota(start.begin(), start.end(), 0u);
        std::shuffle(start.begin(), start.end(), rng);
        const auto tour = two_opt(start, dm);
        CHECK(two_opt(tour, dm) == tour);
        for (std::size_t i = 0; i + 2 < 40; ++i)
            for (std::size_t j = i + 2; j < 40; ++j) {
                if (i == 0 && j == 39) continue;
                const double delta = dm(tour[i], tour[j]) + dm(tour[i + 1], tour[(j + 1) % 40]) -
                                     dm(tour[i], tour[i + 1]) - dm(tour[j], tour[(j + 1) % 40]);
                CHECK(delta >= -1e-12);
            }
    }
}

TEST_CASE("insertion heuristics on a small convex set") {
    const auto inst = from_points({{0, 0}, {10, 0}, {10.5, 0}, {5, 6}});
    const auto dm = distance_matrix(inst);
    const auto ni = nearest_insertion(dm);
    const auto fi = farthest_insertion(dm);
    CHECK(is_permutation_of(ni, 4));
    CHECK(is_permutation_of(fi, 4));
    // With four points every insertion order still yields a convex cycle here.
    CHECK(tour_length(ni, dm) == doctest::Approx(held_karp(dm).length));
    CHECK_THROWS_AS(nearest_insertion(distance_matrix(generate_uniform(2, 1))), ContractError);
}
