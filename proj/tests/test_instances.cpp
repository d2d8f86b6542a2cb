#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "nartsp/instances.hpp"
#include "nartsp/io.hpp"

using namespace nartsp;

namespace {

TspInstance square() {
    TspInstance t;
    t.name = "square";
    t.coords = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    return t;
}

}  // namespace

TEST_CASE("generation is deterministic and uniform on the unit square") {
    const auto a = generate_uniform(50, 42);
    const auto b = generate_uniform(50, 42);
    CHECK(a == b);
    CHECK_FALSE(a == generate_uniform(50, 43));
    const auto batch = generate_uniform_batch(100, 200, 9);
    double sx = 0, sy = 0, cnt = 0;
    for (const auto& inst : batch) {
        for (const auto& p : inst.coords) {
            CHECK(p[0] >= 0.0);
            CHECK(p[0] <= 1.0);
            sx += p[0];
            sy += p[1];
            ++cnt;
        }
    }
    // 20000 U(0,1) draws: standard error of the mean is about 0.002.
    CHECK(std::abs(sx / cnt - 0.5) < 0.01);
    CHECK(std::abs(sy / cnt - 0.5) < 0.01);
    CHECK_THROWS_AS(generate_uniform(1, 1), ContractError);
}

TEST_CASE("distance matrices are symmetric with a zero diagonal") {
    for (Metric m : {Metric::euclid, Metric::manhattan}) {
        const auto inst = generate_uniform(12, 5, m);
        const auto dm = distance_matrix(inst);
        for (std::size_t i = 0; i < 12; ++i) {
            CHECK(dm(i, i) == 0.0);
            for (std::size_t j = 0; j < 12; ++j) {
                CHECK(dm(i, j) == dm(j, i));
                CHECK(dm(i, j) >= 0.0);
            }
        }
    }
}

TEST_CASE("tour length includes the closing edge") {
    const auto dm = distance_matrix(square());
    CHECK(tour_length({0, 1, 2, 3}, dm) == doctest::Approx(4.0));
    CHECK(tour_length({0, 2, 1, 3}, dm) == doctest::Approx(2.0 + 2.0 * std::sqrt(2.0)));
    CHECK_THROWS_AS(tour_length({0, 1, 1, 3}, dm), ContractError);
    CHECK_THROWS_AS(tour_length({0, 1, 2}, dm), ContractError);
    auto man = square();
    man.metric = Metric::manhattan;
    CHECK(tour_length({0, 2, 1, 3}, distance_matrix(man)) == doctest::Approx(6.0));
}

TEST_CASE("TSPLIB rounding metrics") {
    const Point a{0, 0}, b{3, 4.4};
    CHECK(point_distance(a, b, Metric::euc_2d) == 5.0);   // nint(5.43)
    CHECK(point_distance(a, b, Metric::ceil_2d) == 6.0);
    CHECK(point_distance(a, b, Metric::man_2d) == 7.0);   // nint(7.4)
    // ATT: r = sqrt((9 + 19.36) / 10) = 1.684; nint = 2 >= r, so 2.
    CHECK(point_distance(a, b, Metric::att) == 2.0);
    // r = sqrt(10/10) = 1 exactly: no bump.
    CHECK(point_distance({0, 0}, {1, 3}, Metric::att) == 1.0);
    // r = sqrt(40/10) = 2: exact; r = sqrt(50/10) = 2.236 -> nint 2 < r -> 3.
    CHECK(point_distance({0, 0}, {5, 5}, Metric::att) == 3.0);
}

TEST_CASE("GEO distances follow the TSPLIB great-circle rule") {
    // Independent evaluation: degrees are truncated, the fractional part is minutes.
    auto rad = [](double v) {
        const double deg = std::trunc(v);
        return 3.141592 * (deg + 5.0 * (v - deg) / 3.0) / 180.0;
    };
    const Point p{38.24, 20.42}, q{39.57, 26.15};
    const double q1 = std::cos(rad(p[1]) - rad(q[1]));
    const double q2 = std::cos(rad(p[0]) - rad(q[0]));
    const double q3 = std::cos(rad(p[0]) + rad(q[0]));
    const double expected = std::trunc(6378.388 * std::acos(0.5 * ((1 + q1) * q2 - (1 - q1) * q3)) + 1.0);
    CHECK(point_distance(p, q, Metric::geo) == expected);
    CHECK(point_distance(q, p, Metric::geo) == expected);
    TspInstance inst;
    inst.metric = Metric::geo;
    inst.coords = {p, q, {36.26, 23.12}};
    CHECK(distance_matrix(inst)(1, 1) == 0.0);
}

TEST_CASE("normalize_coords maps into the unit square uniformly") {
    TspInstance t;
    t.metric = Metric::euc_2d;
    t.coords = {{10, 20}, {30, 25}, {20, 60}};
    const auto u = normalize_coords(t);
    CHECK(u.metric == Metric::euclid);
    CHECK(u.coords[0][0] == doctest::Approx(0.0));
    CHECK(u.coords[0][1] == doctest::Approx(0.0));
    CHECK(u.coords[2][1] == doctest::Approx(1.0));
    CHECK(u.coords[1][0] == doctest::Approx(0.5));
    // One uniform scale: lengths shrink by the longest side (40).
    auto exact = t;
    exact.metric = Metric::euclid;
    const Tour tour{0, 1, 2};
    CHECK(tour_length(tour, distance_matrix(u)) == doctest::Approx(tour_length(tour, distance_matrix(exact)) / 40.0));
    TspInstance geo;
    geo.metric = Metric::geo;
    geo.coords = {{1, 1}, {2, 2}};
    CHECK_THROWS_AS(normalize_coords(geo), ContractError);
}

TEST_CASE("instance validation") {
    TspInstance t = square();
    t.coords[1][0] = std::nan("");
    CHECK_THROWS_AS(t.validate(), ContractError);
    TspInstance e;
    e.metric = Metric::explicit_matrix;
    CHECK_THROWS_AS(e.validate(), ContractError);
    e.explicit_matrix = SquareMatrix(3, std::vector<double>{0, 1, 2, 1, 0, 3, 2, 3, 0});
    CHECK_NOTHROW(e.validate());
    CHECK(distance_matrix(e)(1, 2) == 3.0);
    CHECK_THROWS_AS(point_distance({0, 0}, {1, 1}, Metric::explicit_matrix), ContractError);
}

TEST_CASE("CVRP generation, validation and solution checks") {
    const auto inst = generate_cvrp(20, 3);
    CHECK(inst.customers() == 20);
    CHECK(inst.capacity == 1.0);
    for (double d : inst.demands) {
        const double delta = d * 40.0;
        CHECK(delta == doctest::Approx(std::round(delta)));
        CHECK(delta >= 1.0);
        CHECK(delta <= 9.0);
    }
    CHECK(inst == generate_cvrp(20, 3));
    CvrpSolution sol;
    for (std::uint32_t c = 0; c < 20; ++c) sol.routes.push_back({c});
    CHECK_NOTHROW(validate_cvrp_solution(sol, inst));
    const auto dm = inst.distances();
    double expected = 0;
    for (std::size_t c = 1; c <= 20; ++c) expected += 2 * dm(0, c);
    CHECK(cvrp_length(sol, inst) == doctest::Approx(expected));
    sol.routes.pop_back();
    CHECK_THROWS_AS(validate_cvrp_solution(sol, inst), ContractError);
    CvrpInstance heavy = inst;
    heavy.demands[0] = 2.0;
    CHECK_THROWS_AS(heavy.validate(), ContractError);
}

TEST_CASE("atomic writes replace files whole and create directories") {
    const auto dir = std::filesystem::temp_directory_path() / "nartsp_io_test";
    std::filesystem::remove_all(dir);
    const auto path = (dir / "sub" / "out.txt").string();
    write_file_atomic(path, "first");
    write_file_atomic(path, "second");
    CHECK(read_file(path) == "second");
    std::size_t entries = 0;
    for (auto& e : std::filesystem::directory_iterator(dir / "sub")) {
        (void)e;
        ++entries;
    }
    CHECK(entries == 1);  // no temporary left behind
    CHECK_THROWS_AS(read_file((dir / "missing").string()), IoError);
    std::filesystem::remove_all(dir);
}
