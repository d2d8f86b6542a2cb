#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nartsp/error.hpp"

namespace nartsp {

/// Dense row-major square matrix of doubles.
class SquareMatrix {
public:
    SquareMatrix() = default;
    explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}
    SquareMatrix(std::size_t n, std::vector<double> data);

    std::size_t size() const noexcept { return n_; }
    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * n_, n_}; }
    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * n_, n_}; }
    const std::vector<double>& storage() const noexcept { return data_; }

    friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

using Point = std::array<double, 2>;

/// Distance function attached to an instance. The TSPLIB kinds (euc_2d,
/// ceil_2d, man_2d, att, geo) round to integers as TSPLIB prescribes;
/// euclid and manhattan are exact.
enum class Metric { euclid, manhattan, euc_2d, ceil_2d, man_2d, att, geo, explicit_matrix };

std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);

struct TspInstance {
    std::string name;
    Metric metric = Metric::euclid;
    std::vector<Point> coords;  // may be empty for explicit instances without display data
    std::optional<SquareMatrix> explicit_matrix;

    std::size_t size() const;
    bool has_coords() const noexcept { return !coords.empty(); }
    /// Throws ContractError if the invariants do not hold.
    void validate() const;

    friend bool operator==(const TspInstance&, const TspInstance&) = default;
};

/// Pairwise distances (zero diagonal, symmetric, non-negative).
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(SquareMatrix values) : values_(std::move(values)) {}
    std::size_t size() const noexcept { return values_.size(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return values_(i, j); }
    std::span<const double> row(std::size_t i) const noexcept { return values_.row(i); }
    const SquareMatrix& matrix() const noexcept { return values_; }

private:
    SquareMatrix values_;
};

/// Visiting order; a closed cycle over all nodes.
using Tour = std::vector<std::uint32_t>;

/// True when `tour` is a permutation of {0..n-1}.
bool is_permutation_of(const Tour& tour, std::size_t n);
void validate_tour(const Tour& tour, std::size_t n);

struct CvrpInstance {
    std::string name;
    Point depot{};
    std::vector<Point> coords;    // customers
    std::vector<double> demands;  // one per customer
    double capacity = 1.0;

    std::size_t customers() const noexcept { return coords.size(); }
    void validate() const;
    /// Depot first, then customers, euclidean.
    DistanceMatrix distances() const;

    friend bool operator==(const CvrpInstance&, const CvrpInstance&) = default;
};

/// Routes over customer indices 0..n-1 (depot implicit at both ends).
struct CvrpSolution {
    std::vector<std::vector<std::uint32_t>> routes;
};

void validate_cvrp_solution(const CvrpSolution& sol, const CvrpInstance& inst);
double cvrp_length(const CvrpSolution& sol, const CvrpInstance& inst);

// Operations. -------------------------------------------------------------

TspInstance generate_uniform(std::size_t n, std::uint64_t seed, Metric metric = Metric::euclid);
std::vector<TspInstance> generate_uniform_batch(std::size_t n, std::size_t count, std::uint64_t seed,
                                                Metric metric = Metric::euclid);

/// Demands δ/40 with δ uniform on {1..9}, capacity 1, coordinates uniform.
CvrpInstance generate_cvrp(std::size_t customers, std::uint64_t seed);

double point_distance(const Point& a, const Point& b, Metric metric);
DistanceMatrix distance_matrix(const TspInstance& inst);

/// Closed-cycle length, including the edge from the last node back to the first.
double tour_length(const Tour& tour, const DistanceMatrix& dm);

/// Uniformly rescales coordinates into the unit square: the bounding box's
/// minimum maps to 0 and its longest side to length 1. TSPLIB-rounded
/// planar metrics come back as their exact counterparts.
TspInstance normalize_coords(const TspInstance& inst);

// TSPLIB. -----------------------------------------------------------------

TspInstance parse_tsplib(std::string_view text);
TspInstance load_tsplib(const std::string& path);
std::string write_tsplib(const TspInstance& inst);

// JSON lines: {"name","metric","coords", "demands"?, "capacity"?}. CVRP
// records carry the depot as coords[0] with demand 0.

struct InstanceRecord {
    std::optional<TspInstance> tsp;
    std::optional<CvrpInstance> cvrp;
};

std::string to_json_line(const TspInstance& inst);
std::string to_json_line(const CvrpInstance& inst);
InstanceRecord parse_json_line(std::string_view line);
std::vector<InstanceRecord> read_jsonl(const std::string& path);

}  // namespace nartsp
