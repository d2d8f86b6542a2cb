#include "nartsp/instances.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nartsp {

SquareMatrix::SquareMatrix(std::size_t n, std::vector<double> data) : n_(n), data_(std::move(data)) {
    if (data_.size() != n * n) throw DimensionError("square matrix needs n*n values");
}

std::string_view metric_name(Metric m) {
    switch (m) {
        case Metric::euclid: return "euclid";
        case Metric::manhattan: return "manhattan";
        case Metric::euc_2d: return "euc_2d";
        case Metric::ceil_2d: return "ceil_2d";
        case Metric::man_2d: return "man_2d";
        case Metric::att: return "att";
        case Metric::geo: return "geo";
        case Metric::explicit_matrix: return "explicit";
    }
    return "unknown";
}

Metric parse_metric(std::string_view name) {
    for (Metric m : {Metric::euclid, Metric::manhattan, Metric::euc_2d, Metric::ceil_2d, Metric::man_2d, Metric::att,
                     Metric::geo, Metric::explicit_matrix}) {
        if (metric_name(m) == name) return m;
    }
    throw ParseError("unknown metric '" + std::string(name) + "'");
}

std::size_t TspInstance::size() const {
    if (metric == Metric::explicit_matrix && explicit_matrix) return explicit_matrix->size();
    return coords.size();
}

void TspInstance::validate() const {
    if (metric == Metric::explicit_matrix) {
        if (!explicit_matrix) throw ContractError("explicit metric requires a distance matrix");
        const auto& m = *explicit_matrix;
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (m(i, i) != 0.0) throw ContractError("explicit matrix must have a zero diagonal");
            for (std::size_t j = 0; j < m.size(); ++j) {
                if (!(m(i, j) >= 0.0)) throw ContractError("explicit matrix entries must be non-negative");
            }
        }
        if (has_coords() && coords.size() != m.size()) throw ContractError("display coordinates do not match matrix");
    } else if (explicit_matrix) {
        throw ContractError("only explicit instances carry a distance matrix");
    }
    if (size() < 2) throw ContractError("an instance needs at least 2 nodes");
    for (const auto& p : coords) {
        if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw ContractError("non-finite coordinate");
    }
}

bool is_permutation_of(const Tour& tour, std::size_t n) {
    if (tour.size() != n) return false;
    std::vector<std::uint8_t> seen(n, 0);
    for (auto v : tour) {
        if (v >= n || seen[v]) return false;
        seen[v] = 1;
    }
    return true;
}

void validate_tour(const Tour& tour, std::size_t n) {
    if (!is_permutation_of(tour, n)) {
        throw ContractError("tour is not a permutation of " + std::to_string(n) + " nodes");
    }
}

// ---------------------------------------------------------------------------

TspInstance generate_uniform(std::size_t n, std::uint64_t seed, Metric metric) {
    if (n < 2) throw ContractError("generate_uniform needs n >= 2");
    if (metric != Metric::euclid && metric != Metric::manhattan) {
        throw ContractError("generated instances use the euclid or manhattan metric");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TspInstance inst;
    inst.name = "uniform" + std::to_string(n) + "_" + std::to_string(seed);
    inst.metric = metric;
    inst.coords.resize(n);
    for (auto& p : inst.coords) {
        p[0] = u(rng);
        p[1] = u(rng);
    }
    return inst;
}

std::vector<TspInstance> generate_uniform_batch(std::size_t n, std::size_t count, std::uint64_t seed, Metric metric) {
    std::vector<TspInstance> out;
    out.reserve(count);
    std::mt19937_64 seeder(seed);
    for (std::size_t i = 0; i < count; ++i) {
        auto inst = generate_uniform(n, seeder(), metric);
        inst.name = "uniform" + std::to_string(n) + "_" + std::to_string(seed) + "_" + std::to_string(i);
        out.push_back(std::move(inst));
    }
    return out;
}

CvrpInstance generate_cvrp(std::size_t customers, std::uint64_t seed) {
    if (customers < 1) throw ContractError("generate_cvrp needs at least one customer");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> d(1, 9);
    CvrpInstance inst;
    inst.name = "cvrp" + std::to_string(customers) + "_" + std::to_string(seed);
    inst.depot = {u(rng), u(rng)};
    inst.coords.resize(customers);
    inst.demands.resize(customers);
    for (std::size_t i = 0; i < customers; ++i) {
        inst.coords[i] = {u(rng), u(rng)};
        inst.demands[i] = d(rng) / 40.0;
    }
    inst.capacity = 1.0;
    return inst;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kTsplibPi = 3.141592;
constexpr double kEarthRadius = 6378.388;

double nint(double x) { return std::floor(x + 0.5); }

double geo_radians(double v) {
    const double deg = std::trunc(v);
    const double min = v - deg;
    return kTsplibPi * (deg + 5.0 * min / 3.0) / 180.0;
}

}  // namespace

double point_distance(const Point& a, const Point& b, Metric metric) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    switch (metric) {
        case Metric::euclid: return std::sqrt(dx * dx + dy * dy);
        case Metric::manhattan: return std::abs(dx) + std::abs(dy);
        case Metric::euc_2d: return nint(std::sqrt(dx * dx + dy * dy));
        case Metric::ceil_2d: return std::ceil(std::sqrt(dx * dx + dy * dy));
        case Metric::man_2d: return nint(std::abs(dx) + std::abs(dy));
        case Metric::att: {
            const double r = std::sqrt((dx * dx + dy * dy) / 10.0);
            const double t = nint(r);
            return t < r ? t + 1.0 : t;
        }
        case Metric::geo: {
            const double lat_a = geo_radians(a[0]), lon_a = geo_radians(a[1]);
            const double lat_b = geo_radians(b[0]), lon_b = geo_radians(b[1]);
            const double q1 = std::cos(lon_a - lon_b);
            const double q2 = std::cos(lat_a - lat_b);
            const double q3 = std::cos(lat_a + lat_b);
            const double arg = std::clamp(0.5 * ((1.0 + q1) * q2 - (1.0 - q1) * q3), -1.0, 1.0);
            return std::trunc(kEarthRadius * std::acos(arg) + 1.0);
        }
        case Metric::explicit_matrix: break;
    }
    throw ContractError("point_distance is undefined for explicit instances");
}

DistanceMatrix distance_matrix(const TspInstance& inst) {
    if (inst.metric == Metric::explicit_matrix) {
        if (!inst.explicit_matrix) throw ContractError("explicit metric requires a distance matrix");
        return DistanceMatrix(*inst.explicit_matrix);
    }
    const std::size_t n = inst.coords.size();
    SquareMatrix m(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = point_distance(inst.coords[i], inst.coords[j], inst.metric);
            m(i, j) = d;
            m(j, i) = d;
        }
    }
    return DistanceMatrix(std::move(m));
}

double tour_length(const Tour& tour, const DistanceMatrix& dm) {
    validate_tour(tour, dm.size());
    double total = dm(tour.back(), tour.front());
    for (std::size_t i = 0; i + 1 < tour.size(); ++i) total += dm(tour[i], tour[i + 1]);
    return total;
}

TspInstance normalize_coords(const TspInstance& inst) {
    Metric target;
    switch (inst.metric) {
        case Metric::euclid:
        case Metric::euc_2d:
        case Metric::ceil_2d: target = Metric::euclid; break;
        case Metric::manhattan:
        case Metric::man_2d: target = Metric::manhattan; break;
        default: throw ContractError("normalize_coords supports planar euclidean/manhattan instances only");
    }
    if (inst.coords.empty()) throw ContractError("normalize_coords needs coordinates");
    double lo_x = inst.coords[0][0], hi_x = lo_x, lo_y = inst.coords[0][1], hi_y = lo_y;
    for (const auto& p : inst.coords) {
        lo_x = std::min(lo_x, p[0]);
        hi_x = std::max(hi_x, p[0]);
        lo_y = std::min(lo_y, p[1]);
        hi_y = std::max(hi_y, p[1]);
    }
    const double span = std::max(hi_x - lo_x, hi_y - lo_y);
    if (!(span > 0.0)) throw ContractError("cannot normalize: all points coincide");
    TspInstance out = inst;
    out.metric = target;
    for (auto& p : out.coords) {
        p[0] = (p[0] - lo_x) / span;
        p[1] = (p[1] - lo_y) / span;
    }
    return out;
}

// ---------------------------------------------------------------------------

void CvrpInstance::validate() const {
    if (coords.empty()) throw ContractError("CVRP instance has no customers");
    if (demands.size() != coords.size()) throw ContractError("CVRP demand count must equal customer count");
    if (!(capacity > 0.0)) throw ContractError("CVRP capacity must be positive");
    for (double d : demands) {
        if (!(d > 0.0) || d > capacity) throw ContractError("CVRP demands must lie in (0, capacity]");
    }
}

DistanceMatrix CvrpInstance::distances() const {
    TspInstance all;
    all.metric = Metric::euclid;
    all.coords.reserve(coords.size() + 1);
    all.coords.push_back(depot);
    all.coords.insert(all.coords.end(), coords.begin(), coords.end());
    return distance_matrix(all);
}

void validate_cvrp_solution(const CvrpSolution& sol, const CvrpInstance& inst) {
    std::vector<int> seen(inst.customers(), 0);
    for (const auto& route : sol.routes) {
        if (route.empty()) throw ContractError("CVRP route is empty");
        double load = 0.0;
        for (auto c : route) {
            if (c >= inst.customers()) throw ContractError("CVRP route references an unknown customer");
            if (seen[c]++) throw ContractError("CVRP customer visited twice");
            load += inst.demands[c];
        }
        if (load > inst.capacity * (1.0 + 1e-12)) throw ContractError("CVRP route exceeds capacity");
    }
    for (int s : seen) {
        if (s != 1) throw ContractError("CVRP customer not visited");
    }
}

double cvrp_length(const CvrpSolution& sol, const CvrpInstance& inst) {
    double total = 0.0;
    for (const auto& route : sol.routes) {
        Point prev = inst.depot;
        for (auto c : route) {
            total += point_distance(prev, inst.coords[c], Metric::euclid);
            prev = inst.coords[c];
        }
        total += point_distance(prev, inst.depot, Metric::euclid);
    }
    return total;
}

}  // namespace nartsp
