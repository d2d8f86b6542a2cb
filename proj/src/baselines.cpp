#include "nartsp/baselines.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace nartsp {

std::string_view oracle_method_name(OracleMethod m) {
    return m == OracleMethod::brute_force ? "brute_force" : "held_karp";
}

Tour canonical_tour(const Tour& tour) {
    validate_tour(tour, tour.size());
    const std::size_t n = tour.size();
    const auto zero = static_cast<std::size_t>(std::find(tour.begin(), tour.end(), 0u) - tour.begin());
    Tour out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = tour[(zero + i) % n];
    if (n > 2 && out[1] > out[n - 1]) std::reverse(out.begin() + 1, out.end());
    return out;
}

namespace {

OracleResult finish(Tour tour, const DistanceMatrix& dm, OracleMethod method) {
    OracleResult r;
    r.tour = canonical_tour(tour);
    r.length = tour_length(r.tour, dm);
    r.method = method;
    return r;
}

}  // namespace

OracleResult brute_force(const DistanceMatrix& dm) {
    const std::size_t n = dm.size();
    if (n < 2) throw ContractError("brute_force needs n >= 2");
    if (n > kBruteForceMaxNodes) {
        throw ContractError("brute_force refuses n = " + std::to_string(n) + " (limit " + std::to_string(kBruteForceMaxNodes) + ")");
    }
    Tour perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    Tour best = perm;
    double best_len = std::numeric_limits<double>::infinity();
    do {
        if (n > 2 && perm[1] > perm[n - 1]) continue;  // mirror image of a cycle already seen
        double len = dm(perm[n - 1], perm[0]);
        for (std::size_t i = 0; i + 1 < n && len < best_len; ++i) len += dm(perm[i], perm[i + 1]);
        if (len < best_len) {
            best_len = len;
            best = perm;
        }
    } while (std::next_permutation(perm.begin() + 1, perm.end()));
    return finish(std::move(best), dm, OracleMethod::brute_force);
}

OracleResult brute_force(const TspInstance& inst) { return brute_force(distance_matrix(inst)); }

OracleResult held_karp(const DistanceMatrix& dm, std::size_t max_nodes) {
    const std::size_t n = dm.size();
    if (n < 2) throw ContractError("held_karp needs n >= 2");
    if (n > max_nodes) {
        throw ContractError("held_karp refuses n = " + std::to_string(n) + " (limit " + std::to_string(max_nodes) + ")");
    }
    if (n > 28) throw ContractError("held_karp cannot address more than 28 nodes");
    if (n == 2) return finish({0, 1}, dm, OracleMethod::held_karp);

    // Node k >= 1 is bit k-1; dp[S*m + j] is the cheapest path 0 -> ... -> j covering S.
    const std::size_t m = n - 1;
    const std::size_t full = (std::size_t{1} << m) - 1;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dp((full + 1) * m, inf);
    std::vector<std::uint8_t> parent((full + 1) * m, 0);
    for (std::size_t j = 0; j < m; ++j) dp[(std::size_t{1} << j) * m + j] = dm(0, j + 1);
    for (std::size_t S = 1; S <= full; ++S) {
        for (std::size_t j = 0; j < m; ++j) {
            if (!(S >> j & 1)) continue;
            const double base = dp[S * m + j];
            if (base == inf) continue;
            const double* row = dm.row(j + 1).data() + 1;
            for (std::size_t k = 0; k < m; ++k) {
                if (S >> k & 1) continue;
                const std::size_t T = S | (std::size_t{1} << k);
                const double c = base + row[k];
                if (c < dp[T * m + k]) {
                    dp[T * m + k] = c;
                    parent[T * m + k] = static_cast<std::uint8_t>(j);
                }
            }
        }
    }
    std::size_t last = 0;
    double best = inf;
    for (std::size_t j = 0; j < m; ++j) {
        const double c = dp[full * m + j] + dm(j + 1, 0);
        if (c < best) {
            best = c;
            last = j;
        }
    }
    Tour tour(n);
    tour[0] = 0;
    std::size_t S = full;
    std::size_t j = last;
    for (std::size_t pos = n - 1; pos >= 1; --pos) {
        tour[pos] = static_cast<std::uint32_t>(j + 1);
        const std::size_t prev = parent[S * m + j];
        S &= ~(std::size_t{1} << j);
        j = prev;
    }
    return finish(std::move(tour), dm, OracleMethod::held_karp);
}

OracleResult held_karp(const TspInstance& inst, std::size_t max_nodes) { return held_karp(distance_matrix(inst), max_nodes); }

namespace {

template <typename Better>
Tour insertion(const DistanceMatrix& dm, Better better_pair, bool farthest) {
    const std::size_t n = dm.size();
    if (n < 3) throw ContractError("insertion heuristics need n >= 3");
    std::size_t a = 0, b = 1;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (better_pair(dm(i, j), dm(a, b))) {
                a = i;
                b = j;
            }
    Tour tour{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    tour.reserve(n);
    std::vector<std::uint8_t> in(n, 0);
    in[a] = in[b] = 1;
    std::vector<double> gap(n);
    for (std::size_t k = 0; k < n; ++k) gap[k] = std::min(dm(k, a), dm(k, b));

    while (tour.size() < n) {
        std::size_t pick = n;
        for (std::size_t k = 0; k < n; ++k) {
            if (in[k]) continue;
            if (pick == n || (farthest ? gap[k] > gap[pick] : gap[k] < gap[pick])) pick = k;
        }
        std::size_t pos = 0;
        double cost = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < tour.size(); ++i) {
            const auto u = tour[i], v = tour[(i + 1) % tour.size()];
            const double c = dm(u, pick) + dm(pick, v) - dm(u, v);
            if (c < cost) {
                cost = c;
                pos = i + 1;
            }
        }
        tour.insert(tour.begin() + static_cast<std::ptrdiff_t>(pos), static_cast<std::uint32_t>(pick));
        in[pick] = 1;
        for (std::size_t k = 0; k < n; ++k) gap[k] = std::min(gap[k], dm(k, pick));
    }
    return tour;
}

}  // namespace

Tour nearest_insertion(const DistanceMatrix& dm) {
    return insertion(dm, [](double x, double best) { return x < best; }, false);
}

Tour farthest_insertion(const DistanceMatrix& dm) {
    return insertion(dm, [](double x, double best) { return x > best; }, true);
}

Tour two_opt(const Tour& tour, const DistanceMatrix& dm, std::size_t max_passes) {
    const std::size_t n = dm.size();
    validate_tour(tour, n);
    Tour t = tour;
    if (n < 4) return t;
    for (std::size_t pass = 0; pass < max_passes; ++pass) {
        bool improved = false;
        for (std::size_t i = 0; i + 2 < n; ++i) {
            for (std::size_t j = i + 2; j < n; ++j) {
                if (i == 0 && j == n - 1) continue;  // edges share node t[0]
                const auto a = t[i], b = t[i + 1], c = t[j], d = t[(j + 1) % n];
                const double delta = dm(a, c) + dm(b, d) - dm(a, b) - dm(c, d);
                if (delta < -1e-12) {
                    std::reverse(t.begin() + static_cast<std::ptrdiff_t>(i) + 1, t.begin() + static_cast<std::ptrdiff_t>(j) + 1);
                    improved = true;
                }
            }
        }
        if (!improved) break;
    }
    return t;
}

}  // namespace nartsp
