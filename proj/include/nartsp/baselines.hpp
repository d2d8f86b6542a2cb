#pragma once

#include <string_view>

#include "nartsp/instances.hpp"

namespace nartsp {

enum class OracleMethod { brute_force, held_karp };

std::string_view oracle_method_name(OracleMethod m);

struct OracleResult {
    Tour tour;
    double length = 0.0;
    OracleMethod method = OracleMethod::held_karp;
};

inline constexpr std::size_t kBruteForceMaxNodes = 10;
inline constexpr std::size_t kHeldKarpDefaultMaxNodes = 16;

/// Exhaustive search with node 0 fixed and mirrored cycles skipped.
OracleResult brute_force(const DistanceMatrix& dm);
OracleResult brute_force(const TspInstance& inst);

/// Subset dynamic program, O(2^n n^2) time and O(2^n n) memory. Instances
/// above `max_nodes` are refused.
OracleResult held_karp(const DistanceMatrix& dm, std::size_t max_nodes = kHeldKarpDefaultMaxNodes);
OracleResult held_karp(const TspInstance& inst, std::size_t max_nodes = kHeldKarpDefaultMaxNodes);

/// Rotates and orients a tour so it starts at node 0 with tour[1] < tour[n-1].
Tour canonical_tour(const Tour& tour);

/// Start from the closest pair; repeatedly insert the node nearest the
/// cycle at its cheapest position.
Tour nearest_insertion(const DistanceMatrix& dm);

/// Start from the farthest pair; repeatedly insert the node farthest from
/// the cycle at its cheapest position.
Tour farthest_insertion(const DistanceMatrix& dm);

/// First-improvement 2-opt, at most `max_passes` sweeps over all pairs.
Tour two_opt(const Tour& tour, const DistanceMatrix& dm, std::size_t max_passes = 1000);

}  // namespace nartsp
