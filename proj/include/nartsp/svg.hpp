#pragma once

#include <string>

#include "nartsp/instances.hpp"

namespace nartsp {

/// Nodes as circles and the tour as a closed path, scaled into a unit viewBox.
std::string render_tour_svg(const TspInstance& inst, const Tour& tour);

/// Depot as a square; each route a closed path in its own color.
std::string render_cvrp_svg(const CvrpInstance& inst, const CvrpSolution& sol);

}  // namespace nartsp
