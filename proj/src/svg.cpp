#include "nartsp/svg.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace nartsp {

namespace {

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#17becf"};

// Maps the bounding box into [margin, 1 - margin] keeping the aspect ratio.
// SVG's y axis points down, so y is flipped.
class Frame {
public:
    explicit Frame(const std::vector<Point>& pts) {
        if (pts.empty()) throw ContractError("nothing to render: no coordinates");
        lo_ = hi_ = pts[0];
        for (const auto& p : pts) {
            lo_[0] = std::min(lo_[0], p[0]);
            lo_[1] = std::min(lo_[1], p[1]);
            hi_[0] = std::max(hi_[0], p[0]);
            hi_[1] = std::max(hi_[1], p[1]);
        }
        span_ = std::max({hi_[0] - lo_[0], hi_[1] - lo_[1], 1e-12});
    }
    double x(const Point& p) const { return kMargin + (1 - 2 * kMargin) * (p[0] - lo_[0]) / span_; }
    double y(const Point& p) const { return 1 - kMargin - (1 - 2 * kMargin) * (p[1] - lo_[1]) / span_; }

private:
    static constexpr double kMargin = 0.04;
    Point lo_{}, hi_{};
    double span_ = 1.0;
};

std::string header() {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1 1\" width=\"640\" height=\"640\">\n"
           "<rect x=\"0\" y=\"0\" width=\"1\" height=\"1\" fill=\"white\"/>\n";
}

void path(std::ostringstream& os, const Frame& f, const std::vector<Point>& pts, const char* color) {
    os << "<path fill=\"none\" stroke=\"" << color << "\" stroke-width=\"0.004\" stroke-linejoin=\"round\" d=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) os << (i ? " L" : "M") << f.x(pts[i]) << ' ' << f.y(pts[i]);
    os << " Z\"/>\n";
}

}  // namespace

std::string render_tour_svg(const TspInstance& inst, const Tour& tour) {
    validate_tour(tour, inst.size());
    if (!inst.has_coords()) throw ContractError("rendering needs node coordinates");
    const Frame f(inst.coords);
    std::ostringstream os;
    os.precision(6);
    os << header();
    std::vector<Point> pts;
    for (auto v : tour) pts.push_back(inst.coords[v]);
    path(os, f, pts, kPalette[0]);
    for (const auto& p : inst.coords) os << "<circle cx=\"" << f.x(p) << "\" cy=\"" << f.y(p) << "\" r=\"0.008\" fill=\"black\"/>\n";
    os << "</svg>\n";
    return os.str();
}

std::string render_cvrp_svg(const CvrpInstance& inst, const CvrpSolution& sol) {
    validate_cvrp_solution(sol, inst);
    std::vector<Point> all{inst.depot};
    all.insert(all.end(), inst.coords.begin(), inst.coords.end());
    const Frame f(all);
    std::ostringstream os;
    os.precision(6);
    os << header();
    for (std::size_t r = 0; r < sol.routes.size(); ++r) {
        std::vector<Point> pts{inst.depot};
        for (auto c : sol.routes[r]) pts.push_back(inst.coords[c]);
        path(os, f, pts, kPalette[r % kPalette.size()]);
    }
    for (const auto& p : inst.coords) os << "<circle cx=\"" << f.x(p) << "\" cy=\"" << f.y(p) << "\" r=\"0.008\" fill=\"black\"/>\n";
    os << "<rect x=\"" << f.x(inst.depot) - 0.012 << "\" y=\"" << f.y(inst.depot) - 0.012
       << "\" width=\"0.024\" height=\"0.024\" fill=\"#d62728\"/>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace nartsp
