#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "nartsp/instances.hpp"
#include "nartsp/io.hpp"

namespace nartsp {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

bool parse_number(const std::string& tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

// Whitespace tokens with the line each came from, so section readers can
// stop at the next keyword.
struct Token {
    std::string text;
    std::size_t line;
};

class Cursor {
public:
    explicit Cursor(std::vector<Token> toks) : toks_(std::move(toks)) {}
    bool done() const { return pos_ >= toks_.size(); }
    const Token& peek() const { return toks_[pos_]; }
    const Token& next() { return toks_[pos_++]; }

    bool peek_number() const {
        double v;
        return !done() && parse_number(peek().text, v);
    }

    double number(const std::string& what) {
        if (done()) throw ParseError("DIMENSION mismatch: " + what + " ended early");
        double v;
        const Token& t = next();
        if (!parse_number(t.text, v)) {
            throw ParseError("DIMENSION mismatch: expected a number in " + what + " at line " +
                             std::to_string(t.line) + ", got '" + t.text + "'");
        }
        return v;
    }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

const std::map<std::string, Metric>& weight_types() {
    static const std::map<std::string, Metric> m{
        {"EUC_2D", Metric::euc_2d}, {"CEIL_2D", Metric::ceil_2d}, {"MAN_2D", Metric::man_2d},
        {"ATT", Metric::att},       {"GEO", Metric::geo},         {"EXPLICIT", Metric::explicit_matrix},
    };
    return m;
}

std::string weight_type_name(Metric m) {
    switch (m) {
        case Metric::euclid:
        case Metric::euc_2d: return "EUC_2D";
        case Metric::manhattan:
        case Metric::man_2d: return "MAN_2D";
        case Metric::ceil_2d: return "CEIL_2D";
        case Metric::att: return "ATT";
        case Metric::geo: return "GEO";
        case Metric::explicit_matrix: return "EXPLICIT";
    }
    return "EUC_2D";
}

std::vector<Point> read_coords(Cursor& cur, std::size_t dim, const std::string& section) {
    std::vector<Point> coords(dim);
    std::vector<std::uint8_t> seen(dim, 0);
    for (std::size_t k = 0; k < dim; ++k) {
        const double id = cur.number(section);
        const double x = cur.number(section);
        const double y = cur.number(section);
        if (id < 1 || id > static_cast<double>(dim) || id != std::floor(id)) {
            throw ParseError(section + ": node id " + format_number(id) + " outside 1.." + std::to_string(dim));
        }
        const auto idx = static_cast<std::size_t>(id) - 1;
        if (seen[idx]++) throw ParseError(section + ": duplicate node id " + format_number(id));
        coords[idx] = {x, y};
    }
    if (cur.peek_number()) throw ParseError("DIMENSION mismatch: " + section + " has more than " + std::to_string(dim) + " nodes");
    return coords;
}

SquareMatrix read_weights(Cursor& cur, std::size_t n, const std::string& format) {
    SquareMatrix m(n, 0.0);
    const std::string what = "EDGE_WEIGHT_SECTION";
    auto set = [&](std::size_t i, std::size_t j, double v) {
        m(i, j) = v;
        m(j, i) = v;
    };
    if (format == "FULL_MATRIX") {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) m(i, j) = cur.number(what);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (m(i, j) != m(j, i)) throw ParseError("FULL_MATRIX is not symmetric (asymmetric TSP unsupported)");
    } else if (format == "UPPER_ROW") {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) set(i, j, cur.number(what));
    } else if (format == "LOWER_ROW") {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < i; ++j) set(i, j, cur.number(what));
    } else if (format == "UPPER_DIAG_ROW") {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) set(i, j, cur.number(what));
    } else if (format == "LOWER_DIAG_ROW") {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) set(i, j, cur.number(what));
    } else {
        throw ParseError("unsupported EDGE_WEIGHT_FORMAT '" + format + "'");
    }
    if (cur.peek_number()) throw ParseError("DIMENSION mismatch: EDGE_WEIGHT_SECTION has extra values");
    return m;
}

}  // namespace

TspInstance parse_tsplib(std::string_view text) {
    std::vector<Token> toks;
    {
        std::size_t line_no = 0;
        std::istringstream lines{std::string(text)};
        std::string line;
        while (std::getline(lines, line)) {
            ++line_no;
            // "KEY: VALUE" and "KEY : VALUE" both tokenize as KEY, :, VALUE.
            std::string spaced;
            for (char c : line) {
                if (c == ':') {
                    spaced += " : ";
                } else {
                    spaced += c;
                }
            }
            std::istringstream ws(spaced);
            std::string tok;
            while (ws >> tok) toks.push_back({tok, line_no});
        }
    }

    std::map<std::string, std::string> header;
    std::optional<std::vector<Point>> coords;
    std::optional<std::vector<Point>> display;
    std::optional<SquareMatrix> weights;

    Cursor cur(toks);
    auto dimension = [&]() -> std::size_t {
        auto it = header.find("DIMENSION");
        if (it == header.end()) throw ParseError("DIMENSION must precede data sections");
        double d;
        if (!parse_number(it->second, d) || d < 2 || d != std::floor(d)) throw ParseError("invalid DIMENSION '" + it->second + "'");
        return static_cast<std::size_t>(d);
    };

    while (!cur.done()) {
        const Token key = cur.next();
        const std::string k = upper(key.text);
        if (k == "EOF") break;
        if (k == "NODE_COORD_SECTION") {
            coords = read_coords(cur, dimension(), k);
        } else if (k == "DISPLAY_DATA_SECTION") {
            display = read_coords(cur, dimension(), k);
        } else if (k == "EDGE_WEIGHT_SECTION") {
            auto fmt = header.find("EDGE_WEIGHT_FORMAT");
            weights = read_weights(cur, dimension(), fmt == header.end() ? "FULL_MATRIX" : upper(fmt->second));
        } else if (k == "TOUR_SECTION" || k == "DEMAND_SECTION" || k == "DEPOT_SECTION" ||
                   k == "FIXED_EDGES_SECTION") {
            throw ParseError("unsupported TSPLIB section " + k);
        } else {
            if (cur.done() || cur.peek().text != ":") throw ParseError("expected ':' after " + key.text + " at line " + std::to_string(key.line));
            cur.next();
            // Values such as COMMENT hold spaces; take the rest of the line.
            std::string value;
            while (!cur.done() && cur.peek().line == key.line) {
                if (!value.empty()) value += ' ';
                value += cur.next().text;
            }
            header[k] = trim(value);
        }
    }

    for (const char* req : {"NAME", "DIMENSION", "EDGE_WEIGHT_TYPE"}) {
        if (!header.count(req)) throw ParseError(std::string("missing TSPLIB keyword ") + req);
    }
    if (auto it = header.find("TYPE"); it != header.end()) {
        const auto type = upper(it->second);
        if (type != "TSP") throw ParseError("unsupported TSPLIB TYPE '" + it->second + "'");
    }
    const auto wt = upper(header["EDGE_WEIGHT_TYPE"]);
    auto mit = weight_types().find(wt);
    if (mit == weight_types().end()) throw ParseError("unknown EDGE_WEIGHT_TYPE '" + wt + "'");

    TspInstance inst;
    inst.name = header["NAME"];
    inst.metric = mit->second;
    const std::size_t dim = dimension();
    if (inst.metric == Metric::explicit_matrix) {
        if (!weights) throw ParseError("EXPLICIT instance lacks EDGE_WEIGHT_SECTION");
        for (std::size_t i = 0; i < dim; ++i) {
            if ((*weights)(i, i) != 0.0) throw ParseError("EXPLICIT matrix must have a zero diagonal");
        }
        inst.explicit_matrix = std::move(weights);
        if (display) inst.coords = std::move(*display);
        else if (coords) inst.coords = std::move(*coords);
    } else {
        if (!coords) throw ParseError("instance lacks NODE_COORD_SECTION");
        inst.coords = std::move(*coords);
    }
    inst.validate();
    return inst;
}

TspInstance load_tsplib(const std::string& path) { return parse_tsplib(read_file(path)); }

std::string write_tsplib(const TspInstance& inst) {
    inst.validate();
    std::ostringstream os;
    os << "NAME : " << (inst.name.empty() ? "unnamed" : inst.name) << "\n";
    os << "TYPE : TSP\n";
    os << "DIMENSION : " << inst.size() << "\n";
    os << "EDGE_WEIGHT_TYPE : " << weight_type_name(inst.metric) << "\n";
    if (inst.metric == Metric::explicit_matrix) {
        os << "EDGE_WEIGHT_FORMAT : FULL_MATRIX\n";
        if (inst.has_coords()) os << "DISPLAY_DATA_TYPE : TWOD_DISPLAY\n";
        os << "EDGE_WEIGHT_SECTION\n";
        const auto& m = *inst.explicit_matrix;
        for (std::size_t i = 0; i < m.size(); ++i) {
            for (std::size_t j = 0; j < m.size(); ++j) os << (j ? " " : "") << format_number(m(i, j));
            os << "\n";
        }
        if (inst.has_coords()) {
            os << "DISPLAY_DATA_SECTION\n";
            for (std::size_t i = 0; i < inst.coords.size(); ++i)
                os << i + 1 << " " << format_number(inst.coords[i][0]) << " " << format_number(inst.coords[i][1]) << "\n";
        }
    } else {
        os << "NODE_COORD_SECTION\n";
        for (std::size_t i = 0; i < inst.coords.size(); ++i)
            os << i + 1 << " " << format_number(inst.coords[i][0]) << " " << format_number(inst.coords[i][1]) << "\n";
    }
    os << "EOF\n";
    return os.str();
}

}  // namespace nartsp
