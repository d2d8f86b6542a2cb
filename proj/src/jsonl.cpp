#include <sstream>

#include "json.hpp"
#include "nartsp/instances.hpp"
#include "nartsp/io.hpp"

namespace nartsp {

using nlohmann::json;

namespace {

json coords_json(const std::vector<Point>& pts) {
    json arr = json::array();
    for (const auto& p : pts) arr.push_back({p[0], p[1]});
    return arr;
}

std::vector<Point> coords_from(const json& arr) {
    std::vector<Point> pts;
    for (const auto& p : arr) {
        if (!p.is_array() || p.size() != 2) throw ParseError("coordinates must be [x, y] pairs");
        pts.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return pts;
}

}  // namespace

std::string to_json_line(const TspInstance& inst) {
    json j;
    j["name"] = inst.name;
    j["metric"] = std::string(metric_name(inst.metric));
    j["coords"] = coords_json(inst.coords);
    if (inst.explicit_matrix) {
        json m = json::array();
        for (std::size_t i = 0; i < inst.explicit_matrix->size(); ++i) {
            auto row = inst.explicit_matrix->row(i);
            m.push_back(std::vector<double>(row.begin(), row.end()));
        }
        j["matrix"] = std::move(m);
    }
    return j.dump();
}

std::string to_json_line(const CvrpInstance& inst) {
    json j;
    j["name"] = inst.name;
    j["metric"] = "euclid";
    std::vector<Point> all{inst.depot};
    all.insert(all.end(), inst.coords.begin(), inst.coords.end());
    j["coords"] = coords_json(all);
    std::vector<double> demands{0.0};
    demands.insert(demands.end(), inst.demands.begin(), inst.demands.end());
    j["demands"] = demands;
    j["capacity"] = inst.capacity;
    return j.dump();
}

InstanceRecord parse_json_line(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid JSON instance: ") + e.what());
    }
    InstanceRecord rec;
    try {
        const std::string name = j.value("name", std::string());
        const Metric metric = parse_metric(j.value("metric", std::string("euclid")));
        auto coords = coords_from(j.at("coords"));
        if (j.contains("demands")) {
            CvrpInstance c;
            c.name = name;
            const auto demands = j.at("demands").get<std::vector<double>>();
            if (coords.size() < 2 || demands.size() != coords.size()) {
                throw ParseError("CVRP record needs depot + customers with one demand each");
            }
            if (demands[0] != 0.0) throw ParseError("CVRP depot demand must be 0");
            c.depot = coords[0];
            c.coords.assign(coords.begin() + 1, coords.end());
            c.demands.assign(demands.begin() + 1, demands.end());
            c.capacity = j.value("capacity", 1.0);
            c.validate();
            rec.cvrp = std::move(c);
        } else {
            TspInstance t;
            t.name = name;
            t.metric = metric;
            t.coords = std::move(coords);
            if (j.contains("matrix")) {
                const auto rows = j.at("matrix").get<std::vector<std::vector<double>>>();
                SquareMatrix m(rows.size());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    if (rows[r].size() != rows.size()) throw ParseError("matrix must be square");
                    for (std::size_t c = 0; c < rows.size(); ++c) m(r, c) = rows[r][c];
                }
                t.explicit_matrix = std::move(m);
            }
            t.validate();
            rec.tsp = std::move(t);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed instance record: ") + e.what());
    } catch (const ContractError& e) {
        throw ParseError(std::string("invalid instance record: ") + e.what());
    }
    return rec;
}

std::vector<InstanceRecord> read_jsonl(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<InstanceRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse_json_line(line));
        } catch (const ParseError& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace nartsp
