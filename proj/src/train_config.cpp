#include "nartsp/train_config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace nartsp {

void TrainConfig::validate() const {
    model.validate();
    if (n < 2) throw ConfigError("instance size n must be at least 2");
    if (epochs == 0 || steps == 0 || batch == 0 || val_size == 0 || val_batch == 0) {
        throw ConfigError("epochs, steps, batch, val_size and val_batch must be positive");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
    if (model.input_dim != 2) throw ConfigError("TSP training needs model.input_dim = 2");
    if (metric != Metric::euclid && metric != Metric::manhattan) throw ConfigError("training metric must be euclid or manhattan");
}

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.model = ModelConfig::desk();
    c.n = 20;
    c.epochs = 80;
    c.steps = 250;
    c.batch = 64;
    c.val_size = 1000;
    c.lr = 1e-4;
    return c;
}

std::string critic_mode_name(CriticMode m) { return m == CriticMode::enhanced ? "enhanced" : "original_two_module"; }

std::string advantage_mode_name(AdvantageMode m) { return m == AdvantageMode::centered ? "centered" : "literal"; }

namespace {

std::string fmt(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

template <typename U>
U parse_unsigned(const std::string& key, const std::string& s) {
    U v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("invalid integer for " + key + ": '" + s + "'");
    return v;
}

double parse_double(const std::string& key, const std::string& s) {
    double v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("invalid number for " + key + ": '" + s + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "on") return true;
    if (s == "false" || s == "0" || s == "off") return false;
    throw ConfigError("invalid boolean for " + key + ": '" + s + "'");
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    std::string out(s.substr(b, e - b + 1));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

}  // namespace

std::map<std::string, std::string> to_key_values(const TrainConfig& c) {
    return {
        {"model.hidden", std::to_string(c.model.hidden)},
        {"model.gnn_layers", std::to_string(c.model.gnn_layers)},
        {"model.fc_layers", std::to_string(c.model.fc_layers)},
        {"model.heads", std::to_string(c.model.heads)},
        {"model.leaky_slope", fmt(c.model.leaky_slope)},
        {"model.neighbor_divisor", std::to_string(c.model.neighbor_divisor)},
        {"model.neighbor_threshold", std::to_string(c.model.neighbor_threshold)},
        {"model.pointer", c.model.pointer_enabled ? "true" : "false"},
        {"model.input_dim", std::to_string(c.model.input_dim)},
        {"n", std::to_string(c.n)},
        {"epochs", std::to_string(c.epochs)},
        {"steps", std::to_string(c.steps)},
        {"batch", std::to_string(c.batch)},
        {"val_size", std::to_string(c.val_size)},
        {"val_batch", std::to_string(c.val_batch)},
        {"lr", fmt(c.lr)},
        {"seed", std::to_string(c.seed)},
        {"val_seed", std::to_string(c.val_seed)},
        {"critic", critic_mode_name(c.critic)},
        {"advantage", advantage_mode_name(c.advantage)},
        {"metric", std::string(metric_name(c.metric))},
    };
}

void apply_key_value(TrainConfig& c, const std::string& key, const std::string& value) {
    using sz = std::size_t;
    if (key == "model.hidden") c.model.hidden = parse_unsigned<sz>(key, value);
    else if (key == "model.gnn_layers") c.model.gnn_layers = parse_unsigned<sz>(key, value);
    else if (key == "model.fc_layers") c.model.fc_layers = parse_unsigned<sz>(key, value);
    else if (key == "model.heads") c.model.heads = parse_unsigned<sz>(key, value);
    else if (key == "model.leaky_slope") c.model.leaky_slope = parse_double(key, value);
    else if (key == "model.neighbor_divisor") c.model.neighbor_divisor = parse_unsigned<sz>(key, value);
    else if (key == "model.neighbor_threshold") c.model.neighbor_threshold = parse_unsigned<sz>(key, value);
    else if (key == "model.pointer") c.model.pointer_enabled = parse_bool(key, value);
    else if (key == "model.input_dim") c.model.input_dim = parse_unsigned<sz>(key, value);
    else if (key == "n") c.n = parse_unsigned<sz>(key, value);
    else if (key == "epochs") c.epochs = parse_unsigned<sz>(key, value);
    else if (key == "steps") c.steps = parse_unsigned<sz>(key, value);
    else if (key == "batch") c.batch = parse_unsigned<sz>(key, value);
    else if (key == "val_size") c.val_size = parse_unsigned<sz>(key, value);
    else if (key == "val_batch") c.val_batch = parse_unsigned<sz>(key, value);
    else if (key == "lr") c.lr = parse_double(key, value);
    else if (key == "seed") c.seed = parse_unsigned<std::uint64_t>(key, value);
    else if (key == "val_seed") c.val_seed = parse_unsigned<std::uint64_t>(key, value);
    else if (key == "critic") {
        if (value == "enhanced") c.critic = CriticMode::enhanced;
        else if (value == "original_two_module" || value == "original") c.critic = CriticMode::original_two_module;
        else throw ConfigError("critic must be enhanced or original_two_module");
    } else if (key == "advantage") {
        if (value == "centered") c.advantage = AdvantageMode::centered;
        else if (value == "literal") c.advantage = AdvantageMode::literal;
        else throw ConfigError("advantage must be centered or literal");
    } else if (key == "metric") {
        try {
            c.metric = parse_metric(value);
        } catch (const ParseError& e) {
            throw ConfigError(e.what());
        }
    } else {
        throw ConfigError("unknown configuration key '" + key + "'");
    }
}

std::map<std::string, std::string> parse_key_value_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty() || trim(line).front() == '[') continue;  // blank or a section header
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected key = value");
        const auto key = trim(std::string_view(line).substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(no) + ": empty key");
        out[key] = trim(std::string_view(line).substr(eq + 1));
    }
    return out;
}

}  // namespace nartsp
