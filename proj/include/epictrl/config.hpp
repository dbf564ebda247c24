#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "epictrl/ctmc.hpp"
#include "epictrl/rates.hpp"

namespace epictrl {

/// Configuration problems exit with code 2 at the CLI.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Line-oriented `section.key = value` configuration. Values are strings,
/// numbers, or comma-separated lists; `#` starts a comment.
class Config {
public:
    static Config parse_string(const std::string& text) {
        Config cfg;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string stripped = strip_comment(line);
            const std::string t = trim(stripped);
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty() || key.find('.') == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": keys take the form section.name");
            cfg.kv_[key] = value;
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str());
    }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const {
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    std::string require_str(const std::string& key) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) throw ConfigError("missing config key: " + key);
        return it->second;
    }

    double get_num(const std::string& key, double fallback) const {
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : to_num(key, it->second);
    }

    double require_num(const std::string& key) const { return to_num(key, require_str(key)); }

    int get_int(const std::string& key, int fallback) const {
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : to_int(key, it->second);
    }

    int require_int(const std::string& key) const { return to_int(key, require_str(key)); }

    std::vector<double> get_num_list(const std::string& key, std::vector<double> fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::vector<double> out;
        for (const auto& tok : split(it->second, ',')) out.push_back(to_num(key, trim(tok)));
        return out;
    }

    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::vector<int> out;
        for (const auto& tok : split(it->second, ',')) out.push_back(to_int(key, trim(tok)));
        return out;
    }

    /// Reject keys outside the declared schema (exact match or `section.*`).
    void ensure_known(const std::vector<std::string>& allowed) const {
        for (const auto& [key, value] : kv_) {
            bool ok = false;
            for (const auto& pat : allowed) {
                if (pat == key) {
                    ok = true;
                    break;
                }
                if (pat.size() > 1 && pat.back() == '*' &&
                    key.rfind(pat.substr(0, pat.size() - 1), 0) == 0) {
                    ok = true;
                    break;
                }
            }
            if (!ok) throw ConfigError("unknown config key: " + key);
        }
    }

    /// Canonical echo: sorted `key = value` lines (std::map keeps keys sorted).
    std::string canonical() const {
        std::string out;
        for (const auto& [key, value] : kv_) out += key + " = " + value + "\n";
        return out;
    }

    /// FNV-1a 64-bit over the canonical text.
    std::uint64_t hash() const {
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (char c : canonical()) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ull;
        }
        return h;
    }

    const std::map<std::string, std::string>& entries() const noexcept { return kv_; }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static std::string strip_comment(const std::string& s) {
        const auto p = s.find('#');
        return p == std::string::npos ? s : s.substr(0, p);
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == sep) {
                out.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        out.push_back(cur);
        return out;
    }

    static double to_num(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            const double x = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": expected a number, got '" + v + "'");
        }
    }

    static int to_int(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            const long x = std::stol(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return static_cast<int>(x);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": expected an integer, got '" + v + "'");
        }
    }

    std::map<std::string, std::string> kv_;
};

namespace config_detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double num(const std::string& context, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(context + ": expected a number, got '" + v + "'");
    }
}

}  // namespace config_detail

/// Schedule literals: `constant:2.0`, `sinusoidal:base,amp,period[,phase]`,
/// `piecewise:t0:v0;t1:v1;...`.
inline RateSchedule parse_schedule(const std::string& spec, const std::string& key) {
    const auto colon = spec.find(':');
    const std::string kind = colon == std::string::npos ? spec : spec.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    try {
        if (kind == "constant") return RateSchedule::constant(config_detail::num(key, rest));
        if (kind == "sinusoidal") {
            const auto parts = config_detail::split(rest, ',');
            if (parts.size() < 3 || parts.size() > 4)
                throw ConfigError(key + ": sinusoidal takes base,amp,period[,phase]");
            return RateSchedule::sinusoidal(
                config_detail::num(key, parts[0]), config_detail::num(key, parts[1]),
                config_detail::num(key, parts[2]),
                parts.size() == 4 ? config_detail::num(key, parts[3]) : 0.0);
        }
        if (kind == "piecewise") {
            std::vector<std::pair<double, double>> pts;
            for (const auto& seg : config_detail::split(rest, ';')) {
                const auto tv = config_detail::split(seg, ':');
                if (tv.size() != 2) throw ConfigError(key + ": piecewise segments take t:value");
                pts.emplace_back(config_detail::num(key, tv[0]), config_detail::num(key, tv[1]));
            }
            return RateSchedule::piecewise_linear(std::move(pts));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
    }
    throw ConfigError(key + ": unknown schedule kind '" + kind + "'");
}

/// x* literals: a number, `golden` for the golden-ratio conjugate, or `p/q`.
inline double parse_x_star(const std::string& v, const std::string& key) {
    if (v == "golden") return (std::sqrt(5.0) - 1.0) / 2.0;
    const auto slash = v.find('/');
    if (slash != std::string::npos) {
        const double p = config_detail::num(key, v.substr(0, slash));
        const double q = config_detail::num(key, v.substr(slash + 1));
        if (q == 0.0) throw ConfigError(key + ": zero denominator");
        return p / q;
    }
    return config_detail::num(key, v);
}

/// Profit block: `profit.kind` plus kind-specific parameters.
inline ProfitSpec parse_profit(const Config& cfg) {
    const std::string kind = cfg.get_str("profit.kind", "quadratic");
    const double mass = cfg.get_num("profit.c", 1.0);
    try {
        if (kind == "quadratic")
            return ProfitSpec::quadratic(parse_x_star(cfg.require_str("profit.x_star"), "profit.x_star"),
                                         cfg.get_num("profit.curvature", 1.0),
                                         cfg.get_num("profit.peak", 0.0), mass);
        if (kind == "linear")
            return ProfitSpec::linear(cfg.get_num("profit.slope", 1.0),
                                      cfg.get_num("profit.intercept", 0.0), mass);
        if (kind == "table") {
            std::vector<std::pair<double, double>> pts;
            for (const auto& seg : config_detail::split(cfg.require_str("profit.points"), ';')) {
                const auto xy = config_detail::split(seg, ':');
                if (xy.size() != 2) throw ConfigError("profit.points: segments take x:value");
                pts.emplace_back(config_detail::num("profit.points", xy[0]),
                                 config_detail::num("profit.points", xy[1]));
            }
            return ProfitSpec::table(std::move(pts), mass);
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("profit block: ") + e.what());
    }
    throw ConfigError("profit.kind: unknown kind '" + kind + "'");
}

/// Cost block: zero (default), linear, or a general `lambda:mu:cost;...` table.
inline ActionCostSpec parse_action_cost(const Config& cfg) {
    const std::string kind = cfg.get_str("cost.kind", "zero");
    try {
        if (kind == "zero") return ActionCostSpec::zero();
        if (kind == "linear")
            return ActionCostSpec::linear(cfg.get_num("cost.c_lambda", 0.0),
                                          cfg.get_num("cost.c_mu", 0.0));
        if (kind == "general") {
            std::vector<ActionCostSpec::Entry> table;
            for (const auto& seg : config_detail::split(cfg.require_str("cost.table"), ';')) {
                const auto lmc = config_detail::split(seg, ':');
                if (lmc.size() != 3) throw ConfigError("cost.table: entries take lambda:mu:cost");
                table.push_back({config_detail::num("cost.table", lmc[0]),
                                 config_detail::num("cost.table", lmc[1]),
                                 config_detail::num("cost.table", lmc[2])});
            }
            return ActionCostSpec::general(std::move(table));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("cost block: ") + e.what());
    }
    throw ConfigError("cost.kind: unknown kind '" + kind + "'");
}

/// Initial-condition literals: `state:10`, `fraction:0.1`, `dist:p0,p1,...`.
inline InitialCondition parse_initial(const std::string& spec, int n, const std::string& key) {
    const auto colon = spec.find(':');
    const std::string kind = colon == std::string::npos ? spec : spec.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    try {
        if (kind == "state")
            return InitialCondition::state(static_cast<int>(config_detail::num(key, rest)));
        if (kind == "fraction") {
            const double f = config_detail::num(key, rest);
            if (!(f >= 0.0 && f <= 1.0)) throw ConfigError(key + ": fraction outside [0, 1]");
            return InitialCondition::state(static_cast<int>(std::llround(f * n)));
        }
        if (kind == "dist") {
            std::vector<double> probs;
            for (const auto& tok : config_detail::split(rest, ','))
                probs.push_back(config_detail::num(key, tok));
            return InitialCondition::distribution(std::move(probs));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
    }
    throw ConfigError(key + ": unknown initial-condition kind '" + kind + "'");
}

inline Preset parse_preset(const std::string& v, const std::string& key) {
    if (v == "paper") return Preset::paper;
    if (v == "sis") return Preset::sis;
    throw ConfigError(key + ": preset must be 'paper' or 'sis'");
}

}  // namespace epictrl
