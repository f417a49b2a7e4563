// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>

#include "pogmdm/sampler.hpp"
#include "pogmdm/training.hpp"

namespace pogmdm::config {

// Flat TOML subset: [table] headers, key = value with strings, booleans,
// integers and floats, '#' comments. Arrays and inline tables are rejected.

using Value = std::variant<bool, std::int64_t, double, std::string>;

class Table {
public:
    static Table parse(std::string_view text, const std::string& origin = "<string>") {
        Table t;
        std::string section;
        std::istringstream in{std::string(text)};
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto fail = [&](const std::string& what) {
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + what);
            };
            std::string s = strip(strip_comment(line));
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']' || s.size() < 3 || s[1] == '[') fail("bad table header");
                section = strip(s.substr(1, s.size() - 2));
                if (!valid_key(section)) fail("bad table name '" + section + "'");
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos) fail("expected key = value");
            const std::string key = strip(s.substr(0, eq));
            if (!valid_key(key)) fail("bad key '" + key + "'");
            const std::string full = section.empty() ? key : section + "." + key;
            if (t.values_.count(full)) fail("duplicate key '" + full + "'");
            try {
                t.values_[full] = parse_value(strip(s.substr(eq + 1)));
            } catch (const std::invalid_argument& e) {
                fail(e.what());
            }
        }
        return t;
    }

    static Table load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path.string());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, Value>& values() const { return values_; }

    double number(const std::string& key) const {
        const Value& v = at(key);
        if (auto* d = std::get_if<double>(&v)) return *d;
        if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
        throw std::invalid_argument("config key '" + key + "' must be a number");
    }
    std::int64_t integer(const std::string& key) const {
        if (auto* i = std::get_if<std::int64_t>(&at(key))) return *i;
        throw std::invalid_argument("config key '" + key + "' must be an integer");
    }
    bool boolean(const std::string& key) const {
        if (auto* b = std::get_if<bool>(&at(key))) return *b;
        throw std::invalid_argument("config key '" + key + "' must be true or false");
    }
    const std::string& string(const std::string& key) const {
        if (auto* s = std::get_if<std::string>(&at(key))) return *s;
        throw std::invalid_argument("config key '" + key + "' must be a string");
    }

private:
    const Value& at(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::invalid_argument("missing config key '" + key + "'");
        return it->second;
    }

    static std::string strip_comment(const std::string& s) {
        bool quoted = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
            if (s[i] == '#' && !quoted) return s.substr(0, i);
        }
        return s;
    }
    static std::string strip(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }
    static bool valid_key(const std::string& k) {
        if (k.empty()) return false;
        for (char c : k)
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
        return true;
    }

    static Value parse_value(const std::string& s) {
        if (s.empty()) throw std::invalid_argument("missing value");
        if (s == "true") return true;
        if (s == "false") return false;
        if (s.front() == '"') {
            if (s.size() < 2 || s.back() != '"') throw std::invalid_argument("unterminated string");
            std::string out;
            for (std::size_t i = 1; i + 1 < s.size(); ++i) {
                if (s[i] == '\\' && i + 2 < s.size()) {
                    const char e = s[++i];
                    out.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
                } else {
                    out.push_back(s[i]);
                }
            }
            return out;
        }
        if (s.front() == '[' || s.front() == '{') throw std::invalid_argument("arrays and inline tables unsupported");
        std::string digits;
        for (char c : s)
            if (c != '_') digits.push_back(c);
        const bool floating = digits.find_first_of(".eE") != std::string::npos || digits == "inf" ||
                              digits == "+inf" || digits == "-inf" || digits == "nan";
        const char* first = digits.data() + (digits.front() == '+' ? 1 : 0);
        const char* last = digits.data() + digits.size();
        if (!floating) {
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(first, last, v);
            if (ec == std::errc() && p == last) return v;
            throw std::invalid_argument("bad value '" + s + "'");
        }
        double v = 0.0;
        auto [p, ec] = std::from_chars(first, last, v);
        if (ec == std::errc() && p == last) return v;
        throw std::invalid_argument("bad value '" + s + "'");
    }

    std::map<std::string, Value> values_;
};

namespace detail {

inline std::size_t count_value(const Table& t, const std::string& key) {
    const std::int64_t v = t.integer(key);
    if (v < 0) throw std::invalid_argument("config key '" + key + "' must be nonnegative");
    return static_cast<std::size_t>(v);
}

inline void reject_unknown(const Table& t, const std::string& section, std::initializer_list<const char*> known) {
    const std::string prefix = section + ".";
    for (const auto& [key, value] : t.values()) {
        if (key.rfind(prefix, 0) != 0) continue;
        const std::string name = key.substr(prefix.size());
        bool ok = false;
        for (const char* k : known) ok = ok || name == k;
        if (!ok) throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

}  // namespace detail

/// Overrides fields present under [train].
inline void apply(const Table& t, TrainConfig& cfg) {
    const std::string s = "train.";
    detail::reject_unknown(t, "train", {"steps", "batch", "lr", "ema", "zeta_min", "zeta_max", "seed", "beta1",
                                        "beta2", "eps"});
    if (t.has(s + "steps")) cfg.steps = detail::count_value(t, s + "steps");
    if (t.has(s + "batch")) cfg.batch = detail::count_value(t, s + "batch");
    if (t.has(s + "lr")) cfg.lr = t.number(s + "lr");
    if (t.has(s + "ema")) cfg.ema_momentum = t.number(s + "ema");
    if (t.has(s + "zeta_min")) cfg.zeta_min = t.number(s + "zeta_min");
    if (t.has(s + "zeta_max")) cfg.zeta_max = t.number(s + "zeta_max");
    if (t.has(s + "seed")) cfg.seed = static_cast<std::uint64_t>(detail::count_value(t, s + "seed"));
    if (t.has(s + "beta1")) cfg.beta1 = t.number(s + "beta1");
    if (t.has(s + "beta2")) cfg.beta2 = t.number(s + "beta2");
    if (t.has(s + "eps")) cfg.eps = t.number(s + "eps");
    cfg.validate();
}

/// Overrides fields present under [sampler].
inline void apply(const Table& t, SamplerConfig& cfg) {
    const std::string s = "sampler.";
    detail::reject_unknown(t, "sampler", {"steps", "corrector_steps", "lambda", "mu", "zeta_min", "zeta_max", "snr",
                                          "n_posterior", "map_steps", "map_lr", "map_prior_weight", "map",
                                          "ccdf_start", "seed"});
    if (t.has(s + "steps")) cfg.steps = detail::count_value(t, s + "steps");
    if (t.has(s + "corrector_steps")) cfg.corrector_steps = detail::count_value(t, s + "corrector_steps");
    if (t.has(s + "lambda")) cfg.lambda = t.number(s + "lambda");
    if (t.has(s + "mu")) cfg.mu = t.number(s + "mu");
    if (t.has(s + "zeta_min")) cfg.zeta_min = t.number(s + "zeta_min");
    if (t.has(s + "zeta_max")) cfg.zeta_max = t.number(s + "zeta_max");
    if (t.has(s + "snr")) cfg.snr = t.number(s + "snr");
    if (t.has(s + "n_posterior")) cfg.n_posterior = detail::count_value(t, s + "n_posterior");
    if (t.has(s + "map_steps")) cfg.map_steps = detail::count_value(t, s + "map_steps");
    if (t.has(s + "map_lr")) cfg.map_lr = t.number(s + "map_lr");
    if (t.has(s + "map_prior_weight")) cfg.map_prior_weight = t.number(s + "map_prior_weight");
    if (t.has(s + "map")) cfg.map = t.boolean(s + "map");
    if (t.has(s + "ccdf_start")) cfg.ccdf_start = t.number(s + "ccdf_start");
    if (t.has(s + "seed")) cfg.seed = static_cast<std::uint64_t>(detail::count_value(t, s + "seed"));
    cfg.validate();
}

}  // namespace pogmdm::config
