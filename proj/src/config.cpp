#include "qgfbsde/config.hpp"

#include "qgfbsde/csv.hpp"
#include "qgfbsde/error.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace qgfbsde {

Grid GridOverrides::resolve(const Model& m) const {
    Grid g = default_grid(m, nx.value_or(401), nt.value_or(400));
    if (x_min) g.x_min = *x_min;
    if (x_max) g.x_max = *x_max;
    g.validate(m.x0());
    return g;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const std::map<std::string, std::set<std::string>, std::less<>> kSections = {
    {"forward", {"b", "sigma", "x0"}},
    {"backward", {"f", "g"}},
    {"time", {"T"}},
    {"pde", {"x_min", "x_max", "nx", "nt"}},
    {"mc", {"paths", "steps", "seed", "bins", "z_clip"}},
};

int to_int(const std::string& v, const std::string& key) {
    const long long n = parse_integer(v);
    if (n < -2147483647LL || n > 2147483647LL) throw ConfigError(key + " out of range");
    return static_cast<int>(n);
}

} // namespace

ModelConfig parse_model_config(std::string_view text) {
    struct Entry {
        std::string text;
        int line;
    };
    std::map<std::string, std::map<std::string, Entry>, std::less<>> values;
    std::string section;
    int lineno = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto fail = [&](const std::string& msg) -> ConfigError {
            return ConfigError("config line " + std::to_string(lineno) + ": " + msg);
        };
        if (line.front() == '[') {
            if (line.back() != ']') throw fail("unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (!kSections.contains(section)) throw fail("unknown section [" + section + "]");
            if (values.contains(section)) throw fail("duplicate section [" + section + "]");
            values[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw fail("expected 'key = value'");
        if (section.empty()) throw fail("key outside any section");
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (!kSections.at(section).contains(key)) throw fail("unknown key '" + key + "' in [" + section + "]");
        if (value.empty()) throw fail("empty value for '" + key + "'");
        if (!values[section].emplace(key, Entry{value, lineno}).second) throw fail("duplicate key '" + key + "'");
    }
    for (const char* required : {"forward", "backward"})
        if (!values.contains(required)) throw ConfigError(std::string("config: missing [") + required + "] section");

    auto entry = [&](const char* sec, const char* key) -> const Entry* {
        const auto s = values.find(sec);
        if (s == values.end()) return nullptr;
        const auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    };
    auto get = [&](const char* sec, const char* key) -> const std::string* {
        const Entry* e = entry(sec, key);
        return e ? &e->text : nullptr;
    };
    auto need = [&](const char* sec, const char* key) -> const std::string& {
        const std::string* v = get(sec, key);
        if (!v) throw ConfigError(std::string("config: [") + sec + "] needs '" + key + "'");
        return *v;
    };
    // numeric values: conversion errors carry the line of the entry
    auto number = [&](const char* sec, const char* key, auto&& convert) {
        const Entry* e = entry(sec, key);
        if (!e) return false;
        try {
            convert(e->text);
        } catch (const ConfigError& err) {
            throw ConfigError("config line " + std::to_string(e->line) + ": " + err.what());
        }
        return true;
    };

    ModelConfig c;
    std::vector<std::string> sigma;
    for (auto part : split_row(need("forward", "sigma"))) sigma.emplace_back(trim(part));
    const std::string* b = get("forward", "b");
    c.spec = make_spec(b ? *b : "0", sigma, need("backward", "f"), need("backward", "g"));
    number("forward", "x0", [&](const std::string& v) { c.spec.x0 = parse_double(v); });
    number("time", "T", [&](const std::string& v) { c.spec.T = parse_double(v); });

    number("pde", "x_min", [&](const std::string& v) { c.grid.x_min = parse_double(v); });
    number("pde", "x_max", [&](const std::string& v) { c.grid.x_max = parse_double(v); });
    number("pde", "nx", [&](const std::string& v) { c.grid.nx = to_int(v, "nx"); });
    number("pde", "nt", [&](const std::string& v) { c.grid.nt = to_int(v, "nt"); });

    number("mc", "paths", [&](const std::string& v) { c.mc.paths = to_int(v, "paths"); });
    number("mc", "steps", [&](const std::string& v) { c.mc.steps = to_int(v, "steps"); });
    number("mc", "seed", [&](const std::string& v) {
        const long long s = parse_integer(v);
        if (s < 0) throw ConfigError("seed must be >= 0");
        c.mc.seed = static_cast<std::uint64_t>(s);
    });
    number("mc", "bins", [&](const std::string& v) { c.mc.bins = to_int(v, "bins"); });
    number("mc", "z_clip", [&](const std::string& v) { c.mc.z_clip = parse_double(v); });
    c.mc.validate();
    return c;
}

ModelConfig load_model_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_model_config(ss.str());
}

std::string format_model_config(const ModelConfig& c) {
    std::ostringstream os;
    os << "[forward]\nb = " << c.spec.b.to_string() << "\nsigma = ";
    for (std::size_t i = 0; i < c.spec.sigma.size(); ++i) os << (i ? ", " : "") << c.spec.sigma[i].to_string();
    os << "\nx0 = " << format_number(c.spec.x0) << "\n\n";
    os << "[backward]\nf = " << c.spec.f.to_string() << "\ng = " << c.spec.g.to_string() << "\n\n";
    os << "[time]\nT = " << format_number(c.spec.T) << "\n";
    const auto& g = c.grid;
    if (g.x_min || g.x_max || g.nx || g.nt) {
        os << "\n[pde]\n";
        if (g.x_min) os << "x_min = " << format_number(*g.x_min) << "\n";
        if (g.x_max) os << "x_max = " << format_number(*g.x_max) << "\n";
        if (g.nx) os << "nx = " << *g.nx << "\n";
        if (g.nt) os << "nt = " << *g.nt << "\n";
    }
    os << "\n[mc]\npaths = " << c.mc.paths << "\nsteps = " << c.mc.steps << "\nseed = " << c.mc.seed
       << "\nbins = " << c.mc.bins << "\n";
    if (c.mc.z_clip) os << "z_clip = " << format_number(*c.mc.z_clip) << "\n";
    return os.str();
}

} // namespace qgfbsde
