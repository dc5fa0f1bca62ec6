#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ks_iteration.hpp"
#include "util.hpp"

namespace myksoda {

// Flat `section.key = value` config files.  '#' starts a comment, blank lines
// are skipped.  Unknown keys are a hard error (exit code 2 in the CLI) so a
// typo cannot silently fall back to a default.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double_strict(const std::string& s, const std::string& key) {
    const std::string t = trim(s);
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
        throw ConfigError("config: key '" + key + "' expects a number, got '" + s + "'");
    return v;
}

inline long parse_long_strict(const std::string& s, const std::string& key) {
    const std::string t = trim(s);
    char* end = nullptr;
    long v = std::strtol(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size())
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + s + "'");
    return v;
}

inline bool parse_bool_strict(const std::string& s, const std::string& key) {
    const std::string t = trim(s);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ConfigError("config: key '" + key + "' expects a boolean, got '" + s + "'");
}

inline std::vector<double> parse_list_strict(const std::string& s, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double_strict(item, key));
    if (out.empty()) throw ConfigError("config: key '" + key + "' expects a comma list");
    return out;
}

}  // namespace detail

class ParsedConfig {
  public:
    static ParsedConfig from_string(const std::string& text) {
        ParsedConfig out;
        std::stringstream ss(text);
        std::string line;
        int lineno = 0;
        while (std::getline(ss, line)) {
            ++lineno;
            size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config: line " + std::to_string(lineno) +
                                  " is not 'key = value': " + line);
            std::string key = detail::trim(line.substr(0, eq));
            std::string val = detail::trim(line.substr(eq + 1));
            if (key.empty()) throw ConfigError("config: empty key on line " + std::to_string(lineno));
            if (out.kv_.count(key))
                throw ConfigError("config: duplicate key '" + key + "'");
            out.kv_[key] = val;
        }
        return out;
    }

    static ParsedConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return from_string(ss.str());
    }

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    double number(const std::string& key, double fallback) {
        consumed_.insert(key);
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : detail::parse_double_strict(it->second, key);
    }
    long integer(const std::string& key, long fallback) {
        consumed_.insert(key);
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : detail::parse_long_strict(it->second, key);
    }
    bool boolean(const std::string& key, bool fallback) {
        consumed_.insert(key);
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : detail::parse_bool_strict(it->second, key);
    }
    std::string word(const std::string& key, const std::string& fallback) {
        consumed_.insert(key);
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }
    std::vector<double> list(const std::string& key, std::vector<double> fallback) {
        consumed_.insert(key);
        auto it = kv_.find(key);
        return it == kv_.end() ? std::move(fallback) : detail::parse_list_strict(it->second, key);
    }

    // call after all typed reads: any key never asked for is a typo
    void reject_unknown() const {
        std::string bad;
        for (const auto& [k, v] : kv_)
            if (!consumed_.count(k)) bad += (bad.empty() ? "" : ", ") + k;
        if (!bad.empty()) throw ConfigError("config: unknown key(s): " + bad);
    }

    // sorted key=value dump; the run hash is derived from this
    std::string canonical_text() const {
        std::string out;
        for (const auto& [k, v] : kv_) out += k + "=" + v + "\n";
        return out;
    }

  private:
    std::map<std::string, std::string> kv_;
    std::set<std::string> consumed_;
};

struct HarnessConfig {
    KsConfig ks;
    uint64_t seed = 1;
    // sweep axes (cartesian product)
    std::vector<double> sweep_eps;
    std::vector<double> sweep_p;
    std::vector<double> sweep_interaction;
    // lemma-check knobs
    bool lemma_negative_control = false;
    long lemma_pairs = 200;
    // baseline knobs
    long baseline_max_iter = 200;
    double baseline_step_tol = 1e-10;
    std::string config_hash;  // fnv1a of the canonical key=value dump
};

inline HarnessConfig load_harness_config(ParsedConfig& pc) {
    HarnessConfig hc;

    LatticeModel full;
    full.sites = static_cast<int>(pc.integer("model.sites", 2));
    full.particles = static_cast<int>(pc.integer("model.particles", 1));
    full.hopping = pc.number("model.hopping", 1.0);
    full.interaction = pc.number("model.interaction", 1.0);
    full.lambda = pc.number("model.lambda_full", 1.0);
    const std::string topo = pc.word("model.topology", "chain");
    if (topo == "chain")
        full.topology = LatticeModel::Topology::Chain;
    else if (topo == "ring")
        full.topology = LatticeModel::Topology::Ring;
    else
        throw ConfigError("config: model.topology must be 'chain' or 'ring'");
    LatticeModel ref = full;
    ref.lambda = pc.number("model.lambda_ref", 0.0);

    KsConfig ks;
    ks.full = full;
    ks.ref = ref;
    ks.p = pc.number("space.p", 2.0);
    ks.eps = pc.number("run.eps", 0.1);
    std::vector<double> wl = pc.list("run.w", std::vector<double>(full.sites, 0.0));
    ks.w = Eigen::Map<const Vec>(wl.data(), static_cast<long>(wl.size()));
    std::vector<double> xl = pc.list("run.x0", std::vector<double>{});
    ks.x0 = xl.empty() ? Vec()
                       : Vec(Eigen::Map<const Vec>(xl.data(), static_cast<long>(xl.size())));
    ks.residual_tol = pc.number("run.residual_tol", 1e-8);
    ks.max_iter = pc.integer("run.max_iter", 500);
    ks.gap_tol = pc.number("run.gap_tol", 1e-8);
    ks.grid_h = pc.number("run.grid_h", 0.01);
    ks.lieb_box_radius = pc.number("run.box_radius", 20.0);
    ks.tau_bisect_tol = pc.number("run.tau_bisect_tol", 1e-12);
    const std::string backend = pc.word("run.backend", "exact");
    if (backend == "exact")
        ks.backend = KsConfig::Backend::Exact;
    else if (backend == "grid")
        ks.backend = KsConfig::Backend::Grid;
    else
        throw ConfigError("config: run.backend must be 'exact' or 'grid'");

    hc.seed = static_cast<uint64_t>(pc.integer("run.seed", 1));
    hc.sweep_eps = pc.list("sweep.eps", {ks.eps});
    hc.sweep_p = pc.list("sweep.p", {ks.p});
    hc.sweep_interaction = pc.list("sweep.interaction", {full.interaction});
    hc.lemma_negative_control = pc.boolean("lemma.negative_control", false);
    hc.lemma_pairs = pc.integer("lemma.pairs", 200);
    hc.baseline_max_iter = pc.integer("baseline.max_iter", 200);
    hc.baseline_step_tol = pc.number("baseline.step_tol", 1e-10);

    pc.reject_unknown();

    try {
        ks.validate();
    } catch (const std::exception& ex) {
        throw ConfigError(std::string("config: ") + ex.what());
    }
    hc.ks = std::move(ks);
    hc.config_hash = hex16(hash_fnv1a(pc.canonical_text()));
    return hc;
}

inline HarnessConfig load_harness_config_file(const std::filesystem::path& path) {
    ParsedConfig pc = ParsedConfig::from_file(path);
    return load_harness_config(pc);
}

}  // namespace myksoda
