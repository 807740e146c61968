#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qflow/errors.hpp"
#include "qflow/params.hpp"
#include "qflow/pde2d.hpp"

namespace qflow {

inline constexpr std::array<std::string_view, 9> kExperiments{
    "smallness",   "energy-decay",        "blowup",           "blowup-threshold-search", "physicality",
    "trotter-convergence", "continuous-dependence", "coercivity-report", "hedgehog-consistency"};

enum class KeyKind { Text, Real, Integer, Unsigned, Flag };

struct KeySpec {
    std::string_view name;
    KeyKind kind;
    /// Empty when the key has no default.
    std::string_view fallback;
};

/// Every accepted key, in the order the resolved config is written back.
inline constexpr std::array<KeySpec, 33> kKeys{{
    {"experiment", KeyKind::Text, ""},
    {"a", KeyKind::Real, "0"},
    {"b", KeyKind::Real, "0"},
    {"c", KeyKind::Real, "1"},
    {"L1", KeyKind::Real, "1"},
    {"L2", KeyKind::Real, "0"},
    {"L3", KeyKind::Real, "0"},
    {"L4", KeyKind::Real, "0"},
    {"C1", KeyKind::Real, "1"},
    {"scheme", KeyKind::Text, "imex"},
    {"seed", KeyKind::Unsigned, "0"},
    {"T", KeyKind::Real, ""},
    {"dt", KeyKind::Real, ""},
    {"nx", KeyKind::Integer, ""},
    {"ny", KeyKind::Integer, ""},
    {"length", KeyKind::Real, ""},
    {"amplitude", KeyKind::Real, ""},
    {"perturbation", KeyKind::Real, "1e-6"},
    {"record_every", KeyKind::Integer, "1"},
    {"R0", KeyKind::Real, ""},
    {"R1", KeyKind::Real, ""},
    {"nr", KeyKind::Integer, ""},
    {"theta_b", KeyKind::Real, "0"},
    {"amp_lo", KeyKind::Real, ""},
    {"amp_hi", KeyKind::Real, ""},
    {"h_s", KeyKind::Real, "0.01"},
    {"samples", KeyKind::Integer, "20"},
    {"dim", KeyKind::Integer, "3"},
    {"substeps", KeyKind::Integer, "8"},
    {"levels", KeyKind::Integer, "4"},
    {"rotations", KeyKind::Integer, "20"},
    {"svg", KeyKind::Flag, "true"},
    {"out", KeyKind::Text, "qflow-out"},
}};

/// Keys each experiment cannot run without.
inline std::vector<std::string_view> required_keys(std::string_view experiment) {
    if (experiment == "smallness" || experiment == "energy-decay" || experiment == "continuous-dependence")
        return {"nx", "T", "dt", "amplitude"};
    if (experiment == "blowup") return {"R0", "R1", "nr", "amplitude", "T", "dt"};
    if (experiment == "blowup-threshold-search") return {"R0", "R1", "nr", "amp_lo", "amp_hi", "T", "dt"};
    if (experiment == "physicality") return {"T"};
    if (experiment == "trotter-convergence") return {"nx", "T"};
    if (experiment == "hedgehog-consistency") return {"R0", "R1"};
    return {};
}

struct ExperimentConfig {
    std::string experiment;
    LdGParams params;
    Scheme scheme = Scheme::Imex;
    std::uint64_t seed = 0;
    std::optional<double> T, dt, length, amplitude, R0, R1, amp_lo, amp_hi;
    std::optional<int> nx, ny, nr;
    double perturbation = 1e-6;
    double theta_b = 0.0;
    double h_s = 0.01;
    int record_every = 1;
    int samples = 20;
    int dim = 3;
    int substeps = 8;
    int levels = 4;
    int rotations = 20;
    bool svg = true;
    std::string out = "qflow-out";
    /// Resolved key/value text (explicit values and defaults) in kKeys order.
    std::vector<std::pair<std::string, std::string>> resolved;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline const KeySpec* find_key(std::string_view name) {
    for (const KeySpec& k : kKeys)
        if (k.name == name) return &k;
    return nullptr;
}

template <class T>
bool parse_number(std::string_view text, T& out) {
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

inline bool well_typed(KeyKind kind, std::string_view value) {
    switch (kind) {
        case KeyKind::Text:
            return !value.empty();
        case KeyKind::Real: {
            double d = 0.0;
            return parse_number(value, d) && std::isfinite(d);
        }
        case KeyKind::Integer: {
            long long i = 0;
            return parse_number(value, i);
        }
        case KeyKind::Unsigned: {
            std::uint64_t u = 0;
            return parse_number(value, u);
        }
        case KeyKind::Flag:
            return value == "true" || value == "false";
    }
    return false;
}

inline std::string_view kind_name(KeyKind kind) {
    switch (kind) {
        case KeyKind::Text: return "a non-empty string";
        case KeyKind::Real: return "a finite number";
        case KeyKind::Integer: return "an integer";
        case KeyKind::Unsigned: return "a non-negative integer";
        case KeyKind::Flag: return "true or false";
    }
    return "";
}

inline double real(const std::map<std::string, std::string, std::less<>>& m, std::string_view k) {
    double d = 0.0;
    parse_number(std::string_view(m.find(k)->second), d);
    return d;
}

inline long long integer(const std::map<std::string, std::string, std::less<>>& m, std::string_view k) {
    long long i = 0;
    parse_number(std::string_view(m.find(k)->second), i);
    return i;
}

}  // namespace detail

/// Parses `key = value` lines ('#' starts a comment). `overrides` replace
/// file values (the command line's --seed and --out). Throws
/// PreconditionError with a line number for syntax errors, with every missing
/// key at once for incomplete configs, and with the first failed check for
/// invalid values.
inline ExperimentConfig parse_config(std::string_view text,
                                     const std::map<std::string, std::string>& overrides = {}) {
    std::map<std::string, std::string, std::less<>> given;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "line " + std::to_string(line_no) + ": ";
        require(eq != std::string_view::npos, where + "expected key = value");
        const std::string_view key = detail::trim(line.substr(0, eq));
        const std::string_view value = detail::trim(line.substr(eq + 1));
        const KeySpec* spec = detail::find_key(key);
        require(spec != nullptr, where + "unknown key '" + std::string(key) + "'");
        require(!given.contains(key), where + "duplicate key '" + std::string(key) + "'");
        require(detail::well_typed(spec->kind, value),
                where + "value of " + std::string(key) + " must be " + std::string(detail::kind_name(spec->kind)));
        given.emplace(std::string(key), std::string(value));
    }
    for (const auto& [key, value] : overrides) {
        const KeySpec* spec = detail::find_key(key);
        require(spec != nullptr, "unknown override '" + key + "'");
        require(detail::well_typed(spec->kind, value),
                "override " + key + " must be " + std::string(detail::kind_name(spec->kind)));
        given[key] = value;
    }

    require(given.contains("experiment"), "missing required keys: experiment");
    ExperimentConfig cfg;
    cfg.experiment = given.find("experiment")->second;
    require(std::find(kExperiments.begin(), kExperiments.end(), cfg.experiment) != kExperiments.end(),
            "unknown experiment '" + cfg.experiment + "'");

    // Relations between values that are present come before completeness, so
    // an inverted annulus is reported as such even in a partial file.
    if (given.contains("R0") && given.contains("R1"))
        require(detail::real(given, "R0") < detail::real(given, "R1"), "R0 < R1 required");

    std::string missing;
    for (std::string_view k : required_keys(cfg.experiment))
        if (!given.contains(k)) missing += (missing.empty() ? "" : ", ") + std::string(k);
    require(missing.empty(), "missing required keys: " + missing);

    std::map<std::string, std::string, std::less<>> all = given;
    for (const KeySpec& k : kKeys)
        if (!all.contains(k.name) && !k.fallback.empty()) all.emplace(std::string(k.name), std::string(k.fallback));
    for (const KeySpec& k : kKeys)
        if (auto it = all.find(k.name); it != all.end()) cfg.resolved.emplace_back(it->first, it->second);

    auto opt_real = [&](std::string_view k) -> std::optional<double> {
        if (!all.contains(k)) return std::nullopt;
        return detail::real(all, k);
    };
    auto opt_int = [&](std::string_view k) -> std::optional<int> {
        if (!all.contains(k)) return std::nullopt;
        const long long v = detail::integer(all, k);
        require(v >= -1000000000LL && v <= 1000000000LL, std::string(k) + " is out of range");
        return static_cast<int>(v);
    };

    cfg.params.a = detail::real(all, "a");
    cfg.params.b = detail::real(all, "b");
    cfg.params.c = detail::real(all, "c");
    cfg.params.L1 = detail::real(all, "L1");
    cfg.params.L2 = detail::real(all, "L2");
    cfg.params.L3 = detail::real(all, "L3");
    cfg.params.L4 = detail::real(all, "L4");
    cfg.params.C1 = detail::real(all, "C1");
    const std::string& scheme = all.find("scheme")->second;
    require(scheme == "imex" || scheme == "explicit-euler", "scheme must be imex or explicit-euler");
    cfg.scheme = scheme == "imex" ? Scheme::Imex : Scheme::ExplicitEuler;
    detail::parse_number(std::string_view(all.find("seed")->second), cfg.seed);
    cfg.T = opt_real("T");
    cfg.dt = opt_real("dt");
    cfg.length = opt_real("length");
    cfg.amplitude = opt_real("amplitude");
    cfg.R0 = opt_real("R0");
    cfg.R1 = opt_real("R1");
    cfg.amp_lo = opt_real("amp_lo");
    cfg.amp_hi = opt_real("amp_hi");
    cfg.nx = opt_int("nx");
    cfg.ny = opt_int("ny");
    cfg.nr = opt_int("nr");
    cfg.perturbation = detail::real(all, "perturbation");
    cfg.theta_b = detail::real(all, "theta_b");
    cfg.h_s = detail::real(all, "h_s");
    cfg.record_every = *opt_int("record_every");
    cfg.samples = *opt_int("samples");
    cfg.dim = *opt_int("dim");
    cfg.substeps = *opt_int("substeps");
    cfg.levels = *opt_int("levels");
    cfg.rotations = *opt_int("rotations");
    cfg.svg = all.find("svg")->second == "true";
    cfg.out = all.find("out")->second;

    // Value checks shared by every experiment that reads the key.
    if (cfg.T) require(*cfg.T > 0.0, "T must be positive");
    if (cfg.dt) require(*cfg.dt > 0.0, "dt must be positive");
    if (cfg.T && cfg.dt) require(*cfg.dt <= *cfg.T, "dt must not exceed T");
    if (cfg.nx) require(*cfg.nx >= 3, "nx must be at least 3");
    if (cfg.ny) require(*cfg.ny >= 3, "ny must be at least 3");
    if (cfg.nr) require(*cfg.nr >= 3, "nr must be at least 3");
    if (cfg.length) require(*cfg.length > 0.0, "length must be positive");
    if (cfg.R0) require(*cfg.R0 > 0.0, "R0 must be positive");
    if (cfg.amp_lo && cfg.amp_hi) require(*cfg.amp_lo < *cfg.amp_hi, "amp_lo < amp_hi required");
    require(cfg.theta_b >= 0.0, "theta_b must be non-negative");
    require(cfg.perturbation > 0.0, "perturbation must be positive");
    require(cfg.h_s > 0.0, "h_s must be positive");
    require(cfg.record_every >= 1, "record_every must be at least 1");
    require(cfg.samples >= 1, "samples must be at least 1");
    require(cfg.dim == 2 || cfg.dim == 3, "dim must be 2 or 3");
    require(cfg.substeps >= 1, "substeps must be at least 1");
    require(cfg.levels >= 2, "levels must be at least 2");
    require(cfg.rotations >= 0, "rotations must be non-negative");
    require(!cfg.out.empty(), "out must not be empty");
    if (cfg.amplitude && (cfg.experiment == "smallness" || cfg.experiment == "energy-decay" ||
                          cfg.experiment == "continuous-dependence"))
        require(*cfg.amplitude >= 0.0, "amplitude must be non-negative");

    const std::string& e = cfg.experiment;
    if (e == "smallness" || e == "energy-decay" || e == "continuous-dependence") validate(cfg.params, true);
    if (e == "coercivity-report") validate(cfg.params, false);
    if (e == "blowup" || e == "blowup-threshold-search") {
        validate(cfg.params, false);
        require(cfg.params.zeta() > 0.0, "zeta must be positive");
        require(cfg.params.L4 != 0.0, "blow-up certificate needs L4 != 0");
    }
    if (e == "hedgehog-consistency") validate(cfg.params, false);
    if (e == "physicality" || e == "trotter-convergence") {
        require(cfg.params.c > 0.0, "c must be positive");
        require(cfg.params.L4 == 0.0, "splitting requires L4 = 0");
        if (cfg.dim == 3) require(cfg.params.L2 + cfg.params.L3 == 0.0, "splitting requires L2 + L3 = 0");
    }
    return cfg;
}

}  // namespace qflow
