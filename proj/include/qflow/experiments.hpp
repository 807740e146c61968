#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "qflow/config.hpp"
#include "qflow/energy.hpp"
#include "qflow/errors.hpp"
#include "qflow/field.hpp"
#include "qflow/pde2d.hpp"
#include "qflow/qtensor.hpp"
#include "qflow/radial.hpp"
#include "qflow/splitting.hpp"

namespace qflow {

using Json = nlohmann::ordered_json;

inline constexpr const char* kTraceHeader = "t,energy,max_h2,l2_norm,l2_dQdt,flag";
inline constexpr int kFlagInvariant = 1;
inline constexpr int kFlagBlowup = 2;
inline constexpr int kThresholdBisections = 16;

/// One row of trace.csv. Columns an experiment does not define stay NaN.
struct TraceRow {
    double t = 0.0;
    double energy = std::numeric_limits<double>::quiet_NaN();
    double max_h2 = std::numeric_limits<double>::quiet_NaN();
    double l2_norm = std::numeric_limits<double>::quiet_NaN();
    double l2_dQdt = std::numeric_limits<double>::quiet_NaN();
    int flag = 0;
};

struct ExperimentReport {
    Json summary;
    std::filesystem::path directory;
    std::vector<std::string> files;
};

/// 17 significant digits, so a value read back is the value written.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows) {
    std::ofstream os(path);
    require(static_cast<bool>(os), "cannot write " + path.string());
    os << kTraceHeader << '\n';
    for (const TraceRow& r : rows)
        os << format_number(r.t) << ',' << format_number(r.energy) << ',' << format_number(r.max_h2) << ','
           << format_number(r.l2_norm) << ',' << format_number(r.l2_dQdt) << ',' << r.flag << '\n';
}

inline void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                            const std::vector<std::vector<double>>& rows) {
    std::ofstream os(path);
    require(static_cast<bool>(os), "cannot write " + path.string());
    for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
    os << '\n';
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << format_number(row[k]);
        os << '\n';
    }
}

/// Line plot of the finite points of (x, y); returns false when fewer than two remain.
inline bool write_svg(const std::filesystem::path& path, const std::string& title, const std::vector<double>& x,
                      const std::vector<double>& y) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < x.size() && k < y.size(); ++k)
        if (std::isfinite(x[k]) && std::isfinite(y[k])) pts.emplace_back(x[k], y[k]);
    if (pts.size() < 2) return false;
    double x0 = pts.front().first, x1 = x0, y0 = pts.front().second, y1 = y0;
    for (const auto& [px, py] : pts) {
        x0 = std::min(x0, px);
        x1 = std::max(x1, px);
        y0 = std::min(y0, py);
        y1 = std::max(y1, py);
    }
    if (x1 == x0) x1 = x0 + 1.0;
    if (y1 == y0) {
        y0 -= 0.5 * std::max(1.0, std::abs(y0));
        y1 += 0.5 * std::max(1.0, std::abs(y1));
    }
    constexpr double W = 640, H = 400, ml = 90, mr = 20, mt = 40, mb = 50;
    auto sx = [&](double v) { return ml + (v - x0) / (x1 - x0) * (W - ml - mr); };
    auto sy = [&](double v) { return H - mb - (v - y0) / (y1 - y0) * (H - mt - mb); };
    std::ofstream os(path);
    require(static_cast<bool>(os), "cannot write " + path.string());
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
       << title << "</text>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    auto label = [&](double px, double py, const char* anchor, double v) {
        os << "<text x=\"" << px << "\" y=\"" << py << "\" text-anchor=\"" << anchor
           << "\" font-family=\"sans-serif\" font-size=\"11\">" << format_number(v).substr(0, 10) << "</text>\n";
    };
    label(ml - 6, H - mb, "end", y0);
    label(ml - 6, mt + 4, "end", y1);
    label(ml, H - mb + 16, "middle", x0);
    label(W - mr, H - mb + 16, "middle", x1);
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (const auto& [px, py] : pts) os << sx(px) << ',' << sy(py) << ' ';
    os << "\"/>\n</svg>\n";
    return true;
}

namespace detail {

inline Json invariant(const std::string& name, double measured, const std::string& relation, double tolerance,
                      bool pass) {
    Json j;
    j["name"] = name;
    j["measured"] = measured;
    j["relation"] = relation;
    j["tolerance"] = tolerance;
    j["pass"] = pass;
    return j;
}

inline Json resolved_config(const ExperimentConfig& cfg) {
    Json j = Json::object();
    for (const auto& [key, value] : cfg.resolved) {
        KeyKind kind = KeyKind::Text;
        for (const KeySpec& k : kKeys)
            if (k.name == key) kind = k.kind;
        switch (kind) {
            case KeyKind::Real: j[key] = std::stod(value); break;
            case KeyKind::Integer: j[key] = std::stoll(value); break;
            case KeyKind::Unsigned: j[key] = std::stoull(value); break;
            case KeyKind::Flag: j[key] = value == "true"; break;
            case KeyKind::Text: j[key] = value; break;
        }
    }
    return j;
}

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Grid2D square_grid(const ExperimentConfig& cfg) {
    const double L = cfg.length.value_or(1.0);
    const int nx = *cfg.nx;
    return make_grid(nx, cfg.ny.value_or(nx), L, L * (cfg.ny.value_or(nx) + 1) / (nx + 1));
}

}  // namespace detail

/// Zero-ring field built from random low sine modes (k, l <= 4, weights
/// 1/(k^2+l^2)), scaled so the largest pointwise Frobenius norm equals
/// `amplitude`.
inline Field2D random_smooth_field(const Grid2D& g, double amplitude, std::uint64_t seed) {
    require(amplitude >= 0.0, "amplitude must be non-negative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    constexpr int modes = 4;
    std::array<std::array<double, 2>, modes * modes> coef{};
    for (auto& c : coef) c = {normal(rng), normal(rng)};
    const double Lx = g.hx() * (g.nx + 1);
    const double Ly = g.hy() * (g.ny + 1);
    Field2D f = Field2D::from_functions(
        g,
        [&](double x, double y) {
            QTensor2 v{};
            for (int k = 1; k <= modes; ++k)
                for (int l = 1; l <= modes; ++l) {
                    const double s = std::sin(k * std::numbers::pi * (x - g.x0) / Lx) *
                                     std::sin(l * std::numbers::pi * (y - g.y0) / Ly) / (k * k + l * l);
                    const auto& c = coef[static_cast<std::size_t>((k - 1) * modes + l - 1)];
                    v = v + QTensor2{c[0] * s, c[1] * s};
                }
            return v;
        },
        [](double, double) { return QTensor2{}; });
    double peak = 0.0;
    for (const QTensor2& v : f.values()) peak = std::max(peak, frobenius_norm(v));
    const double scale = peak > 0.0 ? amplitude / peak : 0.0;
    for (QTensor2& v : f.values()) v = scale * v;
    return f;
}

/// Radial sine bump theta_b + A sin(pi (r - R0) / (R1 - R0)).
inline RadialProfile sine_bump(double R0, double R1, int nr, double amplitude, double theta_b) {
    return make_profile(
        R0, R1, nr, [&](double r) { return theta_b + amplitude * std::sin(std::numbers::pi * (r - R0) / (R1 - R0)); },
        theta_b);
}

/// Physical torus data: uniaxial (3D) or director (2D) tensors whose order
/// parameter spans the whole physical interval, so the initial hull equals it.
template <class Tensor>
PeriodicField<Tensor> physical_torus_data(int n, double L, const LdGParams& params) {
    const double w = 2.0 * std::numbers::pi / L;
    if constexpr (Tensor::dim == 3) {
        const double sp = s_plus(params);
        return make_periodic_field<QTensor3>(n, L, [&](double x, double y) {
            const double s = sp * (0.5 + 0.5 * std::sin(w * x) * std::sin(w * y));
            const double phi = std::cos(w * x) + 0.5 * std::sin(2.0 * w * y);
            return from_director(
                std::array<double, 3>{std::cos(phi), std::sin(phi) * std::cos(w * y), std::sin(phi) * std::sin(w * y)},
                s);
        });
    } else {
        const double hi = physical_interval(params, 2).hi;
        return make_periodic_field<QTensor2>(n, L, [&](double x, double y) {
            const double s = 2.0 * hi * (0.5 + 0.5 * std::sin(w * x) * std::sin(w * y));
            const double phi = std::cos(w * x) + 0.5 * std::sin(2.0 * w * y);
            return from_director(std::array<double, 2>{std::cos(phi), std::sin(phi)}, s);
        });
    }
}

namespace detail {

inline void check_finite_trace(const RunTrace& trace) {
    for (const TraceRecord& r : trace.records)
        if (!std::isfinite(r.energy) || !std::isfinite(r.l2_norm))
            throw NumericalError("non-finite values at t = " + format_number(r.t));
}

inline std::vector<TraceRow> rows_from(const RunTrace& trace) {
    std::vector<TraceRow> rows;
    for (const TraceRecord& r : trace.records)
        rows.push_back({r.t, r.energy, r.max_h2, r.l2_norm, r.l2_dQdt,
                        (r.small ? kFlagInvariant : 0) | (r.blowup ? kFlagBlowup : 0)});
    return rows;
}

inline RunOptions run_options(const ExperimentConfig& cfg) {
    RunOptions o;
    o.scheme = cfg.scheme;
    o.record_every = cfg.record_every;
    return o;
}

inline void smallness(const ExperimentConfig& cfg, Json& s, std::vector<TraceRow>& rows) {
    const Grid2D g = square_grid(cfg);
    const Field2D f0 = random_smooth_field(g, *cfg.amplitude, cfg.seed);
    const RunTrace trace = run(f0, cfg.params, *cfg.T, *cfg.dt, run_options(cfg));
    check_finite_trace(trace);
    const DerivedConstants k = derived_constants(cfg.params);
    double peak = 0.0;
    for (const TraceRecord& r : trace.records) peak = std::max(peak, r.max_h2);
    const double ratio = std::isinf(k.eta1) ? 0.0 : std::sqrt(2.0 * peak) / std::sqrt(2.0 * k.eta1);
    s["scalars"]["eta1"] = finite_or_null(k.eta1);
    s["scalars"]["initial_sup_norm"] = std::sqrt(2.0 * max_h2(f0));
    s["scalars"]["max_sup_norm"] = std::sqrt(2.0 * peak);
    s["scalars"]["blew_up"] = trace.blew_up;
    s["invariants"].push_back(invariant("sup_norm_over_sqrt_2eta1", ratio, "<=", 1.001, ratio <= 1.001));
    rows = rows_from(trace);
}

inline void energy_decay(const ExperimentConfig& cfg, Json& s, std::vector<TraceRow>& rows) {
    const Grid2D g = square_grid(cfg);
    const Field2D f0 = random_smooth_field(g, *cfg.amplitude, cfg.seed);
    const RunTrace trace = run(f0, cfg.params, *cfg.T, *cfg.dt, run_options(cfg));
    check_finite_trace(trace);
    s["scalars"]["stability_bound"] = stability_bound(g, cfg.params);
    s["scalars"]["initial_energy"] = trace.records.front().energy;
    s["scalars"]["final_energy"] = trace.records.back().energy;
    s["invariants"].push_back(invariant("energy_nonincreasing", trace.energy_nonincreasing ? 1.0 : 0.0, "==", 1.0,
                                        trace.energy_nonincreasing));
    s["invariants"].push_back(invariant("max_relative_dissipation_defect", trace.max_relative_defect, "<=", 1e-6,
                                        trace.max_relative_defect <= 1e-6));
    rows = rows_from(trace);
}

inline void continuous_dependence(const ExperimentConfig& cfg, Json& s, std::vector<TraceRow>& rows,
                                  const std::filesystem::path& dir, std::vector<std::string>& files) {
    const Grid2D g = square_grid(cfg);
    const Field2D f0 = random_smooth_field(g, *cfg.amplitude, cfg.seed);
    const Field2D big = random_smooth_field(g, cfg.perturbation, cfg.seed + 1);
    const Field2D small = random_smooth_field(g, 0.1 * cfg.perturbation, cfg.seed + 1);
    const auto a = continuous_dependence_experiment(f0, big, cfg.params, *cfg.T, *cfg.dt, cfg.scheme);
    const auto b = continuous_dependence_experiment(f0, small, cfg.params, *cfg.T, *cfg.dt, cfg.scheme);
    double worst = 0.0;
    std::vector<std::vector<double>> table;
    for (std::size_t k = 0; k < a.times.size(); ++k) {
        const double ratio = a.distances[k] / b.distances[k];
        if (!std::isfinite(ratio)) throw NumericalError("non-finite distance ratio");
        worst = std::max(worst, std::abs(ratio / 10.0 - 1.0));
        table.push_back({a.times[k], a.distances[k], b.distances[k], ratio});
    }
    write_table_csv(dir / "distances.csv", {"t", "distance", "distance_tenth", "ratio"}, table);
    files.push_back("distances.csv");
    s["scalars"]["slope"] = a.slope;
    s["scalars"]["slope_tenth"] = b.slope;
    s["scalars"]["envelope_ratio"] = a.envelope_ratio;
    s["scalars"]["eta2"] = finite_or_null(derived_constants(cfg.params).eta2);
    s["invariants"].push_back(invariant("max_relative_ratio_deviation", worst, "<=", 0.2, worst <= 0.2));
    s["invariants"].push_back(
        invariant("log_distance_slope_finite", a.slope, "finite", 0.0, std::isfinite(a.slope) && std::isfinite(b.slope)));
    const RunTrace trace = run(f0, cfg.params, *cfg.T, *cfg.dt, run_options(cfg));
    check_finite_trace(trace);
    rows = rows_from(trace);
}

inline double driving_moment(const RadialRecord& r, double L4) { return L4 < 0.0 ? r.y_minus : r.y_plus; }

inline void blowup(const ExperimentConfig& cfg, Json& s, std::vector<TraceRow>& rows, const std::filesystem::path& dir,
                   std::vector<std::string>& files) {
    const RadialProfile p0 = sine_bump(*cfg.R0, *cfg.R1, *cfg.nr, *cfg.amplitude, cfg.theta_b);
    const BlowupCertificate cert = blowup_certificate(p0, cfg.params);
    const RadialTrace trace = run_radial(p0, cfg.params, *cfg.T, *cfg.dt);
    const RadialTrace fine =
        run_radial(sine_bump(*cfg.R0, *cfg.R1, 2 * *cfg.nr + 1, *cfg.amplitude, cfg.theta_b), cfg.params, *cfg.T, *cfg.dt);

    std::vector<double> times;
    for (const RadialRecord& r : trace.records) times.push_back(r.t);
    std::vector<double> comparison(times.size(), std::numeric_limits<double>::quiet_NaN());
    if (cert.predicted_blowup_time)
        comparison = comparison_trajectory(cert.M0, cfg.params.a, cert.F0, cert.y0, times);

    std::vector<std::vector<double>> table;
    bool dominated = true;
    for (std::size_t k = 0; k < trace.records.size(); ++k) {
        const RadialRecord& r = trace.records[k];
        table.push_back({r.t, r.y, r.y_minus, r.y_plus, r.max_abs_theta, comparison[k]});
        const bool last = k + 1 == trace.records.size() && trace.blew_up;
        if (cert.predicted_blowup_time && !last && std::isfinite(comparison[k]) &&
            driving_moment(r, cfg.params.L4) < 0.99 * comparison[k])
            dominated = false;
        TraceRow row;
        row.t = r.t;
        row.max_h2 = 0.25 * r.max_abs_theta * r.max_abs_theta;
        row.l2_norm = std::sqrt(std::numbers::pi * r.y);
        row.flag = last ? kFlagBlowup : 0;
        rows.push_back(row);
    }
    write_table_csv(dir / "radial.csv", {"t", "y", "y_minus", "y_plus", "max_abs_theta", "comparison"}, table);
    files.push_back("radial.csv");

    Json& sc = s["scalars"];
    sc["criterion_value"] = cert.criterion_value;
    sc["criterion_ok"] = cert.criterion_ok;
    sc["M0"] = cert.M0;
    sc["F0"] = cert.F0;
    sc["y0"] = cert.y0;
    sc["predicted_blowup_time"] = optional_number(cert.predicted_blowup_time);
    sc["certificate"] = cert.predicted_blowup_time ? "conclusive" : "inconclusive";
    sc["blew_up"] = trace.blew_up;
    sc["blowup_time"] = optional_number(trace.blowup_time);
    sc["fine_nr"] = 2 * *cfg.nr + 1;
    sc["fine_blew_up"] = fine.blew_up;
    sc["fine_blowup_time"] = optional_number(fine.blowup_time);
    sc["final_y"] = trace.records.back().y;
    s["invariants"].push_back(invariant("blowup_reached", trace.blew_up && fine.blew_up ? 1.0 : 0.0, "==", 1.0,
                                        trace.blew_up && fine.blew_up));
    if (trace.blowup_time && fine.blowup_time) {
        const double gap = std::abs(*trace.blowup_time - *fine.blowup_time) / *fine.blowup_time;
        s["invariants"].push_back(invariant("blowup_time_relative_gap", gap, "<=", 0.1, gap <= 0.1));
    }
    if (cert.predicted_blowup_time)
        s["invariants"].push_back(invariant("driving_moment_dominates_comparison", dominated ? 1.0 : 0.0, "==", 1.0,
                                            dominated));
}

inline void threshold_search(const ExperimentConfig& cfg, Json& s, const std::filesystem::path& dir,
                             std::vector<std::string>& files) {
    auto blows = [&](double A) {
        return run_radial(sine_bump(*cfg.R0, *cfg.R1, *cfg.nr, A, cfg.theta_b), cfg.params, *cfg.T, *cfg.dt).blew_up;
    };
    double lo = *cfg.amp_lo, hi = *cfg.amp_hi;
    const bool flo = blows(lo), fhi = blows(hi);
    std::vector<std::vector<double>> table{{0.0, lo, flo ? 1.0 : 0.0}, {0.0, hi, fhi ? 1.0 : 0.0}};
    s["scalars"]["blew_up_at_amp_lo"] = flo;
    s["scalars"]["blew_up_at_amp_hi"] = fhi;
    if (flo == fhi) {
        s["scalars"]["bracket"] = nullptr;
        s["scalars"]["note"] = "blow-up flag is the same at both ends; no bracket";
    } else {
        for (int it = 1; it <= kThresholdBisections; ++it) {
            const double mid = 0.5 * (lo + hi);
            const bool fm = blows(mid);
            table.push_back({static_cast<double>(it), mid, fm ? 1.0 : 0.0});
            (fm == flo ? lo : hi) = mid;
        }
        s["scalars"]["bracket"] = Json::array({lo, hi});
        s["scalars"]["bisections"] = kThresholdBisections;
    }
    write_table_csv(dir / "bisection.csv", {"iteration", "amplitude", "blew_up"}, table);
    files.push_back("bisection.csv");
}

inline void physicality(const ExperimentConfig& cfg, Json& s, std::vector<TraceRow>& rows) {
    const double dt = cfg.dt.value_or(0.1);
    const auto steps = static_cast<int>(std::ceil(*cfg.T / dt - 1e-9));
    const double h = *cfg.T / steps;
    const PhysicalityInterval I = physical_interval(cfg.params, cfg.dim);
    std::mt19937_64 rng(cfg.seed);
    double worst_out = 0.0;
    bool ordered = true;
    double equivariance = 0.0;
    rows.assign(static_cast<std::size_t>(steps + 1), TraceRow{});
    for (int n = 0; n <= steps; ++n) {
        rows[static_cast<std::size_t>(n)].t = n * h;
        rows[static_cast<std::size_t>(n)].max_h2 = 0.0;
        rows[static_cast<std::size_t>(n)].flag = kFlagInvariant;
    }
    auto outside = [&](double l) { return std::max({0.0, I.lo - l, l - I.hi}); };
    auto note = [&](int n, double trsq, double out) {
        auto& row = rows[static_cast<std::size_t>(n)];
        row.max_h2 = std::max(row.max_h2, 0.5 * trsq);
        if (out > 1e-8) row.flag &= ~kFlagInvariant;
        worst_out = std::max(worst_out, out);
    };
    const int m = 20;
    int count = 0;
    if (cfg.dim == 3) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                const double l1 = I.lo + (I.hi - I.lo) * i / (m - 1);
                const double l2 = I.lo + (I.hi - I.lo) * j / (m - 1);
                if (outside(-(l1 + l2)) > 1e-12) continue;
                ++count;
                QTensor3 Q = QTensor3::diagonal(l1, l2);
                note(0, Q.trace_sq(), 0.0);
                for (int n = 1; n <= steps; ++n) {
                    Q = bulk_ode_step(Q, h, cfg.params);
                    note(n, Q.trace_sq(), std::max({outside(Q.xx), outside(Q.yy), outside(Q.zz())}));
                    if (l1 <= l2 && Q.xx > Q.yy + 1e-12) ordered = false;
                }
            }
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int r = 0; r < cfg.rotations; ++r) {
            Eigen::Matrix3d A;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) A(a, b) = normal(rng);
            const Eigen::Matrix3d R = Eigen::HouseholderQR<Eigen::Matrix3d>(A).householderQ();
            const double l1 = I.lo + (I.hi - I.lo) * unit(rng);
            const double l2 = std::clamp(I.lo + (I.hi - I.lo) * unit(rng), -I.hi - l1, -I.lo - l1);
            auto conj = [&](const QTensor3& Q) {
                Eigen::Matrix3d M;
                const Mat<3> q = Q.matrix();
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) M(a, b) = q[a][b];
                const Eigen::Matrix3d out = R * M * R.transpose();
                Mat<3> o{};
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) o[a][b] = out(a, b);
                return QTensor3::from_matrix(o);
            };
            const QTensor3 Q0 = QTensor3::diagonal(l1, l2);
            const QTensor3 x = bulk_ode_evolve(conj(Q0), *cfg.T, steps, cfg.params);
            const QTensor3 y = conj(bulk_ode_evolve(Q0, *cfg.T, steps, cfg.params));
            const QTensor3 d = x - y;
            equivariance = std::max({equivariance, std::abs(d.xx), std::abs(d.xy), std::abs(d.xz), std::abs(d.yy),
                                     std::abs(d.yz)});
        }
    } else {
        // 2D: eigenvalues +-|Q|/sqrt(2); sample the ball by radius and angle.
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                const double rad = I.hi * std::sqrt(2.0) * i / (m - 1);
                const double ang = 2.0 * std::numbers::pi * j / m;
                ++count;
                QTensor2 Q{rad / std::sqrt(2.0) * std::cos(ang), rad / std::sqrt(2.0) * std::sin(ang)};
                note(0, Q.trace_sq(), 0.0);
                for (int n = 1; n <= steps; ++n) {
                    Q = bulk_ode_step(Q, h, cfg.params);
                    note(n, Q.trace_sq(), outside(eigenvalues(Q)[1]));
                }
            }
    }
    if (!std::isfinite(worst_out)) throw NumericalError("non-finite eigenvalues");
    s["scalars"]["interval"] = Json::array({I.lo, I.hi});
    s["scalars"]["initial_states"] = count;
    s["invariants"].push_back(invariant("max_distance_outside_interval", worst_out, "<=", 1e-8, worst_out <= 1e-8));
    if (cfg.dim == 3) {
        s["scalars"]["s_plus"] = s_plus(cfg.params);
        s["invariants"].push_back(invariant("order_preserved", ordered ? 1.0 : 0.0, "==", 1.0, ordered));
        s["invariants"].push_back(invariant("rotation_equivariance_error", equivariance, "<=", 1e-10,
                                            equivariance <= 1e-10));
    }
}

template <class Tensor>
void trotter_convergence_impl(const ExperimentConfig& cfg, Json& s, std::vector<TraceRow>& rows,
                              const std::filesystem::path& dir, std::vector<std::string>& files) {
    const double L = cfg.length.value_or(2.0 * std::numbers::pi);
    const PeriodicField<Tensor> f0 = physical_torus_data<Tensor>(*cfg.nx, L, cfg.params);
    const HullBounds h0 = hull_bounds(f0);
    std::vector<PeriodicField<Tensor>> finals;
    double hull_excess = 0.0;
    const int runs = cfg.levels + 1;
    for (int level = 0; level < runs; ++level) {
        const int n = cfg.substeps << level;
        const double dt = *cfg.T / n;
        PeriodicField<Tensor> f = f0;
        const bool traced = level == runs - 1;
        auto record = [&](double t) {
            double sum = 0.0, peak = 0.0;
            for (const Tensor& Q : f.values) {
                sum += Q.trace_sq();
                peak = std::max(peak, 0.5 * Q.trace_sq());
            }
            TraceRow row;
            row.t = t;
            row.max_h2 = peak;
            row.l2_norm = std::sqrt(sum) * f.h();
            row.flag = kFlagInvariant;
            rows.push_back(row);
        };
        if (traced) record(0.0);
        for (int k = 0; k < n; ++k) {
            const TrotterResult<Tensor> r = trotter_solve(f, dt, 1, cfg.params);
            f = r.field;
            double excess = 0.0;
            for (const HullBounds& hb : r.hulls)
                excess = std::max({excess, h0.lambda_min - hb.lambda_min, hb.lambda_max - h0.lambda_max});
            if (!std::isfinite(excess)) throw NumericalError("non-finite values in the split flow");
            hull_excess = std::max(hull_excess, excess);
            if (traced) {
                record((k + 1) * dt);
                if (excess > 1e-8) rows.back().flag = 0;
            }
        }
        finals.push_back(std::move(f));
    }
    std::vector<std::vector<double>> table;
    std::vector<double> diffs;
    for (int level = 0; level + 1 < runs; ++level) diffs.push_back(l2_distance(finals[level], finals[level + 1]));
    bool monotone = true;
    double min_order = std::numeric_limits<double>::infinity();
    Json orders = Json::array();
    for (std::size_t k = 0; k < diffs.size(); ++k) {
        double order = std::numeric_limits<double>::quiet_NaN();
        if (k + 1 < diffs.size()) {
            order = std::log2(diffs[k] / diffs[k + 1]);
            monotone = monotone && diffs[k + 1] < diffs[k];
            min_order = std::min(min_order, order);
            orders.push_back(finite_or_null(order));
        }
        table.push_back({static_cast<double>(cfg.substeps << k), diffs[k], order});
    }
    write_table_csv(dir / "convergence.csv", {"n", "distance_n_2n", "order"}, table);
    files.push_back("convergence.csv");
    s["scalars"]["initial_hull"] = Json::array({h0.lambda_min, h0.lambda_max});
    s["scalars"]["distances"] = diffs;
    s["scalars"]["orders"] = orders;
    s["invariants"].push_back(invariant("distances_decrease", monotone ? 1.0 : 0.0, "==", 1.0, monotone));
    s["invariants"].push_back(invariant("min_empirical_order", min_order, ">=", 0.5, min_order >= 0.5));
    s["invariants"].push_back(invariant("hull_excess", hull_excess, "<=", 1e-8, hull_excess <= 1e-8));
}

inline void coercivity_report(const ExperimentConfig& cfg, Json& s) {
    std::array<double, 4> ev = elastic_matrix_eigenvalues(cfg.params);
    std::sort(ev.begin(), ev.end());
    const double u = 2.0 * (cfg.params.L1 + cfg.params.L2);
    const double v = 2.0 * (cfg.params.L1 + cfg.params.L3);
    std::array<double, 4> closed{u, u, v, v};
    std::sort(closed.begin(), closed.end());
    double err = 0.0;
    for (int k = 0; k < 4; ++k) err = std::max(err, std::abs(ev[k] - closed[k]));
    const DerivedConstants k = derived_constants(cfg.params, false);
    s["scalars"]["eigenvalues"] = ev;
    s["scalars"]["nu"] = k.nu;
    s["scalars"]["zeta"] = k.zeta;
    s["scalars"]["eta1"] = finite_or_null(k.eta1);
    s["scalars"]["eta2"] = finite_or_null(k.eta2);
    s["scalars"]["coercive"] = cfg.params.coercive();
    s["invariants"].push_back(invariant("spectrum_error", err, "<=", 1e-10, err <= 1e-10));
}

inline void hedgehog_consistency(const ExperimentConfig& cfg, Json& s) {
    const double R0 = *cfg.R0, R1 = *cfg.R1;
    const double coarse = 2.0 * cfg.h_s;
    require(R1 - R0 > 6.0 * coarse, "annulus too thin for the stencil spacing");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> rad(R0 + 3.0 * coarse, R1 - 3.0 * coarse);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
    std::vector<std::array<double, 2>> samples;
    for (int k = 0; k < cfg.samples; ++k) {
        const double r = rad(rng), a = ang(rng);
        samples.push_back({r * std::cos(a), r * std::sin(a)});
    }
    const std::vector<std::pair<std::string, ThetaFunction>> profiles{
        {"constant", {[](double) { return 1.0; }, [](double) { return 0.0; }, [](double) { return 0.0; }}},
        {"linear", {[](double r) { return r; }, [](double) { return 1.0; }, [](double) { return 0.0; }}},
        {"sine",
         {[](double r) { return std::sin(2.0 * r); }, [](double r) { return 2.0 * std::cos(2.0 * r); },
          [](double r) { return -4.0 * std::sin(2.0 * r); }}}};
    for (const auto& [name, th] : profiles) {
        const double e2 = hedgehog_consistency_check(th, cfg.params, samples, coarse, R0, R1);
        const double e1 = hedgehog_consistency_check(th, cfg.params, samples, cfg.h_s, R0, R1);
        if (!std::isfinite(e1) || !std::isfinite(e2)) throw NumericalError("non-finite mismatch");
        const double ratio = e2 / e1;
        s["scalars"]["mismatch_" + name] = Json::array({e2, e1});
        s["scalars"]["richardson_ratio_" + name] = ratio;
        const double dev = std::abs(ratio - 4.0);
        s["invariants"].push_back(invariant("richardson_ratio_deviation_" + name, dev, "<=", 0.5, dev <= 0.5));
    }
}

}  // namespace detail

/// Runs the configured experiment and writes trace.csv, summary.json, any
/// experiment tables and one SVG per trace column with data into the output
/// directory. Throws PreconditionError or NumericalError.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    ExperimentReport rep;
    rep.directory = cfg.out;
    std::filesystem::create_directories(rep.directory);
    Json& s = rep.summary;
    s["schema"] = "qflow-summary/1";
    s["experiment"] = cfg.experiment;
    s["config"] = detail::resolved_config(cfg);
    s["scalars"] = Json::object();
    s["invariants"] = Json::array();

    std::vector<TraceRow> rows;
    std::vector<std::string> tables;
    const std::string& e = cfg.experiment;
    if (e == "smallness") detail::smallness(cfg, s, rows);
    else if (e == "energy-decay") detail::energy_decay(cfg, s, rows);
    else if (e == "continuous-dependence") detail::continuous_dependence(cfg, s, rows, rep.directory, tables);
    else if (e == "blowup") detail::blowup(cfg, s, rows, rep.directory, tables);
    else if (e == "blowup-threshold-search") detail::threshold_search(cfg, s, rep.directory, tables);
    else if (e == "physicality") detail::physicality(cfg, s, rows);
    else if (e == "trotter-convergence") {
        if (cfg.dim == 2) detail::trotter_convergence_impl<QTensor2>(cfg, s, rows, rep.directory, tables);
        else detail::trotter_convergence_impl<QTensor3>(cfg, s, rows, rep.directory, tables);
    } else if (e == "coercivity-report") detail::coercivity_report(cfg, s);
    else if (e == "hedgehog-consistency") detail::hedgehog_consistency(cfg, s);
    else throw PreconditionError("unknown experiment '" + e + "'");

    write_trace_csv(rep.directory / "trace.csv", rows);
    rep.files.push_back("trace.csv");
    for (const std::string& t : tables) rep.files.push_back(t);

    std::vector<std::string> svgs;
    if (cfg.svg) {
        std::vector<double> t;
        for (const TraceRow& r : rows) t.push_back(r.t);
        const std::array<std::pair<const char*, double TraceRow::*>, 4> series{
            {{"energy", &TraceRow::energy}, {"max_h2", &TraceRow::max_h2}, {"l2_norm", &TraceRow::l2_norm},
             {"l2_dQdt", &TraceRow::l2_dQdt}}};
        for (const auto& [name, member] : series) {
            std::vector<double> y;
            for (const TraceRow& r : rows) y.push_back(r.*member);
            const std::string file = std::string(name) + ".svg";
            if (write_svg(rep.directory / file, e + ": " + name, t, y)) svgs.push_back(file);
        }
    }
    for (const std::string& f : svgs) rep.files.push_back(f);

    bool all = true;
    for (const Json& inv : s["invariants"]) all = all && inv["pass"].get<bool>();
    s["passed"] = all;
    s["artifacts"]["trace_csv"] = "trace.csv";
    s["artifacts"]["tables"] = tables;
    s["artifacts"]["svg"] = svgs;
    std::ofstream os(rep.directory / "summary.json");
    require(static_cast<bool>(os), "cannot write summary.json");
    os << s.dump(2) << '\n';
    rep.files.push_back("summary.json");
    return rep;
}

}  // namespace qflow
