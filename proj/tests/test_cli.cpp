#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qflow/experiments.hpp"

using namespace qflow;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("qflow_test_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string error_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const PreconditionError& e) {
        return e.what();
    }
    return "";
}

ExperimentReport run_text(const std::string& text, const fs::path& dir) {
    return run_experiment(parse_config(text, {{"out", dir.string()}}));
}

}  // namespace

TEST(ParseConfig, AppliesDefaults) {
    const ExperimentConfig cfg = parse_config("experiment = coercivity-report\nL1 = 1\nL2 = 2\nL3 = 3");
    EXPECT_EQ(cfg.experiment, "coercivity-report");
    EXPECT_EQ(cfg.params.L1, 1.0);
    EXPECT_EQ(cfg.params.L2, 2.0);
    EXPECT_EQ(cfg.params.L3, 3.0);
    EXPECT_EQ(cfg.params.C1, 1.0);
    EXPECT_EQ(cfg.scheme, Scheme::Imex);
    EXPECT_EQ(cfg.seed, 0u);
    EXPECT_TRUE(cfg.svg);
}

TEST(ParseConfig, CommentsAndBlankLines) {
    const ExperimentConfig cfg =
        parse_config("# header\n\n  experiment = physicality   # trailing\nT = 2\r\na=-1\nb = 3\n");
    EXPECT_EQ(cfg.experiment, "physicality");
    EXPECT_EQ(*cfg.T, 2.0);
    EXPECT_EQ(cfg.params.a, -1.0);
}

TEST(ParseConfig, BadValueNamesTheLine) {
    EXPECT_NE(error_of("L4 = abc").find("line 1"), std::string::npos);
    EXPECT_NE(error_of("experiment = smallness\nnx = 1.5").find("line 2"), std::string::npos);
    EXPECT_NE(error_of("experiment = smallness\n\nsvg = yes").find("line 3"), std::string::npos);
}

TEST(ParseConfig, RejectsUnknownDuplicateAndMalformedLines) {
    EXPECT_NE(error_of("experiment = smallness\nL5 = 1").find("line 2: unknown key 'L5'"), std::string::npos);
    EXPECT_NE(error_of("a = 1\na = 2").find("line 2: duplicate key 'a'"), std::string::npos);
    EXPECT_NE(error_of("experiment smallness").find("line 1: expected key = value"), std::string::npos);
    EXPECT_NE(error_of("experiment = nonsense").find("unknown experiment"), std::string::npos);
    EXPECT_NE(error_of("experiment = smallness\nscheme = rk4\nnx = 9\nT = 1\ndt = 0.1\namplitude = 0")
                  .find("scheme must be"),
              std::string::npos);
}

TEST(ParseConfig, InvertedAnnulus) {
    EXPECT_EQ(error_of("experiment = blowup\nR0 = 4\nR1 = 3"), "R0 < R1 required");
}

TEST(ParseConfig, ListsEveryMissingKey) {
    EXPECT_EQ(error_of("experiment = blowup\nR0 = 3"), "missing required keys: R1, nr, amplitude, T, dt");
    EXPECT_EQ(error_of("L1 = 2"), "missing required keys: experiment");
}

TEST(ParseConfig, ValidatesAgainstModulePreconditions) {
    EXPECT_NE(error_of("experiment = smallness\nnx = 9\nT = 1\ndt = 0.1\namplitude = 0.1\nc = 0").find("c must be"),
              std::string::npos);
    EXPECT_NE(error_of("experiment = blowup\nR0 = 3\nR1 = 4\nnr = 10\namplitude = 1\nT = 1\ndt = 0.1").find("L4"),
              std::string::npos);
    EXPECT_NE(error_of("experiment = trotter-convergence\nnx = 16\nT = 1\nL2 = 1").find("L2 + L3"),
              std::string::npos);
    EXPECT_NE(error_of("experiment = physicality\nT = 1\ndim = 4").find("dim"), std::string::npos);
}

TEST(ParseConfig, OverridesReplaceFileValues) {
    const ExperimentConfig cfg =
        parse_config("experiment = coercivity-report\nseed = 3\nout = a", {{"seed", "42"}, {"out", "b"}});
    EXPECT_EQ(cfg.seed, 42u);
    EXPECT_EQ(cfg.out, "b");
    EXPECT_THROW(parse_config("experiment = coercivity-report", {{"seed", "-1"}}), PreconditionError);
}

TEST(ParseConfig, ShippedConfigsAreValid) {
    int count = 0;
    for (const auto& entry : fs::directory_iterator(fs::path(QFLOW_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() != ".conf") continue;
        EXPECT_NO_THROW(parse_config(slurp(entry.path()))) << entry.path();
        ++count;
    }
    EXPECT_EQ(count, 9);
}

TEST(RunExperiment, CoercivityReport) {
    const fs::path dir = scratch("coercivity");
    const ExperimentReport rep = run_text("experiment = coercivity-report\nL1 = 1\nL2 = 2\nL3 = 3", dir);
    const Json j = Json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(j["scalars"]["eigenvalues"], Json::array({6.0, 6.0, 8.0, 8.0}));
    EXPECT_EQ(j["scalars"]["nu"], 3.0);
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_EQ(slurp(dir / "trace.csv"), std::string(kTraceHeader) + "\n");
}

TEST(RunExperiment, SummaryEmbedsTheResolvedConfig) {
    const fs::path dir = scratch("resolved");
    run_text("experiment = coercivity-report\nL1 = 1\nL2 = 2\nL3 = 3", dir);
    const Json j = Json::parse(slurp(dir / "summary.json"));
    const Json& c = j["config"];
    EXPECT_EQ(c["experiment"], "coercivity-report");
    EXPECT_EQ(c["C1"], 1.0);
    EXPECT_EQ(c["scheme"], "imex");
    EXPECT_EQ(c["seed"], 0);
    EXPECT_EQ(c["out"], dir.string());
    for (const KeySpec& k : kKeys) {
        if (!k.fallback.empty()) {
            EXPECT_TRUE(c.contains(std::string(k.name))) << k.name;
        }
    }
    for (const Json& inv : j["invariants"])
        for (const char* field : {"name", "measured", "relation", "tolerance", "pass"})
            EXPECT_TRUE(inv.contains(field)) << field;
}

TEST(RunExperiment, SmallnessWithZeroData) {
    const fs::path dir = scratch("zero");
    const ExperimentReport rep =
        run_text("experiment = smallness\nL4 = 1\nnx = 15\nT = 0.1\ndt = 0.01\namplitude = 0", dir);
    EXPECT_TRUE(rep.summary["passed"].get<bool>());
    std::istringstream csv(slurp(dir / "trace.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "t,energy,max_h2,l2_norm,l2_dQdt,flag");
    int rows = 0;
    while (std::getline(csv, line)) {
        std::istringstream row(line);
        std::string t, energy;
        std::getline(row, t, ',');
        std::getline(row, energy, ',');
        EXPECT_EQ(std::stod(energy), 0.0);
        ++rows;
    }
    EXPECT_EQ(rows, 11);
}

TEST(RunExperiment, TraceMatchesSolverToFullPrecision) {
    const std::string text = "experiment = energy-decay\nL1 = 1\nc = 1\nnx = 15\nT = 0.02\ndt = 0.001\namplitude = 0.1\nseed = 4";
    const fs::path dir = scratch("precision");
    const ExperimentConfig cfg = parse_config(text, {{"out", dir.string()}});
    run_experiment(cfg);
    const Grid2D g = make_grid(15, 15);
    const RunTrace trace = run(random_smooth_field(g, 0.1, 4), cfg.params, 0.02, 0.001);
    std::istringstream csv(slurp(dir / "trace.csv"));
    std::string line;
    std::getline(csv, line);
    for (const TraceRecord& r : trace.records) {
        ASSERT_TRUE(std::getline(csv, line));
        std::istringstream row(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
        ASSERT_EQ(v.size(), 6u);
        EXPECT_EQ(v[0], r.t);
        EXPECT_EQ(v[1], r.energy);
        EXPECT_EQ(v[2], r.max_h2);
        EXPECT_EQ(v[3], r.l2_norm);
        EXPECT_EQ(v[4], r.l2_dQdt);
    }
    EXPECT_FALSE(std::getline(csv, line));
}

TEST(RunExperiment, DeterministicAcrossRunsAndThreadCounts) {
    const std::string text =
        "experiment = continuous-dependence\nL4 = 1\nnx = 15\nT = 0.05\ndt = 0.005\namplitude = 0.01\nseed = 9";
    setenv("QFLOW_THREADS", "1", 1);
    run_text(text, scratch("det_a"));
    setenv("QFLOW_THREADS", "4", 1);
    run_text(text, scratch("det_b"));
    run_text(text, scratch("det_c"));
    unsetenv("QFLOW_THREADS");
    const fs::path base = fs::temp_directory_path();
    for (const char* f : {"trace.csv", "distances.csv"}) {
        EXPECT_EQ(slurp(base / "qflow_test_cli_det_a" / f), slurp(base / "qflow_test_cli_det_b" / f)) << f;
        EXPECT_EQ(slurp(base / "qflow_test_cli_det_b" / f), slurp(base / "qflow_test_cli_det_c" / f)) << f;
    }
}

TEST(RunExperiment, SeedChangesTheData) {
    const std::string text = "experiment = energy-decay\nnx = 9\nT = 0.01\ndt = 0.001\namplitude = 0.1";
    run_experiment(parse_config(text, {{"out", scratch("seed_a").string()}, {"seed", "1"}}));
    run_experiment(parse_config(text, {{"out", scratch("seed_b").string()}, {"seed", "2"}}));
    const fs::path base = fs::temp_directory_path();
    EXPECT_NE(slurp(base / "qflow_test_cli_seed_a/trace.csv"), slurp(base / "qflow_test_cli_seed_b/trace.csv"));
}

TEST(RunExperiment, SvgIsPureSerialisation) {
    const std::string text = "experiment = energy-decay\nnx = 9\nT = 0.01\ndt = 0.001\namplitude = 0.1\n";
    const fs::path on = scratch("svg_on");
    const fs::path off = scratch("svg_off");
    const ExperimentReport a = run_text(text, on);
    const ExperimentReport b = run_text(text + "svg = false\n", off);
    EXPECT_EQ(slurp(on / "trace.csv"), slurp(off / "trace.csv"));
    for (const char* s : {"energy.svg", "max_h2.svg", "l2_norm.svg", "l2_dQdt.svg"}) {
        EXPECT_TRUE(fs::exists(on / s)) << s;
        EXPECT_FALSE(fs::exists(off / s)) << s;
        EXPECT_NE(slurp(on / s).find("<polyline"), std::string::npos);
    }
    EXPECT_EQ(b.summary["artifacts"]["svg"].size(), 0u);
}

TEST(RunExperiment, BlowupReportsTheCertificate) {
    const fs::path dir = scratch("blowup");
    const std::string text =
        "experiment = blowup\nL1 = 0.5\nL4 = -1\nc = 1\nR0 = 3\nR1 = 4\nnr = 40\namplitude = -50\nT = 0.2\ndt = 0.01";
    const ExperimentReport rep = run_text(text, dir);
    const Json& sc = rep.summary["scalars"];
    EXPECT_NEAR(sc["criterion_value"].get<double>(), 9.8696, 1e-4);
    EXPECT_TRUE(sc["criterion_ok"].get<bool>());
    EXPECT_NEAR(sc["M0"].get<double>(), 0.446986, 1e-6);
    // The flag is whatever the radial solver says for the same profile.
    const ExperimentConfig cfg = parse_config(text);
    const RadialTrace direct = run_radial(sine_bump(3.0, 4.0, 40, -50.0, 0.0), cfg.params, 0.2, 0.01);
    EXPECT_EQ(sc["blew_up"].get<bool>(), direct.blew_up);
    EXPECT_TRUE(fs::exists(dir / "radial.csv"));
}

TEST(RunExperiment, ThresholdSearchBracketsByBisection) {
    // theta > zeta/|L4| is backward diffusion, so the flag flips at a finite amplitude.
    const fs::path dir = scratch("threshold");
    const ExperimentReport rep = run_text(
        "experiment = blowup-threshold-search\nL1 = 0.5\nL4 = -1\nc = 1\nR0 = 3\nR1 = 4\nnr = 15\n"
        "amp_lo = 0\namp_hi = 50\nT = 0.1\ndt = 0.01",
        dir);
    const Json& sc = rep.summary["scalars"];
    ASSERT_FALSE(sc["bracket"].is_null());
    const double lo = sc["bracket"][0].get<double>();
    const double hi = sc["bracket"][1].get<double>();
    EXPECT_NEAR(hi - lo, 50.0 / 65536.0, 1e-12);
    const ExperimentConfig cfg = parse_config("experiment = coercivity-report\nL1 = 0.5\nL4 = -1");
    EXPECT_FALSE(run_radial(sine_bump(3.0, 4.0, 15, lo, 0.0), cfg.params, 0.1, 0.01).blew_up);
    EXPECT_TRUE(run_radial(sine_bump(3.0, 4.0, 15, hi, 0.0), cfg.params, 0.1, 0.01).blew_up);
}

TEST(RunExperiment, NonFiniteDataIsANumericalFailure) {
    EXPECT_THROW(run_text("experiment = energy-decay\nnx = 9\nT = 0.01\ndt = 0.001\namplitude = 1e120",
                          scratch("overflow")),
                 NumericalError);
}

TEST(RunExperiment, ExplicitStepAboveTheBoundIsAPreconditionError) {
    EXPECT_THROW(run_text("experiment = energy-decay\nnx = 31\nT = 0.01\ndt = 0.001\namplitude = 0.1\n"
                          "scheme = explicit-euler",
                          scratch("unstable")),
                 PreconditionError);
}

TEST(RunExperiment, OtherExperimentsProduceTheirTables) {
    const ExperimentReport t = run_text(
        "experiment = trotter-convergence\na = -1\nb = 3\nc = 1\nL1 = 0.5\nnx = 32\nT = 1\nlevels = 3",
        scratch("trotter"));
    EXPECT_EQ(t.summary["scalars"]["distances"].size(), 3u);
    EXPECT_TRUE(t.summary["passed"].get<bool>());
    const ExperimentReport p = run_text("experiment = physicality\na = -1\nb = 3\nc = 1\nT = 1", scratch("phys"));
    EXPECT_TRUE(p.summary["passed"].get<bool>());
    const ExperimentReport h = run_text(
        "experiment = hedgehog-consistency\nL1 = 0.5\nL4 = 0.7\nR0 = 1\nR1 = 3\nsamples = 5", scratch("hedgehog"));
    EXPECT_TRUE(h.summary["passed"].get<bool>());
}
